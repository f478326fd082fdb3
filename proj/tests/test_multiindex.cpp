#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "hmlab/multiindex.hpp"

using namespace hmlab;

TEST_CASE("multi-index sets enumerate graded and complete") {
  MultiIndexSet s(2, 3);
  // C(0+1,1) + C(1+1,1) + ... = 1 + 2 + 3 + 4 = 10 indices for n=2, order<=3
  CHECK(s.size() == 10);
  CHECK(s.at(0).order() == 0);
  for (int id = 1; id < s.size(); ++id) CHECK(s.at(id).order() >= s.at(id - 1).order());
  // ids are invertible
  for (int id = 0; id < s.size(); ++id) CHECK(s.id(s.at(id)) == id);

  MultiIndexSet t(3, 4);
  CHECK(t.size() == 1 + 3 + 6 + 10 + 15);
}

TEST_CASE("multi-index arithmetic") {
  MultiIndex a;
  a[0] = 2;
  a[1] = 1;
  MultiIndex b = MultiIndex::unit(0);
  CHECK(MultiIndexSet::leq(b, a));
  CHECK(!MultiIndexSet::leq(a, b));
  MultiIndex c = MultiIndexSet::sub(a, b);
  CHECK(c[0] == 1);
  CHECK(c[1] == 1);
  CHECK(MultiIndexSet::factorial(a) == 2.0);
  MultiIndex d;
  d[0] = 1;
  CHECK(MultiIndexSet::binomial(a, d) == 2.0);
}

TEST_CASE("set partitions have Bell-number counts and valid blocks") {
  CHECK(set_partitions(0).size() == 1);
  CHECK(set_partitions(1).size() == 1);
  CHECK(set_partitions(2).size() == 2);
  CHECK(set_partitions(3).size() == 5);
  CHECK(set_partitions(4).size() == 15);

  for (const auto& part : set_partitions(4)) {
    std::set<int> seen;
    for (const auto& block : part) {
      CHECK(!block.empty());
      for (int e : block) {
        CHECK(seen.count(e) == 0);
        seen.insert(e);
      }
    }
    CHECK(seen.size() == 4);
  }
}

TEST_CASE("submask enumeration is sorted and respects flags") {
  auto all = submasks(0b1011u, true, true);
  CHECK(all.size() == 8);
  for (std::size_t k = 1; k < all.size(); ++k) CHECK(all[k] > all[k - 1]);
  auto proper = submasks(0b1011u, false, false);
  CHECK(proper.size() == 6);
  for (auto m : proper) {
    CHECK(m != 0u);
    CHECK(m != 0b1011u);
    CHECK((m & ~0b1011u) == 0u);
  }
}
