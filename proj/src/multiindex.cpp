#include "hmlab/multiindex.hpp"

#include <algorithm>
#include <map>
#include <mutex>

namespace hmlab {

MultiIndexSet::MultiIndexSet(int nvars, int max_order)
    : nvars_(nvars), max_order_(max_order) {
  for (int ord = 0; ord <= max_order; ++ord) {
    // lexicographic enumeration of compositions of `ord` into nvars parts
    MultiIndex m;
    auto rec = [&](auto&& self, int axis, int rem) -> void {
      if (axis == nvars - 1) {
        m[axis] = rem;
        list_.push_back(m);
        return;
      }
      for (int v = ord; v >= 0; --v) {
        if (v > rem) continue;
        m[axis] = v;
        self(self, axis + 1, rem - v);
      }
      m[axis] = 0;
    };
    if (nvars > 0) rec(rec, 0, ord);
  }
}

int MultiIndexSet::id(const MultiIndex& m) const {
  for (int i = 0; i < size(); ++i)
    if (list_[i] == m) return i;
  return -1;
}

std::vector<int> MultiIndexSet::ids_of_order(int order) const {
  std::vector<int> out;
  for (int i = 0; i < size(); ++i)
    if (list_[i].order() == order) out.push_back(i);
  return out;
}

bool MultiIndexSet::leq(const MultiIndex& a, const MultiIndex& b) {
  for (int i = 0; i < 3; ++i)
    if (a[i] > b[i]) return false;
  return true;
}

MultiIndex MultiIndexSet::add(const MultiIndex& a, const MultiIndex& b) {
  MultiIndex m;
  for (int i = 0; i < 3; ++i) m[i] = a[i] + b[i];
  return m;
}

MultiIndex MultiIndexSet::sub(const MultiIndex& a, const MultiIndex& b) {
  MultiIndex m;
  for (int i = 0; i < 3; ++i) m[i] = a[i] - b[i];
  return m;
}

static double fact(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

double MultiIndexSet::factorial(const MultiIndex& m) {
  return fact(m[0]) * fact(m[1]) * fact(m[2]);
}

double MultiIndexSet::binomial(const MultiIndex& a, const MultiIndex& b) {
  double c = 1.0;
  for (int i = 0; i < 3; ++i) c *= fact(a[i]) / (fact(b[i]) * fact(a[i] - b[i]));
  return c;
}

const std::vector<std::vector<std::vector<int>>>& set_partitions(int k) {
  static std::map<int, std::vector<std::vector<std::vector<int>>>> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(k);
  if (it != cache.end()) return it->second;

  std::vector<std::vector<std::vector<int>>> parts;
  std::vector<std::vector<int>> blocks;
  auto rec = [&](auto&& self, int elem) -> void {
    if (elem == k) {
      parts.push_back(blocks);
      return;
    }
    // place `elem` into an existing block or open a new one (restricted
    // growth: keeps enumeration canonical and duplicate-free); index loop
    // because deeper calls reallocate `blocks`
    for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
      blocks[bi].push_back(elem);
      self(self, elem + 1);
      blocks[bi].pop_back();
    }
    blocks.push_back({elem});
    self(self, elem + 1);
    blocks.pop_back();
  };
  if (k == 0) {
    parts.push_back({});  // the empty partition of the empty set
  } else {
    rec(rec, 0);
  }
  return cache.emplace(k, std::move(parts)).first->second;
}

std::vector<std::uint32_t> submasks(std::uint32_t mask, bool include_empty, bool include_full) {
  std::vector<std::uint32_t> out;
  std::uint32_t s = mask;
  // standard subset-lattice walk, collected then sorted ascending
  for (;;) {
    out.push_back(s);
    if (s == 0) break;
    s = (s - 1) & mask;
  }
  std::sort(out.begin(), out.end());
  std::vector<std::uint32_t> filtered;
  for (auto m : out) {
    if (!include_empty && m == 0) continue;
    if (!include_full && m == mask) continue;
    filtered.push_back(m);
  }
  return filtered;
}

}  // namespace hmlab
