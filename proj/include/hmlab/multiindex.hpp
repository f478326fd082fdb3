#pragma once

// Multi-index bookkeeping for derivative jets in up to three target
// coordinates, plus set-partition enumeration used by the chain rule for
// epsilon-derivatives of composed fields.

#include <array>
#include <cstdint>
#include <vector>

namespace hmlab {

struct MultiIndex {
  std::array<int, 3> k{0, 0, 0};

  int order() const { return k[0] + k[1] + k[2]; }
  int operator[](int i) const { return k[i]; }
  int& operator[](int i) { return k[i]; }
  bool operator==(const MultiIndex& o) const { return k == o.k; }

  static MultiIndex unit(int axis) {
    MultiIndex m;
    m.k[axis] = 1;
    return m;
  }
};

// All multi-indices over `nvars` variables with total order <= max_order,
// graded ordering (by total order, then lexicographic).  Index 0 is the zero
// multi-index.
class MultiIndexSet {
 public:
  MultiIndexSet() = default;
  MultiIndexSet(int nvars, int max_order);

  int nvars() const { return nvars_; }
  int max_order() const { return max_order_; }
  int size() const { return static_cast<int>(list_.size()); }
  const MultiIndex& at(int id) const { return list_[id]; }

  // id of a multi-index; -1 if outside the set.
  int id(const MultiIndex& m) const;

  // ids of all multi-indices with the given total order.
  std::vector<int> ids_of_order(int order) const;

  static bool leq(const MultiIndex& a, const MultiIndex& b);  // componentwise
  static MultiIndex add(const MultiIndex& a, const MultiIndex& b);
  static MultiIndex sub(const MultiIndex& a, const MultiIndex& b);  // requires b <= a
  static double factorial(const MultiIndex& m);                     // m!
  static double binomial(const MultiIndex& a, const MultiIndex& b); // C(a, b)

 private:
  int nvars_ = 0;
  int max_order_ = 0;
  std::vector<MultiIndex> list_;
};

// Partitions of {0, 1, ..., k-1} into nonempty blocks; each partition is a
// list of blocks, each block a sorted list of element positions.  Memoized.
const std::vector<std::vector<std::vector<int>>>& set_partitions(int k);

// Enumerates the nonempty proper/improper subsets of a bitmask in increasing
// numeric order.
std::vector<std::uint32_t> submasks(std::uint32_t mask, bool include_empty, bool include_full);

}  // namespace hmlab
