#pragma once

#include <vector>

#include "dfab/types.hpp"

namespace dfab {

// Shared per-dimension split candidates: the T_max-1 interior edges of
// T_max equal-width bins over the global feature range. Dimensions with
// zero range carry no candidates.
struct SplitGrid {
  int t_max = 2;
  VectorX xmin, xmax;          // global per-dimension range
  std::vector<int> counts;     // candidates per dimension (t_max-1 or 0)
  MatrixX thresholds;          // D x (t_max-1), zero-padded past counts[d]

  Index dims() const { return xmin.size(); }

  // Candidate rank of value v in dimension d: number of candidates <= v.
  // This is the exact comparison semantics the gate statistics need, so a
  // sample sitting on a threshold lands on the ">= t" side.
  int bin_of(Index d, Real v) const {
    const int k = counts[static_cast<std::size_t>(d)];
    int lo = 0, hi = k;
    while (lo < hi) {
      const int mid = (lo + hi) / 2;
      if (thresholds(d, mid) <= v)
        lo = mid + 1;
      else
        hi = mid;
    }
    return lo;
  }
};

SplitGrid build_split_grid(const std::vector<VectorX>& mins,
                           const std::vector<VectorX>& maxes, int t_max);

}  // namespace dfab
