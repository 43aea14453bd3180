#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "dfab/model.hpp"
#include "dfab/partition.hpp"
#include "dfab/split_grid.hpp"

namespace dfab {

// Per-gate histogram sums over one partition: rho_left(d, k) is the subtree
// left-mass of samples below candidate k of dimension d, rho_right(d, k) the
// subtree right-mass of samples at or above it.
struct GateStats {
  MatrixX rho_left;
  MatrixX rho_right;
};

std::pair<VectorX, VectorX> local_minmax(const WorkerPartition& part);

GateStats local_gate_stats(const WorkerPartition& part, int gate,
                           const TreeTopology& topology);

// Scans all (dimension, threshold) candidates for the split maximizing the
// mass-scaled negative Bernoulli entropy of the induced gate probability.
// Ties break toward the lower dimension, then the lower threshold. Returns
// nullopt when no dimension has candidates (keep the previous gate).
std::optional<GateParams> select_gate(const GateStats& total, Real n_beta,
                                      const SplitGrid& grid, Real d_beta,
                                      bool swapped_score = false);

}  // namespace dfab
