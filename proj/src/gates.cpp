#include "dfab/gates.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dfab {

SplitGrid build_split_grid(const std::vector<VectorX>& mins,
                           const std::vector<VectorX>& maxes, int t_max) {
  if (mins.empty() || mins.size() != maxes.size())
    throw ContractError("need min/max reports from at least one worker");
  if (t_max < 2) throw ContractError("t_max must be at least 2");
  SplitGrid grid;
  grid.t_max = t_max;
  grid.xmin = mins.front();
  grid.xmax = maxes.front();
  for (std::size_t w = 1; w < mins.size(); ++w) {
    grid.xmin = grid.xmin.cwiseMin(mins[w]);
    grid.xmax = grid.xmax.cwiseMax(maxes[w]);
  }
  const Index dims = grid.xmin.size();
  grid.counts.assign(static_cast<std::size_t>(dims), 0);
  grid.thresholds = MatrixX::Zero(dims, t_max - 1);
  for (Index d = 0; d < dims; ++d) {
    const Real lo = grid.xmin[d], hi = grid.xmax[d];
    if (!(hi > lo)) continue;  // degenerate dimension
    grid.counts[static_cast<std::size_t>(d)] = t_max - 1;
    for (int k = 1; k < t_max; ++k)
      grid.thresholds(d, k - 1) = lo + static_cast<Real>(k) * (hi - lo) / static_cast<Real>(t_max);
  }
  return grid;
}

std::pair<VectorX, VectorX> local_minmax(const WorkerPartition& part) {
  if (part.n() == 0) throw ContractError("empty partition");
  return {part.X.colwise().minCoeff(), part.X.colwise().maxCoeff()};
}

GateStats local_gate_stats(const WorkerPartition& part, int gate,
                           const TreeTopology& topology) {
  const SplitGrid& grid = *part.grid;
  const Index dims = part.d();
  const int width = grid.t_max - 1;
  GateStats out;
  out.rho_left = MatrixX::Zero(dims, width);
  out.rho_right = MatrixX::Zero(dims, width);

  const auto [lo, mid, hi] = topology.gate_span[gate];
  VectorX left_mass = part.Q.middleCols(lo, mid - lo).rowwise().sum();
  VectorX right_mass = part.Q.middleCols(mid, hi - mid).rowwise().sum();

  // One histogram pass per dimension, then prefix/suffix sums across bins.
  VectorX hist_left(grid.t_max), hist_right(grid.t_max);
  for (Index d = 0; d < dims; ++d) {
    const int k = grid.counts[static_cast<std::size_t>(d)];
    if (k == 0) continue;
    hist_left.head(k + 1).setZero();
    hist_right.head(k + 1).setZero();
    for (Index r = 0; r < part.n(); ++r) {
      const int b = part.bins(r, d);
      hist_left[b] += left_mass[r];
      hist_right[b] += right_mass[r];
    }
    Real acc = 0;
    for (int t = 0; t < k; ++t) {
      acc += hist_left[t];
      out.rho_left(d, t) = acc;
    }
    acc = 0;
    for (int t = k - 1; t >= 0; --t) {
      acc += hist_right[t + 1];
      out.rho_right(d, t) = acc;
    }
  }
  return out;
}

std::optional<GateParams> select_gate(const GateStats& total, Real n_beta,
                                      const SplitGrid& grid, Real d_beta,
                                      bool swapped_score) {
  if (!(n_beta > 0)) throw ContractError("gate mass must be positive");
  const Index dims = grid.dims();
  Real best = -std::numeric_limits<Real>::infinity();
  int best_d = -1, best_t = -1;
  Real best_g = 0.5;
  for (Index d = 0; d < dims; ++d) {
    const int k = grid.counts[static_cast<std::size_t>(d)];
    for (int t = 0; t < k; ++t) {
      const Real g = clamp_prob((total.rho_left(d, t) + total.rho_right(d, t)) / n_beta);
      const Real score =
          swapped_score
              ? n_beta * (g * std::log(1.0 - g) + (1.0 - g) * std::log(g))
              : n_beta * (g * std::log(g) + (1.0 - g) * std::log(1.0 - g));
      if (score > best) {
        best = score;
        best_d = static_cast<int>(d);
        best_t = t;
        best_g = g;
      }
    }
  }
  if (best_d < 0) return std::nullopt;
  GateParams out;
  out.gamma = best_d;
  out.threshold = grid.thresholds(best_d, best_t);
  out.g = best_g;
  out.d_beta = d_beta;
  return out;
}

}  // namespace dfab
