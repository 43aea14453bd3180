#include "dfab/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace dfab {

namespace {

// Deterministic descent with g = 1: left iff x[gamma] < t, pass-through
// gates forward to their surviving side.
int route_sample(const ModelParams& model, const Eigen::Ref<const VectorX>& x) {
  const TreeTopology& topo = model.topology;
  int node = 0;
  for (int level = 0; level < topo.depth; ++level) {
    const auto [lo, mid, hi] = topo.gate_span[node];
    bool left;
    if (topo.gate_passthrough[node])
      left = topo.any_active_in(lo, mid);
    else
      left = x[model.gates[node].gamma] < model.gates[node].threshold;
    node = 2 * node + (left ? 1 : 2);
  }
  return node - topo.gate_count;  // leaf position
}

}  // namespace

SyntheticData synth_generate(const SyntheticSpec& spec) {
  if (spec.depth < 1 || spec.experts < 1 || spec.experts > (1 << spec.depth))
    throw ContractError("expert count must be in [1, 2^depth]");
  if (spec.d < 1 || spec.n < 1) throw ContractError("need positive n and d");

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<Real> unit(0.0, 1.0);

  ModelParams truth;
  truth.task = TaskKind::kRegression;
  truth.topology = TreeTopology(spec.depth);
  const int leaves = truth.topology.expert_count;
  truth.gates.resize(truth.topology.gate_count);
  truth.experts.resize(leaves);

  // Prune random leaves down to the requested expert count.
  std::vector<int> leaf_order(leaves);
  std::iota(leaf_order.begin(), leaf_order.end(), 0);
  std::shuffle(leaf_order.begin(), leaf_order.end(), rng);
  std::vector<int> eliminated(leaf_order.begin(), leaf_order.begin() + (leaves - spec.experts));
  truth = prune_topology(truth, eliminated);

  std::uniform_int_distribution<int> dim_pick(0, static_cast<int>(spec.d) - 1);
  for (int i = 0; i < truth.topology.gate_count; ++i) {
    GateParams& g = truth.gates[i];
    g.gamma = dim_pick(rng);
    g.threshold = unit(rng);
    g.g = 1.0;
  }

  const Real variance = spec.noise_is_stddev ? spec.noise * spec.noise : spec.noise;
  const int lo_nnz = std::min<int>(spec.nnz_min, static_cast<int>(spec.d));
  const int hi_nnz = std::min<int>(spec.nnz_max, static_cast<int>(spec.d));
  std::uniform_int_distribution<int> nnz_pick(std::min(lo_nnz, hi_nnz), std::max(lo_nnz, hi_nnz));
  std::vector<int> dims(static_cast<std::size_t>(spec.d));
  std::iota(dims.begin(), dims.end(), 0);
  for (int j = 0; j < leaves; ++j) {
    ExpertParams& e = truth.experts[j];
    e.weights = VectorX::Zero(spec.d);
    e.intercept = 0;
    e.sigma2 = variance;
    if (!truth.topology.expert_active[j]) continue;
    const int nnz = nnz_pick(rng);
    std::shuffle(dims.begin(), dims.end(), rng);
    for (int k = 0; k < nnz; ++k) e.weights[dims[static_cast<std::size_t>(k)]] = unit(rng);
  }

  Dataset data;
  data.task = TaskKind::kRegression;
  data.X.resize(spec.n, spec.d);
  data.y.resize(spec.n);
  std::normal_distribution<Real> noise(0.0, std::sqrt(variance));
  for (Index i = 0; i < spec.n; ++i) {
    for (Index j = 0; j < spec.d; ++j) data.X(i, j) = unit(rng);
    const int expert = route_sample(truth, data.X.row(i).transpose());
    data.y[i] = truth.experts[expert].weights.dot(data.X.row(i)) + noise(rng);
  }
  return {std::move(data), std::move(truth)};
}

}  // namespace dfab
