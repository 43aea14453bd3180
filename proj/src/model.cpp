#include "dfab/model.hpp"

#include <array>
#include <cmath>
#include <limits>

namespace dfab {

namespace {
constexpr Real kHalfLog2Pi = 0.91893853320467274178;  // 0.5*log(2*pi)

// Numerically stable log(1 + exp(-z)).
Real log1p_exp_neg(Real z) {
  if (z > 0) return std::log1p(std::exp(-z));
  return -z + std::log1p(std::exp(z));
}
}  // namespace

TreeTopology::TreeTopology(int depth_) : depth(depth_) {
  if (depth < 1) throw ContractError("tree depth must be >= 1");
  expert_count = 1 << depth;
  gate_count = expert_count - 1;
  expert_active.assign(expert_count, 1);
  gate_passthrough.assign(gate_count, 0);
  refresh();
}

int TreeTopology::active_expert_count() const {
  int n = 0;
  for (auto a : expert_active) n += a != 0;
  return n;
}

bool TreeTopology::any_active_in(int lo, int hi) const {
  for (int j = lo; j < hi; ++j)
    if (expert_active[j]) return true;
  return false;
}

void TreeTopology::refresh() {
  gate_span.assign(gate_count, {0, 0, 0});
  for (int i = 0; i < gate_count; ++i) {
    int level = 0;
    while ((2 << level) - 1 <= i) ++level;
    const int pos = i - ((1 << level) - 1);
    const int width = expert_count >> level;
    gate_span[i] = {pos * width, pos * width + width / 2, (pos + 1) * width};
  }
  for (int i = 0; i < gate_count; ++i) {
    const auto [lo, mid, hi] = gate_span[i];
    if (!any_active_in(lo, mid) || !any_active_in(mid, hi)) gate_passthrough[i] = 1;
  }
  expert_path.assign(expert_count, {});
  for (int j = 0; j < expert_count; ++j) {
    if (!expert_active[j]) continue;
    int node = 0;
    for (int level = 0; level < depth; ++level) {
      const auto [lo, mid, hi] = gate_span[node];
      const bool left = j < mid;
      if (!gate_passthrough[node]) expert_path[j].emplace_back(node, left);
      node = 2 * node + (left ? 1 : 2);
    }
  }
}

int ExpertParams::cardinality() const {
  int n = 0;
  for (Index d = 0; d < weights.size(); ++d) n += weights[d] != 0.0;
  return n;
}

Real gate_prob(const Eigen::Ref<const VectorX>& x, const GateParams& beta) {
  if (beta.gamma < 0 || beta.gamma >= x.size())
    throw ContractError("gate feature index out of range");
  return x[beta.gamma] < beta.threshold ? beta.g : 1.0 - beta.g;
}

Real path_log_prob(const Eigen::Ref<const VectorX>& x, const ModelParams& model, int j) {
  Real lp = 0;
  for (const auto& [gate, on_left] : model.topology.expert_path[j]) {
    const Real a = gate_prob(x, model.gates[gate]);
    lp += std::log(clamp_prob(on_left ? a : 1.0 - a));
  }
  return lp;
}

Real expert_log_likelihood(Real y, const Eigen::Ref<const VectorX>& x,
                           const ExpertParams& phi, TaskKind task) {
  const Real eta = phi.weights.dot(x) + phi.intercept;
  if (task == TaskKind::kRegression) {
    if (phi.sigma2 <= 0) throw ContractError("sigma2 must be positive");
    const Real r = y - eta;
    return -kHalfLog2Pi - 0.5 * std::log(phi.sigma2) - 0.5 * r * r / phi.sigma2;
  }
  return -log1p_exp_neg(y * eta);
}

Real scaling_factor(Real y, const Eigen::Ref<const VectorX>& x,
                    const ExpertParams& phi, TaskKind task) {
  if (task == TaskKind::kRegression) return 1.0 / phi.sigma2;
  const Real mu = std::exp(-log1p_exp_neg(y * (phi.weights.dot(x) + phi.intercept)));
  return mu * (1.0 - mu);
}

Prediction predict(const Eigen::Ref<const VectorX>& x, const ModelParams& model) {
  int best = -1;
  Real best_lp = -std::numeric_limits<Real>::infinity();
  for (int j = 0; j < model.topology.expert_count; ++j) {
    if (!model.topology.expert_active[j]) continue;
    const Real lp = path_log_prob(x, model, j);
    if (lp > best_lp) {
      best_lp = lp;
      best = j;
    }
  }
  if (best < 0) throw ContractError("model has no active expert");
  const ExpertParams& phi = model.experts[best];
  const Real eta = phi.weights.dot(x) + phi.intercept;
  Prediction p;
  p.expert = best;
  if (model.task == TaskKind::kRegression) {
    p.value = eta;
  } else {
    p.value = 1.0 / (1.0 + std::exp(-eta));
    p.label = eta >= 0 ? 1 : -1;
  }
  return p;
}

ModelParams prune_topology(const ModelParams& model, const std::vector<int>& eliminated) {
  ModelParams out = model;
  for (int j : eliminated) {
    if (j < 0 || j >= out.topology.expert_count || !out.topology.expert_active[j])
      throw ContractError("eliminated set must name active experts");
    out.topology.expert_active[j] = 0;
  }
  if (out.topology.active_expert_count() == 0)
    throw ShrinkageCollapseError("shrinkage eliminated every expert");
  out.topology.refresh();
  return out;
}

}  // namespace dfab
