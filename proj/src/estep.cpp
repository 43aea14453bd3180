#include "dfab/estep.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dfab {

namespace {
constexpr Real kLog2Pi = 1.8378770664093454836;

Real log1p_exp_neg(Real z) {
  if (z > 0) return std::log1p(std::exp(-z));
  return -z + std::log1p(std::exp(z));
}

void refresh_caches(WorkerPartition& part, const ModelParams& model) {
  const TreeTopology& topo = model.topology;
  const Index n = part.n();
  const int experts = topo.expert_count;
  part.L.setZero(n, experts);
  part.ell.setZero(n, experts);

  // Gate contributions: one pass per gate, shared by all its descendants.
  VectorX vleft(n), vright(n);
  for (int i = 0; i < topo.gate_count; ++i) {
    if (topo.gate_passthrough[i]) continue;
    const GateParams& g = model.gates[i];
    const Real lg = std::log(clamp_prob(g.g));
    const Real l1g = std::log(clamp_prob(1.0 - g.g));
    for (Index r = 0; r < n; ++r) {
      const bool less = part.X(r, g.gamma) < g.threshold;
      vleft[r] = less ? lg : l1g;
      vright[r] = less ? l1g : lg;
    }
    const auto [lo, mid, hi] = topo.gate_span[i];
    for (int j = lo; j < hi; ++j) {
      if (!topo.expert_active[j]) continue;
      part.L.col(j) += (j < mid) ? vleft : vright;
    }
  }

  for (int j = 0; j < experts; ++j) {
    if (!topo.expert_active[j]) continue;
    const ExpertParams& phi = model.experts[j];
    VectorX eta = part.X * phi.weights;
    eta.array() += phi.intercept;
    if (model.task == TaskKind::kRegression) {
      if (phi.sigma2 <= 0) throw ContractError("sigma2 must be positive");
      const Real inv = 1.0 / phi.sigma2;
      const Real lognorm = -0.5 * (kLog2Pi + std::log(phi.sigma2));
      part.L.col(j).array() += lognorm - 0.5 * inv * (part.y - eta).array().square();
      part.ell.col(j).setConstant(inv);
    } else {
      for (Index r = 0; r < n; ++r) {
        const Real z = part.y[r] * eta[r];
        const Real lse = log1p_exp_neg(z);
        part.L(r, j) += -lse;
        const Real mu = std::exp(-lse);
        part.ell(r, j) = mu * (1.0 - mu);
      }
    }
  }
}

}  // namespace

LocalLoglik local_loglik(WorkerPartition& part, const ModelParams& model) {
  refresh_caches(part, model);
  const TreeTopology& topo = model.topology;
  LocalLoglik out;
  for (int j = 0; j < topo.expert_count; ++j) {
    if (!topo.expert_active[j]) continue;
    for (Index r = 0; r < part.n(); ++r) {
      const Real q = part.Q(r, j);
      if (q <= 0) continue;
      out.ll += q * part.L(r, j);
      out.entropy -= q * std::log(q);
    }
  }
  out.ll += out.entropy;
  return out;
}

EStats local_estats(const WorkerPartition& part, const ModelParams& model) {
  const TreeTopology& topo = model.topology;
  EStats s;
  s.nphi = VectorX::Zero(topo.expert_count);
  s.nphi_scaled = VectorX::Zero(topo.expert_count);
  for (int j = 0; j < topo.expert_count; ++j) {
    if (!topo.expert_active[j]) continue;
    s.nphi[j] = part.Q.col(j).sum();
    s.nphi_scaled[j] = part.Q.col(j).dot(part.ell.col(j));
  }
  s.nbeta = VectorX::Zero(topo.gate_count);
  for (int i = 0; i < topo.gate_count; ++i) {
    const auto [lo, mid, hi] = topo.gate_span[i];
    for (int j = lo; j < hi; ++j) s.nbeta[i] += s.nphi[j];
  }
  return s;
}

FicReport fic_aggregate(const std::vector<LocalLoglik>& lls, const EStats& stats,
                        const ModelParams& model) {
  if (lls.empty()) throw ContractError("fic_aggregate needs at least one worker");
  const TreeTopology& topo = model.topology;
  FicReport rep;
  for (const auto& l : lls) {
    rep.loglik_sum += l.ll;
    rep.entropy += l.entropy;
  }
  for (int i = 0; i < topo.gate_count; ++i) {
    if (topo.gate_passthrough[i]) continue;
    rep.gate_penalty +=
        0.5 * model.gates[i].d_beta * std::log(std::max(stats.nbeta[i], kLogFloor));
  }
  for (int j = 0; j < topo.expert_count; ++j) {
    if (!topo.expert_active[j]) continue;
    const int card = model.experts[j].cardinality();
    if (card == 0) continue;
    rep.expert_penalty +=
        0.5 * card * std::log(std::max(stats.nphi_scaled[j], kLogFloor));
  }
  rep.fic = rep.loglik_sum - rep.gate_penalty - rep.expert_penalty;
  return rep;
}

EStats local_estep(WorkerPartition& part, const ModelParams& model, const EStats* stats_prev) {
  const TreeTopology& topo = model.topology;
  const Index n = part.n();

  // Per-expert penalty pieces; the gate part is constant per expert, the
  // expert part multiplies the per-sample scaling factor.
  VectorX gate_pen = VectorX::Zero(topo.expert_count);
  VectorX scale_coef = VectorX::Zero(topo.expert_count);
  if (stats_prev) {
    for (int j = 0; j < topo.expert_count; ++j) {
      if (!topo.expert_active[j]) continue;
      Real gp = 0;
      for (const auto& [gate, on_left] : topo.expert_path[j])
        gp -= model.gates[gate].d_beta / (2.0 * std::max(stats_prev->nbeta[gate], kLogFloor));
      gate_pen[j] = gp;
      const int card = model.experts[j].cardinality();
      if (card > 0)
        scale_coef[j] = -card / (2.0 * std::max(stats_prev->nphi_scaled[j], kLogFloor));
    }
  }

  for (int j = 0; j < topo.expert_count; ++j) {
    if (!topo.expert_active[j]) {
      part.Q.col(j).setZero();
      continue;
    }
    part.Q.col(j) = part.L.col(j).array() + gate_pen[j];
    if (scale_coef[j] != 0) part.Q.col(j) += scale_coef[j] * part.ell.col(j);
  }

  // Row-wise softmax over active experts, in log space.
  std::vector<int> active;
  for (int j = 0; j < topo.expert_count; ++j)
    if (topo.expert_active[j]) active.push_back(j);
  for (Index r = 0; r < n; ++r) {
    Real m = -std::numeric_limits<Real>::infinity();
    for (int j : active) m = std::max(m, part.Q(r, j));
    Real sum = 0;
    for (int j : active) {
      const Real e = std::exp(part.Q(r, j) - m);
      part.Q(r, j) = e;
      sum += e;
    }
    if (!(sum > 0) || !std::isfinite(sum))
      throw ContractError("E-step normalization failed");
    for (int j : active) part.Q(r, j) /= sum;
  }
  return local_estats(part, model);
}

EStats estep_aggregate(const std::vector<EStats>& locals) {
  if (locals.empty()) throw ContractError("estep_aggregate needs at least one worker");
  EStats total = locals.front();
  for (std::size_t w = 1; w < locals.size(); ++w) {
    const EStats& s = locals[w];
    if (s.nphi.size() != total.nphi.size() || s.nbeta.size() != total.nbeta.size())
      throw ContractError("mismatched statistics dimensions");
    total.nphi += s.nphi;
    total.nphi_scaled += s.nphi_scaled;
    total.nbeta += s.nbeta;
  }
  return total;
}

std::vector<int> shrink_decide(const EStats& stats, Real eps, const ModelParams& model) {
  if (eps < 0) throw ContractError("shrinkage threshold must be nonnegative");
  const TreeTopology& topo = model.topology;
  std::vector<int> eliminated;
  int survivors = 0;
  int largest = -1;
  for (int j = 0; j < topo.expert_count; ++j) {
    if (!topo.expert_active[j]) continue;
    if (largest < 0 || stats.nphi[j] > stats.nphi[largest]) largest = j;
    if (stats.nphi[j] < eps)
      eliminated.push_back(j);
    else
      ++survivors;
  }
  if (survivors == 0 && largest >= 0)
    eliminated.erase(std::find(eliminated.begin(), eliminated.end(), largest));
  return eliminated;
}

EStats apply_shrink(WorkerPartition& part, const ModelParams& pruned,
                    const std::vector<int>& eliminated) {
  for (int j : eliminated) part.Q.col(j).setZero();
  const TreeTopology& topo = pruned.topology;
  std::vector<int> active;
  for (int j = 0; j < topo.expert_count; ++j)
    if (topo.expert_active[j]) active.push_back(j);
  for (Index r = 0; r < part.n(); ++r) {
    Real sum = 0;
    for (int j : active) sum += part.Q(r, j);
    if (sum > 0) {
      for (int j : active) part.Q(r, j) /= sum;
    } else {
      // All of this row's mass sat on eliminated experts; restart it flat.
      const Real u = 1.0 / static_cast<Real>(active.size());
      for (int j : active) part.Q(r, j) = u;
    }
  }
  return local_estats(part, pruned);
}

ShrinkResult shrink(const EStats& stats, Real eps, const ModelParams& model,
                    std::vector<WorkerPartition*>& parts) {
  ShrinkResult out;
  out.eliminated = shrink_decide(stats, eps, model);
  out.model = out.eliminated.empty() ? model : prune_topology(model, out.eliminated);
  std::vector<EStats> locals;
  locals.reserve(parts.size());
  for (WorkerPartition* p : parts) locals.push_back(apply_shrink(*p, out.model, out.eliminated));
  out.stats = estep_aggregate(locals);
  return out;
}

}  // namespace dfab
