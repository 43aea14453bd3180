#pragma once

#include <array>
#include <utility>
#include <vector>

#include "dfab/types.hpp"

namespace dfab {

enum class TaskKind { kRegression, kBinaryClassification };

// Complete binary tree in heap order: gate i has children 2i+1, 2i+2 and
// covers a contiguous span of leaves (experts). Pruning marks experts
// inactive and gates pass-through; a pass-through gate contributes no routing
// probability and drops out of every expert path.
struct TreeTopology {
  int depth = 1;
  int gate_count = 1;
  int expert_count = 2;
  std::vector<std::uint8_t> expert_active;
  std::vector<std::uint8_t> gate_passthrough;

  // Derived routing tables, rebuilt by refresh().
  std::vector<std::vector<std::pair<int, bool>>> expert_path;  // (gate, on_left)
  std::vector<std::array<int, 3>> gate_span;                   // {lo, mid, hi} leaf range

  TreeTopology() = default;
  explicit TreeTopology(int depth_);

  int active_expert_count() const;
  bool any_active_in(int lo, int hi) const;
  // Recomputes pass-through flags and expert paths from the active mask.
  void refresh();
};

struct GateParams {
  int gamma = 0;      // split feature index
  Real threshold = 0; // split value
  Real g = 0.5;       // probability emitted for x[gamma] < threshold
  Real d_beta = 1.0;  // parameter count charged in the information criterion
};

struct ExpertParams {
  VectorX weights;     // dense storage, sparse content
  Real intercept = 0;
  Real sigma2 = 1.0;   // regression noise variance
  int cardinality() const;  // number of nonzero weights (intercept excluded)
};

struct ModelParams {
  TreeTopology topology;
  std::vector<GateParams> gates;
  std::vector<ExpertParams> experts;
  TaskKind task = TaskKind::kRegression;

  int feature_dim() const {
    return experts.empty() ? 0 : static_cast<int>(experts[0].weights.size());
  }
};

struct Prediction {
  int expert = -1;
  Real value = 0;       // regression output, or logistic probability of +1
  int label = 0;        // classification sign label, 0 for regression
};

// Bernoulli gate probability: g for x[gamma] < t, 1-g otherwise. A sample
// exactly at the threshold routes to the ">= t" side.
Real gate_prob(const Eigen::Ref<const VectorX>& x, const GateParams& beta);

// Sum of clamped log gate probabilities along expert j's path.
Real path_log_prob(const Eigen::Ref<const VectorX>& x, const ModelParams& model, int j);

Real expert_log_likelihood(Real y, const Eigen::Ref<const VectorX>& x,
                           const ExpertParams& phi, TaskKind task);

// 1/sigma^2 for regression, mu(1-mu) for classification.
Real scaling_factor(Real y, const Eigen::Ref<const VectorX>& x,
                    const ExpertParams& phi, TaskKind task);

// Routes x to the active expert with maximal path probability (lowest index
// wins ties) and evaluates that expert.
Prediction predict(const Eigen::Ref<const VectorX>& x, const ModelParams& model);

// Marks the given experts inactive and collapses gates that lost a whole
// side. Throws ShrinkageCollapseError if nothing would survive.
ModelParams prune_topology(const ModelParams& model, const std::vector<int>& eliminated);

}  // namespace dfab
