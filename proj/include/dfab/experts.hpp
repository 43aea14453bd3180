#pragma once

#include <optional>
#include <vector>

#include "dfab/model.hpp"
#include "dfab/types.hpp"

namespace dfab {

// Per-feature price of the distributed L0 objective: the bias-correction
// constant plus half the log of the globally aggregated scaled mass. Both
// terms are broadcast scalars; no local data enters.
struct PenalizedObjective {
  int worker_count = 1;
  Real nphi_scaled = 0;

  Real per_feature() const;
};

// q-weighted Gram system of [X 1]; lets restricted fits and greedy search
// share one data pass.
struct WeightedGram {
  MatrixX S;    // (D+1) x (D+1)
  VectorX v;    // (D+1)
  Real yy = 0;  // sum q y^2
  Real sum_q = 0;
};

WeightedGram build_weighted_gram(const Eigen::Ref<const MatrixX>& X,
                                 const Eigen::Ref<const VectorX>& y,
                                 const Eigen::Ref<const VectorX>& q);

// Normal-equation solve over features F plus intercept, with ridge jitter.
// Fills weights (zero outside F), intercept, sigma2 (weighted mean squared
// residual, floored). Returns nullopt when the total weight is zero.
std::optional<ExpertParams> weighted_ls_fit(const Eigen::Ref<const MatrixX>& X,
                                            const Eigen::Ref<const VectorX>& y,
                                            const Eigen::Ref<const VectorX>& q,
                                            const std::vector<int>& features);
std::optional<ExpertParams> weighted_ls_fit(const WeightedGram& gram,
                                            const std::vector<int>& features);

struct LogisticFit {
  ExpertParams params;
  bool converged = true;
};

// Damped Newton (IRLS) maximization of the q-weighted logistic
// log-likelihood over features F plus intercept. Weights are capped at
// +/-30; if the cap prevents the gradient from vanishing the best iterate
// comes back flagged unconverged.
std::optional<LogisticFit> weighted_logistic_fit(const Eigen::Ref<const MatrixX>& X,
                                                 const Eigen::Ref<const VectorX>& y,
                                                 const Eigen::Ref<const VectorX>& q,
                                                 const std::vector<int>& features);

struct FobaResult {
  ExpertParams params;
  std::vector<int> support;
  Real objective = 0;  // penalized objective of the returned fit
};

// Forward-backward greedy L0 search of the penalized objective
//   J = W * sum_n q_n log p(y|x, phi)  -  |support| * penalty.per_feature().
// Forward adds the best strictly improving feature; after each add, features
// whose removal costs less than half the last forward gain are dropped.
std::optional<FobaResult> foba_select(const Eigen::Ref<const MatrixX>& X,
                                      const Eigen::Ref<const VectorX>& y,
                                      const Eigen::Ref<const VectorX>& q,
                                      TaskKind task, const PenalizedObjective& penalty,
                                      int max_features = 0);

// Regression fast path on a prebuilt Gram system, so the later restricted
// refit can reuse the same data pass.
std::optional<FobaResult> foba_select_regression(const WeightedGram& gram,
                                                 const PenalizedObjective& penalty,
                                                 int max_features);

// Features supported by at least half the workers (inclusive). Abstaining
// workers contribute zero vectors and still count in the denominator.
std::vector<int> majority_vote(const std::vector<std::vector<std::uint8_t>>& supports,
                               int worker_count);

// Arithmetic mean of contributing fits (weights, intercept, sigma2).
ExpertParams average_weights(const std::vector<ExpertParams>& fits);

}  // namespace dfab
