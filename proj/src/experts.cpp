#include "dfab/experts.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dfab {

namespace {
constexpr Real kLog2Pi = 1.8378770664093454836;
constexpr Real kFobaGainEps = 1e-10;

Real log1p_exp_neg(Real z) {
  if (z > 0) return std::log1p(std::exp(-z));
  return -z + std::log1p(std::exp(z));
}

// Restricted normal-equation solve on a prebuilt Gram system, with the
// q-weighted Gaussian log-likelihood of the fit.
struct SubsetFit {
  ExpertParams params;
  Real loglik = 0;
};

SubsetFit ls_fit_subset(const WeightedGram& gram, const std::vector<int>& features) {
  const Index dims = gram.S.rows() - 1;
  const int k = static_cast<int>(features.size());
  Eigen::VectorXi idx(k + 1);
  for (int a = 0; a < k; ++a) idx[a] = features[static_cast<std::size_t>(a)];
  idx[k] = static_cast<int>(dims);  // intercept column

  MatrixX A(k + 1, k + 1);
  VectorX rhs(k + 1);
  for (int a = 0; a <= k; ++a) {
    rhs[a] = gram.v[idx[a]];
    for (int b = 0; b <= k; ++b) A(a, b) = gram.S(idx[a], idx[b]);
  }
  MatrixX Aj = A;
  Aj.diagonal().array() += kRidgeJitter;
  const VectorX theta = Aj.ldlt().solve(rhs);

  const Real rss = std::max<Real>(gram.yy - 2.0 * theta.dot(rhs) + theta.dot(A * theta), 0.0);
  SubsetFit fit;
  fit.params.weights = VectorX::Zero(dims);
  for (int a = 0; a < k; ++a) fit.params.weights[idx[a]] = theta[a];
  fit.params.intercept = theta[k];
  fit.params.sigma2 = std::max(rss / gram.sum_q, kSigma2Floor);
  fit.loglik = -0.5 * (gram.sum_q * (kLog2Pi + std::log(fit.params.sigma2)) +
                       rss / fit.params.sigma2);
  return fit;
}

struct LogisticSubsetFit {
  ExpertParams params;
  Real loglik = 0;
  bool converged = true;
};

// Damped Newton on the q-weighted logistic log-likelihood over the given
// features plus intercept. Coordinates are clamped to the weight cap; when
// the cap (or a failed line search) blocks progress the best iterate comes
// back unconverged.
LogisticSubsetFit logistic_fit_subset(const Eigen::Ref<const MatrixX>& X,
                                      const Eigen::Ref<const VectorX>& y,
                                      const Eigen::Ref<const VectorX>& q,
                                      const std::vector<int>& features) {
  const Index n = X.rows();
  const Index dims = X.cols();
  const int k = static_cast<int>(features.size());

  auto linear = [&](const VectorX& th) {
    VectorX eta = VectorX::Constant(n, th[k]);
    for (int a = 0; a < k; ++a) eta += th[a] * X.col(features[static_cast<std::size_t>(a)]);
    return eta;
  };
  auto loglik = [&](const VectorX& eta) {
    Real ll = 0;
    for (Index r = 0; r < n; ++r) ll -= q[r] * log1p_exp_neg(y[r] * eta[r]);
    return ll;
  };

  VectorX theta = VectorX::Zero(k + 1);
  VectorX eta = linear(theta);
  Real ll = loglik(eta);
  VectorX grad(k + 1);
  MatrixX hess(k + 1, k + 1);
  bool converged = false;

  for (int iter = 0; iter < 100; ++iter) {
    grad.setZero();
    hess.setZero();
    for (Index r = 0; r < n; ++r) {
      const Real mu = std::exp(-log1p_exp_neg(y[r] * eta[r]));  // P(correct side)
      const Real gcoef = q[r] * y[r] * (1.0 - mu);
      const Real hcoef = q[r] * mu * (1.0 - mu);
      for (int a = 0; a < k; ++a) {
        const Real xa = X(r, features[static_cast<std::size_t>(a)]);
        grad[a] += gcoef * xa;
        for (int b = 0; b <= a; ++b)
          hess(a, b) += hcoef * xa * X(r, features[static_cast<std::size_t>(b)]);
        hess(k, a) += hcoef * xa;
      }
      grad[k] += gcoef;
      hess(k, k) += hcoef;
    }
    if (grad.norm() <= 1e-8) {
      converged = true;
      break;
    }
    MatrixX H = hess.selfadjointView<Eigen::Lower>();
    H.diagonal().array() += kRidgeJitter;
    const VectorX step = H.ldlt().solve(grad);

    Real alpha = 1.0;
    bool stepped = false;
    for (int halving = 0; halving < 30; ++halving) {
      VectorX cand = theta + alpha * step;
      for (int a = 0; a <= k; ++a)
        cand[a] = std::clamp(cand[a], -kLogisticWeightCap, kLogisticWeightCap);
      VectorX cand_eta = linear(cand);
      const Real cand_ll = loglik(cand_eta);
      if (cand_ll > ll) {
        theta = std::move(cand);
        eta = std::move(cand_eta);
        ll = cand_ll;
        stepped = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!stepped) break;  // cap or curvature blocks further ascent
  }

  LogisticSubsetFit fit;
  fit.params.weights = VectorX::Zero(dims);
  for (int a = 0; a < k; ++a)
    fit.params.weights[features[static_cast<std::size_t>(a)]] = theta[a];
  fit.params.intercept = theta[k];
  fit.params.sigma2 = 1.0;
  fit.loglik = ll;
  fit.converged = converged;
  return fit;
}

struct Candidate {
  Real objective = -std::numeric_limits<Real>::infinity();
  ExpertParams params;
};

// Forward-backward greedy over feature subsets. `fit` evaluates one subset;
// `screen` narrows the forward candidates (identity for regression).
template <typename FitFn, typename ScreenFn>
FobaResult foba_loop(Index dims, int max_features, FitFn fit, ScreenFn screen) {
  std::vector<int> support;
  std::vector<char> in_support(static_cast<std::size_t>(dims), 0);
  Candidate current = fit(support);

  while (static_cast<int>(support.size()) < max_features) {
    std::vector<int> pool;
    for (int d = 0; d < dims; ++d)
      if (!in_support[static_cast<std::size_t>(d)]) pool.push_back(d);
    if (pool.empty()) break;
    screen(current.params, pool);

    int best_d = -1;
    Candidate best;
    for (int d : pool) {
      std::vector<int> f = support;
      f.insert(std::lower_bound(f.begin(), f.end(), d), d);
      Candidate cand = fit(f);
      if (cand.objective > best.objective) {
        best = std::move(cand);
        best_d = d;
      }
    }
    if (best_d < 0 || best.objective <= current.objective + kFobaGainEps) break;
    const Real forward_gain = best.objective - current.objective;
    support.insert(std::lower_bound(support.begin(), support.end(), best_d), best_d);
    in_support[static_cast<std::size_t>(best_d)] = 1;
    current = std::move(best);

    // Backward: drop any feature whose removal costs less than half the gain.
    while (support.size() > 1) {
      int drop_d = -1;
      Candidate kept;
      Real min_drop = std::numeric_limits<Real>::infinity();
      for (int d : support) {
        std::vector<int> f = support;
        f.erase(std::find(f.begin(), f.end(), d));
        Candidate cand = fit(f);
        const Real drop = current.objective - cand.objective;
        if (drop < min_drop) {
          min_drop = drop;
          kept = std::move(cand);
          drop_d = d;
        }
      }
      if (drop_d < 0 || min_drop >= forward_gain / 2) break;
      support.erase(std::find(support.begin(), support.end(), drop_d));
      in_support[static_cast<std::size_t>(drop_d)] = 0;
      current = std::move(kept);
    }
  }
  return FobaResult{std::move(current.params), std::move(support), current.objective};
}

}  // namespace

Real PenalizedObjective::per_feature() const {
  return static_cast<Real>(worker_count - 1) +
         0.5 * std::log(std::max(nphi_scaled, kLogFloor));
}

WeightedGram build_weighted_gram(const Eigen::Ref<const MatrixX>& X,
                                 const Eigen::Ref<const VectorX>& y,
                                 const Eigen::Ref<const VectorX>& q) {
  const Index dims = X.cols();
  WeightedGram g;
  g.S.resize(dims + 1, dims + 1);
  g.v.resize(dims + 1);
  const MatrixX Xw = X.array().colwise() * q.array();
  g.S.topLeftCorner(dims, dims).noalias() = Xw.transpose() * X;
  g.S.topRightCorner(dims, 1) = Xw.colwise().sum().transpose();
  g.S.bottomLeftCorner(1, dims) = g.S.topRightCorner(dims, 1).transpose();
  g.S(dims, dims) = q.sum();
  g.v.head(dims).noalias() = Xw.transpose() * y;
  g.v[dims] = q.dot(y);
  g.yy = y.dot(q.cwiseProduct(y));
  g.sum_q = g.S(dims, dims);
  return g;
}

std::optional<ExpertParams> weighted_ls_fit(const WeightedGram& gram,
                                            const std::vector<int>& features) {
  if (!(gram.sum_q > 0)) return std::nullopt;
  return ls_fit_subset(gram, features).params;
}

std::optional<ExpertParams> weighted_ls_fit(const Eigen::Ref<const MatrixX>& X,
                                            const Eigen::Ref<const VectorX>& y,
                                            const Eigen::Ref<const VectorX>& q,
                                            const std::vector<int>& features) {
  if (!(q.sum() > 0)) return std::nullopt;
  return weighted_ls_fit(build_weighted_gram(X, y, q), features);
}

std::optional<LogisticFit> weighted_logistic_fit(const Eigen::Ref<const MatrixX>& X,
                                                 const Eigen::Ref<const VectorX>& y,
                                                 const Eigen::Ref<const VectorX>& q,
                                                 const std::vector<int>& features) {
  if (!(q.sum() > 0)) return std::nullopt;
  const LogisticSubsetFit fit = logistic_fit_subset(X, y, q, features);
  return LogisticFit{fit.params, fit.converged};
}

std::optional<FobaResult> foba_select_regression(const WeightedGram& gram,
                                                 const PenalizedObjective& penalty,
                                                 int max_features) {
  if (!(gram.sum_q > 0)) return std::nullopt;
  const Index dims = gram.S.rows() - 1;
  const Real scale = static_cast<Real>(penalty.worker_count);
  const Real pen = penalty.per_feature();
  auto fit = [&](const std::vector<int>& f) {
    SubsetFit s = ls_fit_subset(gram, f);
    return Candidate{scale * s.loglik - pen * static_cast<Real>(f.size()), std::move(s.params)};
  };
  auto no_screen = [](const ExpertParams&, std::vector<int>&) {};
  return foba_loop(dims, max_features, fit, no_screen);
}

std::optional<FobaResult> foba_select(const Eigen::Ref<const MatrixX>& X,
                                      const Eigen::Ref<const VectorX>& y,
                                      const Eigen::Ref<const VectorX>& q, TaskKind task,
                                      const PenalizedObjective& penalty, int max_features) {
  if (!(q.sum() > 0)) return std::nullopt;
  const Index dims = X.cols();
  int cap = static_cast<int>(std::min<Index>(dims, X.rows() - 1));
  if (max_features > 0) cap = std::min(cap, max_features);
  cap = std::max(cap, 0);

  if (task == TaskKind::kRegression)
    return foba_select_regression(build_weighted_gram(X, y, q), penalty, cap);

  const Real scale = static_cast<Real>(penalty.worker_count);
  const Real pen = penalty.per_feature();
  auto fit = [&](const std::vector<int>& f) {
    LogisticSubsetFit s = logistic_fit_subset(X, y, q, f);
    return Candidate{scale * s.loglik - pen * static_cast<Real>(f.size()), std::move(s.params)};
  };
  // Screen forward candidates by the loss gradient at the current fit and
  // refit only the leading five.
  auto screen = [&](const ExpertParams& at, std::vector<int>& pool) {
    VectorX eta = X * at.weights;
    eta.array() += at.intercept;
    VectorX grad = VectorX::Zero(dims);
    for (Index r = 0; r < X.rows(); ++r) {
      const Real mu = std::exp(-log1p_exp_neg(y[r] * eta[r]));
      grad += (q[r] * y[r] * (1.0 - mu)) * X.row(r).transpose();
    }
    std::sort(pool.begin(), pool.end(), [&](int a, int b) {
      const Real ga = std::abs(grad[a]), gb = std::abs(grad[b]);
      return ga != gb ? ga > gb : a < b;
    });
    if (pool.size() > 5) pool.resize(5);
  };
  return foba_loop(dims, cap, fit, screen);
}

std::vector<int> majority_vote(const std::vector<std::vector<std::uint8_t>>& supports,
                               int worker_count) {
  if (supports.empty()) return {};
  const std::size_t dims = supports.front().size();
  std::vector<int> voted;
  const Real threshold = static_cast<Real>(worker_count) / 2.0;
  for (std::size_t d = 0; d < dims; ++d) {
    int count = 0;
    for (const auto& s : supports) {
      if (s.size() != dims) throw ContractError("support vectors must share length");
      count += s[d] != 0;
    }
    if (static_cast<Real>(count) >= threshold) voted.push_back(static_cast<int>(d));
  }
  return voted;
}

ExpertParams average_weights(const std::vector<ExpertParams>& fits) {
  if (fits.empty()) throw ContractError("average_weights needs at least one fit");
  ExpertParams mean;
  mean.weights = VectorX::Zero(fits.front().weights.size());
  mean.intercept = 0;
  mean.sigma2 = 0;
  for (const auto& f : fits) {
    mean.weights += f.weights;
    mean.intercept += f.intercept;
    mean.sigma2 += f.sigma2;
  }
  const Real inv = 1.0 / static_cast<Real>(fits.size());
  mean.weights *= inv;
  mean.intercept *= inv;
  mean.sigma2 *= inv;
  return mean;
}

}  // namespace dfab
