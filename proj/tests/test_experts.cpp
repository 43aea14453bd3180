#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "dfab/experts.hpp"
#include "oracles.hpp"

using namespace dfab;

namespace {

Real logistic_loglik_at(const MatrixX& X, const VectorX& y, const VectorX& q,
                        const VectorX& w, Real b) {
  Real ll = 0;
  for (Index r = 0; r < X.rows(); ++r) {
    const Real z = y[r] * (X.row(r).dot(w) + b);
    ll -= q[r] * (z > 0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z)));
  }
  return ll;
}

}  // namespace

TEST_CASE("weighted_ls_fit recovers exact and degenerate fits") {
  MatrixX X(6, 2);
  X << 0, 1, 1, 0, 2, 2, 3, 1, 4, 0, 5, 2;
  VectorX y = 2.0 * X.col(0);
  VectorX q = VectorX::Ones(6);

  const auto fit = weighted_ls_fit(X, y, q, {0});
  REQUIRE(fit.has_value());
  CHECK(fit->weights[0] == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(fit->weights[1] == doctest::Approx(0.0));
  CHECK(fit->intercept == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(fit->sigma2 == doctest::Approx(kSigma2Floor));

  const auto empty = weighted_ls_fit(X, y, q, {});
  REQUIRE(empty.has_value());
  CHECK(empty->intercept == doctest::Approx(y.mean()));

  CHECK(!weighted_ls_fit(X, y, VectorX::Zero(6), {0}).has_value());
}

TEST_CASE("weighted_ls_fit matches a direct dense solve") {
  std::mt19937_64 rng(71);
  std::normal_distribution<Real> gauss(0.0, 1.0);
  std::uniform_real_distribution<Real> unit(0.0, 1.0);
  MatrixX X(50, 3);
  VectorX y(50), q(50);
  for (Index i = 0; i < 50; ++i) {
    for (int d = 0; d < 3; ++d) X(i, d) = gauss(rng);
    y[i] = gauss(rng);
    q[i] = 0.1 + unit(rng);
  }
  const std::vector<int> feats{0, 2};
  const auto fit = weighted_ls_fit(X, y, q, feats);
  REQUIRE(fit.has_value());
  const auto oracle = dfab_oracle::direct_subset_objective(X, y, q, feats, 1, 1.0);
  CHECK((fit->weights - oracle.weights).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(fit->intercept == doctest::Approx(oracle.intercept).epsilon(1e-8));
  CHECK(fit->sigma2 == doctest::Approx(oracle.sigma2).epsilon(1e-8));
}

TEST_CASE("weighted_logistic_fit symmetry, gradient, and separable cap") {
  // Mirror-symmetric data pins the optimum at zero.
  MatrixX X(4, 1);
  X << 1.0, 1.0, -0.5, -0.5;
  VectorX y(4);
  y << 1, -1, 1, -1;
  VectorX q = VectorX::Ones(4);
  const auto sym = weighted_logistic_fit(X, y, q, {0});
  REQUIRE(sym.has_value());
  CHECK(sym->params.weights[0] == doctest::Approx(0.0).epsilon(1e-8));
  CHECK(sym->params.intercept == doctest::Approx(0.0).epsilon(1e-8));

  // Noisy overlapping classes: interior optimum with a vanishing gradient,
  // verified against central finite differences.
  std::mt19937_64 rng(81);
  std::normal_distribution<Real> gauss(0.0, 1.0);
  MatrixX Xn(80, 2);
  VectorX yn(80), qn(80);
  for (Index i = 0; i < 80; ++i) {
    const int label = i % 2 == 0 ? 1 : -1;
    Xn(i, 0) = gauss(rng) + 0.3 * label;
    Xn(i, 1) = gauss(rng);
    yn[i] = label;
    qn[i] = 0.5 + 0.5 * (i % 3 == 0);
  }
  const auto fit = weighted_logistic_fit(Xn, yn, qn, {0, 1});
  REQUIRE(fit.has_value());
  CHECK(fit->converged);
  const Real h = 1e-6;
  VectorX w = fit->params.weights;
  for (int d = 0; d < 2; ++d) {
    VectorX wp = w, wm = w;
    wp[d] += h;
    wm[d] -= h;
    const Real fd = (logistic_loglik_at(Xn, yn, qn, wp, fit->params.intercept) -
                     logistic_loglik_at(Xn, yn, qn, wm, fit->params.intercept)) /
                    (2 * h);
    CHECK(std::abs(fd) < 1e-5);
  }

  // Separable data saturates at the cap with the right sign.
  MatrixX Xs(10, 1);
  VectorX ys(10);
  for (Index i = 0; i < 10; ++i) {
    Xs(i, 0) = i < 5 ? -0.5 : 0.5;
    ys[i] = i < 5 ? -1.0 : 1.0;
  }
  const auto sep = weighted_logistic_fit(Xs, ys, VectorX::Ones(10), {0});
  REQUIRE(sep.has_value());
  CHECK(!sep->converged);
  CHECK(sep->params.weights[0] == doctest::Approx(kLogisticWeightCap));
}

TEST_CASE("foba_select finds planted features and respects the penalty") {
  std::mt19937_64 rng(91);
  std::normal_distribution<Real> gauss(0.0, 1.0);
  MatrixX X(100, 6);
  VectorX y(100), q = VectorX::Ones(100);
  for (Index i = 0; i < 100; ++i) {
    for (int d = 0; d < 6; ++d) X(i, d) = gauss(rng);
    y[i] = 3.0 * X(i, 2) + 0.05 * gauss(rng);
  }
  PenalizedObjective pen{1, 100.0};
  const auto res = foba_select(X, y, q, TaskKind::kRegression, pen);
  REQUIRE(res.has_value());
  CHECK(res->support == std::vector<int>{2});

  // An overwhelming penalty forces the empty support once no feature can
  // buy back its price.
  VectorX noise(100);
  for (Index i = 0; i < 100; ++i) noise[i] = gauss(rng);
  PenalizedObjective huge{1, 1e280};
  const auto none = foba_select(X, noise, q, TaskKind::kRegression, huge);
  REQUIRE(none.has_value());
  CHECK(none->support.empty());
  CHECK(none->params.cardinality() == 0);

  CHECK(!foba_select(X, y, VectorX::Zero(100), TaskKind::kRegression, pen).has_value());
}

TEST_CASE("foba at one worker reduces to the plain penalized objective") {
  std::mt19937_64 rng(101);
  std::normal_distribution<Real> gauss(0.0, 1.0);
  MatrixX X(60, 4);
  VectorX y(60), q(60);
  for (Index i = 0; i < 60; ++i) {
    for (int d = 0; d < 4; ++d) X(i, d) = gauss(rng);
    y[i] = X(i, 1) - 2.0 * X(i, 3) + 0.1 * gauss(rng);
    q[i] = 0.2 + 0.8 * (i % 2);
  }
  const Real nphi_scaled = 500.0;
  PenalizedObjective pen{1, nphi_scaled};
  const auto res = foba_select(X, y, q, TaskKind::kRegression, pen);
  REQUIRE(res.has_value());
  const auto direct = dfab_oracle::direct_subset_objective(X, y, q, res->support, 1, nphi_scaled);
  CHECK(res->objective == doctest::Approx(direct.objective).epsilon(1e-9));
}

TEST_CASE("foba output is locally optimal under single moves") {
  std::mt19937_64 rng(111);
  std::normal_distribution<Real> gauss(0.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    MatrixX X(80, 5);
    VectorX y(80), q(80);
    for (Index i = 0; i < 80; ++i) {
      for (int d = 0; d < 5; ++d) X(i, d) = gauss(rng);
      y[i] = X(i, 0) + 0.5 * X(i, 4) + 0.3 * gauss(rng);
      q[i] = 0.1 + std::abs(gauss(rng));
    }
    PenalizedObjective pen{2, 50.0};
    const auto res = foba_select(X, y, q, TaskKind::kRegression, pen);
    REQUIRE(res.has_value());
    // No single addition or removal of a feature may improve the objective.
    for (int d = 0; d < 5; ++d) {
      std::vector<int> moved = res->support;
      const auto it = std::find(moved.begin(), moved.end(), d);
      if (it == moved.end())
        moved.insert(std::lower_bound(moved.begin(), moved.end(), d), d);
      else
        moved.erase(it);
      const auto alt =
          dfab_oracle::direct_subset_objective(X, y, q, moved, 2, 50.0);
      CHECK(res->objective >= alt.objective - 1e-6);
    }
  }
}

TEST_CASE("majority_vote counts inclusively and stays monotone") {
  std::vector<std::vector<std::uint8_t>> supports = {
      {0, 1, 1, 0}, {0, 0, 1, 1}, {0, 0, 1, 0}};
  CHECK(majority_vote(supports, 3) == std::vector<int>{2});

  std::vector<std::vector<std::uint8_t>> four = {
      {1, 0}, {1, 0}, {0, 0}, {0, 0}};
  CHECK(majority_vote(four, 4) == std::vector<int>{0});  // 2 >= 4/2

  std::vector<std::vector<std::uint8_t>> solo = {{1, 0, 1}};
  CHECK(majority_vote(solo, 1) == std::vector<int>{0, 2});

  // Permutation invariance and monotonicity.
  std::mt19937_64 rng(121);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::vector<std::uint8_t>> s;
    const int workers = 2 + static_cast<int>(rng() % 4);
    for (int w = 0; w < workers; ++w) {
      std::vector<std::uint8_t> v(6);
      for (auto& b : v) b = rng() % 2;
      s.push_back(v);
    }
    auto base = majority_vote(s, workers);
    auto shuffled = s;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK(majority_vote(shuffled, workers) == base);

    std::vector<std::uint8_t> all_ones(6, 1);
    s.push_back(all_ones);
    const auto grown = majority_vote(s, workers + 1);
    for (int d : base) CHECK(std::find(grown.begin(), grown.end(), d) != grown.end());
  }
}

TEST_CASE("average_weights") {
  ExpertParams a, b;
  a.weights = VectorX::Zero(2);
  a.weights << 1, 0;
  a.intercept = 1;
  a.sigma2 = 0.5;
  b.weights = VectorX::Zero(2);
  b.weights << 3, 0;
  b.intercept = 3;
  b.sigma2 = 1.5;
  const ExpertParams mean = average_weights({a, b});
  CHECK(mean.weights[0] == doctest::Approx(2.0));
  CHECK(mean.intercept == doctest::Approx(2.0));
  CHECK(mean.sigma2 == doctest::Approx(1.0));

  const ExpertParams solo = average_weights({a});
  CHECK(solo.weights == a.weights);
  const ExpertParams idem = average_weights({b, b, b});
  CHECK(idem.weights == b.weights);
  CHECK_THROWS_AS(average_weights({}), ContractError);
}

TEST_CASE("single-worker pipeline equals foba alone") {
  std::mt19937_64 rng(131);
  std::normal_distribution<Real> gauss(0.0, 1.0);
  MatrixX X(70, 5);
  VectorX y(70), q(70);
  for (Index i = 0; i < 70; ++i) {
    for (int d = 0; d < 5; ++d) X(i, d) = gauss(rng);
    y[i] = 2.0 * X(i, 0) - X(i, 2) + 0.2 * gauss(rng);
    q[i] = 0.5 + 0.5 * ((i % 5) / 4.0);
  }
  PenalizedObjective pen{1, 200.0};
  const auto selected = foba_select(X, y, q, TaskKind::kRegression, pen);
  REQUIRE(selected.has_value());

  std::vector<std::vector<std::uint8_t>> supports(1, std::vector<std::uint8_t>(5, 0));
  for (int d : selected->support) supports[0][static_cast<std::size_t>(d)] = 1;
  const auto voted = majority_vote(supports, 1);
  CHECK(voted == selected->support);
  const auto refit = weighted_ls_fit(X, y, q, voted);
  REQUIRE(refit.has_value());
  const ExpertParams averaged = average_weights({*refit});
  CHECK((averaged.weights - selected->params.weights).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(averaged.intercept == doctest::Approx(selected->params.intercept).epsilon(1e-8));
}

TEST_CASE("weighted least squares is invariant to a common q rescale") {
  std::mt19937_64 rng(141);
  std::normal_distribution<Real> gauss(0.0, 1.0);
  MatrixX X(40, 3);
  VectorX y(40), q(40);
  for (Index i = 0; i < 40; ++i) {
    for (int d = 0; d < 3; ++d) X(i, d) = gauss(rng);
    y[i] = gauss(rng);
    q[i] = 0.1 + std::abs(gauss(rng));
  }
  const std::vector<int> feats{0, 1, 2};
  const auto base = weighted_ls_fit(X, y, q, feats);
  const auto scaled = weighted_ls_fit(X, y, (7.5 * q).eval(), feats);
  REQUIRE(base.has_value());
  REQUIRE(scaled.has_value());
  CHECK((base->weights - scaled->weights).cwiseAbs().maxCoeff() < 1e-7);
  CHECK(base->intercept == doctest::Approx(scaled->intercept).epsilon(1e-7));
}
