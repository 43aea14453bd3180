#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "dfab/estep.hpp"
#include "dfab/partition.hpp"
#include "oracles.hpp"

using namespace dfab;

namespace {

ModelParams flat_model(int depth, Index dims) {
  ModelParams m;
  m.task = TaskKind::kRegression;
  m.topology = TreeTopology(depth);
  m.gates.assign(static_cast<std::size_t>(m.topology.gate_count), GateParams{0, 0.5, 0.5, 1.0});
  m.experts.resize(static_cast<std::size_t>(m.topology.expert_count));
  for (auto& e : m.experts) e.weights = VectorX::Zero(dims);
  return m;
}

WorkerPartition make_part(const MatrixX& X, const VectorX& y, int experts) {
  WorkerPartition p;
  p.X = X;
  p.y = y;
  p.global_ids.resize(static_cast<std::size_t>(X.rows()));
  for (Index i = 0; i < X.rows(); ++i) p.global_ids[static_cast<std::size_t>(i)] = i;
  allocate_state(p, experts, 0);
  return p;
}

ModelParams random_routed_model(std::uint64_t seed, Index dims) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<Real> unit(0.0, 1.0);
  ModelParams m = flat_model(2, dims);
  for (auto& g : m.gates)
    g = {static_cast<int>(rng() % dims), unit(rng), 0.2 + 0.6 * unit(rng), 1.0};
  for (auto& e : m.experts) {
    for (Index d = 0; d < dims; ++d) e.weights[d] = unit(rng) - 0.5;
    e.intercept = unit(rng) - 0.5;
    e.sigma2 = 0.2 + unit(rng);
  }
  return m;
}

}  // namespace

TEST_CASE("local_loglik on a single-expert tree") {
  ModelParams m = flat_model(1, 1);
  m.experts[0].sigma2 = 1.0;
  m = prune_topology(m, {1});  // one expert, empty path
  MatrixX X(2, 1);
  X << 0.3, 0.7;
  VectorX y(2);
  y << 0.0, 0.0;
  WorkerPartition p = make_part(X, y, 2);
  p.Q.col(0).setOnes();
  p.Q.col(1).setZero();
  const LocalLoglik ll = local_loglik(p, m);
  CHECK(ll.ll == doctest::Approx(-std::log(2 * M_PI)));
  CHECK(ll.entropy == doctest::Approx(0.0));
}

TEST_CASE("entropy contributes log 2 per sample for symmetric responsibilities") {
  ModelParams m = flat_model(1, 1);
  MatrixX X(3, 1);
  X << 0.1, 0.2, 0.3;
  VectorX y = VectorX::Zero(3);
  WorkerPartition p = make_part(X, y, 2);
  p.Q.setConstant(0.5);
  const LocalLoglik ll = local_loglik(p, m);
  CHECK(ll.entropy == doctest::Approx(3 * std::log(2.0)));
}

TEST_CASE("fic_aggregate composes the penalties") {
  ModelParams m = flat_model(1, 1);
  m = prune_topology(m, {1});
  EStats stats;
  stats.nphi = VectorX::Constant(2, 1.0);
  stats.nphi_scaled = VectorX::Constant(2, 1.0);
  stats.nbeta = VectorX::Constant(1, 1.0);
  const FicReport rep =
      fic_aggregate({LocalLoglik{-std::log(2 * M_PI), 0.0}}, stats, m);
  CHECK(rep.fic == doctest::Approx(-std::log(2 * M_PI)));  // zero-cardinality expert
  CHECK(rep.gate_penalty == doctest::Approx(0.0));          // pass-through gate

  // One live gate with mass e^2 prices exactly 1.
  ModelParams live = flat_model(1, 1);
  EStats s2;
  s2.nphi = VectorX::Constant(2, std::exp(2.0) / 2);
  s2.nphi_scaled = VectorX::Constant(2, 1.0);
  s2.nbeta = VectorX::Constant(1, std::exp(2.0));
  const FicReport r2 = fic_aggregate({LocalLoglik{0.0, 0.0}}, s2, live);
  CHECK(r2.gate_penalty == doctest::Approx(1.0));
  CHECK(r2.fic == doctest::Approx(-1.0));

  CHECK_THROWS_AS(fic_aggregate({}, stats, m), ContractError);
}

TEST_CASE("splitting one worker in two leaves the objective unchanged") {
  const ModelParams m = random_routed_model(3, 2);
  MatrixX X = MatrixX::Random(40, 2);
  VectorX y = VectorX::Random(40);
  WorkerPartition whole = make_part(X, y, 4);
  WorkerPartition first = make_part(X.topRows(20), y.head(20), 4);
  WorkerPartition second = make_part(X.bottomRows(20), y.tail(20), 4);
  for (Index i = 0; i < 20; ++i) second.global_ids[static_cast<std::size_t>(i)] = i + 20;
  allocate_state(second, 4, 0);

  const LocalLoglik lw = local_loglik(whole, m);
  const LocalLoglik l1 = local_loglik(first, m);
  const LocalLoglik l2 = local_loglik(second, m);
  const EStats sw = local_estats(whole, m);
  const EStats sp = estep_aggregate({local_estats(first, m), local_estats(second, m)});
  const FicReport a = fic_aggregate({lw}, sw, m);
  const FicReport b = fic_aggregate({l1, l2}, sp, m);
  CHECK(a.fic == doctest::Approx(b.fic).epsilon(1e-9));
}

TEST_CASE("local_estep symmetry, single expert, and the softmax gap") {
  ModelParams m = flat_model(1, 1);
  MatrixX X(4, 1);
  X << 0.1, 0.2, 0.8, 0.9;
  VectorX y = VectorX::Zero(4);
  WorkerPartition p = make_part(X, y, 2);

  // Identical entries: both experts share every row equally.
  p.L.setConstant(-1.0);
  p.ell.setConstant(1.0);
  local_estep(p, m, nullptr);
  CHECK(p.Q(0, 0) == doctest::Approx(0.5));
  CHECK(p.Q(3, 1) == doctest::Approx(0.5));

  // A log-3 likelihood gap yields 3:1 responsibilities.
  p.L.col(0).setConstant(std::log(3.0));
  p.L.col(1).setConstant(0.0);
  local_estep(p, m, nullptr);
  CHECK(p.Q(0, 0) == doctest::Approx(0.75));
  CHECK(p.Q(0, 1) == doctest::Approx(0.25));

  // One active expert absorbs everything no matter the penalties.
  ModelParams one = prune_topology(m, {1});
  EStats prev;
  prev.nphi = VectorX::Constant(2, 0.01);
  prev.nphi_scaled = VectorX::Constant(2, 0.01);
  prev.nbeta = VectorX::Constant(1, 0.01);
  local_estep(p, one, &prev);
  for (Index r = 0; r < 4; ++r) CHECK(p.Q(r, 0) == doctest::Approx(1.0));
}

TEST_CASE("rows are normalized and nonnegative after the E-step") {
  const ModelParams m = random_routed_model(9, 3);
  MatrixX X = MatrixX::Random(60, 3);
  VectorX y = VectorX::Random(60);
  WorkerPartition p = make_part(X, y, 4);
  local_loglik(p, m);
  EStats prev = local_estats(p, m);
  local_estep(p, m, &prev);
  for (Index r = 0; r < p.n(); ++r) {
    CHECK(p.Q.row(r).sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(p.Q.row(r).minCoeff() >= 0.0);
  }
}

TEST_CASE("penalty-free E-step equals the direct posterior oracle") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<Real> unit(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    const Index n = 20 + static_cast<Index>(rng() % 80);
    const ModelParams m = random_routed_model(rng(), 3);
    MatrixX X(n, 3);
    VectorX y(n);
    for (Index i = 0; i < n; ++i) {
      for (int d = 0; d < 3; ++d) X(i, d) = unit(rng);
      y[i] = unit(rng) - 0.5;
    }
    WorkerPartition p = make_part(X, y, 4);
    local_loglik(p, m);
    local_estep(p, m, nullptr);
    const MatrixX oracle = dfab_oracle::bayes_posterior(p, m);
    CHECK((p.Q - oracle).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("the E-step cannot decrease the variational objective") {
  const ModelParams m = random_routed_model(17, 2);
  MatrixX X = MatrixX::Random(50, 2);
  VectorX y = VectorX::Random(50);
  WorkerPartition p = make_part(X, y, 4);
  local_loglik(p, m);
  EStats prev = local_estats(p, m);

  auto objective = [&](const WorkerPartition& part) {
    Real total = 0;
    for (Index r = 0; r < part.n(); ++r)
      for (int j = 0; j < 4; ++j) {
        const Real q = part.Q(r, j);
        if (q <= 0) continue;
        Real z = part.L(r, j);
        for (const auto& [gate, left] : m.topology.expert_path[j])
          z -= m.gates[gate].d_beta / (2.0 * std::max(prev.nbeta[gate], kLogFloor));
        const int card = m.experts[j].cardinality();
        if (card > 0) z -= card * part.ell(r, j) / (2.0 * std::max(prev.nphi_scaled[j], kLogFloor));
        total += q * z - q * std::log(q);
      }
    return total;
  };

  const Real before = objective(p);
  local_estep(p, m, &prev);
  const Real after = objective(p);
  CHECK(after >= before - 1e-9);
}

TEST_CASE("estep_aggregate sums elementwise and commutes") {
  EStats a, b;
  a.nphi = VectorX::Zero(2);
  a.nphi << 1, 2;
  a.nphi_scaled = a.nphi;
  a.nbeta = VectorX::Constant(1, 3.0);
  b.nphi = VectorX::Zero(2);
  b.nphi << 3, 4;
  b.nphi_scaled = b.nphi;
  b.nbeta = VectorX::Constant(1, 7.0);
  const EStats ab = estep_aggregate({a, b});
  CHECK(ab.nphi[0] == doctest::Approx(4.0));
  CHECK(ab.nphi[1] == doctest::Approx(6.0));
  const EStats ba = estep_aggregate({b, a});
  CHECK(ab.nphi == ba.nphi);
  const EStats solo = estep_aggregate({a});
  CHECK(solo.nphi == a.nphi);
  EStats bad = b;
  bad.nphi = VectorX::Zero(3);
  CHECK_THROWS_AS(estep_aggregate({a, bad}), ContractError);
}

TEST_CASE("shrink eliminates light experts and never strands the model") {
  ModelParams m = flat_model(1, 1);
  MatrixX X(4, 1);
  X << 0.1, 0.2, 0.8, 0.9;
  WorkerPartition p = make_part(X, VectorX::Zero(4), 2);
  p.Q.col(0).setConstant(0.125);
  p.Q.col(1).setConstant(0.875);

  EStats stats = local_estats(p, m);
  CHECK(stats.nphi[0] == doctest::Approx(0.5));
  CHECK(stats.nphi[1] == doctest::Approx(3.5));

  std::vector<WorkerPartition*> parts{&p};
  const ShrinkResult res = shrink(stats, 1.0, m, parts);
  CHECK(res.eliminated == std::vector<int>{0});
  CHECK(res.model.topology.expert_active[0] == 0);
  for (Index r = 0; r < 4; ++r) {
    CHECK(p.Q(r, 0) == doctest::Approx(0.0));
    CHECK(p.Q(r, 1) == doctest::Approx(1.0));
  }

  // Threshold zero eliminates nothing.
  WorkerPartition q = make_part(X, VectorX::Zero(4), 2);
  const EStats s0 = local_estats(q, m);
  CHECK(shrink_decide(s0, 0.0, m).empty());

  // Retention keeps the largest when all fall below.
  EStats tiny;
  tiny.nphi = VectorX::Zero(2);
  tiny.nphi << 0.2, 0.3;
  tiny.nphi_scaled = tiny.nphi;
  tiny.nbeta = VectorX::Constant(1, 0.5);
  const auto eliminated = shrink_decide(tiny, 1.0, m);
  CHECK(eliminated == std::vector<int>{0});
}
