#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "dfab/dataset.hpp"
#include "dfab/synth.hpp"

using namespace dfab;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& content) {
    path = std::string(std::tmpnam(nullptr)) + ".csv";
    std::ofstream out(path);
    out << content;
  }
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("load_csv parses small files and reports bad cells") {
  TempFile f("a,b,target\n1,2,3\n4,5,6\n");
  const Dataset d = load_csv(f.path, "target", TaskKind::kRegression);
  CHECK(d.n() == 2);
  CHECK(d.d() == 2);
  CHECK(d.X(1, 0) == doctest::Approx(4.0));
  CHECK(d.y[1] == doctest::Approx(6.0));

  TempFile bad("a,target\n1,oops\n");
  CHECK_THROWS_WITH_AS(static_cast<void>(load_csv(bad.path, "target", TaskKind::kRegression)),
                       doctest::Contains("row 2"), ParseError);

  TempFile label("a,target\n1,2\n");
  CHECK_THROWS_AS(static_cast<void>(load_csv(label.path, "target",
                                             TaskKind::kBinaryClassification)),
                  ParseError);

  TempFile header_only("a,target\n");
  CHECK_THROWS_AS(static_cast<void>(load_csv(header_only.path, "target", TaskKind::kRegression)),
                  ParseError);

  TempFile ragged("a,b,target\n1,2,3\n4,5\n");
  CHECK_THROWS_AS(static_cast<void>(load_csv(ragged.path, "target", TaskKind::kRegression)),
                  ParseError);
}

TEST_CASE("load_csv_features skips the target column when present") {
  TempFile f("a,b,target\n1,2,3\n");
  const Dataset d = load_csv_features(f.path, "target", TaskKind::kRegression);
  CHECK(d.d() == 2);
  const Dataset all = load_csv_features(f.path, "missing", TaskKind::kRegression);
  CHECK(all.d() == 3);
}

TEST_CASE("standardize centers and scales, and is idempotent") {
  Dataset d;
  d.task = TaskKind::kRegression;
  d.X.resize(2, 2);
  d.X << 0, 5, 2, 5;
  d.y.resize(2);
  d.y << 1, 3;
  const Dataset s = standardize(d);
  CHECK(s.X(0, 0) == doctest::Approx(-1.0));
  CHECK(s.X(1, 0) == doctest::Approx(1.0));
  CHECK(s.X(0, 1) == doctest::Approx(0.0));  // constant column is centered only
  CHECK(s.X(1, 1) == doctest::Approx(0.0));
  CHECK(s.y[0] == doctest::Approx(-1.0));

  const Dataset twice = standardize(s);
  CHECK((twice.X - s.X).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((twice.y - s.y).cwiseAbs().maxCoeff() < 1e-12);

  // Ordering within columns survives.
  CHECK((s.X(0, 0) < s.X(1, 0)) == (d.X(0, 0) < d.X(1, 0)));
}

TEST_CASE("split_train_test splits deterministically with nonempty sides") {
  Dataset d;
  d.task = TaskKind::kRegression;
  d.X = MatrixX::Random(10, 2);
  d.y = VectorX::Random(10);
  auto [a1, b1] = split_train_test(d, 0.8, 3);
  CHECK(a1.n() == 8);
  CHECK(b1.n() == 2);
  auto [a2, b2] = split_train_test(d, 0.8, 3);
  CHECK(a1.X == a2.X);
  CHECK(b1.y == b2.y);
  auto [a3, b3] = split_train_test(d, 0.999, 3);
  CHECK(a3.n() == 9);
  CHECK(b3.n() == 1);
  CHECK_THROWS_AS(split_train_test(d, 1.5, 3), ContractError);
}

TEST_CASE("csv export round trips exactly") {
  const SyntheticData synth = synth_generate({2, 3, 4, 50, 1, 2, 0.1, false, 9});
  TempFile f("");
  write_csv(synth.data, f.path);
  const Dataset back = load_csv(f.path, "target", TaskKind::kRegression);
  CHECK(back.X == synth.data.X);
  CHECK(back.y == synth.data.y);
}

TEST_CASE("synthetic generator is deterministic and obeys its spec") {
  SyntheticSpec spec;
  spec.depth = 3;
  spec.experts = 5;
  spec.d = 25;
  spec.n = 2000;
  spec.seed = 77;
  const SyntheticData a = synth_generate(spec);
  const SyntheticData b = synth_generate(spec);
  CHECK(a.data.X == b.data.X);
  CHECK(a.data.y == b.data.y);
  CHECK(a.truth.topology.active_expert_count() == 5);
  for (int j = 0; j < a.truth.topology.expert_count; ++j) {
    if (!a.truth.topology.expert_active[j]) continue;
    const int card = a.truth.experts[j].cardinality();
    CHECK(card >= 10);
    CHECK(card <= 20);
  }
  CHECK_THROWS_AS(synth_generate({3, 9, 4, 100, 1, 2, 0.1, false, 1}), ContractError);
}

TEST_CASE("generator residuals match the configured noise") {
  SyntheticSpec spec;
  spec.depth = 3;
  spec.experts = 4;
  spec.d = 20;
  spec.n = 100000;
  spec.noise = 0.1;
  spec.seed = 123;
  const SyntheticData s = synth_generate(spec);
  Real sq = 0;
  for (Index i = 0; i < s.data.n(); ++i) {
    const auto p = predict(s.data.X.row(i).transpose(), s.truth);
    const Real r = s.data.y[i] - p.value;
    sq += r * r;
  }
  const Real variance = sq / static_cast<Real>(s.data.n());
  CHECK(variance == doctest::Approx(0.1).epsilon(0.10));
}

TEST_CASE("noise flag switches between variance and standard deviation") {
  SyntheticSpec var_spec{2, 3, 6, 40000, 2, 3, 0.1, false, 55};
  SyntheticSpec std_spec{2, 3, 6, 40000, 2, 3, 0.31622776601683794, true, 55};
  const SyntheticData a = synth_generate(var_spec);
  const SyntheticData b = synth_generate(std_spec);
  auto resid_var = [](const SyntheticData& s) {
    Real sq = 0;
    for (Index i = 0; i < s.data.n(); ++i) {
      const Real r = s.data.y[i] - predict(s.data.X.row(i).transpose(), s.truth).value;
      sq += r * r;
    }
    return sq / static_cast<Real>(s.data.n());
  };
  CHECK(resid_var(a) == doctest::Approx(0.1).epsilon(0.1));
  CHECK(resid_var(b) == doctest::Approx(0.1).epsilon(0.1));
}

TEST_CASE("a target-mean predictor scores unit RMSE on standardized targets") {
  const SyntheticData s = synth_generate({2, 3, 5, 5000, 2, 3, 0.1, false, 66});
  const Dataset std_data = standardize(s.data);
  Real se = 0;
  for (Index i = 0; i < std_data.n(); ++i) se += std_data.y[i] * std_data.y[i];
  CHECK(std::sqrt(se / static_cast<Real>(std_data.n())) == doctest::Approx(1.0).epsilon(1e-9));
}
