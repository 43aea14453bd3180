#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace dfab {

using Real = double;
using Index = Eigen::Index;
using MatrixX = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
using VectorX = Eigen::Matrix<Real, Eigen::Dynamic, 1>;
using ArrayX = Eigen::Array<Real, Eigen::Dynamic, 1>;
using MatrixU16 = Eigen::Matrix<std::uint16_t, Eigen::Dynamic, Eigen::Dynamic>;

// Probabilities are clamped to this band before any logarithm.
inline constexpr Real kProbClamp = 1e-6;
// Floor for log arguments in penalty terms.
inline constexpr Real kLogFloor = 1e-12;
// Ridge jitter on normal-equation / Newton system diagonals.
inline constexpr Real kRidgeJitter = 1e-8;
// Floor for fitted residual variances.
inline constexpr Real kSigma2Floor = 1e-6;
// Hard cap on logistic weights for separable data.
inline constexpr Real kLogisticWeightCap = 30.0;

struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShrinkageCollapseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainingAborted : std::runtime_error {
  std::string checkpoint_path;
  TrainingAborted(const std::string& what, std::string ckpt)
      : std::runtime_error(what), checkpoint_path(std::move(ckpt)) {}
};

inline Real clamp_prob(Real p) {
  if (p < kProbClamp) return kProbClamp;
  if (p > 1.0 - kProbClamp) return 1.0 - kProbClamp;
  return p;
}

// Counter-based generator for per-sample values that must not depend on how
// samples are dealt to partitions.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline Real hash_unit_real(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::uint64_t h = splitmix64(seed ^ splitmix64(a ^ splitmix64(b)));
  return static_cast<Real>(h >> 11) * 0x1.0p-53;
}

}  // namespace dfab
