#pragma once

#include <optional>
#include <string>
#include <utility>

#include "dfab/model.hpp"
#include "dfab/types.hpp"

namespace dfab {

// Affine transform fitted on training data; kept so predictions can be
// mapped back to the original units.
struct StandardizationRecord {
  VectorX feature_mean, feature_scale;
  Real target_mean = 0;
  Real target_scale = 1;
  bool target_standardized = false;
};

struct Dataset {
  MatrixX X;  // N x D
  VectorX y;  // N
  TaskKind task = TaskKind::kRegression;
  std::optional<StandardizationRecord> standardization;

  Index n() const { return X.rows(); }
  Index d() const { return X.cols(); }
};

Dataset load_csv(const std::string& path, const std::string& target_column, TaskKind task);

// Features only; a column matching target_column (if any) is skipped and the
// returned targets are zero.
Dataset load_csv_features(const std::string& path, const std::string& target_column,
                          TaskKind task);
void write_csv(const Dataset& data, const std::string& path,
               const std::string& target_column = "target");

// Shifts/scales every feature (and the target, for regression) to mean 0 and
// standard deviation 1. Zero-variance columns are centered only.
Dataset standardize(const Dataset& data);

// Applies a previously fitted record to raw data.
Dataset apply_standardization(const Dataset& raw, const StandardizationRecord& rec);
VectorX standardize_features(const StandardizationRecord& rec, const Eigen::Ref<const VectorX>& x);
Real inverse_standardize_target(const StandardizationRecord& rec, Real y);

// Seeded shuffle then split; both sides are guaranteed nonempty. When
// standardize_outputs is set, statistics come from the train side only and
// are applied to the test side.
std::pair<Dataset, Dataset> split_train_test(const Dataset& data, Real fraction,
                                             std::uint64_t seed,
                                             bool standardize_outputs = false);

}  // namespace dfab
