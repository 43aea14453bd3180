#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "dfab/dataset.hpp"
#include "dfab/split_grid.hpp"
#include "dfab/types.hpp"

namespace dfab {

// One worker's slice of the training set together with its per-sample
// EM state. Q holds the responsibilities, L the cached log path-plus-expert
// likelihoods, ell the cached scaling factors; L and ell are regenerated
// from the broadcast model on every objective pass.
struct WorkerPartition {
  MatrixX X;
  VectorX y;
  MatrixX Q;
  MatrixX L;
  MatrixX ell;
  std::vector<std::int64_t> global_ids;
  std::shared_ptr<const SplitGrid> grid;
  MatrixU16 bins;  // candidate rank per (sample, dimension)

  Index n() const { return X.rows(); }
  Index d() const { return X.cols(); }
  Index experts() const { return Q.cols(); }
};

// Seeded shuffle, then contiguous blocks of size ceil(N/W) or floor(N/W).
std::vector<WorkerPartition> partition_dataset(const Dataset& data, int workers,
                                               std::uint64_t seed);

// Allocates Q/L/ell for expert_count experts and seeds Q with row-normalized
// uniform-plus-jitter responsibilities. The jitter is keyed on the sample's
// global id so it does not depend on how samples were dealt to workers.
void allocate_state(WorkerPartition& part, int expert_count, std::uint64_t seed);

// Attaches the shared grid and precomputes candidate ranks for every sample.
void attach_grid(WorkerPartition& part, std::shared_ptr<const SplitGrid> grid);

// Binary partition-file round trip for workers that load their own slice.
void write_partition_file(const WorkerPartition& part, TaskKind task, const std::string& path);
WorkerPartition read_partition_file(const std::string& path, TaskKind* task_out = nullptr);

}  // namespace dfab
