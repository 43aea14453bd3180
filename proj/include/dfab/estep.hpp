#pragma once

#include <vector>

#include "dfab/model.hpp"
#include "dfab/partition.hpp"

namespace dfab {

// Aggregate responsibility masses. nphi is the plain per-expert mass,
// nphi_scaled weights each sample by its scaling factor, nbeta sums nphi
// over each gate's subtree.
struct EStats {
  VectorX nphi;
  VectorX nphi_scaled;
  VectorX nbeta;
};

struct LocalLoglik {
  Real ll = 0;       // expected complete log-likelihood plus entropy
  Real entropy = 0;  // the entropy part, already contained in ll
};

struct FicReport {
  Real fic = 0;
  Real loglik_sum = 0;
  Real gate_penalty = 0;
  Real expert_penalty = 0;
  Real entropy = 0;  // folded into loglik_sum
};

// Refreshes L and ell from the model and returns this partition's expected
// log-likelihood (entropy included).
LocalLoglik local_loglik(WorkerPartition& part, const ModelParams& model);

// Masses of the current Q with the current ell cache.
EStats local_estats(const WorkerPartition& part, const ModelParams& model);

FicReport fic_aggregate(const std::vector<LocalLoglik>& lls, const EStats& stats,
                        const ModelParams& model);

// Variational E-step on one partition. stats_prev carries the masses of the
// previous iteration; pass nullptr on the first iteration to skip the
// exponentiated penalties. Q is updated in place and this partition's new
// masses are returned.
EStats local_estep(WorkerPartition& part, const ModelParams& model, const EStats* stats_prev);

EStats estep_aggregate(const std::vector<EStats>& locals);

// Experts whose plain mass falls below eps. If every active expert would
// fall, the largest one is retained.
std::vector<int> shrink_decide(const EStats& stats, Real eps, const ModelParams& model);

// Zeroes the eliminated columns, renormalizes each row over the survivors,
// and returns refreshed local masses (against the pruned model).
EStats apply_shrink(WorkerPartition& part, const ModelParams& pruned,
                    const std::vector<int>& eliminated);

struct ShrinkResult {
  std::vector<int> eliminated;
  ModelParams model;
  EStats stats;  // refreshed post-shrink aggregate
};

// Convenience composition for single-process use and tests.
ShrinkResult shrink(const EStats& stats, Real eps, const ModelParams& model,
                    std::vector<WorkerPartition*>& parts);

}  // namespace dfab
