#pragma once

#include <vector>

#include "dfab/dataset.hpp"
#include "dfab/model.hpp"
#include "dfab/runtime.hpp"

namespace dfab_ref {

// Direct single-process trainer used as the ground truth for the distributed
// runtime at one worker. It shares the model types and the seeded
// initialization with the library, and recomputes every EM quantity with its
// own loops: likelihood caches, the objective, the penalized E-step,
// shrinkage, the gate grid scan, and the greedy L0 expert fits.
struct ReferenceResult {
  std::vector<dfab::Real> fic_trajectory;
  dfab::ModelParams model;
};

ReferenceResult reference_train(const dfab::Dataset& data, const dfab::TrainConfig& tc,
                                std::uint64_t cluster_seed);

}  // namespace dfab_ref
