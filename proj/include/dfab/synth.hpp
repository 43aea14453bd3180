#pragma once

#include <utility>

#include "dfab/dataset.hpp"
#include "dfab/model.hpp"

namespace dfab {

// Random gated tree of sparse linear experts plus data drawn from it.
// Gates are deterministic (g = 1), features are Uniform[0,1], targets are
// Gaussian around the routed expert's linear response.
struct SyntheticSpec {
  int depth = 3;
  int experts = 5;       // <= 2^depth; extra leaves are pruned away
  Index d = 100;
  Index n = 10000;
  int nnz_min = 10;      // nonzero weights per expert, clipped to d
  int nnz_max = 20;
  Real noise = 0.1;      // variance by default
  bool noise_is_stddev = false;
  std::uint64_t seed = 1;
};

struct SyntheticData {
  Dataset data;
  ModelParams truth;
};

SyntheticData synth_generate(const SyntheticSpec& spec);

}  // namespace dfab
