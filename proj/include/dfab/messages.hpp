#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dfab/estep.hpp"
#include "dfab/gates.hpp"
#include "dfab/model.hpp"
#include "dfab/split_grid.hpp"

namespace dfab {

enum class MessageTag : std::uint8_t {
  kBroadcastModel = 1,
  kBroadcastGrid = 2,
  kBroadcastPenalty = 3,
  kBroadcastFeatureSet = 4,
  kMinMaxReport = 5,
  kLoglikReport = 6,
  kEStatsReport = 7,
  kGateStatsReport = 8,
  kExpertCandidateReport = 9,
  kExpertFitReport = 10,
  kShrinkDirective = 11,
  kTerminate = 12,
};

const char* tag_name(MessageTag tag);

// Wire frame: 4-byte little-endian payload byte count, 1-byte tag, 4-byte
// iteration, then the payload as 8-byte little-endian doubles (matrices in
// row-major order).
inline constexpr std::size_t kFrameHeaderBytes = 9;

struct Message {
  MessageTag tag = MessageTag::kTerminate;
  std::int32_t iteration = 0;
  std::vector<Real> payload;

  std::size_t wire_size() const { return kFrameHeaderBytes + 8 * payload.size(); }
};

std::vector<std::uint8_t> encode_frame(const Message& msg);
// Decodes a complete frame; frame must be exactly header+payload.
Message decode_frame(const std::uint8_t* data, std::size_t size);

// Payload codecs. Both ends know (E, G, D, t_max) from initialization, so
// every layout is fixed per tag and never depends on a partition's sample
// count.
void pack_model(Message& msg, const ModelParams& model);
ModelParams unpack_model(const Message& msg);

void pack_grid(Message& msg, const SplitGrid& grid);
SplitGrid unpack_grid(const Message& msg);

void pack_minmax(Message& msg, const VectorX& mins, const VectorX& maxes);
void unpack_minmax(const Message& msg, VectorX& mins, VectorX& maxes);

void pack_loglik(Message& msg, const LocalLoglik& ll);
LocalLoglik unpack_loglik(const Message& msg);

void pack_estats(Message& msg, const EStats& stats);
EStats unpack_estats(const Message& msg, int expert_count, int gate_count);

enum class PenaltyMode : int { kEStepUnpenalized = 0, kEStep = 1, kExpertStep = 2 };
void pack_penalty(Message& msg, PenaltyMode mode, const EStats& stats);
PenaltyMode unpack_penalty(const Message& msg, int expert_count, int gate_count, EStats& stats);

void pack_gate_stats(Message& msg, const std::vector<GateStats>& per_gate, int t_max);
std::vector<GateStats> unpack_gate_stats(const Message& msg, int gate_count, int dims, int t_max);

// Candidate supports: per expert an abstain flag plus a 0/1 indicator row.
void pack_candidates(Message& msg, const std::vector<std::uint8_t>& abstain,
                     const std::vector<std::vector<std::uint8_t>>& supports);
void unpack_candidates(const Message& msg, int expert_count, int dims,
                       std::vector<std::uint8_t>& abstain,
                       std::vector<std::vector<std::uint8_t>>& supports);

void pack_feature_sets(Message& msg, const std::vector<std::vector<std::uint8_t>>& sets);
std::vector<std::vector<std::uint8_t>> unpack_feature_sets(const Message& msg,
                                                           int expert_count, int dims);

// Restricted refits: per expert an abstain flag, intercept, sigma2, weights.
void pack_fits(Message& msg, const std::vector<std::uint8_t>& abstain,
               const std::vector<ExpertParams>& fits);
void unpack_fits(const Message& msg, int expert_count, int dims,
                 std::vector<std::uint8_t>& abstain, std::vector<ExpertParams>& fits);

void pack_shrink(Message& msg, const std::vector<int>& eliminated, int expert_count);
std::vector<int> unpack_shrink(const Message& msg, int expert_count);

}  // namespace dfab
