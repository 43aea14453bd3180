#include "dfab/messages.hpp"

#include <cstring>

namespace dfab {

const char* tag_name(MessageTag tag) {
  switch (tag) {
    case MessageTag::kBroadcastModel: return "BroadcastModel";
    case MessageTag::kBroadcastGrid: return "BroadcastGrid";
    case MessageTag::kBroadcastPenalty: return "BroadcastPenalty";
    case MessageTag::kBroadcastFeatureSet: return "BroadcastFeatureSet";
    case MessageTag::kMinMaxReport: return "MinMaxReport";
    case MessageTag::kLoglikReport: return "LoglikReport";
    case MessageTag::kEStatsReport: return "EStatsReport";
    case MessageTag::kGateStatsReport: return "GateStatsReport";
    case MessageTag::kExpertCandidateReport: return "ExpertCandidateReport";
    case MessageTag::kExpertFitReport: return "ExpertFitReport";
    case MessageTag::kShrinkDirective: return "ShrinkDirective";
    case MessageTag::kTerminate: return "Terminate";
  }
  return "Unknown";
}

std::vector<std::uint8_t> encode_frame(const Message& msg) {
  const std::uint32_t payload_bytes = static_cast<std::uint32_t>(8 * msg.payload.size());
  std::vector<std::uint8_t> out(kFrameHeaderBytes + payload_bytes);
  std::memcpy(out.data(), &payload_bytes, 4);
  out[4] = static_cast<std::uint8_t>(msg.tag);
  std::memcpy(out.data() + 5, &msg.iteration, 4);
  if (payload_bytes > 0) std::memcpy(out.data() + 9, msg.payload.data(), payload_bytes);
  return out;
}

Message decode_frame(const std::uint8_t* data, std::size_t size) {
  if (size < kFrameHeaderBytes) throw ParseError("short frame");
  std::uint32_t payload_bytes = 0;
  std::memcpy(&payload_bytes, data, 4);
  if (size != kFrameHeaderBytes + payload_bytes || payload_bytes % 8 != 0)
    throw ParseError("frame length mismatch");
  Message msg;
  msg.tag = static_cast<MessageTag>(data[4]);
  std::memcpy(&msg.iteration, data + 5, 4);
  msg.payload.resize(payload_bytes / 8);
  if (payload_bytes > 0) std::memcpy(msg.payload.data(), data + 9, payload_bytes);
  return msg;
}

namespace {

class Writer {
 public:
  explicit Writer(Message& msg) : p_(msg.payload) { p_.clear(); }
  void put(Real v) { p_.push_back(v); }
  void put_all(const Eigen::Ref<const VectorX>& v) {
    p_.insert(p_.end(), v.data(), v.data() + v.size());
  }
  void put_matrix(const Eigen::Ref<const MatrixX>& m) {  // row-major
    for (Index r = 0; r < m.rows(); ++r)
      for (Index c = 0; c < m.cols(); ++c) p_.push_back(m(r, c));
  }

 private:
  std::vector<Real>& p_;
};

class Reader {
 public:
  explicit Reader(const Message& msg) : p_(msg.payload) {}
  Real get() {
    if (pos_ >= p_.size()) throw ParseError("message payload too short");
    return p_[pos_++];
  }
  int get_int() { return static_cast<int>(get()); }
  VectorX get_vec(Index n) {
    VectorX v(n);
    for (Index i = 0; i < n; ++i) v[i] = get();
    return v;
  }
  MatrixX get_matrix(Index rows, Index cols) {  // row-major
    MatrixX m(rows, cols);
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < cols; ++c) m(r, c) = get();
    return m;
  }
  void expect_end() const {
    if (pos_ != p_.size()) throw ParseError("message payload too long");
  }

 private:
  const std::vector<Real>& p_;
  std::size_t pos_ = 0;
};

}  // namespace

void pack_model(Message& msg, const ModelParams& model) {
  msg.tag = MessageTag::kBroadcastModel;
  Writer w(msg);
  w.put(static_cast<Real>(model.topology.depth));
  w.put(model.task == TaskKind::kRegression ? 0.0 : 1.0);
  for (int i = 0; i < model.topology.gate_count; ++i) {
    const GateParams& g = model.gates[static_cast<std::size_t>(i)];
    w.put(static_cast<Real>(g.gamma));
    w.put(g.threshold);
    w.put(g.g);
    w.put(g.d_beta);
    w.put(model.topology.gate_passthrough[i] ? 1.0 : 0.0);
  }
  for (int j = 0; j < model.topology.expert_count; ++j) {
    const ExpertParams& e = model.experts[static_cast<std::size_t>(j)];
    w.put(model.topology.expert_active[j] ? 1.0 : 0.0);
    w.put(e.intercept);
    w.put(e.sigma2);
    w.put_all(e.weights);
  }
}

ModelParams unpack_model(const Message& msg) {
  Reader r(msg);
  ModelParams model;
  const int depth = r.get_int();
  model.task = r.get() == 0.0 ? TaskKind::kRegression : TaskKind::kBinaryClassification;
  model.topology = TreeTopology(depth);
  model.gates.resize(static_cast<std::size_t>(model.topology.gate_count));
  model.experts.resize(static_cast<std::size_t>(model.topology.expert_count));
  for (int i = 0; i < model.topology.gate_count; ++i) {
    GateParams& g = model.gates[static_cast<std::size_t>(i)];
    g.gamma = r.get_int();
    g.threshold = r.get();
    g.g = r.get();
    g.d_beta = r.get();
    model.topology.gate_passthrough[i] = r.get() != 0.0 ? 1 : 0;
  }
  const std::size_t scalars = msg.payload.size();
  const std::size_t head = 2 + 5 * static_cast<std::size_t>(model.topology.gate_count);
  const std::size_t per_expert =
      (scalars - head) / static_cast<std::size_t>(model.topology.expert_count);
  const Index dims = static_cast<Index>(per_expert) - 3;
  for (int j = 0; j < model.topology.expert_count; ++j) {
    ExpertParams& e = model.experts[static_cast<std::size_t>(j)];
    model.topology.expert_active[j] = r.get() != 0.0 ? 1 : 0;
    e.intercept = r.get();
    e.sigma2 = r.get();
    e.weights = r.get_vec(dims);
  }
  r.expect_end();
  model.topology.refresh();
  return model;
}

void pack_grid(Message& msg, const SplitGrid& grid) {
  msg.tag = MessageTag::kBroadcastGrid;
  Writer w(msg);
  w.put(static_cast<Real>(grid.t_max));
  w.put(static_cast<Real>(grid.dims()));
  for (Index d = 0; d < grid.dims(); ++d) {
    w.put(static_cast<Real>(grid.counts[static_cast<std::size_t>(d)]));
    w.put(grid.xmin[d]);
    w.put(grid.xmax[d]);
  }
  w.put_matrix(grid.thresholds);
}

SplitGrid unpack_grid(const Message& msg) {
  Reader r(msg);
  SplitGrid grid;
  grid.t_max = r.get_int();
  const Index dims = static_cast<Index>(r.get());
  grid.counts.resize(static_cast<std::size_t>(dims));
  grid.xmin.resize(dims);
  grid.xmax.resize(dims);
  for (Index d = 0; d < dims; ++d) {
    grid.counts[static_cast<std::size_t>(d)] = r.get_int();
    grid.xmin[d] = r.get();
    grid.xmax[d] = r.get();
  }
  grid.thresholds = r.get_matrix(dims, grid.t_max - 1);
  r.expect_end();
  return grid;
}

void pack_minmax(Message& msg, const VectorX& mins, const VectorX& maxes) {
  msg.tag = MessageTag::kMinMaxReport;
  Writer w(msg);
  w.put_all(mins);
  w.put_all(maxes);
}

void unpack_minmax(const Message& msg, VectorX& mins, VectorX& maxes) {
  const Index dims = static_cast<Index>(msg.payload.size() / 2);
  Reader r(msg);
  mins = r.get_vec(dims);
  maxes = r.get_vec(dims);
  r.expect_end();
}

void pack_loglik(Message& msg, const LocalLoglik& ll) {
  msg.tag = MessageTag::kLoglikReport;
  Writer w(msg);
  w.put(ll.ll);
  w.put(ll.entropy);
}

LocalLoglik unpack_loglik(const Message& msg) {
  Reader r(msg);
  LocalLoglik ll;
  ll.ll = r.get();
  ll.entropy = r.get();
  r.expect_end();
  return ll;
}

void pack_estats(Message& msg, const EStats& stats) {
  msg.tag = MessageTag::kEStatsReport;
  Writer w(msg);
  w.put_all(stats.nphi);
  w.put_all(stats.nphi_scaled);
  w.put_all(stats.nbeta);
}

EStats unpack_estats(const Message& msg, int expert_count, int gate_count) {
  Reader r(msg);
  EStats s;
  s.nphi = r.get_vec(expert_count);
  s.nphi_scaled = r.get_vec(expert_count);
  s.nbeta = r.get_vec(gate_count);
  r.expect_end();
  return s;
}

void pack_penalty(Message& msg, PenaltyMode mode, const EStats& stats) {
  msg.tag = MessageTag::kBroadcastPenalty;
  Writer w(msg);
  w.put(static_cast<Real>(static_cast<int>(mode)));
  w.put_all(stats.nphi);
  w.put_all(stats.nphi_scaled);
  w.put_all(stats.nbeta);
}

PenaltyMode unpack_penalty(const Message& msg, int expert_count, int gate_count,
                           EStats& stats) {
  Reader r(msg);
  const auto mode = static_cast<PenaltyMode>(r.get_int());
  stats.nphi = r.get_vec(expert_count);
  stats.nphi_scaled = r.get_vec(expert_count);
  stats.nbeta = r.get_vec(gate_count);
  r.expect_end();
  return mode;
}

void pack_gate_stats(Message& msg, const std::vector<GateStats>& per_gate, int t_max) {
  msg.tag = MessageTag::kGateStatsReport;
  Writer w(msg);
  for (const auto& gs : per_gate) {
    w.put_matrix(gs.rho_left);
    w.put_matrix(gs.rho_right);
  }
  (void)t_max;
}

std::vector<GateStats> unpack_gate_stats(const Message& msg, int gate_count, int dims,
                                         int t_max) {
  Reader r(msg);
  std::vector<GateStats> out(static_cast<std::size_t>(gate_count));
  for (auto& gs : out) {
    gs.rho_left = r.get_matrix(dims, t_max - 1);
    gs.rho_right = r.get_matrix(dims, t_max - 1);
  }
  r.expect_end();
  return out;
}

void pack_candidates(Message& msg, const std::vector<std::uint8_t>& abstain,
                     const std::vector<std::vector<std::uint8_t>>& supports) {
  msg.tag = MessageTag::kExpertCandidateReport;
  Writer w(msg);
  for (std::size_t j = 0; j < supports.size(); ++j) {
    w.put(abstain[j] ? 1.0 : 0.0);
    for (auto b : supports[j]) w.put(b ? 1.0 : 0.0);
  }
}

void unpack_candidates(const Message& msg, int expert_count, int dims,
                       std::vector<std::uint8_t>& abstain,
                       std::vector<std::vector<std::uint8_t>>& supports) {
  Reader r(msg);
  abstain.assign(static_cast<std::size_t>(expert_count), 0);
  supports.assign(static_cast<std::size_t>(expert_count),
                  std::vector<std::uint8_t>(static_cast<std::size_t>(dims), 0));
  for (int j = 0; j < expert_count; ++j) {
    abstain[static_cast<std::size_t>(j)] = r.get() != 0.0 ? 1 : 0;
    for (int d = 0; d < dims; ++d)
      supports[static_cast<std::size_t>(j)][static_cast<std::size_t>(d)] =
          r.get() != 0.0 ? 1 : 0;
  }
  r.expect_end();
}

void pack_feature_sets(Message& msg, const std::vector<std::vector<std::uint8_t>>& sets) {
  msg.tag = MessageTag::kBroadcastFeatureSet;
  Writer w(msg);
  for (const auto& s : sets)
    for (auto b : s) w.put(b ? 1.0 : 0.0);
}

std::vector<std::vector<std::uint8_t>> unpack_feature_sets(const Message& msg,
                                                           int expert_count, int dims) {
  Reader r(msg);
  std::vector<std::vector<std::uint8_t>> sets(
      static_cast<std::size_t>(expert_count),
      std::vector<std::uint8_t>(static_cast<std::size_t>(dims), 0));
  for (auto& s : sets)
    for (auto& b : s) b = r.get() != 0.0 ? 1 : 0;
  r.expect_end();
  return sets;
}

void pack_fits(Message& msg, const std::vector<std::uint8_t>& abstain,
               const std::vector<ExpertParams>& fits) {
  msg.tag = MessageTag::kExpertFitReport;
  Writer w(msg);
  for (std::size_t j = 0; j < fits.size(); ++j) {
    w.put(abstain[j] ? 1.0 : 0.0);
    w.put(fits[j].intercept);
    w.put(fits[j].sigma2);
    w.put_all(fits[j].weights);
  }
}

void unpack_fits(const Message& msg, int expert_count, int dims,
                 std::vector<std::uint8_t>& abstain, std::vector<ExpertParams>& fits) {
  Reader r(msg);
  abstain.assign(static_cast<std::size_t>(expert_count), 0);
  fits.assign(static_cast<std::size_t>(expert_count), ExpertParams{});
  for (int j = 0; j < expert_count; ++j) {
    abstain[static_cast<std::size_t>(j)] = r.get() != 0.0 ? 1 : 0;
    ExpertParams& e = fits[static_cast<std::size_t>(j)];
    e.intercept = r.get();
    e.sigma2 = r.get();
    e.weights = r.get_vec(dims);
  }
  r.expect_end();
}

void pack_shrink(Message& msg, const std::vector<int>& eliminated, int expert_count) {
  msg.tag = MessageTag::kShrinkDirective;
  Writer w(msg);
  std::vector<Real> mask(static_cast<std::size_t>(expert_count), 0.0);
  for (int j : eliminated) mask[static_cast<std::size_t>(j)] = 1.0;
  for (Real v : mask) w.put(v);
}

std::vector<int> unpack_shrink(const Message& msg, int expert_count) {
  Reader r(msg);
  std::vector<int> eliminated;
  for (int j = 0; j < expert_count; ++j)
    if (r.get() != 0.0) eliminated.push_back(j);
  r.expect_end();
  return eliminated;
}

}  // namespace dfab
