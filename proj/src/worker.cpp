#include "dfab/worker.hpp"

#include <cstring>
#include <fstream>

namespace dfab {

WorkerNode::WorkerNode(WorkerPartition part, WorkerConfig cfg)
    : part_(std::move(part)), cfg_(std::move(cfg)) {}

void WorkerNode::serve(MessageEndpoint& link) {
  // Announce feature ranges; the grid comes back.
  {
    auto [mins, maxes] = local_minmax(part_);
    Message msg;
    msg.iteration = 0;
    pack_minmax(msg, mins, maxes);
    link.send(msg);
  }
  for (;;) {
    const Message msg = link.recv();
    switch (msg.tag) {
      case MessageTag::kBroadcastGrid:
        attach_grid(part_, std::make_shared<SplitGrid>(unpack_grid(msg)));
        break;
      case MessageTag::kBroadcastModel:
        handle_model(msg, link);
        break;
      case MessageTag::kBroadcastPenalty:
        handle_penalty(msg, link);
        break;
      case MessageTag::kShrinkDirective:
        handle_shrink(msg, link);
        break;
      case MessageTag::kBroadcastFeatureSet:
        handle_feature_sets(msg, link);
        break;
      case MessageTag::kTerminate:
        return;
      default:
        throw TransportError("unexpected message tag");
    }
  }
}

void WorkerNode::handle_model(const Message& msg, MessageEndpoint& link) {
  model_ = unpack_model(msg);
  has_model_ = true;
  const LocalLoglik ll = local_loglik(part_, model_);
  Message out;
  out.iteration = msg.iteration;
  pack_loglik(out, ll);
  link.send(out);
  pack_estats(out, local_estats(part_, model_));
  out.iteration = msg.iteration;
  link.send(out);
}

void WorkerNode::handle_penalty(const Message& msg, MessageEndpoint& link) {
  if (!has_model_) throw TransportError("penalty broadcast before any model");
  const TreeTopology& topo = model_.topology;
  EStats stats;
  const PenaltyMode mode = unpack_penalty(msg, topo.expert_count, topo.gate_count, stats);

  if (mode != PenaltyMode::kExpertStep) {
    const EStats local =
        local_estep(part_, model_, mode == PenaltyMode::kEStep ? &stats : nullptr);
    Message out;
    out.iteration = msg.iteration;
    pack_estats(out, local);
    link.send(out);
    return;
  }

  // Candidate feature selection for every live expert.
  const int experts = topo.expert_count;
  const Index dims = part_.d();
  std::vector<std::uint8_t> abstain(static_cast<std::size_t>(experts), 1);
  std::vector<std::vector<std::uint8_t>> supports(
      static_cast<std::size_t>(experts),
      std::vector<std::uint8_t>(static_cast<std::size_t>(dims), 0));
  if (gram_iteration_ != msg.iteration) {
    grams_.assign(static_cast<std::size_t>(experts), WeightedGram{});
    gram_iteration_ = msg.iteration;
  }
  for (int j = 0; j < experts; ++j) {
    if (!topo.expert_active[j]) continue;
    PenalizedObjective pen{cfg_.worker_count, stats.nphi_scaled[j]};
    std::optional<FobaResult> res;
    if (model_.task == TaskKind::kRegression) {
      WeightedGram& gram = grams_[static_cast<std::size_t>(j)];
      gram = build_weighted_gram(part_.X, part_.y, part_.Q.col(j));
      int cap = static_cast<int>(std::min<Index>(dims, part_.n() - 1));
      if (cfg_.foba_max_features > 0) cap = std::min(cap, cfg_.foba_max_features);
      res = foba_select_regression(gram, pen, cap);
    } else {
      res = foba_select(part_.X, part_.y, part_.Q.col(j), model_.task, pen,
                        cfg_.foba_max_features);
    }
    if (!res) continue;
    abstain[static_cast<std::size_t>(j)] = 0;
    for (int d : res->support)
      supports[static_cast<std::size_t>(j)][static_cast<std::size_t>(d)] = 1;
  }
  Message out;
  out.iteration = msg.iteration;
  pack_candidates(out, abstain, supports);
  link.send(out);
}

void WorkerNode::handle_shrink(const Message& msg, MessageEndpoint& link) {
  if (!part_.grid) throw TransportError("shrink directive before the grid broadcast");
  const TreeTopology& topo = model_.topology;
  const std::vector<int> eliminated = unpack_shrink(msg, topo.expert_count);
  if (!eliminated.empty()) model_ = prune_topology(model_, eliminated);
  const EStats local = apply_shrink(part_, model_, eliminated);
  Message out;
  out.iteration = msg.iteration;
  pack_estats(out, local);
  link.send(out);

  // Batched histogram statistics for every gate; collapsed gates send zeros.
  const int t_max = part_.grid->t_max;
  std::vector<GateStats> per_gate(static_cast<std::size_t>(topo.gate_count));
  for (int i = 0; i < topo.gate_count; ++i) {
    if (topo.gate_passthrough[i]) {
      per_gate[static_cast<std::size_t>(i)].rho_left = MatrixX::Zero(part_.d(), t_max - 1);
      per_gate[static_cast<std::size_t>(i)].rho_right = MatrixX::Zero(part_.d(), t_max - 1);
    } else {
      per_gate[static_cast<std::size_t>(i)] = local_gate_stats(part_, i, topo);
    }
  }
  pack_gate_stats(out, per_gate, t_max);
  out.iteration = msg.iteration;
  link.send(out);
}

void WorkerNode::handle_feature_sets(const Message& msg, MessageEndpoint& link) {
  const TreeTopology& topo = model_.topology;
  const int experts = topo.expert_count;
  const Index dims = part_.d();
  const auto sets = unpack_feature_sets(msg, experts, static_cast<int>(dims));
  std::vector<std::uint8_t> abstain(static_cast<std::size_t>(experts), 1);
  std::vector<ExpertParams> fits(static_cast<std::size_t>(experts));
  for (auto& f : fits) f.weights = VectorX::Zero(dims);

  for (int j = 0; j < experts; ++j) {
    if (!topo.expert_active[j]) continue;
    std::vector<int> features;
    for (Index d = 0; d < dims; ++d)
      if (sets[static_cast<std::size_t>(j)][static_cast<std::size_t>(d)])
        features.push_back(static_cast<int>(d));
    if (model_.task == TaskKind::kRegression) {
      WeightedGram rebuilt;
      const WeightedGram* gram = &grams_[static_cast<std::size_t>(j)];
      if (gram_iteration_ != msg.iteration) {
        rebuilt = build_weighted_gram(part_.X, part_.y, part_.Q.col(j));
        gram = &rebuilt;
      }
      if (auto fit = weighted_ls_fit(*gram, features)) {
        fits[static_cast<std::size_t>(j)] = std::move(*fit);
        abstain[static_cast<std::size_t>(j)] = 0;
      }
    } else {
      if (auto fit = weighted_logistic_fit(part_.X, part_.y, part_.Q.col(j), features)) {
        fits[static_cast<std::size_t>(j)] = std::move(fit->params);
        abstain[static_cast<std::size_t>(j)] = 0;
      }
    }
  }
  Message out;
  out.iteration = msg.iteration;
  pack_fits(out, abstain, fits);
  link.send(out);

  if (cfg_.checkpoint_interval > 0 && !cfg_.checkpoint_dir.empty() &&
      (msg.iteration + 1) % cfg_.checkpoint_interval == 0)
    write_q_snapshot(part_,
                     q_snapshot_path(cfg_.checkpoint_dir, cfg_.worker_index, msg.iteration + 1));
}

std::string q_snapshot_path(const std::string& dir, int worker_index, int iteration) {
  return dir + "/q_w" + std::to_string(worker_index) + "_t" + std::to_string(iteration) +
         ".bin";
}

namespace {
constexpr char kQMagic[4] = {'D', 'F', 'Q', 'S'};
}

void write_q_snapshot(const WorkerPartition& part, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write " + path);
  out.write(kQMagic, 4);
  const std::int64_t n = part.n(), e = part.Q.cols();
  out.write(reinterpret_cast<const char*>(&n), 8);
  out.write(reinterpret_cast<const char*>(&e), 8);
  for (Index r = 0; r < n; ++r)
    for (Index j = 0; j < e; ++j)
      out.write(reinterpret_cast<const char*>(&part.Q(r, j)), 8);
}

void load_q_snapshot(WorkerPartition& part, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kQMagic, 4) != 0)
    throw ParseError(path + ": not a responsibility snapshot");
  std::int64_t n = 0, e = 0;
  in.read(reinterpret_cast<char*>(&n), 8);
  in.read(reinterpret_cast<char*>(&e), 8);
  if (n != part.n()) throw ParseError(path + ": sample count mismatch");
  part.Q.resize(n, e);
  part.L = MatrixX::Zero(n, e);
  part.ell = MatrixX::Zero(n, e);
  for (Index r = 0; r < n; ++r)
    for (Index j = 0; j < e; ++j) {
      in.read(reinterpret_cast<char*>(&part.Q(r, j)), 8);
      if (!in) throw ParseError(path + ": truncated");
    }
}

}  // namespace dfab
