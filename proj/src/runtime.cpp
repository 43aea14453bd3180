#include "dfab/runtime.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "dfab/experts.hpp"
#include "dfab/gates.hpp"
#include "dfab/model_io.hpp"
#include "dfab/socket_transport.hpp"
#include "dfab/transport.hpp"
#include "dfab/worker.hpp"

namespace dfab {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

std::string resolved_dir(const std::string& configured) {
  return configured.empty() ? env_or("DFAB_DATA_DIR", ".") : configured;
}

std::uint16_t resolved_port(std::uint16_t configured) {
  if (configured != 0) return configured;
  const std::string env = env_or("DFAB_WORKER_PORT", "");
  return env.empty() ? std::uint16_t{7711} : static_cast<std::uint16_t>(std::stoi(env));
}

json train_config_to_json(const TrainConfig& tc) {
  return json{{"task", tc.task == TaskKind::kRegression ? "regression" : "classification"},
              {"depth", tc.depth},
              {"t_max", tc.t_max},
              {"eps_shrink", tc.eps_shrink},
              {"delta_term", tc.delta_term},
              {"max_iterations", tc.max_iterations},
              {"d_beta", tc.d_beta},
              {"foba_max_features", tc.foba_max_features},
              {"swapped_gate_score", tc.swapped_gate_score},
              {"seed", tc.seed},
              {"restarts", tc.restarts},
              {"probe_iterations", tc.probe_iterations}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig tc;
  tc.task = j.at("task") == "regression" ? TaskKind::kRegression
                                         : TaskKind::kBinaryClassification;
  tc.depth = j.at("depth").get<int>();
  tc.t_max = j.at("t_max").get<int>();
  tc.eps_shrink = j.at("eps_shrink").get<Real>();
  tc.delta_term = j.at("delta_term").get<Real>();
  tc.max_iterations = j.at("max_iterations").get<int>();
  tc.d_beta = j.at("d_beta").get<Real>();
  tc.foba_max_features = j.at("foba_max_features").get<int>();
  tc.swapped_gate_score = j.at("swapped_gate_score").get<bool>();
  tc.seed = j.at("seed").get<std::uint64_t>();
  tc.restarts = j.value("restarts", 1);
  tc.probe_iterations = j.value("probe_iterations", 25);
  return tc;
}

void validate(const Dataset& data, const TrainConfig& tc, const ClusterConfig& cc) {
  if (cc.workers < 1) throw ContractError("need at least one worker");
  if (data.n() < cc.workers) throw ContractError("fewer samples than workers");
  if (tc.depth < 1) throw ContractError("depth must be >= 1");
  if (tc.t_max < 2 || tc.t_max > 4096) throw ContractError("t_max must be in [2, 4096]");
  if (!(tc.delta_term > 0 && tc.delta_term < 1))
    throw ContractError("delta_term must be in (0,1)");
  if (tc.eps_shrink < 0) throw ContractError("eps_shrink must be nonnegative");
  if (tc.max_iterations < 0) throw ContractError("max_iterations must be nonnegative");
  if (cc.loopback_free && (cc.workers != 1 || cc.transport != TransportKind::kInProcess))
    throw ContractError("loopback-free mode needs a single in-process worker");
}

// Coordinator-side view of the cluster: endpoints, byte accounting, and for
// the in-process transport direct handles on the worker state (used only for
// snapshots, between iterations when workers are parked on recv).
class Cluster {
 public:
  Cluster(const Dataset& data, const TrainConfig& tc, const ClusterConfig& cc,
          int resume_iteration, const std::string& resume_dir)
      : tc_(tc), cc_(cc) {
    parts_ = partition_dataset(data, cc.workers, cc.seed);
    const int experts = 1 << tc.depth;
    for (auto& p : parts_) allocate_state(p, experts, tc.seed);
    if (resume_iteration >= 0) {
      for (int w = 0; w < cc.workers; ++w)
        load_q_snapshot(parts_[static_cast<std::size_t>(w)],
                        q_snapshot_path(resume_dir, w, resume_iteration));
    }
    if (cc.transport == TransportKind::kInProcess)
      start_inprocess();
    else
      start_socket(data.task, resume_iteration);
  }

  ~Cluster() { shutdown(); }

  void send(int w, const Message& msg) {
    links_[static_cast<std::size_t>(w)]->send(msg);
    count(msg, bytes_sent_);
  }

  void broadcast(const Message& msg) {
    for (int w = 0; w < cc_.workers; ++w) send(w, msg);
  }

  Message recv(int w) {
    Message msg = links_[static_cast<std::size_t>(w)]->recv();
    count(msg, bytes_received_);
    return msg;
  }

  Message recv_expect(int w, MessageTag tag) {
    Message msg = recv(w);
    if (msg.tag != tag)
      throw TransportError(std::string("expected ") + tag_name(tag) + ", got " +
                           tag_name(msg.tag));
    return msg;
  }

  void reset_counters() {
    bytes_sent_ = 0;
    bytes_received_ = 0;
    by_tag_.clear();
  }
  std::uint64_t bytes_sent() const { return bytes_sent_; }
  std::uint64_t bytes_received() const { return bytes_received_; }
  const std::map<MessageTag, std::uint64_t>& by_tag() const { return by_tag_; }

  int workers() const { return cc_.workers; }

  // In-process only: the worker's live partition (valid between iterations).
  const WorkerPartition& partition(int w) const {
    if (!nodes_.empty()) return nodes_[static_cast<std::size_t>(w)]->partition();
    return parts_[static_cast<std::size_t>(w)];
  }

  void shutdown() {
    for (auto& ch : channels_) ch.close();
    for (auto& th : threads_)
      if (th.joinable()) th.join();
    threads_.clear();
    links_.clear();
    channels_.clear();
    nodes_.clear();
  }

 private:
  void count(const Message& msg, std::uint64_t& counter) {
    if (cc_.loopback_free) return;
    counter += msg.wire_size();
    by_tag_[msg.tag] += msg.wire_size();
  }

  void start_inprocess() {
    channels_.resize(static_cast<std::size_t>(cc_.workers));
    for (int w = 0; w < cc_.workers; ++w) {
      WorkerConfig wcfg;
      wcfg.task = tc_.task;
      wcfg.worker_count = cc_.workers;
      wcfg.worker_index = w;
      wcfg.foba_max_features = tc_.foba_max_features;
      // Snapshots are taken by the coordinator on this transport.
      wcfg.checkpoint_interval = 0;
      auto node = std::make_unique<WorkerNode>(std::move(parts_[static_cast<std::size_t>(w)]),
                                               wcfg);
      auto worker_link = channels_[static_cast<std::size_t>(w)].worker_end();
      links_.push_back(channels_[static_cast<std::size_t>(w)].coordinator_end());
      WorkerNode* raw = node.get();
      InProcessChannel* channel = &channels_[static_cast<std::size_t>(w)];
      nodes_.push_back(std::move(node));
      threads_.emplace_back([raw, channel,
                             link = std::shared_ptr<MessageEndpoint>(std::move(worker_link))]() {
        try {
          raw->serve(*link);
        } catch (const TransportError&) {
          // Coordinator tore the channel down.
        } catch (...) {
          channel->close();  // surface the failure as a transport error
        }
      });
    }
    parts_.clear();
  }

  void start_socket(TaskKind task, int resume_iteration) {
    const std::string dir = resolved_dir(cc_.data_dir);
    fs::create_directories(dir);
    for (int w = 0; w < cc_.workers; ++w)
      write_partition_file(parts_[static_cast<std::size_t>(w)], task,
                           dir + "/part_" + std::to_string(w) + ".bin");
    SocketListener listener(resolved_port(cc_.port));
    const auto& sample = parts_.front();
    for (int w = 0; w < cc_.workers; ++w) {
      auto ep = listener.accept_one();
      WorkerHello hello;
      hello.worker_index = w;
      hello.worker_count = cc_.workers;
      hello.expert_count = 1 << tc_.depth;
      hello.gate_count = (1 << tc_.depth) - 1;
      hello.dims = static_cast<std::int32_t>(sample.d());
      hello.t_max = tc_.t_max;
      hello.task = task == TaskKind::kRegression ? 0 : 1;
      hello.checkpoint_interval = cc_.checkpoint_interval;
      hello.resume_iteration = resume_iteration;
      hello.foba_max_features = tc_.foba_max_features;
      hello.init_seed = tc_.seed;
      ep->send_hello(hello);
      links_.push_back(std::move(ep));
    }
    parts_.clear();
  }

  TrainConfig tc_;
  ClusterConfig cc_;
  std::vector<WorkerPartition> parts_;
  std::vector<InProcessChannel> channels_;
  std::vector<std::unique_ptr<WorkerNode>> nodes_;
  std::vector<std::thread> threads_;
  std::vector<std::unique_ptr<MessageEndpoint>> links_;
  std::uint64_t bytes_sent_ = 0, bytes_received_ = 0;
  std::map<MessageTag, std::uint64_t> by_tag_;
};

}  // namespace

ModelParams init_model(const TrainConfig& tc, Index dims, const SplitGrid& grid,
                       Real target_mean) {
  std::mt19937_64 rng(tc.seed ^ 0x6a09e667f3bcc908ull);
  ModelParams model;
  model.task = tc.task;
  model.topology = TreeTopology(tc.depth);
  model.gates.resize(static_cast<std::size_t>(model.topology.gate_count));
  model.experts.resize(static_cast<std::size_t>(model.topology.expert_count));
  std::uniform_int_distribution<int> dim_pick(0, static_cast<int>(dims) - 1);
  for (auto& g : model.gates) {
    g.d_beta = tc.d_beta;
    g.g = 0.8;
    int gamma = dim_pick(rng);
    for (int tries = 0; tries < 64 && grid.counts[static_cast<std::size_t>(gamma)] == 0;
         ++tries)
      gamma = dim_pick(rng);
    g.gamma = gamma;
    const int k = grid.counts[static_cast<std::size_t>(gamma)];
    if (k > 0) {
      std::uniform_int_distribution<int> t_pick(k / 4, k - 1 - k / 4);
      g.threshold = grid.thresholds(gamma, t_pick(rng));
    } else {
      g.threshold = grid.xmin[gamma];
    }
  }
  std::uniform_real_distribution<Real> tilt(-0.3, 0.3);
  for (auto& e : model.experts) {
    e.weights = VectorX::Zero(dims);
    for (Index d = 0; d < dims; ++d) e.weights[d] = tilt(rng);
    e.intercept = target_mean;
    e.sigma2 = 1.0;
  }
  return model;
}

TrainResult run_training(const Dataset& data, const TrainConfig& tc, const ClusterConfig& cc,
                         const std::string& resume_snapshot) {
  validate(data, tc, cc);

  int start_iteration = 0;
  std::vector<Real> fic_history;
  ModelParams model;
  bool resumed = false;
  if (!resume_snapshot.empty()) {
    const Snapshot snap = read_snapshot(resume_snapshot);
    if (snap.workers != cc.workers)
      throw ContractError("snapshot was taken with a different worker count");
    if (snap.cluster_seed != cc.seed)
      throw ContractError("snapshot was taken with a different partition seed");
    start_iteration = snap.iteration;
    fic_history = snap.fic_history;
    model = snap.model;
    resumed = true;
  }
  const std::string resume_dir =
      resumed ? fs::path(resume_snapshot).parent_path().string() : std::string();

  Cluster cluster(data, tc, cc, resumed ? start_iteration : -1,
                  resumed && !resume_dir.empty() ? resume_dir : ".");

  TrainReport report;
  report.final_fic = std::numeric_limits<Real>::quiet_NaN();
  const std::string ckpt_dir = resolved_dir(cc.checkpoint_dir);
  const Index dims = data.d();
  std::shared_ptr<SplitGrid> grid;

  try {
    // Initialization round: collect ranges, share the grid.
    std::vector<VectorX> mins, maxes;
    for (int w = 0; w < cc.workers; ++w) {
      const Message msg = cluster.recv_expect(w, MessageTag::kMinMaxReport);
      VectorX lo, hi;
      unpack_minmax(msg, lo, hi);
      mins.push_back(std::move(lo));
      maxes.push_back(std::move(hi));
    }
    grid = std::make_shared<SplitGrid>(build_split_grid(mins, maxes, tc.t_max));
    {
      Message msg;
      msg.iteration = start_iteration;
      pack_grid(msg, *grid);
      cluster.broadcast(msg);
    }
  } catch (const TransportError& e) {
    cluster.shutdown();
    throw TrainingAborted(std::string("worker communication failed: ") + e.what(), "");
  }
  if (!resumed) model = init_model(tc, data.d(), *grid, data.y.mean());
  report.init_bytes = cluster.bytes_sent() + cluster.bytes_received();

  const int expert_count = model.topology.expert_count;
  const int gate_count = model.topology.gate_count;

  try {
    for (int t = start_iteration; t < tc.max_iterations; ++t) {
      const auto t_start = std::chrono::steady_clock::now();
      cluster.reset_counters();

      // Objective pass: broadcast the model, gather log-likelihoods and the
      // masses of the current responsibilities.
      Message msg;
      msg.iteration = t;
      pack_model(msg, model);
      cluster.broadcast(msg);
      std::vector<LocalLoglik> lls;
      std::vector<EStats> locals;
      for (int w = 0; w < cc.workers; ++w) {
        lls.push_back(unpack_loglik(cluster.recv_expect(w, MessageTag::kLoglikReport)));
        locals.push_back(unpack_estats(cluster.recv_expect(w, MessageTag::kEStatsReport),
                                       expert_count, gate_count));
      }
      EStats stats = estep_aggregate(locals);
      const FicReport fic = fic_aggregate(lls, stats, model);
      fic_history.push_back(fic.fic);

      const bool converged =
          fic_history.size() >= 2 &&
          std::abs(fic.fic - fic_history[fic_history.size() - 2]) <
              tc.delta_term * std::abs(fic_history[fic_history.size() - 2]);
      if (converged) {
        IterationRecord rec;
        rec.iteration = t;
        rec.fic = fic.fic;
        rec.active_experts = model.topology.active_expert_count();
        for (int j = 0; j < expert_count; ++j)
          if (model.topology.expert_active[j])
            rec.cardinalities.push_back(model.experts[static_cast<std::size_t>(j)].cardinality());
        rec.bytes_sent = cluster.bytes_sent();
        rec.bytes_received = cluster.bytes_received();
        rec.bytes_by_tag = cluster.by_tag();
        rec.millis = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - t_start)
                         .count();
        report.iterations.push_back(std::move(rec));
        report.converged = true;
        break;
      }

      // E-step: ship the previous masses as penalties (skipped on the very
      // first pass), gather the updated masses.
      pack_penalty(msg, t == 0 ? PenaltyMode::kEStepUnpenalized : PenaltyMode::kEStep, stats);
      msg.iteration = t;
      cluster.broadcast(msg);
      locals.clear();
      for (int w = 0; w < cc.workers; ++w)
        locals.push_back(unpack_estats(cluster.recv_expect(w, MessageTag::kEStatsReport),
                                       expert_count, gate_count));
      stats = estep_aggregate(locals);

      // Shrinkage: decide centrally, apply everywhere, refresh the masses.
      const std::vector<int> eliminated = shrink_decide(stats, tc.eps_shrink, model);
      if (!eliminated.empty()) model = prune_topology(model, eliminated);
      pack_shrink(msg, eliminated, expert_count);
      msg.iteration = t;
      cluster.broadcast(msg);
      locals.clear();
      std::vector<std::vector<GateStats>> gate_reports;
      for (int w = 0; w < cc.workers; ++w) {
        locals.push_back(unpack_estats(cluster.recv_expect(w, MessageTag::kEStatsReport),
                                       expert_count, gate_count));
        gate_reports.push_back(unpack_gate_stats(
            cluster.recv_expect(w, MessageTag::kGateStatsReport), gate_count,
            static_cast<int>(dims), tc.t_max));
      }
      stats = estep_aggregate(locals);

      // Gate M-step on the summed histograms.
      for (int i = 0; i < gate_count; ++i) {
        if (model.topology.gate_passthrough[i]) continue;
        GateStats total = std::move(gate_reports[0][static_cast<std::size_t>(i)]);
        for (int w = 1; w < cc.workers; ++w) {
          total.rho_left += gate_reports[static_cast<std::size_t>(w)][static_cast<std::size_t>(i)].rho_left;
          total.rho_right += gate_reports[static_cast<std::size_t>(w)][static_cast<std::size_t>(i)].rho_right;
        }
        if (!(stats.nbeta[i] > 0)) continue;
        if (auto gate = select_gate(total, stats.nbeta[i], *grid, tc.d_beta,
                                    tc.swapped_gate_score))
          model.gates[static_cast<std::size_t>(i)] = *gate;
      }

      // Expert M-step: per-worker selection, vote, restricted refit, average.
      pack_penalty(msg, PenaltyMode::kExpertStep, stats);
      msg.iteration = t;
      cluster.broadcast(msg);
      std::vector<std::vector<std::uint8_t>> abstain(static_cast<std::size_t>(cc.workers));
      std::vector<std::vector<std::vector<std::uint8_t>>> supports(
          static_cast<std::size_t>(cc.workers));
      for (int w = 0; w < cc.workers; ++w)
        unpack_candidates(cluster.recv_expect(w, MessageTag::kExpertCandidateReport),
                          expert_count, static_cast<int>(dims),
                          abstain[static_cast<std::size_t>(w)],
                          supports[static_cast<std::size_t>(w)]);

      std::vector<std::vector<std::uint8_t>> feature_sets(
          static_cast<std::size_t>(expert_count),
          std::vector<std::uint8_t>(static_cast<std::size_t>(dims), 0));
      for (int j = 0; j < expert_count; ++j) {
        if (!model.topology.expert_active[j]) continue;
        std::vector<std::vector<std::uint8_t>> worker_supports;
        for (int w = 0; w < cc.workers; ++w)
          worker_supports.push_back(supports[static_cast<std::size_t>(w)][static_cast<std::size_t>(j)]);
        for (int d : majority_vote(worker_supports, cc.workers))
          feature_sets[static_cast<std::size_t>(j)][static_cast<std::size_t>(d)] = 1;
      }
      pack_feature_sets(msg, feature_sets);
      msg.iteration = t;
      cluster.broadcast(msg);

      std::vector<std::vector<std::uint8_t>> fit_abstain(static_cast<std::size_t>(cc.workers));
      std::vector<std::vector<ExpertParams>> fits(static_cast<std::size_t>(cc.workers));
      for (int w = 0; w < cc.workers; ++w)
        unpack_fits(cluster.recv_expect(w, MessageTag::kExpertFitReport), expert_count,
                    static_cast<int>(dims), fit_abstain[static_cast<std::size_t>(w)],
                    fits[static_cast<std::size_t>(w)]);
      for (int j = 0; j < expert_count; ++j) {
        if (!model.topology.expert_active[j]) continue;
        std::vector<ExpertParams> contributing;
        for (int w = 0; w < cc.workers; ++w)
          if (!fit_abstain[static_cast<std::size_t>(w)][static_cast<std::size_t>(j)])
            contributing.push_back(fits[static_cast<std::size_t>(w)][static_cast<std::size_t>(j)]);
        if (!contributing.empty())
          model.experts[static_cast<std::size_t>(j)] = average_weights(contributing);
        // All abstained: the expert keeps its previous parameters.
      }

      IterationRecord rec;
      rec.iteration = t;
      rec.fic = fic.fic;
      rec.active_experts = model.topology.active_expert_count();
      for (int j = 0; j < expert_count; ++j)
        if (model.topology.expert_active[j])
          rec.cardinalities.push_back(model.experts[static_cast<std::size_t>(j)].cardinality());
      rec.bytes_sent = cluster.bytes_sent();
      rec.bytes_received = cluster.bytes_received();
      rec.bytes_by_tag = cluster.by_tag();

      // Periodic snapshot of coordinator and worker state.
      if (cc.checkpoint_interval > 0 && (t + 1) % cc.checkpoint_interval == 0) {
        fs::create_directories(ckpt_dir);
        Snapshot snap;
        snap.iteration = t + 1;
        snap.model = model;
        snap.stats = stats;
        snap.fic_history = fic_history;
        snap.train = tc;
        snap.cluster_seed = cc.seed;
        snap.workers = cc.workers;
        for (int w = 0; w < cc.workers; ++w) {
          const std::string qpath = q_snapshot_path(ckpt_dir, w, t + 1);
          if (cc.transport == TransportKind::kInProcess)
            write_q_snapshot(cluster.partition(w), qpath);
          snap.q_files.push_back(fs::path(qpath).filename().string());
        }
        const std::string path = snapshot_path(ckpt_dir, t + 1);
        write_snapshot(snap, path);
        report.last_checkpoint = path;
      }

      rec.millis = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                             t_start)
                       .count();
      report.iterations.push_back(std::move(rec));
    }
  } catch (const TransportError& e) {
    cluster.shutdown();
    throw TrainingAborted(std::string("worker communication failed: ") + e.what(),
                          report.last_checkpoint);
  }

  {
    Message msg;
    msg.iteration = static_cast<std::int32_t>(fic_history.size());
    msg.tag = MessageTag::kTerminate;
    msg.payload.clear();
    cluster.broadcast(msg);
  }
  cluster.shutdown();

  if (!fic_history.empty()) report.final_fic = fic_history.back();
  report.final_active_experts = model.topology.active_expert_count();
  return TrainResult{std::move(model), std::move(report)};
}

TrainResult run_training_restarts(const Dataset& data, const TrainConfig& tc,
                                  const ClusterConfig& cc) {
  if (tc.restarts < 1 || tc.probe_iterations < 1)
    throw ContractError("restarts and probe_iterations must be positive");
  if (tc.restarts == 1) return run_training(data, tc, cc);

  const int probe = std::min(tc.probe_iterations, tc.max_iterations);
  const std::string base_dir = resolved_dir(cc.checkpoint_dir);
  fs::create_directories(base_dir);

  struct Probe {
    TrainConfig tc;
    ClusterConfig cc;
    TrainResult result;
    std::string dir;
  };
  std::vector<Probe> probes;
  for (int r = 0; r < tc.restarts; ++r) {
    Probe p;
    p.tc = tc;
    p.tc.seed = splitmix64(tc.seed ^ static_cast<std::uint64_t>(r));
    p.tc.max_iterations = probe;
    p.cc = cc;
    p.dir = base_dir + "/restart_" + std::to_string(r);
    p.cc.checkpoint_dir = p.dir;
    p.cc.checkpoint_interval = probe;
    fs::create_directories(p.dir);
    p.result = run_training(data, p.tc, p.cc);
    probes.push_back(std::move(p));
  }

  int best = 0;
  for (int r = 1; r < tc.restarts; ++r) {
    const Real a = probes[static_cast<std::size_t>(r)].result.report.final_fic;
    const Real b = probes[static_cast<std::size_t>(best)].result.report.final_fic;
    if (std::isfinite(a) && (!std::isfinite(b) || a > b)) best = r;
  }

  Probe& winner = probes[static_cast<std::size_t>(best)];
  TrainResult out;
  if (winner.result.report.converged || probe >= tc.max_iterations) {
    out = std::move(winner.result);
  } else {
    TrainConfig full = tc;
    full.seed = winner.tc.seed;
    const TrainResult rest =
        run_training(data, full, cc, snapshot_path(winner.dir, probe));
    out.model = rest.model;
    out.report = winner.result.report;
    out.report.iterations.insert(out.report.iterations.end(),
                                 rest.report.iterations.begin(),
                                 rest.report.iterations.end());
    out.report.final_fic = rest.report.final_fic;
    out.report.final_active_experts = rest.report.final_active_experts;
    out.report.converged = rest.report.converged;
    out.report.last_checkpoint = rest.report.last_checkpoint;
  }
  for (auto& p : probes) {
    std::error_code ec;
    fs::remove_all(p.dir, ec);
  }
  return out;
}

std::string train_config_json(const TrainConfig& tc) { return train_config_to_json(tc).dump(); }

std::string cluster_config_json(const ClusterConfig& cc) {
  return json{{"workers", cc.workers},
              {"transport", cc.transport == TransportKind::kInProcess ? "inprocess" : "socket"},
              {"seed", cc.seed},
              {"checkpoint_interval", cc.checkpoint_interval},
              {"checkpoint_dir", cc.checkpoint_dir},
              {"loopback_free", cc.loopback_free},
              {"port", cc.port},
              {"data_dir", cc.data_dir}}
      .dump();
}

std::map<MessageTag, std::uint64_t> account_bytes(const TrainReport& report, int iteration) {
  for (const auto& rec : report.iterations)
    if (rec.iteration == iteration) return rec.bytes_by_tag;
  throw ContractError("no record for iteration " + std::to_string(iteration));
}

void write_report_csv(const TrainReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path);
  out << "iteration,fic,active_experts,bytes_sent,bytes_received,millis\n";
  char buf[64];
  for (const auto& rec : report.iterations) {
    std::snprintf(buf, sizeof(buf), "%.17g", rec.fic);
    out << rec.iteration << "," << buf << "," << rec.active_experts << "," << rec.bytes_sent
        << "," << rec.bytes_received << "," << rec.millis << "\n";
  }
}

std::string snapshot_path(const std::string& dir, int iteration) {
  return dir + "/snapshot_t" + std::to_string(iteration) + ".json";
}

void write_snapshot(const Snapshot& snap, const std::string& path) {
  json doc;
  doc["format"] = "dfab-snapshot";
  doc["version"] = 1;
  doc["iteration"] = snap.iteration;
  doc["fic_history"] = snap.fic_history;
  doc["model"] = json::parse(serialize_model(snap.model));
  doc["stats"] = {
      {"nphi", std::vector<Real>(snap.stats.nphi.data(),
                                 snap.stats.nphi.data() + snap.stats.nphi.size())},
      {"nphi_scaled",
       std::vector<Real>(snap.stats.nphi_scaled.data(),
                         snap.stats.nphi_scaled.data() + snap.stats.nphi_scaled.size())},
      {"nbeta", std::vector<Real>(snap.stats.nbeta.data(),
                                  snap.stats.nbeta.data() + snap.stats.nbeta.size())}};
  doc["train_config"] = train_config_to_json(snap.train);
  doc["cluster"] = {{"workers", snap.workers}, {"seed", snap.cluster_seed}};
  doc["q_files"] = snap.q_files;
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path);
  out << doc.dump(2) << "\n";
}

Snapshot read_snapshot(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open snapshot " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  json doc;
  try {
    doc = json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("snapshot: ") + e.what());
  }
  try {
    if (doc.at("format") != "dfab-snapshot") throw ParseError("not a snapshot document");
    Snapshot snap;
    snap.iteration = doc.at("iteration").get<int>();
    snap.fic_history = doc.at("fic_history").get<std::vector<Real>>();
    snap.model = deserialize_model(doc.at("model").dump()).model;
    const auto nphi = doc.at("stats").at("nphi").get<std::vector<Real>>();
    const auto nps = doc.at("stats").at("nphi_scaled").get<std::vector<Real>>();
    const auto nbeta = doc.at("stats").at("nbeta").get<std::vector<Real>>();
    snap.stats.nphi = Eigen::Map<const VectorX>(nphi.data(), static_cast<Index>(nphi.size()));
    snap.stats.nphi_scaled =
        Eigen::Map<const VectorX>(nps.data(), static_cast<Index>(nps.size()));
    snap.stats.nbeta =
        Eigen::Map<const VectorX>(nbeta.data(), static_cast<Index>(nbeta.size()));
    snap.train = train_config_from_json(doc.at("train_config"));
    snap.cluster_seed = doc.at("cluster").at("seed").get<std::uint64_t>();
    snap.workers = doc.at("cluster").at("workers").get<int>();
    snap.q_files = doc.at("q_files").get<std::vector<std::string>>();
    return snap;
  } catch (const json::exception& e) {
    throw ParseError(std::string("snapshot: ") + e.what());
  }
}

}  // namespace dfab
