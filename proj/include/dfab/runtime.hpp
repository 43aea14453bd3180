#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dfab/dataset.hpp"
#include "dfab/estep.hpp"
#include "dfab/messages.hpp"
#include "dfab/model.hpp"
#include "dfab/partition.hpp"
#include "dfab/split_grid.hpp"

namespace dfab {

enum class TransportKind { kInProcess, kSocket };

struct ClusterConfig {
  int workers = 1;
  TransportKind transport = TransportKind::kInProcess;
  std::uint64_t seed = 0;        // partition shuffle
  int checkpoint_interval = 20;  // iterations; 0 disables snapshots
  std::string checkpoint_dir;    // defaults to DFAB_DATA_DIR or "."
  bool loopback_free = false;    // workers==1, in-process: account zero bytes
  std::uint16_t port = 0;        // socket: 0 -> DFAB_WORKER_PORT or 7711
  std::string data_dir;          // socket partition files; defaults like checkpoint_dir
};

struct TrainConfig {
  TaskKind task = TaskKind::kRegression;
  int depth = 3;
  int t_max = 256;
  Real eps_shrink = 0;     // absolute responsibility-mass threshold
  Real delta_term = 5e-9;  // relative FIC change at termination
  int max_iterations = 200;
  Real d_beta = 1.0;       // per-gate parameter count in the criterion
  int foba_max_features = 0;
  bool swapped_gate_score = false;
  std::uint64_t seed = 0;  // model and responsibility initialization
  int restarts = 1;        // >1: short probe runs, keep the best objective
  int probe_iterations = 25;
};

struct IterationRecord {
  int iteration = 0;
  Real fic = 0;
  int active_experts = 0;
  std::vector<int> cardinalities;  // per active expert
  std::uint64_t bytes_sent = 0;
  std::uint64_t bytes_received = 0;
  std::map<MessageTag, std::uint64_t> bytes_by_tag;
  double millis = 0;
};

struct TrainReport {
  std::vector<IterationRecord> iterations;
  std::uint64_t init_bytes = 0;  // minmax/grid exchange before the first pass
  Real final_fic = 0;
  int final_active_experts = 0;
  bool converged = false;
  std::string last_checkpoint;
};

struct TrainResult {
  ModelParams model;
  TrainReport report;
};

// Deterministic model initialization: random split per gate, zero-weight
// experts centered on the target mean. Shared by the runtime and by any
// independent reimplementation that must start from the same point.
ModelParams init_model(const TrainConfig& tc, Index dims, const SplitGrid& grid,
                       Real target_mean);

// Full coordinator/worker EM loop. Resume from a snapshot produced by an
// earlier run by passing its path.
TrainResult run_training(const Dataset& data, const TrainConfig& tc,
                         const ClusterConfig& cc,
                         const std::string& resume_snapshot = "");

// Seeded-restart wrapper: runs tc.restarts probes of tc.probe_iterations
// iterations each, keeps the one with the best objective, and continues it
// to the full iteration budget. With restarts == 1 this is run_training.
TrainResult run_training_restarts(const Dataset& data, const TrainConfig& tc,
                                  const ClusterConfig& cc);

// Per-iteration totals by message tag (both directions summed).
std::map<MessageTag, std::uint64_t> account_bytes(const TrainReport& report, int iteration);

std::string train_config_json(const TrainConfig& tc);
std::string cluster_config_json(const ClusterConfig& cc);

void write_report_csv(const TrainReport& report, const std::string& path);

// Snapshot documents. The JSON text is deterministic; responsibilities are
// stored as side binary files referenced from the document.
struct Snapshot {
  int iteration = 0;  // completed loop iterations
  ModelParams model;
  EStats stats;
  std::vector<Real> fic_history;
  TrainConfig train;
  std::uint64_t cluster_seed = 0;
  int workers = 1;
  std::vector<std::string> q_files;  // one per worker, relative to the document
};

std::string snapshot_path(const std::string& dir, int iteration);
void write_snapshot(const Snapshot& snap, const std::string& path);
Snapshot read_snapshot(const std::string& path);

}  // namespace dfab
