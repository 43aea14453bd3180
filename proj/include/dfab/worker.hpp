#pragma once

#include <string>
#include <vector>

#include "dfab/estep.hpp"
#include "dfab/experts.hpp"
#include "dfab/gates.hpp"
#include "dfab/messages.hpp"
#include "dfab/partition.hpp"
#include "dfab/transport.hpp"

namespace dfab {

struct WorkerConfig {
  TaskKind task = TaskKind::kRegression;
  int worker_count = 1;
  int worker_index = 0;
  int foba_max_features = 0;
  int checkpoint_interval = 0;  // >0: persist Q after matching iterations
  std::string checkpoint_dir;
};

// Reactive worker: announces its feature ranges, then answers coordinator
// broadcasts until Terminate. All heavy computation happens here; replies
// carry only aggregate statistics.
class WorkerNode {
 public:
  WorkerNode(WorkerPartition part, WorkerConfig cfg);

  void serve(MessageEndpoint& link);

  WorkerPartition& partition() { return part_; }
  const WorkerPartition& partition() const { return part_; }

 private:
  void handle_model(const Message& msg, MessageEndpoint& link);
  void handle_penalty(const Message& msg, MessageEndpoint& link);
  void handle_shrink(const Message& msg, MessageEndpoint& link);
  void handle_feature_sets(const Message& msg, MessageEndpoint& link);

  WorkerPartition part_;
  WorkerConfig cfg_;
  ModelParams model_;
  bool has_model_ = false;
  std::vector<WeightedGram> grams_;  // per-expert cache within one iteration
  std::int32_t gram_iteration_ = -1;
};

std::string q_snapshot_path(const std::string& dir, int worker_index, int iteration);
void write_q_snapshot(const WorkerPartition& part, const std::string& path);
void load_q_snapshot(WorkerPartition& part, const std::string& path);

}  // namespace dfab
