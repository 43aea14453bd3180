#include "dfab/partition.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

namespace dfab {

std::vector<WorkerPartition> partition_dataset(const Dataset& data, int workers,
                                               std::uint64_t seed) {
  const Index n = data.n();
  if (workers < 1) throw ContractError("need at least one worker");
  if (n < workers) throw ContractError("fewer samples than workers");

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const Index base = n / workers;
  const Index extra = n % workers;
  std::vector<WorkerPartition> parts(static_cast<std::size_t>(workers));
  Index offset = 0;
  for (int w = 0; w < workers; ++w) {
    const Index size = base + (w < extra ? 1 : 0);
    WorkerPartition& part = parts[static_cast<std::size_t>(w)];
    part.X.resize(size, data.d());
    part.y.resize(size);
    part.global_ids.resize(static_cast<std::size_t>(size));
    for (Index i = 0; i < size; ++i) {
      const Index src = order[static_cast<std::size_t>(offset + i)];
      part.X.row(i) = data.X.row(src);
      part.y[i] = data.y[src];
      part.global_ids[static_cast<std::size_t>(i)] = src;
    }
    offset += size;
  }
  return parts;
}

void allocate_state(WorkerPartition& part, int expert_count, std::uint64_t seed) {
  const Index n = part.n();
  part.Q.resize(n, expert_count);
  part.L = MatrixX::Zero(n, expert_count);
  part.ell = MatrixX::Zero(n, expert_count);
  for (Index i = 0; i < n; ++i) {
    const auto gid = static_cast<std::uint64_t>(part.global_ids[static_cast<std::size_t>(i)]);
    Real sum = 0;
    for (int j = 0; j < expert_count; ++j) {
      const Real v = 1.0 + 0.01 * hash_unit_real(seed, gid, static_cast<std::uint64_t>(j));
      part.Q(i, j) = v;
      sum += v;
    }
    part.Q.row(i) /= sum;
  }
}

void attach_grid(WorkerPartition& part, std::shared_ptr<const SplitGrid> grid) {
  part.grid = std::move(grid);
  part.bins.resize(part.n(), part.d());
  for (Index d = 0; d < part.d(); ++d)
    for (Index i = 0; i < part.n(); ++i)
      part.bins(i, d) = static_cast<std::uint16_t>(part.grid->bin_of(d, part.X(i, d)));
}

namespace {
constexpr char kPartitionMagic[4] = {'D', 'F', 'P', 'T'};

template <typename T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ParseError("truncated partition file");
  return v;
}
}  // namespace

void write_partition_file(const WorkerPartition& part, TaskKind task, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write " + path);
  out.write(kPartitionMagic, 4);
  put<std::int64_t>(out, part.n());
  put<std::int64_t>(out, part.d());
  put<std::int32_t>(out, task == TaskKind::kRegression ? 0 : 1);
  for (auto id : part.global_ids) put<std::int64_t>(out, id);
  for (Index i = 0; i < part.n(); ++i)
    for (Index j = 0; j < part.d(); ++j) put<Real>(out, part.X(i, j));
  for (Index i = 0; i < part.n(); ++i) put<Real>(out, part.y[i]);
}

WorkerPartition read_partition_file(const std::string& path, TaskKind* task_out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kPartitionMagic, 4) != 0)
    throw ParseError(path + ": not a partition file");
  const auto n = get<std::int64_t>(in);
  const auto d = get<std::int64_t>(in);
  const auto task = get<std::int32_t>(in);
  if (n < 0 || d < 1) throw ParseError(path + ": bad dimensions");
  WorkerPartition part;
  part.global_ids.resize(static_cast<std::size_t>(n));
  for (auto& id : part.global_ids) id = get<std::int64_t>(in);
  part.X.resize(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < d; ++j) part.X(i, j) = get<Real>(in);
  part.y.resize(n);
  for (Index i = 0; i < n; ++i) part.y[i] = get<Real>(in);
  if (task_out) *task_out = task == 0 ? TaskKind::kRegression : TaskKind::kBinaryClassification;
  return part;
}

}  // namespace dfab
