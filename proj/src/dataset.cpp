#include "dfab/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <vector>

namespace dfab {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  cells.push_back(cur);
  return cells;
}

Real parse_cell(const std::string& cell, std::size_t row, std::size_t col) {
  Real value = 0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  while (first < last && (*first == ' ' || *first == '\t')) ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  while (ptr < last && (*ptr == ' ' || *ptr == '\t')) ++ptr;
  if (ec != std::errc() || ptr != last)
    throw ParseError("row " + std::to_string(row) + ", column " + std::to_string(col) +
                     ": not a number: '" + cell + "'");
  return value;
}

}  // namespace

Dataset load_csv(const std::string& path, const std::string& target_column, TaskKind task) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file");
  const auto header = split_line(line);
  std::ptrdiff_t target = -1;
  for (std::size_t c = 0; c < header.size(); ++c)
    if (header[c] == target_column) target = static_cast<std::ptrdiff_t>(c);
  if (target < 0) throw ParseError(path + ": no column named '" + target_column + "'");

  const std::size_t cols = header.size();
  std::vector<Real> xs;
  std::vector<Real> ys;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != cols)
      throw ParseError("row " + std::to_string(row) + ": expected " + std::to_string(cols) +
                       " cells, got " + std::to_string(cells.size()));
    for (std::size_t c = 0; c < cols; ++c) {
      const Real v = parse_cell(cells[c], row, c + 1);
      if (static_cast<std::ptrdiff_t>(c) == target) {
        if (task == TaskKind::kBinaryClassification && v != 1.0 && v != -1.0)
          throw ParseError("row " + std::to_string(row) + ", column " + std::to_string(c + 1) +
                           ": classification label must be -1 or +1, got '" + cells[c] + "'");
        ys.push_back(v);
      } else {
        xs.push_back(v);
      }
    }
  }
  if (ys.empty()) throw ParseError(path + ": no data rows");

  Dataset data;
  data.task = task;
  const Index n = static_cast<Index>(ys.size());
  const Index d = static_cast<Index>(cols - 1);
  if (d < 1) throw ParseError(path + ": need at least one feature column");
  data.X.resize(n, d);
  data.y.resize(n);
  for (Index i = 0; i < n; ++i) {
    data.y[i] = ys[static_cast<std::size_t>(i)];
    for (Index j = 0; j < d; ++j) data.X(i, j) = xs[static_cast<std::size_t>(i * d + j)];
  }
  return data;
}

Dataset load_csv_features(const std::string& path, const std::string& target_column,
                          TaskKind task) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file");
  const auto header = split_line(line);
  std::ptrdiff_t target = -1;
  for (std::size_t c = 0; c < header.size(); ++c)
    if (header[c] == target_column) target = static_cast<std::ptrdiff_t>(c);

  const std::size_t cols = header.size();
  const std::size_t feature_cols = target >= 0 ? cols - 1 : cols;
  if (feature_cols < 1) throw ParseError(path + ": need at least one feature column");
  std::vector<Real> xs;
  std::size_t rows = 0, row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != cols)
      throw ParseError("row " + std::to_string(row) + ": expected " + std::to_string(cols) +
                       " cells, got " + std::to_string(cells.size()));
    for (std::size_t c = 0; c < cols; ++c) {
      if (static_cast<std::ptrdiff_t>(c) == target) continue;
      xs.push_back(parse_cell(cells[c], row, c + 1));
    }
    ++rows;
  }
  if (rows == 0) throw ParseError(path + ": no data rows");
  Dataset data;
  data.task = task;
  data.X.resize(static_cast<Index>(rows), static_cast<Index>(feature_cols));
  data.y = VectorX::Zero(static_cast<Index>(rows));
  for (Index i = 0; i < data.n(); ++i)
    for (Index j = 0; j < data.d(); ++j)
      data.X(i, j) = xs[static_cast<std::size_t>(i) * feature_cols + static_cast<std::size_t>(j)];
  return data;
}

void write_csv(const Dataset& data, const std::string& path, const std::string& target_column) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path);
  char buf[64];
  for (Index j = 0; j < data.d(); ++j) out << "f" << j << ",";
  out << target_column << "\n";
  for (Index i = 0; i < data.n(); ++i) {
    for (Index j = 0; j < data.d(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", data.X(i, j));
      out << buf << ",";
    }
    std::snprintf(buf, sizeof(buf), "%.17g", data.y[i]);
    out << buf << "\n";
  }
}

Dataset standardize(const Dataset& data) {
  if (data.n() < 2) throw ContractError("standardize needs at least two samples");
  StandardizationRecord rec;
  const Real n = static_cast<Real>(data.n());
  rec.feature_mean = data.X.colwise().mean();
  rec.feature_scale.resize(data.d());
  for (Index j = 0; j < data.d(); ++j) {
    const Real var = (data.X.col(j).array() - rec.feature_mean[j]).square().sum() / n;
    rec.feature_scale[j] = var > 0 ? std::sqrt(var) : 1.0;
  }
  if (data.task == TaskKind::kRegression) {
    rec.target_mean = data.y.mean();
    const Real var = (data.y.array() - rec.target_mean).square().sum() / n;
    rec.target_scale = var > 0 ? std::sqrt(var) : 1.0;
    rec.target_standardized = true;
  }
  Dataset out = apply_standardization(data, rec);
  out.standardization = rec;
  return out;
}

Dataset apply_standardization(const Dataset& raw, const StandardizationRecord& rec) {
  Dataset out;
  out.task = raw.task;
  out.X = (raw.X.rowwise() - rec.feature_mean.transpose()).array().rowwise() /
          rec.feature_scale.transpose().array();
  if (rec.target_standardized)
    out.y = (raw.y.array() - rec.target_mean) / rec.target_scale;
  else
    out.y = raw.y;
  out.standardization = rec;
  return out;
}

VectorX standardize_features(const StandardizationRecord& rec, const Eigen::Ref<const VectorX>& x) {
  return (x - rec.feature_mean).cwiseQuotient(rec.feature_scale);
}

Real inverse_standardize_target(const StandardizationRecord& rec, Real y) {
  return rec.target_standardized ? y * rec.target_scale + rec.target_mean : y;
}

std::pair<Dataset, Dataset> split_train_test(const Dataset& data, Real fraction,
                                             std::uint64_t seed, bool standardize_outputs) {
  if (!(fraction > 0 && fraction < 1)) throw ContractError("split fraction must be in (0,1)");
  const Index n = data.n();
  Index n_train = static_cast<Index>(std::floor(static_cast<Real>(n) * fraction));
  n_train = std::clamp<Index>(n_train, 1, n - 1);
  if (n < 2) throw ContractError("cannot split fewer than two samples");

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  auto take = [&](Index lo, Index hi) {
    Dataset part;
    part.task = data.task;
    part.X.resize(hi - lo, data.d());
    part.y.resize(hi - lo);
    for (Index i = lo; i < hi; ++i) {
      part.X.row(i - lo) = data.X.row(order[static_cast<std::size_t>(i)]);
      part.y[i - lo] = data.y[order[static_cast<std::size_t>(i)]];
    }
    return part;
  };
  Dataset train = take(0, n_train);
  Dataset test = take(n_train, n);
  if (standardize_outputs) {
    train = standardize(train);
    test = apply_standardization(test, *train.standardization);
  }
  return {std::move(train), std::move(test)};
}

}  // namespace dfab
