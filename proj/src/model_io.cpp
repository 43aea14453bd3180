#include "dfab/model_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace dfab {

using nlohmann::json;

namespace {

json model_to_json(const ModelParams& model) {
  json doc;
  doc["format"] = "dfab-model";
  doc["version"] = 1;
  doc["task"] = model.task == TaskKind::kRegression ? "regression" : "classification";
  doc["depth"] = model.topology.depth;
  doc["feature_dim"] = model.feature_dim();
  json gates = json::array();
  for (int i = 0; i < model.topology.gate_count; ++i) {
    const GateParams& g = model.gates[static_cast<std::size_t>(i)];
    gates.push_back({{"gamma", g.gamma},
                     {"t", g.threshold},
                     {"g", g.g},
                     {"d_beta", g.d_beta},
                     {"passthrough", model.topology.gate_passthrough[i] != 0}});
  }
  doc["gates"] = std::move(gates);
  json experts = json::array();
  for (int j = 0; j < model.topology.expert_count; ++j) {
    const ExpertParams& e = model.experts[static_cast<std::size_t>(j)];
    json weights = json::array();
    for (Index d = 0; d < e.weights.size(); ++d)
      if (e.weights[d] != 0.0) weights.push_back({d, e.weights[d]});
    experts.push_back({{"active", model.topology.expert_active[j] != 0},
                       {"intercept", e.intercept},
                       {"sigma2", e.sigma2},
                       {"weights", std::move(weights)}});
  }
  doc["experts"] = std::move(experts);
  return doc;
}

ModelParams model_from_json(const json& doc) {
  if (!doc.contains("format") || doc["format"] != "dfab-model")
    throw ParseError("not a model document");
  const int depth = doc.at("depth").get<int>();
  if (depth < 1) throw ParseError("depth must be >= 1");
  const auto& gates = doc.at("gates");
  const auto& experts = doc.at("experts");
  const int expert_count = 1 << depth;
  if (static_cast<int>(experts.size()) != expert_count)
    throw ParseError("expert array must have 2^depth entries");
  if (static_cast<int>(gates.size()) != expert_count - 1)
    throw ParseError("gate array must have 2^depth - 1 entries");
  const auto dims = doc.at("feature_dim").get<Index>();
  if (dims < 1) throw ParseError("feature_dim must be positive");

  ModelParams model;
  const std::string task = doc.at("task").get<std::string>();
  if (task == "regression")
    model.task = TaskKind::kRegression;
  else if (task == "classification")
    model.task = TaskKind::kBinaryClassification;
  else
    throw ParseError("unknown task '" + task + "'");

  model.topology = TreeTopology(depth);
  model.gates.resize(gates.size());
  model.experts.resize(experts.size());
  for (std::size_t j = 0; j < experts.size(); ++j) {
    const auto& e = experts[j];
    model.topology.expert_active[j] = e.at("active").get<bool>() ? 1 : 0;
    ExpertParams& p = model.experts[j];
    p.weights = VectorX::Zero(dims);
    p.intercept = e.at("intercept").get<Real>();
    p.sigma2 = e.at("sigma2").get<Real>();
    if (model.topology.expert_active[j] && model.task == TaskKind::kRegression &&
        !(p.sigma2 > 0))
      throw ParseError("expert " + std::to_string(j) + ": sigma2 must be positive");
    for (const auto& pair : e.at("weights")) {
      const auto d = pair.at(0).get<Index>();
      if (d < 0 || d >= dims)
        throw ParseError("expert " + std::to_string(j) + ": weight index out of range");
      p.weights[d] = pair.at(1).get<Real>();
    }
  }
  model.topology.refresh();
  for (std::size_t i = 0; i < gates.size(); ++i) {
    const auto& g = gates[i];
    GateParams& p = model.gates[i];
    p.gamma = g.at("gamma").get<int>();
    p.threshold = g.at("t").get<Real>();
    p.g = g.at("g").get<Real>();
    p.d_beta = g.at("d_beta").get<Real>();
    if (p.gamma < 0 || p.gamma >= dims)
      throw ParseError("gate " + std::to_string(i) + ": gamma out of range");
    if (p.g < 0 || p.g > 1)
      throw ParseError("gate " + std::to_string(i) + ": g outside [0,1]");
    const bool stored = g.at("passthrough").get<bool>();
    if (stored != (model.topology.gate_passthrough[i] != 0))
      throw ParseError("gate " + std::to_string(i) +
                       ": passthrough flag inconsistent with active experts");
  }
  if (model.topology.active_expert_count() == 0)
    throw ParseError("model has no active expert");
  return model;
}

json standardization_to_json(const StandardizationRecord& rec) {
  json j;
  j["feature_mean"] = std::vector<Real>(rec.feature_mean.data(),
                                        rec.feature_mean.data() + rec.feature_mean.size());
  j["feature_scale"] = std::vector<Real>(rec.feature_scale.data(),
                                         rec.feature_scale.data() + rec.feature_scale.size());
  j["target_mean"] = rec.target_mean;
  j["target_scale"] = rec.target_scale;
  j["target_standardized"] = rec.target_standardized;
  return j;
}

StandardizationRecord standardization_from_json(const json& j) {
  StandardizationRecord rec;
  const auto fm = j.at("feature_mean").get<std::vector<Real>>();
  const auto fs = j.at("feature_scale").get<std::vector<Real>>();
  rec.feature_mean = Eigen::Map<const VectorX>(fm.data(), static_cast<Index>(fm.size()));
  rec.feature_scale = Eigen::Map<const VectorX>(fs.data(), static_cast<Index>(fs.size()));
  rec.target_mean = j.at("target_mean").get<Real>();
  rec.target_scale = j.at("target_scale").get<Real>();
  rec.target_standardized = j.at("target_standardized").get<bool>();
  return rec;
}

}  // namespace

std::string serialize_model(const ModelDocument& doc) {
  json j = model_to_json(doc.model);
  if (!doc.train_config_echo.empty()) j["train_config"] = json::parse(doc.train_config_echo);
  if (doc.final_fic) j["final_fic"] = *doc.final_fic;
  if (doc.standardization) j["standardization"] = standardization_to_json(*doc.standardization);
  return j.dump(2) + "\n";
}

std::string serialize_model(const ModelParams& model) {
  return serialize_model(ModelDocument{model, "", std::nullopt, std::nullopt});
}

ModelDocument deserialize_model(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("model document: ") + e.what());
  }
  try {
    ModelDocument doc;
    doc.model = model_from_json(j);
    if (j.contains("train_config")) doc.train_config_echo = j["train_config"].dump();
    if (j.contains("final_fic")) doc.final_fic = j["final_fic"].get<Real>();
    if (j.contains("standardization"))
      doc.standardization = standardization_from_json(j["standardization"]);
    return doc;
  } catch (const json::exception& e) {
    throw ParseError(std::string("model document: ") + e.what());
  }
}

void save_model(const ModelDocument& doc, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path);
  out << serialize_model(doc);
}

ModelDocument load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize_model(ss.str());
}

}  // namespace dfab
