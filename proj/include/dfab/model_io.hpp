#pragma once

#include <optional>
#include <string>

#include "dfab/dataset.hpp"
#include "dfab/model.hpp"

namespace dfab {

// Everything the model document carries beyond the parameters themselves.
struct ModelDocument {
  ModelParams model;
  std::string train_config_echo;  // JSON text of the resolved training config
  std::optional<Real> final_fic;
  std::optional<StandardizationRecord> standardization;
};

std::string serialize_model(const ModelDocument& doc);
std::string serialize_model(const ModelParams& model);
ModelDocument deserialize_model(const std::string& text);

void save_model(const ModelDocument& doc, const std::string& path);
ModelDocument load_model(const std::string& path);

}  // namespace dfab
