#pragma once

#include <string>
#include <vector>

#include "dfab/runtime.hpp"

namespace dfab {

// Reproducible description of one CLI run: resolved configs, file paths and
// content hashes of every input.
struct RunManifest {
  std::string command;
  TrainConfig train;
  ClusterConfig cluster;
  std::vector<std::pair<std::string, std::string>> inputs;   // (path, hash)
  std::vector<std::string> outputs;
};

// Hash of a file's bytes in git blob form (sha1 over "blob <len>\0" + content).
std::string content_hash(const std::string& path);

std::string serialize_manifest(const RunManifest& manifest);
void save_manifest(const RunManifest& manifest, const std::string& path);

}  // namespace dfab
