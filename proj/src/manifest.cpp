#include "dfab/manifest.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>
#include <openssl/evp.h>

namespace dfab {

using nlohmann::json;

std::string content_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string content = ss.str();
  const std::string blob = "blob " + std::to_string(content.size()) + '\0' + content;

  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(blob.data(), blob.size(), digest, &len, EVP_sha1(), nullptr) != 1)
    throw std::runtime_error("sha1 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xf];
  }
  return out;
}

std::string serialize_manifest(const RunManifest& manifest) {
  json doc;
  doc["format"] = "dfab-manifest";
  doc["command"] = manifest.command;
  doc["train_config"] = json::parse(train_config_json(manifest.train));
  doc["cluster_config"] = json::parse(cluster_config_json(manifest.cluster));
  json inputs = json::array();
  for (const auto& [path, hash] : manifest.inputs)
    inputs.push_back({{"path", path}, {"hash", hash}});
  doc["inputs"] = std::move(inputs);
  doc["outputs"] = manifest.outputs;
  return doc.dump(2) + "\n";
}

void save_manifest(const RunManifest& manifest, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path);
  out << serialize_manifest(manifest);
}

}  // namespace dfab
