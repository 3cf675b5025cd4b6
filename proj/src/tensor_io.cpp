#include <fstream>

#include "gramkg/error.hpp"
#include "gramkg/tensor.hpp"
#include "json.hpp"

namespace gramkg {

void save_tensors(const std::string& path, const TensorMap& tensors, const std::string& meta_json) {
  nlohmann::ordered_json j;
  j["format_version"] = 1;
  j["meta"] = nlohmann::ordered_json::parse(meta_json);
  auto tj = nlohmann::ordered_json::object();
  for (const auto& [name, tensor] : tensors) {
    nlohmann::ordered_json entry;
    entry["shape"] = tensor.shape();
    entry["data"] = tensor.values();
    tj[name] = std::move(entry);
  }
  j["tensors"] = std::move(tj);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path);
  out << j.dump(1, '\t') << "\n";
  if (!out) fail(ErrorKind::IoError, "short write to " + path);
}

TensorMap load_tensors(const std::string& path, std::string* meta_json) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::MissingFile, path);
  nlohmann::ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::MalformedLine, path + ": " + e.what());
  }
  if (!j.contains("format_version") || j["format_version"].get<int>() != 1) {
    fail(ErrorKind::MalformedLine, path + ": unsupported tensor-file version");
  }
  if (meta_json) *meta_json = j.value("meta", nlohmann::ordered_json::object()).dump();
  TensorMap tensors;
  for (const auto& [name, entry] : j.at("tensors").items()) {
    std::vector<int64_t> shape = entry.at("shape").get<std::vector<int64_t>>();
    std::vector<double> data;
    for (const auto& v : entry.at("data")) {
      if (!v.is_number()) fail(ErrorKind::MalformedLine, path + ": non-numeric tensor value in " + name);
      data.push_back(v.get<double>());
    }
    tensors[name] = Tensor::from_values(std::move(shape), std::move(data));
  }
  return tensors;
}

}  // namespace gramkg
