#include "gramkg/run_config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "gramkg/error.hpp"

namespace gramkg {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

bool parse_bool(const std::string& value, const std::string& key) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  fail(ErrorKind::InvalidConfig, key + ": expected true/false, got '" + value + "'");
}

int parse_int(const std::string& value, const std::string& key) {
  try {
    size_t pos = 0;
    const int v = std::stoi(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    fail(ErrorKind::InvalidConfig, key + ": expected integer, got '" + value + "'");
  }
}

uint64_t parse_u64(const std::string& value, const std::string& key) {
  try {
    size_t pos = 0;
    const uint64_t v = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    fail(ErrorKind::InvalidConfig, key + ": expected unsigned integer, got '" + value + "'");
  }
}

double parse_double(const std::string& value, const std::string& key) {
  try {
    size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    fail(ErrorKind::InvalidConfig, key + ": expected number, got '" + value + "'");
  }
}

}  // namespace

void RunConfig::apply(const std::string& key, const std::string& value) {
  if (key == "dataset") dataset_dir = value;
  else if (key == "out") out_dir = value;
  else if (key == "checkpoint") checkpoint = value;
  else if (key == "seed") train.seed = parse_u64(value, key);
  else if (key == "epochs") train.epochs = parse_int(value, key);
  else if (key == "batch_size") train.batch_size = parse_int(value, key);
  else if (key == "learning_rate") train.learning_rate = parse_double(value, key);
  else if (key == "label_smoothing") train.label_smoothing = parse_double(value, key);
  else if (key == "patience") train.patience = parse_int(value, key);
  else if (key == "score_fn") train.score_fn = score_fn_from_string(value);
  else if (key == "d_model") train.model.d_model = parse_int(value, key);
  else if (key == "n_heads") train.model.n_heads = parse_int(value, key);
  else if (key == "n_layers") train.model.n_layers = parse_int(value, key);
  else if (key == "d_ff") train.model.d_ff = parse_int(value, key);
  else if (key == "dropout") train.model.dropout = parse_double(value, key);
  else if (key == "mask_mode") train.model.mask_mode = mask_mode_from_string(value);
  else if (key == "variant") train.model.variant = variant_from_string(value);
  else if (key == "max_nodes") train.model.max_nodes = parse_int(value, key);
  else if (key == "max_n") train.graph.max_n = parse_int(value, key);
  else if (key == "strategy") train.graph.strategy = strategy_from_string(value);
  else if (key == "strip_prefix") train.graph.tokenize.strip_namespace_prefix = parse_bool(value, key);
  else if (key == "camel_split") train.graph.tokenize.split_camel_case = parse_bool(value, key);
  else if (key == "link_word_boundaries") train.graph.edges.link_word_boundaries = parse_bool(value, key);
  else if (key == "link_whole_word_matches") train.graph.edges.link_whole_word_matches = parse_bool(value, key);
  else if (key == "edge_sidecar") train.edge_sidecar = value;
  else fail(ErrorKind::InvalidConfig, "unknown config key '" + key + "'");
}

void RunConfig::apply_file(const std::string& path) {
  for (const auto& [key, value] : parse_config_file(path)) apply(key, value);
}

void RunConfig::apply_preset(const std::string& name) {
  if (name == "nell") {
    train.graph.max_n = 13;
    train.model.max_nodes = 90;
    train.epochs = 80;
  } else if (name == "wiki") {
    train.graph.max_n = 15;
    train.model.max_nodes = 70;
    train.epochs = 70;
  } else {
    fail(ErrorKind::InvalidConfig, "unknown preset '" + name + "' (expected nell or wiki)");
  }
}

std::string RunConfig::dump() const {
  std::map<std::string, std::string> kv;
  auto fmt_double = [](double v) {
    std::ostringstream out;
    out.precision(17);
    out << v;
    return out.str();
  };
  kv["dataset"] = dataset_dir;
  kv["out"] = out_dir;
  kv["checkpoint"] = checkpoint;
  kv["seed"] = std::to_string(train.seed);
  kv["epochs"] = std::to_string(train.epochs);
  kv["batch_size"] = std::to_string(train.batch_size);
  kv["learning_rate"] = fmt_double(train.learning_rate);
  kv["label_smoothing"] = fmt_double(train.label_smoothing);
  kv["patience"] = std::to_string(train.patience);
  kv["score_fn"] = to_string(train.score_fn);
  kv["d_model"] = std::to_string(train.model.d_model);
  kv["n_heads"] = std::to_string(train.model.n_heads);
  kv["n_layers"] = std::to_string(train.model.n_layers);
  kv["d_ff"] = std::to_string(train.model.d_ff);
  kv["dropout"] = fmt_double(train.model.dropout);
  kv["mask_mode"] = to_string(train.model.mask_mode);
  kv["variant"] = to_string(train.model.variant);
  kv["max_nodes"] = std::to_string(train.model.max_nodes);
  kv["max_n"] = std::to_string(train.graph.max_n);
  kv["strategy"] = to_string(train.graph.strategy);
  kv["strip_prefix"] = train.graph.tokenize.strip_namespace_prefix ? "true" : "false";
  kv["camel_split"] = train.graph.tokenize.split_camel_case ? "true" : "false";
  kv["link_word_boundaries"] = train.graph.edges.link_word_boundaries ? "true" : "false";
  kv["link_whole_word_matches"] = train.graph.edges.link_whole_word_matches ? "true" : "false";
  kv["edge_sidecar"] = train.edge_sidecar;

  std::ostringstream out;
  for (const auto& [key, value] : kv) out << key << " = " << value << "\n";
  return out.str();
}

std::map<std::string, std::string> parse_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::MissingFile, path);
  std::map<std::string, std::string> kv;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto comment = line.find('#');
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      fail(ErrorKind::InvalidConfig,
           path + ":" + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      fail(ErrorKind::InvalidConfig, path + ":" + std::to_string(line_no) + ": empty key");
    }
    kv[key] = value;
  }
  return kv;
}

}  // namespace gramkg
