#include "gramkg/model.hpp"

#include <sstream>

#include "gramkg/error.hpp"
#include "json.hpp"

namespace gramkg {

Model Model::init(const GramTransformerConfig& cfg, const ModelSettings& settings,
                  NGramVocab vocab, int n_entities, ScoreFn score_fn, uint64_t seed) {
  const GramTransformerConfig resolved = cfg.resolved();
  std::mt19937_64 rng(seed);
  GramTransformerParams params = GramTransformerParams::init(resolved, vocab.size(), rng);
  KGState kg = KGState::init(n_entities, resolved.d_model, score_fn, rng);
  return Model{GramTransformer(resolved, std::move(params)), std::move(vocab), std::move(kg),
               settings, ""};
}

NGramGraph Model::relation_graph(const std::string& surface) const {
  return build_graph(tokenize(surface, settings.tokenize), settings.max_n, settings.strategy,
                     encoder.config().max_nodes, settings.edges);
}

std::vector<std::pair<std::string, Tensor>> Model::trainable() const {
  auto named = encoder.params().named_tensors();
  named.emplace_back("entity_table", kg.entity_table);
  return named;
}

Model Model::clone() const {
  Model copy = *this;
  GramTransformerParams params;
  auto source = encoder.params().named_tensors();
  // rebuild with detached tensors
  TensorMap map;
  for (auto& [name, tensor] : source) map[name] = tensor.clone();
  params = encoder.params();
  params.node_embeddings = map.at("node_embeddings");
  params.position_embeddings = map.at("position_embeddings");
  params.r_a = map.at("r_a");
  params.r_c = map.at("r_c");
  for (size_t l = 0; l < params.layers.size(); ++l) {
    const std::string base = "layers." + std::to_string(l) + ".";
    auto& layer = params.layers[l];
    for (size_t h = 0; h < layer.heads.size(); ++h) {
      const std::string hbase = base + "heads." + std::to_string(h) + ".";
      layer.heads[h].wq = map.at(hbase + "wq");
      layer.heads[h].wk = map.at(hbase + "wk");
      layer.heads[h].wv = map.at(hbase + "wv");
    }
    layer.wo = map.at(base + "wo");
    layer.bo = map.at(base + "bo");
    layer.ffn_w1 = map.at(base + "ffn_w1");
    layer.ffn_b1 = map.at(base + "ffn_b1");
    layer.ffn_w2 = map.at(base + "ffn_w2");
    layer.ffn_b2 = map.at(base + "ffn_b2");
    layer.ln1_gamma = map.at(base + "ln1_gamma");
    layer.ln1_beta = map.at(base + "ln1_beta");
    layer.ln2_gamma = map.at(base + "ln2_gamma");
    layer.ln2_beta = map.at(base + "ln2_beta");
  }
  params.final_ln_gamma = map.at("final_ln_gamma");
  params.final_ln_beta = map.at("final_ln_beta");
  copy.encoder = GramTransformer(encoder.config(), std::move(params));
  copy.kg.entity_table = kg.entity_table.clone();
  return copy;
}

uint64_t fnv1a64(const std::vector<std::string>& names) {
  uint64_t hash = 1469598103934665603ull;
  auto mix = [&hash](char c) {
    hash ^= static_cast<unsigned char>(c);
    hash *= 1099511628211ull;
  };
  for (const auto& name : names) {
    for (char c : name) mix(c);
    mix('\n');
  }
  return hash;
}

void save_model(const std::string& path, const Model& model,
                const std::vector<std::string>& entity_names) {
  nlohmann::ordered_json meta;
  meta["kind"] = "gramkg-checkpoint";
  const auto& cfg = model.encoder.config();
  meta["model"] = {{"d_model", cfg.d_model},     {"n_heads", cfg.n_heads},
                   {"n_layers", cfg.n_layers},   {"d_ff", cfg.d_ff},
                   {"dropout", cfg.dropout},     {"mask_mode", to_string(cfg.mask_mode)},
                   {"variant", to_string(cfg.variant)}, {"max_nodes", cfg.max_nodes}};
  meta["settings"] = {{"max_n", model.settings.max_n},
                      {"strategy", to_string(model.settings.strategy)},
                      {"strip_namespace_prefix", model.settings.tokenize.strip_namespace_prefix},
                      {"split_camel_case", model.settings.tokenize.split_camel_case},
                      {"link_word_boundaries", model.settings.edges.link_word_boundaries},
                      {"link_whole_word_matches", model.settings.edges.link_whole_word_matches}};
  meta["score_fn"] = to_string(model.kg.score_fn);
  meta["vocab"] = model.vocab.grams;
  std::ostringstream hash;
  hash << "0x" << std::hex << fnv1a64(entity_names);
  meta["entities"] = {{"count", entity_names.size()}, {"names_fnv1a", hash.str()}};

  TensorMap tensors;
  for (const auto& [name, tensor] : model.trainable()) tensors[name] = tensor;
  save_tensors(path, tensors, meta.dump());
}

Model load_model(const std::string& path) {
  std::string meta_str;
  TensorMap tensors = load_tensors(path, &meta_str);
  nlohmann::json meta = nlohmann::json::parse(meta_str);
  if (meta.value("kind", "") != "gramkg-checkpoint") {
    fail(ErrorKind::MalformedLine, path + ": not a checkpoint file");
  }
  GramTransformerConfig cfg;
  const auto& mj = meta.at("model");
  cfg.d_model = mj.at("d_model").get<int>();
  cfg.n_heads = mj.at("n_heads").get<int>();
  cfg.n_layers = mj.at("n_layers").get<int>();
  cfg.d_ff = mj.at("d_ff").get<int>();
  cfg.dropout = mj.at("dropout").get<double>();
  cfg.mask_mode = mask_mode_from_string(mj.at("mask_mode").get<std::string>());
  cfg.variant = variant_from_string(mj.at("variant").get<std::string>());
  cfg.max_nodes = mj.at("max_nodes").get<int>();

  ModelSettings settings;
  const auto& sj = meta.at("settings");
  settings.max_n = sj.at("max_n").get<int>();
  settings.strategy = strategy_from_string(sj.at("strategy").get<std::string>());
  settings.tokenize.strip_namespace_prefix = sj.at("strip_namespace_prefix").get<bool>();
  settings.tokenize.split_camel_case = sj.at("split_camel_case").get<bool>();
  settings.edges.link_word_boundaries = sj.at("link_word_boundaries").get<bool>();
  settings.edges.link_whole_word_matches = sj.at("link_whole_word_matches").get<bool>();

  NGramVocab vocab = vocab_from_grams(meta.at("vocab").get<std::vector<std::string>>());

  Model model = Model::init(cfg, settings, std::move(vocab),
                            static_cast<int>(meta.at("entities").at("count").get<size_t>()),
                            score_fn_from_string(meta.at("score_fn").get<std::string>()),
                            /*seed=*/0);
  for (auto& [name, tensor] : model.trainable()) {
    auto it = tensors.find(name);
    if (it == tensors.end()) fail(ErrorKind::MalformedLine, path + ": missing tensor '" + name + "'");
    if (it->second.shape() != tensor.shape()) {
      fail(ErrorKind::MalformedLine, path + ": tensor '" + name + "' has unexpected shape");
    }
    tensor.values() = it->second.values();
  }

  // names hash rides along for compatibility checks
  model.entity_names_fnv1a = meta.at("entities").at("names_fnv1a").get<std::string>();
  return model;
}

void check_compatible(const Model& model, const ZSLSplit& split) {
  std::ostringstream hash;
  hash << "0x" << std::hex << fnv1a64(split.entity_names);
  if (model.kg.n_entities() != static_cast<int>(split.entity_names.size()) ||
      (!model.entity_names_fnv1a.empty() && model.entity_names_fnv1a != hash.str())) {
    fail(ErrorKind::VocabMismatch,
         "checkpoint entity vocabulary does not match the dataset (" +
             std::to_string(model.kg.n_entities()) + " vs " +
             std::to_string(split.entity_names.size()) + " entities)");
  }
}

}  // namespace gramkg
