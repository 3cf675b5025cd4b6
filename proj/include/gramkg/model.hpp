#pragma once

#include <string>
#include <vector>

#include "gramkg/dataset.hpp"
#include "gramkg/gram_transformer.hpp"
#include "gramkg/kge.hpp"
#include "gramkg/ngram_graph.hpp"

namespace gramkg {

/// Everything outside the transformer needed to turn a surface name into a
/// graph the same way at train and eval time.
struct ModelSettings {
  int max_n = 13;
  NodeOrderStrategy strategy = NodeOrderStrategy::LevelMajor;
  TokenizeConfig tokenize;
  GraphEdgeConfig edges;
};

struct Model {
  GramTransformer encoder;
  NGramVocab vocab;
  KGState kg;
  ModelSettings settings;
  std::string entity_names_fnv1a;  // set when loaded from a checkpoint

  static Model init(const GramTransformerConfig& cfg, const ModelSettings& settings,
                    NGramVocab vocab, int n_entities, ScoreFn score_fn, uint64_t seed);

  NGramGraph relation_graph(const std::string& surface) const;

  /// Every trainable tensor in optimizer order; entity_table comes last.
  std::vector<std::pair<std::string, Tensor>> trainable() const;

  /// Deep copy (checkpointing the best epoch without aliasing).
  Model clone() const;
};

void save_model(const std::string& path, const Model& model,
                const std::vector<std::string>& entity_names);
Model load_model(const std::string& path);

/// Throws VocabMismatch when the checkpoint was built against a different
/// entity vocabulary than the split provides.
void check_compatible(const Model& model, const ZSLSplit& split);

uint64_t fnv1a64(const std::vector<std::string>& names);

}  // namespace gramkg
