#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace gramkg {

struct TokenizeConfig {
  bool strip_namespace_prefix = false;  // drop one leading "token:" qualifier
  bool split_camel_case = false;
};

struct SurfaceName {
  std::string raw;
  std::vector<std::string> words;  // lowercase, nonempty, whitespace-free
};

/// Lowercases and splits a raw relation name into word tokens.
/// Splits on whitespace and underscores; optional camelCase splitting and
/// namespace-prefix stripping. Throws EmptySurfaceName if nothing survives.
SurfaceName tokenize(const std::string& raw, const TokenizeConfig& config = {});

struct NGramNode {
  std::string text;
  int word_index = 0;  // source word
  int level = 1;       // gram size n
  int start = 0;       // character offset within the word
  int position = 0;    // ordinal index in the final ordered node list
};

/// All contiguous n-grams of a word for n in 1..min(max_n, len(word)),
/// level-major then start-major. word_index is left at 0.
std::vector<NGramNode> word_ngrams(const std::string& word, int max_n);

enum class EdgeKind { Adjoin, Compositional };

enum class NodeOrderStrategy {
  WordMajor,   // word by word, each word's grams level-then-start
  LevelMajor,  // all 1-grams across words, then all 2-grams, ...
};

NodeOrderStrategy strategy_from_string(const std::string& s);
const char* to_string(NodeOrderStrategy s);

struct GraphEdgeConfig {
  // adjoin edge between the last 1-gram of word k and the first 1-gram of word k+1
  bool link_word_boundaries = true;
  // a word whose text equals an n-gram inside another word adopts that
  // gram's adjoin neighbors and compositional superiors
  bool link_whole_word_matches = true;
};

struct NGramGraph {
  SurfaceName name;
  int max_n = 1;
  NodeOrderStrategy strategy = NodeOrderStrategy::LevelMajor;
  std::vector<NGramNode> nodes;                    // ordered, truncated to max_nodes
  std::vector<std::pair<int, int>> adjoin_edges;   // (min,max) node-index pairs, sorted
  std::vector<std::pair<int, int>> comp_edges;     // (lower, superior), sorted
  std::vector<uint8_t> mask_a;                     // row-major m*m, symmetric, 1 on diagonal
  std::vector<uint8_t> mask_c;
  int64_t full_node_count = 0;                     // node count before truncation

  int size() const { return static_cast<int>(nodes.size()); }
  bool adjoin_at(int i, int j) const { return mask_a[static_cast<size_t>(i) * nodes.size() + j] != 0; }
  bool comp_at(int i, int j) const { return mask_c[static_cast<size_t>(i) * nodes.size() + j] != 0; }

  std::string to_json() const;  // deterministic, golden-file stable
  std::string to_dot() const;   // adjoin solid, compositional dashed
};

/// Builds the hierarchical n-gram graph of a surface name: per-word nodes,
/// intra-word adjoin/compositional edges, cross-word links, node ordering,
/// left-to-right truncation to max_nodes, and the two mask matrices.
NGramGraph build_graph(const SurfaceName& name, int max_n, NodeOrderStrategy strategy,
                       int max_nodes, const GraphEdgeConfig& edge_cfg = {});

/// Recomputes (mask_a, mask_c) from a graph's edge lists plus self-loops.
std::pair<std::vector<uint8_t>, std::vector<uint8_t>> mask_matrices(const NGramGraph& graph);

}  // namespace gramkg
