#include "gramkg/ngram_graph.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <sstream>

#include "gramkg/error.hpp"
#include "json.hpp"

namespace gramkg {

namespace {

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

std::string strip_prefix_once(const std::string& text) {
  auto colon = text.find(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 >= text.size()) return text;
  for (size_t i = 0; i < colon; ++i) {
    if (!is_word_char(text[i])) return text;
  }
  return text.substr(colon + 1);
}

std::string split_camel(const std::string& text) {
  std::string out;
  for (size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (i > 0 && std::isupper(static_cast<unsigned char>(c))) {
      bool after_lower = std::islower(static_cast<unsigned char>(text[i - 1])) != 0;
      bool before_lower = i + 1 < text.size() && std::islower(static_cast<unsigned char>(text[i + 1])) != 0;
      if (after_lower || (before_lower && std::isupper(static_cast<unsigned char>(text[i - 1])))) {
        out += ' ';
      }
    }
    out += c;
  }
  return out;
}

}  // namespace

SurfaceName tokenize(const std::string& raw, const TokenizeConfig& config) {
  std::string text = raw;
  if (config.strip_namespace_prefix) text = strip_prefix_once(text);
  if (config.split_camel_case) text = split_camel(text);

  std::vector<std::string> words;
  std::string current;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch)) || ch == '_') {
      if (!current.empty()) {
        words.push_back(current);
        current.clear();
      }
    } else {
      current += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    }
  }
  if (!current.empty()) words.push_back(current);
  if (words.empty()) fail(ErrorKind::EmptySurfaceName, "no word tokens in '" + raw + "'");
  return SurfaceName{raw, std::move(words)};
}

std::vector<NGramNode> word_ngrams(const std::string& word, int max_n) {
  const int len = static_cast<int>(word.size());
  const int top = std::min(max_n, len);
  std::vector<NGramNode> nodes;
  nodes.reserve(static_cast<size_t>(len) * (len + 1) / 2);
  for (int n = 1; n <= top; ++n) {
    for (int s = 0; s + n <= len; ++s) {
      nodes.push_back(NGramNode{word.substr(static_cast<size_t>(s), static_cast<size_t>(n)), 0, n, s, 0});
    }
  }
  return nodes;
}

NodeOrderStrategy strategy_from_string(const std::string& s) {
  if (s == "word_major") return NodeOrderStrategy::WordMajor;
  if (s == "level_major") return NodeOrderStrategy::LevelMajor;
  fail(ErrorKind::InvalidConfig, "unknown node order strategy '" + s + "'");
}

const char* to_string(NodeOrderStrategy s) {
  return s == NodeOrderStrategy::WordMajor ? "word_major" : "level_major";
}

namespace {

// (word, level, start) -> ordinal index in the full ordered node list
struct NodeIndex {
  std::map<std::tuple<int, int, int>, int> by_span;

  int find(int word, int level, int start) const {
    auto it = by_span.find({word, level, start});
    return it == by_span.end() ? -1 : it->second;
  }
};

void add_adjoin(std::set<std::pair<int, int>>& edges, int a, int b) {
  if (a < 0 || b < 0 || a == b) return;
  edges.insert({std::min(a, b), std::max(a, b)});
}

void add_comp(std::set<std::pair<int, int>>& edges, int lower, int superior) {
  if (lower < 0 || superior < 0) return;
  edges.insert({lower, superior});
}

}  // namespace

NGramGraph build_graph(const SurfaceName& name, int max_n, NodeOrderStrategy strategy,
                       int max_nodes, const GraphEdgeConfig& edge_cfg) {
  if (name.words.empty()) fail(ErrorKind::EmptySurfaceName, "surface name has no words");
  if (max_n < 1) fail(ErrorKind::InvalidConfig, "max_n must be >= 1");
  if (max_nodes < 1) fail(ErrorKind::InvalidConfig, "max_nodes must be >= 1");

  const int n_words = static_cast<int>(name.words.size());
  std::vector<std::vector<NGramNode>> per_word(n_words);
  int max_level = 0;
  for (int w = 0; w < n_words; ++w) {
    per_word[w] = word_ngrams(name.words[w], max_n);
    for (auto& node : per_word[w]) node.word_index = w;
    max_level = std::max(max_level, std::min(max_n, static_cast<int>(name.words[w].size())));
  }

  std::vector<NGramNode> ordered;
  if (strategy == NodeOrderStrategy::WordMajor) {
    for (int w = 0; w < n_words; ++w) {
      ordered.insert(ordered.end(), per_word[w].begin(), per_word[w].end());
    }
  } else {
    for (int level = 1; level <= max_level; ++level) {
      for (int w = 0; w < n_words; ++w) {
        for (const auto& node : per_word[w]) {
          if (node.level == level) ordered.push_back(node);
        }
      }
    }
  }
  NodeIndex index;
  for (int i = 0; i < static_cast<int>(ordered.size()); ++i) {
    ordered[i].position = i;
    index.by_span[{ordered[i].word_index, ordered[i].level, ordered[i].start}] = i;
  }

  std::set<std::pair<int, int>> adjoin;
  std::set<std::pair<int, int>> comp;

  // intra-word edges
  for (int w = 0; w < n_words; ++w) {
    const int len = static_cast<int>(name.words[w].size());
    const int top = std::min(max_n, len);
    for (int n = 1; n <= top; ++n) {
      for (int s = 0; s + n <= len; ++s) {
        const int here = index.find(w, n, s);
        add_adjoin(adjoin, here, index.find(w, n, s + 1));
        if (n + 1 <= top) {
          add_comp(comp, here, index.find(w, n + 1, s - 1));
          add_comp(comp, here, index.find(w, n + 1, s));
        }
      }
    }
  }

  // sequence continuity between consecutive words (1-gram level only)
  if (edge_cfg.link_word_boundaries) {
    for (int w = 0; w + 1 < n_words; ++w) {
      const int last = index.find(w, 1, static_cast<int>(name.words[w].size()) - 1);
      const int first = index.find(w + 1, 1, 0);
      add_adjoin(adjoin, last, first);
    }
  }

  // a whole word occurring as a gram of another word adopts that gram's
  // adjoin neighbors and compositional superiors
  if (edge_cfg.link_whole_word_matches) {
    for (int w = 0; w < n_words; ++w) {
      const std::string& word = name.words[w];
      const int len = static_cast<int>(word.size());
      if (len > max_n) continue;  // no whole-word node
      const int whole = index.find(w, len, 0);
      if (whole < 0) continue;
      for (int w2 = 0; w2 < n_words; ++w2) {
        if (w2 == w) continue;
        const std::string& other = name.words[w2];
        for (int s = 0; s + len <= static_cast<int>(other.size()); ++s) {
          if (other.compare(static_cast<size_t>(s), static_cast<size_t>(len), word) != 0) continue;
          add_adjoin(adjoin, whole, index.find(w2, len, s - 1));
          add_adjoin(adjoin, whole, index.find(w2, len, s + 1));
          add_comp(comp, whole, index.find(w2, len + 1, s - 1));
          add_comp(comp, whole, index.find(w2, len + 1, s));
        }
      }
    }
  }

  NGramGraph graph;
  graph.name = name;
  graph.max_n = max_n;
  graph.strategy = strategy;
  graph.full_node_count = static_cast<int64_t>(ordered.size());

  // left-to-right truncation; edges touching dropped nodes are removed
  const int m = std::min<int>(max_nodes, static_cast<int>(ordered.size()));
  graph.nodes.assign(ordered.begin(), ordered.begin() + m);
  for (const auto& [a, b] : adjoin) {
    if (a < m && b < m) graph.adjoin_edges.emplace_back(a, b);
  }
  for (const auto& [lo, hi] : comp) {
    if (lo < m && hi < m) graph.comp_edges.emplace_back(lo, hi);
  }

  auto [mask_a, mask_c] = mask_matrices(graph);
  graph.mask_a = std::move(mask_a);
  graph.mask_c = std::move(mask_c);
  return graph;
}

std::pair<std::vector<uint8_t>, std::vector<uint8_t>> mask_matrices(const NGramGraph& graph) {
  const size_t m = graph.nodes.size();
  std::vector<uint8_t> mask_a(m * m, 0);
  std::vector<uint8_t> mask_c(m * m, 0);
  for (size_t i = 0; i < m; ++i) {
    mask_a[i * m + i] = 1;
    mask_c[i * m + i] = 1;
  }
  for (const auto& [a, b] : graph.adjoin_edges) {
    mask_a[static_cast<size_t>(a) * m + b] = 1;
    mask_a[static_cast<size_t>(b) * m + a] = 1;
  }
  // connection in either direction marks both entries
  for (const auto& [lo, hi] : graph.comp_edges) {
    mask_c[static_cast<size_t>(lo) * m + hi] = 1;
    mask_c[static_cast<size_t>(hi) * m + lo] = 1;
  }
  return {std::move(mask_a), std::move(mask_c)};
}

std::string NGramGraph::to_json() const {
  nlohmann::ordered_json j;
  j["surface"] = name.raw;
  j["words"] = name.words;
  j["strategy"] = to_string(strategy);
  j["max_n"] = max_n;
  j["full_node_count"] = full_node_count;
  auto nodes_json = nlohmann::ordered_json::array();
  for (const auto& node : nodes) {
    nlohmann::ordered_json nj;
    nj["text"] = node.text;
    nj["word"] = node.word_index;
    nj["level"] = node.level;
    nj["start"] = node.start;
    nj["position"] = node.position;
    nodes_json.push_back(std::move(nj));
  }
  j["nodes"] = std::move(nodes_json);
  auto edges_to_json = [](const std::vector<std::pair<int, int>>& edges) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& [a, b] : edges) arr.push_back({a, b});
    return arr;
  };
  j["adjoin_edges"] = edges_to_json(adjoin_edges);
  j["comp_edges"] = edges_to_json(comp_edges);
  j["mask_a"] = mask_a;
  j["mask_c"] = mask_c;
  return j.dump(2);
}

std::string NGramGraph::to_dot() const {
  std::ostringstream out;
  out << "digraph ngram {\n";
  out << "  rankdir=BT;\n";
  for (const auto& node : nodes) {
    out << "  n" << node.position << " [label=\"" << node.text << "\"];\n";
  }
  for (const auto& [a, b] : adjoin_edges) {
    out << "  n" << a << " -> n" << b << " [dir=none];\n";
  }
  for (const auto& [lo, hi] : comp_edges) {
    out << "  n" << lo << " -> n" << hi << " [style=dashed];\n";
  }
  out << "}\n";
  return out.str();
}

}  // namespace gramkg
