#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "gramkg/ngram_graph.hpp"

namespace gramkg {

struct Triple {
  int head = 0;
  int relation = 0;
  int tail = 0;
  bool operator==(const Triple&) const = default;
};

/// One zero-shot test query: rank the candidates for (head, relation) and
/// find the ground-truth tail.
struct Query {
  int head = 0;
  int relation = 0;
  int truth = 0;
  std::vector<int> candidates;
  bool operator==(const Query&) const = default;
};

struct ZSLSplit {
  std::vector<std::string> entity_names;    // id == index
  std::vector<std::string> relation_names;  // id == index, surface names
  std::set<int> seen_relations;             // relations of train triples
  std::set<int> unseen_relations;           // relations of test queries
  std::vector<Triple> train;
  std::vector<Triple> dev;
  std::vector<Query> test;
  bool operator==(const ZSLSplit&) const = default;
};

/// Reads entities.tsv, relations.tsv, train.tsv, dev.tsv, test_queries.jsonl
/// and validates every split invariant (disjoint seen/unseen, resolvable ids,
/// truth in candidates). Failures carry file and line diagnostics.
ZSLSplit load_split(const std::string& dir);

/// Inverse of load_split; emits the same five files, UTF-8, LF-terminated.
void write_split(const std::string& dir, const ZSLSplit& split);

struct NGramVocab {
  std::vector<std::string> grams;  // lexicographically sorted, ids dense from 0
  std::unordered_map<std::string, int> index;

  int unk_id() const { return static_cast<int>(grams.size()); }
  int size() const { return static_cast<int>(grams.size()) + 1; }  // includes UNK
  int id_or_unk(const std::string& text) const {
    auto it = index.find(text);
    return it == index.end() ? unk_id() : it->second;
  }
  bool contains(const std::string& text) const { return index.count(text) != 0; }
};

NGramVocab vocab_from_grams(std::vector<std::string> grams);

/// Vocabulary over all n-grams (n <= max_n) of seen-relation surface names.
NGramVocab build_vocab(const ZSLSplit& split, int max_n, const TokenizeConfig& tok = {});

/// Fraction of distinct unseen-relation grams present in the vocabulary;
/// 1.0 when there are no unseen relations.
double unseen_gram_coverage(const ZSLSplit& split, const NGramVocab& vocab, int max_n,
                            const TokenizeConfig& tok = {});

struct FixtureSizes {
  int n_entities = 50;
  int n_seen = 8;
  int n_unseen = 2;
  int triples_per_relation = 40;
  int candidates_per_query = 20;
  int dev_per_seen = 2;  // extra held-out triples per seen relation
};

/// Deterministic synthetic split. Relations get compositional two-word
/// surface names whose words all occur in seen relations, and triples follow
/// a planted additive latent structure so the zero-shot task is learnable.
ZSLSplit synth_fixture(uint64_t seed, const FixtureSizes& sizes = {});

/// synth_fixture + write_split; same seed produces byte-identical files.
void synth_fixture_to_dir(const std::string& dir, uint64_t seed, const FixtureSizes& sizes = {});

}  // namespace gramkg
