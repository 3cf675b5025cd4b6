#include "gramkg/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "gramkg/error.hpp"
#include "gramkg/rng.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace gramkg {

namespace {

std::ifstream open_or_fail(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::MissingFile, path.string());
  return in;
}

int parse_int(const std::string& text, const std::string& where) {
  try {
    size_t pos = 0;
    const int value = std::stoi(text, &pos);
    if (pos != text.size()) throw std::invalid_argument("trailing characters");
    return value;
  } catch (const std::exception&) {
    fail(ErrorKind::MalformedLine, where + ": expected integer, got '" + text + "'");
  }
}

// id<TAB>name files; ids must be exactly 0..N-1
std::vector<std::string> load_vocab_file(const fs::path& path) {
  auto in = open_or_fail(path);
  std::vector<std::pair<int, std::string>> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path.filename().string() + ":" + std::to_string(line_no);
    const auto tab = line.find('\t');
    if (tab == std::string::npos) fail(ErrorKind::MalformedLine, where + ": missing tab separator");
    rows.emplace_back(parse_int(line.substr(0, tab), where), line.substr(tab + 1));
  }
  std::vector<std::string> names(rows.size());
  std::vector<bool> present(rows.size(), false);
  for (const auto& [id, name] : rows) {
    if (id < 0 || id >= static_cast<int>(rows.size()) || present[static_cast<size_t>(id)]) {
      fail(ErrorKind::MalformedLine,
           path.filename().string() + ": ids must be unique and dense in 0.." +
               std::to_string(rows.size() - 1));
    }
    present[static_cast<size_t>(id)] = true;
    names[static_cast<size_t>(id)] = name;
  }
  return names;
}

std::vector<Triple> load_triples(const fs::path& path, int n_entities, int n_relations) {
  auto in = open_or_fail(path);
  std::vector<Triple> triples;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path.filename().string() + ":" + std::to_string(line_no);
    std::istringstream row(line);
    std::string h, r, t, extra;
    if (!std::getline(row, h, '\t') || !std::getline(row, r, '\t') || !std::getline(row, t, '\t')) {
      fail(ErrorKind::MalformedLine, where + ": expected head<TAB>relation<TAB>tail");
    }
    if (std::getline(row, extra, '\t')) fail(ErrorKind::MalformedLine, where + ": too many columns");
    Triple triple{parse_int(h, where), parse_int(r, where), parse_int(t, where)};
    if (triple.head < 0 || triple.head >= n_entities || triple.tail < 0 || triple.tail >= n_entities) {
      fail(ErrorKind::DanglingId, where + ": entity id out of range");
    }
    if (triple.relation < 0 || triple.relation >= n_relations) {
      fail(ErrorKind::DanglingId, where + ": relation id out of range");
    }
    triples.push_back(triple);
  }
  return triples;
}

std::vector<Query> load_queries(const fs::path& path, int n_entities, int n_relations) {
  auto in = open_or_fail(path);
  std::vector<Query> queries;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path.filename().string() + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::MalformedLine, where + ": " + e.what());
    }
    Query q;
    try {
      q.head = j.at("head").get<int>();
      q.relation = j.at("relation").get<int>();
      q.truth = j.at("truth").get<int>();
      q.candidates = j.at("candidates").get<std::vector<int>>();
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::MalformedLine, where + ": " + e.what());
    }
    if (q.head < 0 || q.head >= n_entities || q.truth < 0 || q.truth >= n_entities) {
      fail(ErrorKind::DanglingId, where + ": entity id out of range");
    }
    if (q.relation < 0 || q.relation >= n_relations) {
      fail(ErrorKind::DanglingId, where + ": relation id out of range");
    }
    for (int c : q.candidates) {
      if (c < 0 || c >= n_entities) fail(ErrorKind::DanglingId, where + ": candidate id out of range");
    }
    if (q.candidates.empty()) fail(ErrorKind::InvalidQuery, where + ": empty candidate set");
    if (std::find(q.candidates.begin(), q.candidates.end(), q.truth) == q.candidates.end()) {
      fail(ErrorKind::InvalidQuery, where + ": ground truth not in candidate set");
    }
    queries.push_back(std::move(q));
  }
  return queries;
}

}  // namespace

ZSLSplit load_split(const std::string& dir) {
  const fs::path root(dir);
  ZSLSplit split;
  split.entity_names = load_vocab_file(root / "entities.tsv");
  split.relation_names = load_vocab_file(root / "relations.tsv");
  const int n_e = static_cast<int>(split.entity_names.size());
  const int n_r = static_cast<int>(split.relation_names.size());
  split.train = load_triples(root / "train.tsv", n_e, n_r);
  split.dev = load_triples(root / "dev.tsv", n_e, n_r);
  split.test = load_queries(root / "test_queries.jsonl", n_e, n_r);

  for (const auto& t : split.train) split.seen_relations.insert(t.relation);
  for (const auto& q : split.test) split.unseen_relations.insert(q.relation);
  for (int r : split.seen_relations) {
    if (split.unseen_relations.count(r)) {
      fail(ErrorKind::SplitOverlap,
           "relation " + std::to_string(r) + " ('" + split.relation_names[static_cast<size_t>(r)] +
               "') appears in both train and test");
    }
  }
  return split;
}

void write_split(const std::string& dir, const ZSLSplit& split) {
  fs::create_directories(dir);
  const fs::path root(dir);
  auto open_out = [](const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
    return out;
  };
  {
    auto out = open_out(root / "entities.tsv");
    for (size_t i = 0; i < split.entity_names.size(); ++i) {
      out << i << '\t' << split.entity_names[i] << '\n';
    }
  }
  {
    auto out = open_out(root / "relations.tsv");
    for (size_t i = 0; i < split.relation_names.size(); ++i) {
      out << i << '\t' << split.relation_names[i] << '\n';
    }
  }
  auto write_triples = [&](const fs::path& path, const std::vector<Triple>& triples) {
    auto out = open_out(path);
    for (const auto& t : triples) out << t.head << '\t' << t.relation << '\t' << t.tail << '\n';
  };
  write_triples(root / "train.tsv", split.train);
  write_triples(root / "dev.tsv", split.dev);
  {
    auto out = open_out(root / "test_queries.jsonl");
    for (const auto& q : split.test) {
      nlohmann::ordered_json j;
      j["head"] = q.head;
      j["relation"] = q.relation;
      j["truth"] = q.truth;
      j["candidates"] = q.candidates;
      out << j.dump() << '\n';
    }
  }
}

NGramVocab vocab_from_grams(std::vector<std::string> grams) {
  std::sort(grams.begin(), grams.end());
  grams.erase(std::unique(grams.begin(), grams.end()), grams.end());
  NGramVocab vocab;
  vocab.grams = std::move(grams);
  for (size_t i = 0; i < vocab.grams.size(); ++i) {
    vocab.index[vocab.grams[i]] = static_cast<int>(i);
  }
  return vocab;
}

namespace {

void collect_grams(const std::string& surface, int max_n, const TokenizeConfig& tok,
                   std::set<std::string>& out) {
  const SurfaceName name = tokenize(surface, tok);
  for (const auto& word : name.words) {
    const int len = static_cast<int>(word.size());
    for (int n = 1; n <= std::min(max_n, len); ++n) {
      for (int s = 0; s + n <= len; ++s) out.insert(word.substr(static_cast<size_t>(s), static_cast<size_t>(n)));
    }
  }
}

}  // namespace

NGramVocab build_vocab(const ZSLSplit& split, int max_n, const TokenizeConfig& tok) {
  std::set<std::string> grams;
  for (int r : split.seen_relations) {
    collect_grams(split.relation_names[static_cast<size_t>(r)], max_n, tok, grams);
  }
  return vocab_from_grams({grams.begin(), grams.end()});
}

double unseen_gram_coverage(const ZSLSplit& split, const NGramVocab& vocab, int max_n,
                            const TokenizeConfig& tok) {
  std::set<std::string> grams;
  for (int r : split.unseen_relations) {
    collect_grams(split.relation_names[static_cast<size_t>(r)], max_n, tok, grams);
  }
  if (grams.empty()) return 1.0;
  size_t covered = 0;
  for (const auto& gram : grams) covered += vocab.contains(gram) ? 1u : 0u;
  return static_cast<double>(covered) / static_cast<double>(grams.size());
}

// ---- synthetic fixture ------------------------------------------------------

namespace {

constexpr int kLatentDim = 8;

const std::vector<std::string> kVerbs = {"works", "plays", "lives", "trades", "votes", "stays"};
const std::vector<std::string> kPreps = {"at", "for", "in", "with", "near", "under"};

}  // namespace

ZSLSplit synth_fixture(uint64_t seed, const FixtureSizes& sizes) {
  if (sizes.n_entities < 2 || sizes.n_seen < 1 || sizes.n_unseen < 0 ||
      sizes.triples_per_relation < 1 || sizes.candidates_per_query < 1) {
    fail(ErrorKind::InvalidConfig, "fixture sizes out of range");
  }
  const int n_relations = sizes.n_seen + sizes.n_unseen;
  if (n_relations > static_cast<int>(kVerbs.size() * kPreps.size())) {
    fail(ErrorKind::InvalidConfig, "fixture supports at most " +
                                       std::to_string(kVerbs.size() * kPreps.size()) + " relations");
  }
  std::mt19937_64 rng(seed);

  // candidate surface names: every verb+prep pair, deterministically shuffled
  std::vector<std::pair<int, int>> combos;
  for (size_t v = 0; v < kVerbs.size(); ++v) {
    for (size_t p = 0; p < kPreps.size(); ++p) combos.emplace_back(static_cast<int>(v), static_cast<int>(p));
  }
  shuffle(combos, rng);

  // unseen names first, then seen names chosen to cover every unseen word,
  // so unseen grams stay inside the seen vocabulary
  std::vector<std::pair<int, int>> unseen_combos(combos.begin(), combos.begin() + sizes.n_unseen);
  std::vector<std::pair<int, int>> pool(combos.begin() + sizes.n_unseen, combos.end());
  std::set<int> need_verbs, need_preps;
  for (const auto& [v, p] : unseen_combos) {
    need_verbs.insert(v);
    need_preps.insert(p);
  }
  std::vector<std::pair<int, int>> seen_combos;
  for (auto it = pool.begin(); it != pool.end() && static_cast<int>(seen_combos.size()) < sizes.n_seen;) {
    const auto [v, p] = *it;
    if (need_verbs.count(v) || need_preps.count(p)) {
      need_verbs.erase(v);
      need_preps.erase(p);
      seen_combos.push_back(*it);
      it = pool.erase(it);
    } else {
      ++it;
    }
  }
  for (auto it = pool.begin(); it != pool.end() && static_cast<int>(seen_combos.size()) < sizes.n_seen; ++it) {
    seen_combos.push_back(*it);
  }

  ZSLSplit split;
  for (const auto& [v, p] : seen_combos) split.relation_names.push_back(kVerbs[static_cast<size_t>(v)] + " " + kPreps[static_cast<size_t>(p)]);
  for (const auto& [v, p] : unseen_combos) split.relation_names.push_back(kVerbs[static_cast<size_t>(v)] + " " + kPreps[static_cast<size_t>(p)]);
  for (int e = 0; e < sizes.n_entities; ++e) split.entity_names.push_back("entity_" + std::to_string(e));

  // planted structure: entities live in a latent space, every word carries an
  // additive offset, and a relation translates heads by the sum of its words
  std::vector<std::vector<double>> entity_latent(static_cast<size_t>(sizes.n_entities),
                                                 std::vector<double>(kLatentDim));
  for (auto& z : entity_latent) {
    for (double& x : z) x = normal01(rng);
  }
  // word offsets stay comparable to the entity spread so translated heads
  // land back inside the cloud; tails then vary with the head and the
  // planted map is exactly representable by a translation scorer
  std::vector<std::vector<double>> verb_latent(kVerbs.size(), std::vector<double>(kLatentDim));
  std::vector<std::vector<double>> prep_latent(kPreps.size(), std::vector<double>(kLatentDim));
  for (auto& d : verb_latent) {
    for (double& x : d) x = 0.75 * normal01(rng);
  }
  for (auto& d : prep_latent) {
    for (double& x : d) x = 0.75 * normal01(rng);
  }

  std::vector<std::pair<int, int>> all_combos = seen_combos;
  all_combos.insert(all_combos.end(), unseen_combos.begin(), unseen_combos.end());

  // nearest entity to the translated head, plus the margin by which it wins
  // against every other entity including the head itself
  auto planted_tail = [&](int head, int rel) {
    const auto& [v, p] = all_combos[static_cast<size_t>(rel)];
    std::vector<double> dist(static_cast<size_t>(sizes.n_entities), 0.0);
    for (int e = 0; e < sizes.n_entities; ++e) {
      for (int k = 0; k < kLatentDim; ++k) {
        const double target = entity_latent[static_cast<size_t>(head)][static_cast<size_t>(k)] +
                              verb_latent[static_cast<size_t>(v)][static_cast<size_t>(k)] +
                              prep_latent[static_cast<size_t>(p)][static_cast<size_t>(k)];
        const double d = target - entity_latent[static_cast<size_t>(e)][static_cast<size_t>(k)];
        dist[static_cast<size_t>(e)] += d * d;
      }
    }
    int best = -1;
    for (int e = 0; e < sizes.n_entities; ++e) {
      if (e == head) continue;
      if (best < 0 || dist[static_cast<size_t>(e)] < dist[static_cast<size_t>(best)]) best = e;
    }
    double runner_up = std::numeric_limits<double>::infinity();
    for (int e = 0; e < sizes.n_entities; ++e) {
      if (e == best) continue;
      runner_up = std::min(runner_up, dist[static_cast<size_t>(e)]);
    }
    return std::pair<int, double>{best, runner_up - dist[static_cast<size_t>(best)]};
  };

  for (int rel = 0; rel < n_relations; ++rel) {
    // keep the heads whose planted tail is least ambiguous
    std::vector<std::pair<double, int>> margins;
    for (int h = 0; h < sizes.n_entities; ++h) {
      margins.emplace_back(-planted_tail(h, rel).second, h);
    }
    std::sort(margins.begin(), margins.end());
    std::vector<int> heads;
    heads.reserve(margins.size());
    for (const auto& [neg_margin, h] : margins) heads.push_back(h);

    const bool is_seen = rel < sizes.n_seen;
    const int wanted = sizes.triples_per_relation + (is_seen ? sizes.dev_per_seen : 0);
    if (wanted > sizes.n_entities) fail(ErrorKind::InvalidConfig, "fixture needs more entities than triples per relation");
    for (int i = 0; i < wanted; ++i) {
      const int head = heads[static_cast<size_t>(i)];
      const int tail = planted_tail(head, rel).first;
      if (!is_seen) {
        Query q;
        q.head = head;
        q.relation = rel;
        q.truth = tail;
        std::vector<int> others;
        others.reserve(static_cast<size_t>(sizes.n_entities - 1));
        for (int e = 0; e < sizes.n_entities; ++e) {
          if (e != tail) others.push_back(e);
        }
        shuffle(others, rng);
        const int extras = std::min(sizes.candidates_per_query - 1, static_cast<int>(others.size()));
        q.candidates.assign(others.begin(), others.begin() + extras);
        q.candidates.push_back(tail);
        std::sort(q.candidates.begin(), q.candidates.end());
        split.test.push_back(std::move(q));
      } else if (i < sizes.triples_per_relation) {
        split.train.push_back(Triple{head, rel, tail});
      } else {
        split.dev.push_back(Triple{head, rel, tail});
      }
    }
  }

  for (int r = 0; r < sizes.n_seen; ++r) split.seen_relations.insert(r);
  for (int r = sizes.n_seen; r < n_relations; ++r) split.unseen_relations.insert(r);
  return split;
}

void synth_fixture_to_dir(const std::string& dir, uint64_t seed, const FixtureSizes& sizes) {
  write_split(dir, synth_fixture(seed, sizes));
}

}  // namespace gramkg
