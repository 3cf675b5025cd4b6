#include "gramkg/evaluator.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <span>

#include "gramkg/error.hpp"
#include "json.hpp"

namespace gramkg {

double mrr(const std::vector<int>& ranks) {
  if (ranks.empty()) fail(ErrorKind::EmptyInput, "mrr of no ranks");
  double acc = 0.0;
  for (int r : ranks) {
    if (r < 1) fail(ErrorKind::IndexOutOfRange, "ranks are 1-based");
    acc += 1.0 / static_cast<double>(r);
  }
  return acc / static_cast<double>(ranks.size());
}

double hits_at_k(const std::vector<int>& ranks, int k) {
  if (ranks.empty()) fail(ErrorKind::EmptyInput, "hits@k of no ranks");
  if (k < 1) fail(ErrorKind::InvalidConfig, "k must be >= 1");
  size_t hits = 0;
  for (int r : ranks) {
    if (r < 1) fail(ErrorKind::IndexOutOfRange, "ranks are 1-based");
    if (r <= k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

std::vector<double> encode_surface(const Model& model, const std::string& surface) {
  Tape tape;
  const NGramGraph graph = model.relation_graph(surface);
  const Tensor s = model.encoder.encode(tape, graph, model.vocab, /*training=*/false, nullptr);
  return s.values();
}

namespace {

std::span<const double> entity_row(const Model& model, int id) {
  const auto& table = model.kg.entity_table;
  return {table.values().data() + static_cast<size_t>(id) * static_cast<size_t>(table.cols()),
          static_cast<size_t>(table.cols())};
}

const std::string& relation_name(const std::vector<std::string>& names, int id) {
  if (id < 0 || id >= static_cast<int>(names.size())) {
    fail(ErrorKind::UnknownRelation, "relation id " + std::to_string(id));
  }
  return names[static_cast<size_t>(id)];
}

RankedPrediction rank_candidates(const Query& query, const Model& model,
                                 const std::vector<double>& relation_embedding) {
  const int n_entities = model.kg.n_entities();
  if (query.head < 0 || query.head >= n_entities) {
    fail(ErrorKind::UnknownEntity, "head id " + std::to_string(query.head));
  }
  const auto e_h = entity_row(model, query.head);
  struct Scored {
    int id;
    double value;
  };
  std::vector<Scored> scored;
  scored.reserve(query.candidates.size());
  for (int c : query.candidates) {
    if (c < 0 || c >= n_entities) fail(ErrorKind::UnknownCandidate, "candidate id " + std::to_string(c));
    scored.push_back({c, score(model.kg.score_fn, e_h, relation_embedding, entity_row(model, c))});
  }
  std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
    if (a.value != b.value) return a.value > b.value;
    return a.id < b.id;
  });
  RankedPrediction out;
  out.ranked_candidates.reserve(scored.size());
  out.scores.reserve(scored.size());
  for (size_t i = 0; i < scored.size(); ++i) {
    out.ranked_candidates.push_back(scored[i].id);
    out.scores.push_back(scored[i].value);
    if (scored[i].id == query.truth) out.rank_of_truth = static_cast<int>(i) + 1;
  }
  if (out.rank_of_truth == 0) fail(ErrorKind::InvalidQuery, "ground truth not among candidates");
  return out;
}

int rank_against_all(const Model& model, int head, const std::vector<double>& relation_embedding,
                     int truth) {
  const auto e_h = entity_row(model, head);
  const double truth_score =
      score(model.kg.score_fn, e_h, relation_embedding, entity_row(model, truth));
  int better = 0;
  for (int e = 0; e < model.kg.n_entities(); ++e) {
    const double s = score(model.kg.score_fn, e_h, relation_embedding, entity_row(model, e));
    if (s > truth_score || (s == truth_score && e < truth)) ++better;
  }
  return better + 1;
}

EvalReport report_from_outcomes(std::vector<QueryOutcome> outcomes) {
  std::vector<int> ranks;
  ranks.reserve(outcomes.size());
  for (const auto& o : outcomes) ranks.push_back(o.rank);
  EvalReport report;
  report.mrr = mrr(ranks);
  report.hits10 = hits_at_k(ranks, 10);
  report.hits5 = hits_at_k(ranks, 5);
  report.hits1 = hits_at_k(ranks, 1);
  report.per_query = std::move(outcomes);
  return report;
}

}  // namespace

RankedPrediction predict_tail(const Query& query, const std::string& relation_surface,
                              const Model& model) {
  return rank_candidates(query, model, encode_surface(model, relation_surface));
}

EvalReport evaluate(const std::vector<Query>& queries,
                    const std::vector<std::string>& relation_names, const Model& model) {
  std::map<int, std::vector<double>> embedding_cache;
  std::vector<QueryOutcome> outcomes;
  outcomes.reserve(queries.size());
  for (const auto& query : queries) {
    auto it = embedding_cache.find(query.relation);
    if (it == embedding_cache.end()) {
      it = embedding_cache
               .emplace(query.relation,
                        encode_surface(model, relation_name(relation_names, query.relation)))
               .first;
    }
    const RankedPrediction pred = rank_candidates(query, model, it->second);
    QueryOutcome outcome;
    outcome.head = query.head;
    outcome.relation = query.relation;
    outcome.truth = query.truth;
    outcome.rank = pred.rank_of_truth;
    const size_t top = std::min<size_t>(5, pred.ranked_candidates.size());
    outcome.top5.assign(pred.ranked_candidates.begin(), pred.ranked_candidates.begin() + top);
    outcomes.push_back(std::move(outcome));
  }
  return report_from_outcomes(std::move(outcomes));
}

EvalReport evaluate_triples(const std::vector<Triple>& triples,
                            const std::vector<std::string>& relation_names, const Model& model) {
  std::map<int, std::vector<double>> embedding_cache;
  std::vector<QueryOutcome> outcomes;
  outcomes.reserve(triples.size());
  for (const auto& triple : triples) {
    auto it = embedding_cache.find(triple.relation);
    if (it == embedding_cache.end()) {
      it = embedding_cache
               .emplace(triple.relation,
                        encode_surface(model, relation_name(relation_names, triple.relation)))
               .first;
    }
    QueryOutcome outcome;
    outcome.head = triple.head;
    outcome.relation = triple.relation;
    outcome.truth = triple.tail;
    outcome.rank = rank_against_all(model, triple.head, it->second, triple.tail);
    outcomes.push_back(std::move(outcome));
  }
  return report_from_outcomes(std::move(outcomes));
}

std::string EvalReport::to_table() const {
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "   MRR  hits@10   hits@5   hits@1\n%6.4f   %6.4f   %6.4f   %6.4f\n", mrr,
                hits10, hits5, hits1);
  return buf;
}

std::string EvalReport::metrics_json() const {
  nlohmann::ordered_json j;
  j["mrr"] = mrr;
  j["hits10"] = hits10;
  j["hits5"] = hits5;
  j["hits1"] = hits1;
  j["queries"] = per_query.size();
  return j.dump(2);
}

void EvalReport::write_per_query_jsonl(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path);
  for (const auto& o : per_query) {
    nlohmann::ordered_json j;
    j["head"] = o.head;
    j["relation"] = o.relation;
    j["truth"] = o.truth;
    j["rank"] = o.rank;
    j["top5"] = o.top5;
    out << j.dump() << '\n';
  }
}

}  // namespace gramkg
