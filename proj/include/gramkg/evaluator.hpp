#pragma once

#include <string>
#include <vector>

#include "gramkg/dataset.hpp"
#include "gramkg/model.hpp"

namespace gramkg {

/// MRR = mean(1/rank) over positive ranks.
double mrr(const std::vector<int>& ranks);
/// Fraction of ranks <= k.
double hits_at_k(const std::vector<int>& ranks, int k);

struct RankedPrediction {
  std::vector<int> ranked_candidates;  // best first; ties broken by ascending id
  std::vector<double> scores;          // aligned with ranked_candidates
  int rank_of_truth = 0;               // 1-based
};

/// Scores every candidate with the eval-mode relation embedding of the
/// query's surface name and sorts by descending score. Deterministic:
/// ties break toward the smaller entity id.
RankedPrediction predict_tail(const Query& query, const std::string& relation_surface,
                              const Model& model);

struct QueryOutcome {
  int head = 0;
  int relation = 0;
  int truth = 0;
  int rank = 0;
  std::vector<int> top5;
};

struct EvalReport {
  double mrr = 0.0;
  double hits10 = 0.0;
  double hits5 = 0.0;
  double hits1 = 0.0;
  std::vector<QueryOutcome> per_query;

  std::string to_table() const;
  std::string metrics_json() const;
  void write_per_query_jsonl(const std::string& path) const;
};

/// Ranks the ground truth of every query; relation embeddings are computed
/// once per distinct relation. Never mutates the model.
EvalReport evaluate(const std::vector<Query>& queries,
                    const std::vector<std::string>& relation_names, const Model& model);

/// Dev/train-style evaluation: rank each triple's tail against all entities.
EvalReport evaluate_triples(const std::vector<Triple>& triples,
                            const std::vector<std::string>& relation_names, const Model& model);

/// Eval-mode relation embedding of a surface name.
std::vector<double> encode_surface(const Model& model, const std::string& surface);

}  // namespace gramkg
