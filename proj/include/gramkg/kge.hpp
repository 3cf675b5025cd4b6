#pragma once

#include <random>
#include <span>
#include <string>

#include "gramkg/tensor.hpp"

namespace gramkg {

enum class ScoreFn { TransE, DistMult };

ScoreFn score_fn_from_string(const std::string& s);
const char* to_string(ScoreFn fn);

struct KGState {
  Tensor entity_table;  // [n_entities x d], trainable
  ScoreFn score_fn = ScoreFn::TransE;

  static KGState init(int n_entities, int d, ScoreFn fn, std::mt19937_64& rng);
  int n_entities() const { return static_cast<int>(entity_table.rows()); }
  int dim() const { return static_cast<int>(entity_table.cols()); }
};

/// Triple score, higher is better.
/// TransE: -|e_h + S - e_t|_2; DistMult: sum_i e_h[i]*S[i]*e_t[i].
double score(ScoreFn fn, std::span<const double> e_h, std::span<const double> s,
             std::span<const double> e_t);

/// Tape-recorded single-triple score (for gradient checks).
Tensor score_triple(Tape& tape, ScoreFn fn, const Tensor& e_h, const Tensor& s, const Tensor& e_t);

/// Scores of (e_h, S, E[t]) for every entity row t; the training logits.
/// Matches a per-entity loop of score() exactly, including summation order.
Tensor score_all_tails(Tape& tape, ScoreFn fn, const Tensor& e_h, const Tensor& s,
                       const Tensor& entity_table);

}  // namespace gramkg
