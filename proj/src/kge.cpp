#include "gramkg/kge.hpp"

#include <cmath>

#include "gramkg/error.hpp"

namespace gramkg {

ScoreFn score_fn_from_string(const std::string& s) {
  if (s == "transe") return ScoreFn::TransE;
  if (s == "distmult") return ScoreFn::DistMult;
  fail(ErrorKind::InvalidConfig, "unknown score function '" + s + "'");
}

const char* to_string(ScoreFn fn) { return fn == ScoreFn::TransE ? "transe" : "distmult"; }

KGState KGState::init(int n_entities, int d, ScoreFn fn, std::mt19937_64& rng) {
  KGState state;
  // wider spread than the n-gram tables; distance-based scores need the
  // entities distinguishable from the first epochs
  state.entity_table = Tensor::randn({n_entities, d}, rng, 0.1, true);
  state.score_fn = fn;
  return state;
}

double score(ScoreFn fn, std::span<const double> e_h, std::span<const double> s,
             std::span<const double> e_t) {
  if (e_h.size() != s.size() || s.size() != e_t.size()) {
    fail(ErrorKind::DimensionMismatch, "score: embedding dimensions differ");
  }
  if (fn == ScoreFn::TransE) {
    double acc = 0.0;
    for (size_t k = 0; k < s.size(); ++k) {
      const double d = e_t[k] - (e_h[k] + s[k]);
      acc += d * d;
    }
    return -std::sqrt(acc);
  }
  double acc = 0.0;
  for (size_t k = 0; k < s.size(); ++k) acc += (e_h[k] * s[k]) * e_t[k];
  return acc;
}

Tensor score_triple(Tape& tape, ScoreFn fn, const Tensor& e_h, const Tensor& s,
                    const Tensor& e_t) {
  if (e_h.shape() != s.shape() || s.shape() != e_t.shape() || e_h.rank() != 1) {
    fail(ErrorKind::DimensionMismatch, "score_triple: embeddings must be equal-length vectors");
  }
  if (fn == ScoreFn::TransE) {
    const Tensor diff = tape.sub(e_t, tape.add(e_h, s));
    return tape.scale(tape.sqrt_ew(tape.sum_all(tape.mul(diff, diff))), -1.0);
  }
  return tape.sum_all(tape.mul(tape.mul(e_h, s), e_t));
}

Tensor score_all_tails(Tape& tape, ScoreFn fn, const Tensor& e_h, const Tensor& s,
                       const Tensor& entity_table) {
  if (e_h.rank() != 1 || s.rank() != 1 || e_h.size() != s.size() ||
      entity_table.rank() != 2 || entity_table.cols() != e_h.size()) {
    fail(ErrorKind::DimensionMismatch, "score_all_tails: inconsistent shapes");
  }
  if (fn == ScoreFn::TransE) {
    const Tensor diffs = tape.sub_rowvec(entity_table, tape.add(e_h, s));
    const Tensor sq_dist = tape.row_sums(tape.mul(diffs, diffs));
    return tape.scale(tape.sqrt_ew(sq_dist), -1.0);
  }
  return tape.matvec(entity_table, tape.mul(e_h, s));
}

}  // namespace gramkg
