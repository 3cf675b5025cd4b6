#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gramkg/dataset.hpp"
#include "gramkg/evaluator.hpp"
#include "gramkg/model.hpp"

namespace gramkg {

struct TrainConfig {
  double learning_rate = 0.0005;
  int batch_size = 32;
  int epochs = 80;
  double label_smoothing = 0.1;
  uint64_t seed = 0;
  int patience = 0;  // early stop after this many epochs without a dev-MRR best; 0 disables
  ScoreFn score_fn = ScoreFn::TransE;
  GramTransformerConfig model;   // width, heads, dropout, mask_mode, variant, max_nodes
  ModelSettings graph;           // max_n, ordering strategy, tokenizer and edge flags
  std::string edge_sidecar;      // optional file seeding r_a / r_c
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam over named tensors; moment shapes mirror parameters.
class AdamState {
 public:
  explicit AdamState(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(const std::vector<std::pair<std::string, Tensor>>& params, double lr);
  int64_t steps_taken() const { return t_; }

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  AdamConfig cfg_;
  int64_t t_ = 0;
  std::map<std::string, Moments> moments_;
};

/// Label-smoothed cross-entropy of a batch over full entity logits. Each
/// distinct batch relation is encoded once and its embedding reused.
Tensor batch_loss(Tape& tape, const std::vector<Triple>& batch, const Model& model,
                  double label_smoothing, const std::map<int, NGramGraph>& graphs, bool training,
                  std::mt19937_64* dropout_rng);

/// One mini-batch update: batch_loss forward, backward, Adam. Returns the
/// pre-update loss.
double train_step(const std::vector<Triple>& batch, Model& model, AdamState& adam,
                  const TrainConfig& cfg, std::mt19937_64& dropout_rng,
                  const std::map<int, NGramGraph>& graphs);

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double dev_mrr = 0.0;
  double dev_hits1 = 0.0;
};

struct TrainResult {
  Model model;  // best dev-MRR checkpoint (final parameters when dev is empty)
  std::vector<EpochRecord> log;
  int best_epoch = 0;
  double best_dev_mrr = 0.0;
};

/// Seeded, deterministic training over the split's seen relations with
/// per-epoch dev evaluation.
TrainResult train(const ZSLSplit& split, const TrainConfig& cfg);

/// Append-only JSONL: {"epoch":..,"loss":..,"dev_mrr":..,"dev_hits1":..}.
void write_metrics_log(const std::string& path, const std::vector<EpochRecord>& log);

}  // namespace gramkg
