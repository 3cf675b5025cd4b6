#include "gramkg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "gramkg/error.hpp"
#include "gramkg/rng.hpp"
#include "json.hpp"

namespace gramkg {

void AdamState::step(const std::vector<std::pair<std::string, Tensor>>& params, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (const auto& [name, param] : params) {
    Tensor p = param;
    auto& moments = moments_[name];
    if (moments.m.empty()) {
      moments.m.assign(static_cast<size_t>(p.size()), 0.0);
      moments.v.assign(static_cast<size_t>(p.size()), 0.0);
    }
    const auto& g = p.grad();
    auto& values = p.values();
    for (size_t i = 0; i < values.size(); ++i) {
      moments.m[i] = cfg_.beta1 * moments.m[i] + (1.0 - cfg_.beta1) * g[i];
      moments.v[i] = cfg_.beta2 * moments.v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double m_hat = moments.m[i] / bc1;
      const double v_hat = moments.v[i] / bc2;
      values[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
    }
  }
}

Tensor batch_loss(Tape& tape, const std::vector<Triple>& batch, const Model& model,
                  double label_smoothing, const std::map<int, NGramGraph>& graphs, bool training,
                  std::mt19937_64* dropout_rng) {
  if (batch.empty()) fail(ErrorKind::EmptyInput, "empty training batch");
  const int n_entities = model.kg.n_entities();

  std::map<int, Tensor> relation_cache;  // each batch relation encoded once
  std::vector<Tensor> logit_rows;
  std::vector<int> targets;
  logit_rows.reserve(batch.size());
  targets.reserve(batch.size());
  for (const auto& triple : batch) {
    if (triple.head < 0 || triple.head >= n_entities || triple.tail < 0 ||
        triple.tail >= n_entities) {
      fail(ErrorKind::UnknownEntity, "triple entity id out of range");
    }
    auto it = relation_cache.find(triple.relation);
    if (it == relation_cache.end()) {
      auto graph_it = graphs.find(triple.relation);
      if (graph_it == graphs.end()) {
        fail(ErrorKind::UnknownRelation, "relation id " + std::to_string(triple.relation));
      }
      const Tensor s =
          model.encoder.encode(tape, graph_it->second, model.vocab, training, dropout_rng);
      it = relation_cache.emplace(triple.relation, s).first;
    }
    const Tensor e_h = tape.row(model.kg.entity_table, triple.head);
    logit_rows.push_back(
        score_all_tails(tape, model.kg.score_fn, e_h, it->second, model.kg.entity_table));
    targets.push_back(triple.tail);
  }
  const Tensor logits = tape.stack_rows(logit_rows);
  return tape.cross_entropy_label_smoothed(logits, targets, label_smoothing);
}

double train_step(const std::vector<Triple>& batch, Model& model, AdamState& adam,
                  const TrainConfig& cfg, std::mt19937_64& dropout_rng,
                  const std::map<int, NGramGraph>& graphs) {
  auto params = model.trainable();
  for (auto& [name, p] : params) p.zero_grad();

  Tape tape;
  const Tensor loss =
      batch_loss(tape, batch, model, cfg.label_smoothing, graphs, /*training=*/true, &dropout_rng);
  tape.backward(loss);
  adam.step(params, cfg.learning_rate);
  return loss.item();
}

TrainResult train(const ZSLSplit& split, const TrainConfig& cfg) {
  const NGramVocab vocab = build_vocab(split, cfg.graph.max_n, cfg.graph.tokenize);
  Model model = Model::init(cfg.model, cfg.graph, vocab,
                            static_cast<int>(split.entity_names.size()), cfg.score_fn, cfg.seed);
  if (!cfg.edge_sidecar.empty()) model.encoder.params().load_edge_sidecar(cfg.edge_sidecar);

  std::map<int, NGramGraph> graphs;
  auto graph_of = [&](int relation) -> const NGramGraph& {
    auto it = graphs.find(relation);
    if (it == graphs.end()) {
      it = graphs
               .emplace(relation,
                        model.relation_graph(split.relation_names[static_cast<size_t>(relation)]))
               .first;
    }
    return it->second;
  };
  for (const auto& t : split.train) graph_of(t.relation);
  for (const auto& t : split.dev) graph_of(t.relation);

  std::mt19937_64 shuffle_rng(2 * cfg.seed + 1);
  std::mt19937_64 dropout_rng(2 * cfg.seed + 2);
  AdamState adam;

  TrainResult result{model.clone(), {}, 0, 0.0};
  bool have_best = false;
  std::vector<size_t> order(split.train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle(order, shuffle_rng);
    double loss_sum = 0.0;
    int batches = 0;
    for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(order.size(), begin + static_cast<size_t>(cfg.batch_size));
      std::vector<Triple> batch;
      batch.reserve(end - begin);
      for (size_t i = begin; i < end; ++i) batch.push_back(split.train[order[i]]);
      loss_sum += train_step(batch, model, adam, cfg, dropout_rng, graphs);
      ++batches;
    }

    EpochRecord record;
    record.epoch = epoch;
    record.loss = batches > 0 ? loss_sum / batches : 0.0;
    if (!split.dev.empty()) {
      const EvalReport dev = evaluate_triples(split.dev, split.relation_names, model);
      record.dev_mrr = dev.mrr;
      record.dev_hits1 = dev.hits1;
      if (!have_best || dev.mrr > result.best_dev_mrr) {
        have_best = true;
        result.best_dev_mrr = dev.mrr;
        result.best_epoch = epoch;
        result.model = model.clone();
      }
    }
    result.log.push_back(record);

    if (cfg.patience > 0 && have_best && epoch - result.best_epoch >= cfg.patience) break;
  }

  if (!have_best) {  // no dev split: final parameters are the checkpoint
    result.model = model;
    result.best_epoch = cfg.epochs;
  }
  return result;
}

void write_metrics_log(const std::string& path, const std::vector<EpochRecord>& log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path);
  for (const auto& rec : log) {
    nlohmann::ordered_json j;
    j["epoch"] = rec.epoch;
    j["loss"] = rec.loss;
    j["dev_mrr"] = rec.dev_mrr;
    j["dev_hits1"] = rec.dev_hits1;
    out << j.dump() << '\n';
  }
}

}  // namespace gramkg
