#include "gramkg/gram_transformer.hpp"

#include <algorithm>
#include <cmath>

#include "gramkg/error.hpp"

namespace gramkg {

MaskMode mask_mode_from_string(const std::string& s) {
  if (s == "post") return MaskMode::PostSoftmax;
  if (s == "post-renorm") return MaskMode::PostSoftmaxRenorm;
  if (s == "pre") return MaskMode::PreSoftmaxAdditive;
  fail(ErrorKind::InvalidConfig, "unknown mask mode '" + s + "'");
}

const char* to_string(MaskMode m) {
  switch (m) {
    case MaskMode::PostSoftmax: return "post";
    case MaskMode::PostSoftmaxRenorm: return "post-renorm";
    case MaskMode::PreSoftmaxAdditive: return "pre";
  }
  return "?";
}

Variant variant_from_string(const std::string& s) {
  if (s == "full") return Variant::Full;
  if (s == "wng") return Variant::WNG;
  if (s == "wg") return Variant::WG;
  fail(ErrorKind::InvalidConfig, "unknown variant '" + s + "'");
}

const char* to_string(Variant v) {
  switch (v) {
    case Variant::Full: return "full";
    case Variant::WNG: return "wng";
    case Variant::WG: return "wg";
  }
  return "?";
}

GramTransformerConfig GramTransformerConfig::resolved() const {
  GramTransformerConfig out = *this;
  if (out.d_model < 1 || out.n_heads < 1 || out.n_layers < 1 || out.d_ff < 1 || out.max_nodes < 1) {
    fail(ErrorKind::InvalidConfig, "model dimensions must be positive");
  }
  if (out.dropout < 0.0 || out.dropout >= 1.0) {
    fail(ErrorKind::InvalidConfig, "dropout must be in [0,1)");
  }
  if (out.d_model % out.n_heads != 0) {
    out.d_model += out.n_heads - out.d_model % out.n_heads;
  }
  return out;
}

GramTransformerParams GramTransformerParams::init(const GramTransformerConfig& raw_cfg,
                                                  int vocab_rows, std::mt19937_64& rng) {
  const GramTransformerConfig cfg = raw_cfg.resolved();
  const int d = cfg.d_model;
  const int dk = cfg.d_k();
  GramTransformerParams p;
  p.node_embeddings = Tensor::randn({vocab_rows, d}, rng, 0.02, true);
  p.position_embeddings = Tensor::randn({cfg.max_nodes, d}, rng, 0.02, true);
  p.r_a = Tensor::randn({d}, rng, 0.02, true);
  p.r_c = Tensor::randn({d}, rng, 0.02, true);
  p.layers.resize(static_cast<size_t>(cfg.n_layers));
  for (auto& layer : p.layers) {
    layer.heads.resize(static_cast<size_t>(cfg.n_heads));
    for (auto& head : layer.heads) {
      head.wq = Tensor::xavier_uniform(d, dk, rng, true);
      head.wk = Tensor::xavier_uniform(d, dk, rng, true);
      head.wv = Tensor::xavier_uniform(d, dk, rng, true);
    }
    layer.wo = Tensor::xavier_uniform(d, d, rng, true);
    layer.bo = Tensor::zeros({d}, true);
    layer.ffn_w1 = Tensor::xavier_uniform(d, cfg.d_ff, rng, true);
    layer.ffn_b1 = Tensor::zeros({cfg.d_ff}, true);
    layer.ffn_w2 = Tensor::xavier_uniform(cfg.d_ff, d, rng, true);
    layer.ffn_b2 = Tensor::zeros({d}, true);
    layer.ln1_gamma = Tensor::full({d}, 1.0, true);
    layer.ln1_beta = Tensor::zeros({d}, true);
    layer.ln2_gamma = Tensor::full({d}, 1.0, true);
    layer.ln2_beta = Tensor::zeros({d}, true);
  }
  p.final_ln_gamma = Tensor::full({d}, 1.0, true);
  p.final_ln_beta = Tensor::zeros({d}, true);
  return p;
}

std::vector<std::pair<std::string, Tensor>> GramTransformerParams::named_tensors() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("node_embeddings", node_embeddings);
  out.emplace_back("position_embeddings", position_embeddings);
  out.emplace_back("r_a", r_a);
  out.emplace_back("r_c", r_c);
  for (size_t l = 0; l < layers.size(); ++l) {
    const std::string base = "layers." + std::to_string(l) + ".";
    const auto& layer = layers[l];
    for (size_t h = 0; h < layer.heads.size(); ++h) {
      const std::string hbase = base + "heads." + std::to_string(h) + ".";
      out.emplace_back(hbase + "wq", layer.heads[h].wq);
      out.emplace_back(hbase + "wk", layer.heads[h].wk);
      out.emplace_back(hbase + "wv", layer.heads[h].wv);
    }
    out.emplace_back(base + "wo", layer.wo);
    out.emplace_back(base + "bo", layer.bo);
    out.emplace_back(base + "ffn_w1", layer.ffn_w1);
    out.emplace_back(base + "ffn_b1", layer.ffn_b1);
    out.emplace_back(base + "ffn_w2", layer.ffn_w2);
    out.emplace_back(base + "ffn_b2", layer.ffn_b2);
    out.emplace_back(base + "ln1_gamma", layer.ln1_gamma);
    out.emplace_back(base + "ln1_beta", layer.ln1_beta);
    out.emplace_back(base + "ln2_gamma", layer.ln2_gamma);
    out.emplace_back(base + "ln2_beta", layer.ln2_beta);
  }
  out.emplace_back("final_ln_gamma", final_ln_gamma);
  out.emplace_back("final_ln_beta", final_ln_beta);
  return out;
}

void GramTransformerParams::load_edge_sidecar(const std::string& path) {
  TensorMap tensors = load_tensors(path);
  auto take = [&](const char* name, Tensor& dst) {
    auto it = tensors.find(name);
    if (it == tensors.end()) fail(ErrorKind::MalformedLine, path + ": missing tensor '" + std::string(name) + "'");
    if (it->second.shape() != dst.shape()) {
      fail(ErrorKind::DimensionMismatch, path + ": '" + std::string(name) + "' must have " +
                                             std::to_string(dst.size()) + " entries");
    }
    dst.values() = it->second.values();
  };
  take("adjoin", r_a);
  take("compositional", r_c);
}

Tensor mask_to_tensor(const std::vector<uint8_t>& mask, int m) {
  std::vector<double> values(mask.size());
  for (size_t i = 0; i < mask.size(); ++i) values[i] = mask[i] ? 1.0 : 0.0;
  return Tensor::from_values({m, m}, std::move(values));
}

Tensor GramTransformer::embed_graph(Tape& tape, const NGramGraph& graph,
                                    const NGramVocab& vocab) const {
  const int m = graph.size();
  if (m == 0) fail(ErrorKind::EmptyInput, "cannot embed an empty graph");
  if (m > cfg_.max_nodes) {
    fail(ErrorKind::GraphTooLarge, "graph has " + std::to_string(m) + " nodes, position table holds " +
                                       std::to_string(cfg_.max_nodes));
  }
  std::vector<int> ids, positions;
  ids.reserve(static_cast<size_t>(m));
  positions.reserve(static_cast<size_t>(m));
  for (const auto& node : graph.nodes) {
    ids.push_back(vocab.id_or_unk(node.text));
    positions.push_back(node.position);
  }
  return tape.add(tape.gather_rows(params_.node_embeddings, ids),
                  tape.gather_rows(params_.position_embeddings, positions));
}

Tensor GramTransformer::attention_standard(Tape& tape, const Tensor& h, int layer,
                                           int head) const {
  const auto& hp = params_.layers[static_cast<size_t>(layer)].heads[static_cast<size_t>(head)];
  const Tensor q = tape.matmul(h, hp.wq);
  const Tensor k = tape.matmul(h, hp.wk);
  const Tensor v = tape.matmul(h, hp.wv);
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(cfg_.d_k()));
  const Tensor scores = tape.scale(tape.matmul(q, tape.transpose(k)), inv_sqrt_dk);
  return tape.matmul(tape.softmax_rows(scores), v);
}

Tensor GramTransformer::relation_masked_weights(Tape& tape, const Tensor& h,
                                                const Tensor& mask_a, const Tensor& mask_c,
                                                int layer, int head) const {
  const int64_t m = h.rows();
  if (mask_a.rank() != 2 || mask_a.rows() != m || mask_a.cols() != m || mask_c.rank() != 2 ||
      mask_c.rows() != m || mask_c.cols() != m) {
    fail(ErrorKind::MaskShapeMismatch, "masks must be m x m for m graph nodes");
  }
  const auto& hp = params_.layers[static_cast<size_t>(layer)].heads[static_cast<size_t>(head)];
  const Tensor q = tape.matmul(h, hp.wq);
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(cfg_.d_k()));

  // Q^a = K^a = Q + r_a W^q (the d_model edge vector enters through the
  // head's own projection); likewise for the compositional map.
  auto masked_weights = [&](const Tensor& edge_vec, const Tensor& mask) {
    const Tensor shift = tape.matvec(tape.transpose(hp.wq), edge_vec);
    const Tensor q_shifted = tape.add_rowvec(q, shift);
    Tensor scores = tape.scale(tape.matmul(q_shifted, tape.transpose(q_shifted)), inv_sqrt_dk);
    switch (cfg_.mask_mode) {
      case MaskMode::PostSoftmax:
        return tape.mul(tape.softmax_rows(scores), mask);
      case MaskMode::PostSoftmaxRenorm: {
        const Tensor masked = tape.mul(tape.softmax_rows(scores), mask);
        return tape.scale_rows(masked, tape.reciprocal(tape.row_sums(masked)));
      }
      case MaskMode::PreSoftmaxAdditive: {
        std::vector<double> bias(static_cast<size_t>(m * m));
        for (int64_t i = 0; i < m * m; ++i) bias[static_cast<size_t>(i)] = mask.at(i) != 0.0 ? 0.0 : -1e30;
        scores = tape.add(scores, Tensor::from_values({m, m}, std::move(bias)));
        return tape.softmax_rows(scores);
      }
    }
    fail(ErrorKind::InvalidConfig, "unhandled mask mode");
  };

  return tape.add(masked_weights(params_.r_a, mask_a), masked_weights(params_.r_c, mask_c));
}

Tensor GramTransformer::attention_relation_masked(Tape& tape, const Tensor& h,
                                                  const Tensor& mask_a, const Tensor& mask_c,
                                                  int layer, int head) const {
  const Tensor weights = relation_masked_weights(tape, h, mask_a, mask_c, layer, head);
  const auto& hp = params_.layers[static_cast<size_t>(layer)].heads[static_cast<size_t>(head)];
  return tape.matmul(weights, tape.matmul(h, hp.wv));
}

Tensor GramTransformer::block_stack(Tape& tape, Tensor h, const Tensor* mask_a,
                                    const Tensor* mask_c, bool training,
                                    std::mt19937_64* rng) const {
  static std::mt19937_64 unused_rng(0);
  std::mt19937_64& dropout_rng = rng ? *rng : unused_rng;
  for (int l = 0; l < cfg_.n_layers; ++l) {
    const auto& layer = params_.layers[static_cast<size_t>(l)];
    const Tensor normed = tape.layer_norm(h, layer.ln1_gamma, layer.ln1_beta);
    std::vector<Tensor> head_outputs;
    head_outputs.reserve(static_cast<size_t>(cfg_.n_heads));
    for (int head = 0; head < cfg_.n_heads; ++head) {
      head_outputs.push_back(mask_a ? attention_relation_masked(tape, normed, *mask_a, *mask_c, l, head)
                                    : attention_standard(tape, normed, l, head));
    }
    Tensor attn = tape.add_rowvec(tape.matmul(tape.concat_cols(head_outputs), layer.wo), layer.bo);
    attn = tape.dropout(attn, cfg_.dropout, training, dropout_rng);
    h = tape.add(h, attn);

    const Tensor normed2 = tape.layer_norm(h, layer.ln2_gamma, layer.ln2_beta);
    Tensor ffn = tape.add_rowvec(tape.matmul(normed2, layer.ffn_w1), layer.ffn_b1);
    ffn = tape.add_rowvec(tape.matmul(tape.gelu(ffn), layer.ffn_w2), layer.ffn_b2);
    ffn = tape.dropout(ffn, cfg_.dropout, training, dropout_rng);
    h = tape.add(h, ffn);
  }
  return tape.layer_norm(h, params_.final_ln_gamma, params_.final_ln_beta);
}

Tensor GramTransformer::encode(Tape& tape, const NGramGraph& graph, const NGramVocab& vocab,
                               bool training, std::mt19937_64* dropout_rng) const {
  if (graph.size() == 0) fail(ErrorKind::EmptyInput, "cannot encode an empty graph");

  if (cfg_.variant == Variant::WNG) {
    // plain transformer over the 1-gram character sequence
    std::vector<int> ids, positions;
    for (const auto& node : graph.nodes) {
      if (node.level != 1) continue;
      ids.push_back(vocab.id_or_unk(node.text));
      positions.push_back(static_cast<int>(positions.size()));
    }
    if (ids.empty()) fail(ErrorKind::EmptyInput, "graph has no 1-gram nodes");
    if (static_cast<int>(ids.size()) > cfg_.max_nodes) {
      fail(ErrorKind::GraphTooLarge, "character sequence longer than position table");
    }
    const Tensor x = tape.add(tape.gather_rows(params_.node_embeddings, ids),
                              tape.gather_rows(params_.position_embeddings, positions));
    return tape.mean_rows(block_stack(tape, x, nullptr, nullptr, training, dropout_rng));
  }

  const Tensor x = embed_graph(tape, graph, vocab);
  if (cfg_.variant == Variant::WG) {
    return tape.mean_rows(block_stack(tape, x, nullptr, nullptr, training, dropout_rng));
  }
  const Tensor mask_a = mask_to_tensor(graph.mask_a, graph.size());
  const Tensor mask_c = mask_to_tensor(graph.mask_c, graph.size());
  return tape.mean_rows(block_stack(tape, x, &mask_a, &mask_c, training, dropout_rng));
}

}  // namespace gramkg
