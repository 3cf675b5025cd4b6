#pragma once

#include <random>
#include <string>
#include <vector>

#include "gramkg/dataset.hpp"
#include "gramkg/ngram_graph.hpp"
#include "gramkg/tensor.hpp"

namespace gramkg {

enum class MaskMode {
  PostSoftmax,        // softmax then elementwise mask (literal reading)
  PostSoftmaxRenorm,  // masked rows renormalized to sum 1 per subgraph
  PreSoftmaxAdditive, // -inf bias on masked-out logits before softmax
};

enum class Variant {
  Full,  // relation-enhanced mask attention over the n-gram graph
  WNG,   // standard attention over the 1-gram character sequence
  WG,    // standard attention over all graph nodes, no masks or edge vectors
};

MaskMode mask_mode_from_string(const std::string& s);
const char* to_string(MaskMode m);
Variant variant_from_string(const std::string& s);
const char* to_string(Variant v);

struct GramTransformerConfig {
  int d_model = 200;
  int n_heads = 3;
  int n_layers = 1;
  int d_ff = 200;
  double dropout = 0.5;
  MaskMode mask_mode = MaskMode::PostSoftmax;
  Variant variant = Variant::Full;
  int max_nodes = 90;  // position-table capacity

  /// Validates fields and bumps d_model to the next multiple of n_heads when
  /// the head split does not divide evenly.
  GramTransformerConfig resolved() const;
  int d_k() const { return d_model / n_heads; }
};

struct GramTransformerParams {
  Tensor node_embeddings;      // [vocab rows incl. UNK x d_model]
  Tensor position_embeddings;  // [max_nodes x d_model]
  Tensor r_a;                  // adjoin edge embedding [d_model]
  Tensor r_c;                  // compositional edge embedding [d_model]

  struct Head {
    Tensor wq, wk, wv;  // [d_model x d_k]
  };
  struct Layer {
    std::vector<Head> heads;
    Tensor wo, bo;                          // output projection
    Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;  // feed-forward
    Tensor ln1_gamma, ln1_beta;             // pre-attention norm
    Tensor ln2_gamma, ln2_beta;             // pre-ffn norm
  };
  std::vector<Layer> layers;
  Tensor final_ln_gamma, final_ln_beta;

  static GramTransformerParams init(const GramTransformerConfig& cfg, int vocab_rows,
                                    std::mt19937_64& rng);

  /// Stable (name, tensor) listing for the optimizer and checkpoints.
  std::vector<std::pair<std::string, Tensor>> named_tensors() const;

  /// Overwrites r_a / r_c from a sidecar file with tensors named
  /// "adjoin" and "compositional" (both stay trainable).
  void load_edge_sidecar(const std::string& path);
};

/// Encodes an n-gram graph into a relation embedding S.
class GramTransformer {
 public:
  GramTransformer(GramTransformerConfig cfg, GramTransformerParams params)
      : cfg_(cfg.resolved()), params_(std::move(params)) {}

  const GramTransformerConfig& config() const { return cfg_; }
  GramTransformerParams& params() { return params_; }
  const GramTransformerParams& params() const { return params_; }

  /// X[i] = node_embedding(text_i) + position_embedding(position_i).
  Tensor embed_graph(Tape& tape, const NGramGraph& graph, const NGramVocab& vocab) const;

  /// One plain attention head over H: softmax(Q K^T / sqrt(d_k)) V.
  Tensor attention_standard(Tape& tape, const Tensor& h, int layer, int head) const;

  /// Combined m x m attention weights of one relation-enhanced masked head:
  /// the adjoin and compositional maps use Q shifted by the projected
  /// r_a / r_c on both sides, are masked per mask_mode, and summed.
  Tensor relation_masked_weights(Tape& tape, const Tensor& h, const Tensor& mask_a,
                                 const Tensor& mask_c, int layer, int head) const;

  /// relation_masked_weights applied to the unshifted V projection.
  Tensor attention_relation_masked(Tape& tape, const Tensor& h, const Tensor& mask_a,
                                   const Tensor& mask_c, int layer, int head) const;

  /// Full forward pass: blocks of (multi-head attention, output projection,
  /// dropout, residual, feed-forward), then mean pooling to S [d_model].
  Tensor encode(Tape& tape, const NGramGraph& graph, const NGramVocab& vocab, bool training,
                std::mt19937_64* dropout_rng) const;

 private:
  GramTransformerConfig cfg_;
  GramTransformerParams params_;

  Tensor block_stack(Tape& tape, Tensor h, const Tensor* mask_a, const Tensor* mask_c,
                     bool training, std::mt19937_64* rng) const;
};

/// 0/1 mask bytes as a constant (no-grad) tensor.
Tensor mask_to_tensor(const std::vector<uint8_t>& mask, int m);

}  // namespace gramkg
