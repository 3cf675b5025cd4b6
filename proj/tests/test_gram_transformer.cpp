#include <cmath>
#include <filesystem>
#include <random>
#include <vector>

#include "doctest.h"
#include "gramkg/dataset.hpp"
#include "gramkg/error.hpp"
#include "gramkg/gram_transformer.hpp"
#include "gramkg/rng.hpp"

using namespace gramkg;

namespace {

using Matrix = std::vector<std::vector<double>>;

Matrix to_matrix(const Tensor& t) {
  Matrix m(static_cast<size_t>(t.rows()), std::vector<double>(static_cast<size_t>(t.cols())));
  for (int64_t i = 0; i < t.rows(); ++i) {
    for (int64_t j = 0; j < t.cols(); ++j) m[static_cast<size_t>(i)][static_cast<size_t>(j)] = t.at(i, j);
  }
  return m;
}

Matrix mat_mul(const Matrix& a, const Matrix& b) {
  Matrix out(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (size_t i = 0; i < a.size(); ++i) {
    for (size_t k = 0; k < b.size(); ++k) {
      for (size_t j = 0; j < b[0].size(); ++j) out[i][j] += a[i][k] * b[k][j];
    }
  }
  return out;
}

Matrix softmax_rows_plain(Matrix m) {
  for (auto& row : m) {
    double mx = row[0];
    for (double v : row) mx = std::max(mx, v);
    double denom = 0.0;
    for (double& v : row) {
      v = std::exp(v - mx);
      denom += v;
    }
    for (double& v : row) v /= denom;
  }
  return m;
}

// independent tape-free rendering of the relation-enhanced masked head
// (PostSoftmax): W = softmax(Qa Qa^T/sqrt(dk)) o Ma + softmax(Qc Qc^T/sqrt(dk)) o Mc,
// out = W V with the unshifted V projection
Matrix oracle_masked_head(const Matrix& h, const Matrix& wq, const Matrix& wv,
                          const std::vector<double>& r_a, const std::vector<double>& r_c,
                          const std::vector<uint8_t>& mask_a, const std::vector<uint8_t>& mask_c,
                          int dk) {
  const size_t m = h.size();
  const Matrix q = mat_mul(h, wq);
  const Matrix v = mat_mul(h, wv);
  auto one_map = [&](const std::vector<double>& edge, const std::vector<uint8_t>& mask) {
    std::vector<double> shift(static_cast<size_t>(dk), 0.0);
    for (size_t j = 0; j < shift.size(); ++j) {
      for (size_t i = 0; i < edge.size(); ++i) shift[j] += wq[i][j] * edge[i];
    }
    Matrix qs = q;
    for (auto& row : qs) {
      for (size_t j = 0; j < row.size(); ++j) row[j] += shift[j];
    }
    Matrix scores(m, std::vector<double>(m, 0.0));
    for (size_t i = 0; i < m; ++i) {
      for (size_t j = 0; j < m; ++j) {
        double dot = 0.0;
        for (size_t k = 0; k < qs[i].size(); ++k) dot += qs[i][k] * qs[j][k];
        scores[i][j] = dot / std::sqrt(static_cast<double>(dk));
      }
    }
    Matrix weights = softmax_rows_plain(scores);
    for (size_t i = 0; i < m; ++i) {
      for (size_t j = 0; j < m; ++j) weights[i][j] *= mask[i * m + j] ? 1.0 : 0.0;
    }
    return weights;
  };
  Matrix combined = one_map(r_a, mask_a);
  const Matrix comp = one_map(r_c, mask_c);
  for (size_t i = 0; i < m; ++i) {
    for (size_t j = 0; j < m; ++j) combined[i][j] += comp[i][j];
  }
  return mat_mul(combined, v);
}

GramTransformer make_transformer(GramTransformerConfig cfg, int vocab_rows, uint64_t seed) {
  std::mt19937_64 rng(seed);
  return GramTransformer(cfg, GramTransformerParams::init(cfg, vocab_rows, rng));
}

void zero_params(GramTransformerParams& params) {
  for (auto& [name, tensor] : params.named_tensors()) {
    std::fill(tensor.values().begin(), tensor.values().end(), 0.0);
  }
}

NGramVocab has_vocab() {
  ZSLSplit split;
  split.relation_names = {"has"};
  split.seen_relations = {0};
  return build_vocab(split, 3);
}

GramTransformerConfig small_config(Variant variant = Variant::Full,
                                   MaskMode mode = MaskMode::PostSoftmax) {
  GramTransformerConfig cfg;
  cfg.d_model = 12;
  cfg.n_heads = 2;
  cfg.n_layers = 1;
  cfg.d_ff = 12;
  cfg.dropout = 0.0;
  cfg.mask_mode = mode;
  cfg.variant = variant;
  cfg.max_nodes = 16;
  return cfg;
}

}  // namespace

TEST_CASE("config resolution bumps d_model to a head multiple") {
  GramTransformerConfig cfg;
  cfg.d_model = 16;
  cfg.n_heads = 3;
  CHECK(cfg.resolved().d_model == 18);
  CHECK(cfg.resolved().d_k() == 6);

  cfg.d_model = 200;
  CHECK(cfg.resolved().d_model == 201);

  cfg.d_model = 0;
  CHECK_THROWS_AS(cfg.resolved(), Error);
  cfg.d_model = 16;
  cfg.dropout = 1.0;
  CHECK_THROWS_AS(cfg.resolved(), Error);
}

TEST_CASE("embed_graph: zero tables give zero rows, lookups are deterministic") {
  const NGramVocab vocab = has_vocab();
  const NGramGraph graph = build_graph(tokenize("has"), 3, NodeOrderStrategy::LevelMajor, 16);
  GramTransformer gt = make_transformer(small_config(), vocab.size(), 1);

  Tape tape;
  const Tensor x1 = gt.embed_graph(tape, graph, vocab);
  const Tensor x2 = gt.embed_graph(tape, graph, vocab);
  CHECK(x1.values() == x2.values());

  zero_params(gt.params());
  const Tensor x0 = gt.embed_graph(tape, graph, vocab);
  for (double v : x0.values()) CHECK(v == 0.0);
}

TEST_CASE("embed_graph uses the UNK row for unknown grams and stays finite") {
  const NGramVocab vocab = has_vocab();
  CHECK(vocab.id_or_unk("zq") == vocab.unk_id());
  const NGramGraph graph = build_graph(tokenize("zq"), 3, NodeOrderStrategy::LevelMajor, 16);
  GramTransformer gt = make_transformer(small_config(), vocab.size(), 2);
  Tape tape;
  const Tensor s = gt.encode(tape, graph, vocab, false, nullptr);
  for (double v : s.values()) CHECK(std::isfinite(v));
}

TEST_CASE("embed_graph rejects graphs beyond the position table") {
  const NGramVocab vocab = has_vocab();
  GramTransformerConfig cfg = small_config();
  cfg.max_nodes = 4;
  const NGramGraph graph = build_graph(tokenize("has"), 3, NodeOrderStrategy::LevelMajor, 16);
  GramTransformer gt = make_transformer(cfg, vocab.size(), 3);
  Tape tape;
  try {
    gt.embed_graph(tape, graph, vocab);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::GraphTooLarge);
  }
}

TEST_CASE("attention_standard: single node returns its value projection") {
  GramTransformer gt = make_transformer(small_config(), 8, 4);
  std::mt19937_64 rng(5);
  const Tensor h = Tensor::randn({1, 12}, rng, 1.0);
  Tape tape;
  const Tensor out = gt.attention_standard(tape, h, 0, 0);
  const Tensor v = tape.matmul(h, gt.params().layers[0].heads[0].wv);
  REQUIRE(out.size() == v.size());
  for (int64_t i = 0; i < out.size(); ++i) CHECK(out.at(i) == doctest::Approx(v.at(i)).epsilon(1e-12));
}

TEST_CASE("attention_standard is row-permutation equivariant") {
  GramTransformer gt = make_transformer(small_config(), 8, 6);
  std::mt19937_64 rng(7);
  const Tensor h = Tensor::randn({5, 12}, rng, 1.0);
  Tape tape;
  const Tensor out = gt.attention_standard(tape, h, 0, 0);

  const std::vector<int64_t> perm{3, 0, 4, 1, 2};
  Tensor permuted = Tensor::zeros({5, 12});
  for (int64_t i = 0; i < 5; ++i) {
    for (int64_t j = 0; j < 12; ++j) permuted.at(i, j) = h.at(perm[static_cast<size_t>(i)], j);
  }
  const Tensor out_permuted = gt.attention_standard(tape, permuted, 0, 0);
  for (int64_t i = 0; i < 5; ++i) {
    for (int64_t j = 0; j < out.cols(); ++j) {
      CHECK(out_permuted.at(i, j) ==
            doctest::Approx(out.at(perm[static_cast<size_t>(i)], j)).epsilon(1e-12));
    }
  }
}

TEST_CASE("attention_standard matches a 2-row scalar computation") {
  GramTransformerConfig cfg;
  cfg.d_model = 2;
  cfg.n_heads = 1;
  cfg.d_ff = 2;
  cfg.dropout = 0.0;
  cfg.max_nodes = 4;
  GramTransformer gt = make_transformer(cfg, 4, 8);
  auto& head = gt.params().layers[0].heads[0];
  head.wq.values() = {0.3, -0.1, 0.2, 0.5};
  head.wk.values() = {-0.4, 0.6, 0.1, 0.2};
  head.wv.values() = {0.7, 0.1, -0.3, 0.4};
  const Tensor h = Tensor::from_values({2, 2}, {1.0, 2.0, 3.0, 4.0});

  Tape tape;
  const Tensor out = gt.attention_standard(tape, h, 0, 0);

  const Matrix hm = to_matrix(h);
  const Matrix q = mat_mul(hm, to_matrix(head.wq));
  const Matrix k = mat_mul(hm, to_matrix(head.wk));
  const Matrix v = mat_mul(hm, to_matrix(head.wv));
  Matrix scores(2, std::vector<double>(2));
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      scores[static_cast<size_t>(i)][static_cast<size_t>(j)] =
          (q[static_cast<size_t>(i)][0] * k[static_cast<size_t>(j)][0] +
           q[static_cast<size_t>(i)][1] * k[static_cast<size_t>(j)][1]) /
          std::sqrt(2.0);
    }
  }
  const Matrix expected = mat_mul(softmax_rows_plain(scores), v);
  for (int64_t i = 0; i < 2; ++i) {
    for (int64_t j = 0; j < 2; ++j) {
      CHECK(out.at(i, j) ==
            doctest::Approx(expected[static_cast<size_t>(i)][static_cast<size_t>(j)])
                .epsilon(1e-10));
    }
  }
}

TEST_CASE("relation-masked head on the has graph matches the tape-free oracle") {
  const NGramVocab vocab = has_vocab();
  const NGramGraph graph = build_graph(tokenize("has"), 3, NodeOrderStrategy::LevelMajor, 16);
  GramTransformer gt = make_transformer(small_config(), vocab.size(), 0);

  Tape tape;
  const Tensor h = gt.embed_graph(tape, graph, vocab);
  const Tensor mask_a = mask_to_tensor(graph.mask_a, graph.size());
  const Tensor mask_c = mask_to_tensor(graph.mask_c, graph.size());
  const Tensor out = gt.attention_relation_masked(tape, h, mask_a, mask_c, 0, 1);

  const auto& head = gt.params().layers[0].heads[1];
  const Matrix expected = oracle_masked_head(
      to_matrix(h), to_matrix(head.wq), to_matrix(head.wv), gt.params().r_a.values(),
      gt.params().r_c.values(), graph.mask_a, graph.mask_c, gt.config().d_k());
  REQUIRE(out.rows() == static_cast<int64_t>(expected.size()));
  for (int64_t i = 0; i < out.rows(); ++i) {
    for (int64_t j = 0; j < out.cols(); ++j) {
      CHECK(out.at(i, j) ==
            doctest::Approx(expected[static_cast<size_t>(i)][static_cast<size_t>(j)])
                .epsilon(1e-10));
    }
  }
}

TEST_CASE("degenerate masks: all-ones plus zero edge vectors double the standard head") {
  GramTransformer gt = make_transformer(small_config(), 8, 9);
  auto& layer = gt.params().layers[0];
  layer.heads[0].wk.values() = layer.heads[0].wq.values();  // standard head with K = Q
  std::fill(gt.params().r_a.values().begin(), gt.params().r_a.values().end(), 0.0);
  std::fill(gt.params().r_c.values().begin(), gt.params().r_c.values().end(), 0.0);

  std::mt19937_64 rng(10);
  const Tensor h = Tensor::randn({4, 12}, rng, 1.0);
  const Tensor ones = Tensor::full({4, 4}, 1.0);
  Tape tape;
  const Tensor masked = gt.attention_relation_masked(tape, h, ones, ones, 0, 0);
  const Tensor standard = gt.attention_standard(tape, h, 0, 0);
  for (int64_t i = 0; i < masked.size(); ++i) {
    CHECK(masked.at(i) == doctest::Approx(2.0 * standard.at(i)).epsilon(1e-10));
  }
}

TEST_CASE("single-node graph: masked head returns twice the value row") {
  GramTransformer gt = make_transformer(small_config(), 8, 11);
  std::mt19937_64 rng(12);
  const Tensor h = Tensor::randn({1, 12}, rng, 1.0);
  const Tensor one = Tensor::full({1, 1}, 1.0);
  Tape tape;
  const Tensor out = gt.attention_relation_masked(tape, h, one, one, 0, 0);
  const Tensor v = tape.matmul(h, gt.params().layers[0].heads[0].wv);
  for (int64_t i = 0; i < out.size(); ++i) {
    CHECK(out.at(i) == doctest::Approx(2.0 * v.at(i)).epsilon(1e-12));
  }
}

TEST_CASE("mask semantics hold in every mode") {
  std::mt19937_64 word_rng(13);
  for (int trial = 0; trial < 8; ++trial) {
    std::string raw;
    const int n_words = 1 + static_cast<int>(uniform_index(word_rng, 2));
    for (int w = 0; w < n_words; ++w) {
      if (w) raw += ' ';
      const int len = 1 + static_cast<int>(uniform_index(word_rng, 5));
      for (int i = 0; i < len; ++i) raw += static_cast<char>('a' + uniform_index(word_rng, 26));
    }
    const NGramGraph graph = build_graph(tokenize(raw), 4, NodeOrderStrategy::LevelMajor, 16);
    ZSLSplit split;
    split.relation_names = {raw};
    split.seen_relations = {0};
    const NGramVocab vocab = build_vocab(split, 4);
    const int m = graph.size();

    for (MaskMode mode :
         {MaskMode::PostSoftmax, MaskMode::PostSoftmaxRenorm, MaskMode::PreSoftmaxAdditive}) {
      GramTransformer gt =
          make_transformer(small_config(Variant::Full, mode), vocab.size(), 14 + trial);
      Tape tape;
      const Tensor h = gt.embed_graph(tape, graph, vocab);
      const Tensor mask_a = mask_to_tensor(graph.mask_a, m);
      const Tensor mask_c = mask_to_tensor(graph.mask_c, m);
      const Tensor weights = gt.relation_masked_weights(tape, h, mask_a, mask_c, 0, 0);

      for (int i = 0; i < m; ++i) {
        double row_sum = 0.0;
        for (int j = 0; j < m; ++j) {
          const double w = weights.at(i, j);
          row_sum += w;
          if (!graph.mask_a[static_cast<size_t>(i * m + j)] &&
              !graph.mask_c[static_cast<size_t>(i * m + j)]) {
            CHECK(w == 0.0);  // exact, in every mode
          }
        }
        if (mode == MaskMode::PostSoftmax) {
          CHECK(row_sum <= 2.0 + 1e-12);
        } else {
          CHECK(std::abs(row_sum - 2.0) <= 1e-10);
        }
      }
    }
  }
}

TEST_CASE("encode: zero parameters give the zero relation embedding") {
  const NGramVocab vocab = has_vocab();
  const NGramGraph graph = build_graph(tokenize("has"), 3, NodeOrderStrategy::LevelMajor, 16);
  for (Variant variant : {Variant::Full, Variant::WNG, Variant::WG}) {
    GramTransformer gt = make_transformer(small_config(variant), vocab.size(), 15);
    zero_params(gt.params());
    Tape tape;
    const Tensor s = gt.encode(tape, graph, vocab, false, nullptr);
    REQUIRE(s.size() == 12);
    for (double v : s.values()) CHECK(v == 0.0);
  }
}

TEST_CASE("encode is deterministic in eval mode and stochastic under dropout") {
  const NGramVocab vocab = has_vocab();
  const NGramGraph graph = build_graph(tokenize("has"), 3, NodeOrderStrategy::LevelMajor, 16);
  GramTransformerConfig cfg = small_config();
  cfg.dropout = 0.5;
  GramTransformer gt = make_transformer(cfg, vocab.size(), 16);

  Tape tape;
  const Tensor a = gt.encode(tape, graph, vocab, false, nullptr);
  const Tensor b = gt.encode(tape, graph, vocab, false, nullptr);
  CHECK(a.values() == b.values());

  std::mt19937_64 rng(1);
  const Tensor c = gt.encode(tape, graph, vocab, true, &rng);
  const Tensor d = gt.encode(tape, graph, vocab, true, &rng);
  CHECK(c.values() != d.values());

  std::mt19937_64 rng_a(2), rng_b(2);
  const Tensor e = gt.encode(tape, graph, vocab, true, &rng_a);
  const Tensor f = gt.encode(tape, graph, vocab, true, &rng_b);
  CHECK(e.values() == f.values());
}

TEST_CASE("encode is invariant under node relabeling") {
  const NGramVocab vocab = has_vocab();
  const NGramGraph graph = build_graph(tokenize("has"), 3, NodeOrderStrategy::LevelMajor, 16);
  GramTransformer gt = make_transformer(small_config(), vocab.size(), 17);

  // relabel node indices while permuting masks consistently; positions ride
  // along with the nodes so nothing observable changes
  const std::vector<int> perm{5, 2, 0, 4, 1, 3};
  NGramGraph shuffled = graph;
  const int m = graph.size();
  for (int i = 0; i < m; ++i) {
    shuffled.nodes[static_cast<size_t>(i)] = graph.nodes[static_cast<size_t>(perm[static_cast<size_t>(i)])];
  }
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      shuffled.mask_a[static_cast<size_t>(i * m + j)] =
          graph.mask_a[static_cast<size_t>(perm[static_cast<size_t>(i)] * m + perm[static_cast<size_t>(j)])];
      shuffled.mask_c[static_cast<size_t>(i * m + j)] =
          graph.mask_c[static_cast<size_t>(perm[static_cast<size_t>(i)] * m + perm[static_cast<size_t>(j)])];
    }
  }

  Tape tape;
  const Tensor s1 = gt.encode(tape, graph, vocab, false, nullptr);
  const Tensor s2 = gt.encode(tape, shuffled, vocab, false, nullptr);
  for (int64_t i = 0; i < s1.size(); ++i) {
    CHECK(s1.at(i) == doctest::Approx(s2.at(i)).epsilon(1e-10));
  }
}

TEST_CASE("encode gradients pass finite differences on the has graph") {
  const NGramVocab vocab = has_vocab();
  const NGramGraph graph = build_graph(tokenize("has"), 3, NodeOrderStrategy::LevelMajor, 16);
  GramTransformer gt = make_transformer(small_config(), vocab.size(), 18);

  const auto report = finite_difference_check(
      [&](Tape& tape) {
        const Tensor s = gt.encode(tape, graph, vocab, false, nullptr);
        return tape.sum_all(tape.mul(s, s));  // |S|^2
      },
      gt.params().named_tensors(), 1e-5);
  INFO("worst ", report.worst.param, "[", report.worst.index, "] ad=", report.worst.autodiff,
       " fd=", report.worst.central);
  CHECK(report.max_rel_error <= 1e-4);
}

TEST_CASE("edge sidecar file seeds r_a and r_c") {
  GramTransformer gt = make_transformer(small_config(), 8, 19);
  TensorMap sidecar;
  sidecar["adjoin"] = Tensor::full({12}, 0.25);
  sidecar["compositional"] = Tensor::full({12}, -0.5);
  const std::string path =
      (std::filesystem::temp_directory_path() / "gramkg_edges_test.json").string();
  save_tensors(path, sidecar);
  gt.params().load_edge_sidecar(path);
  for (double v : gt.params().r_a.values()) CHECK(v == 0.25);
  for (double v : gt.params().r_c.values()) CHECK(v == -0.5);
  CHECK(gt.params().r_a.requires_grad());

  TensorMap bad;
  bad["adjoin"] = Tensor::full({3}, 1.0);
  bad["compositional"] = Tensor::full({12}, 1.0);
  save_tensors(path, bad);
  CHECK_THROWS_AS(gt.params().load_edge_sidecar(path), Error);
  std::filesystem::remove(path);
}

TEST_CASE("WNG runs over the 1-gram sequence only") {
  const NGramVocab vocab = has_vocab();
  // truncate so only the 1-gram nodes plus one 2-gram survive
  const NGramGraph graph = build_graph(tokenize("has"), 3, NodeOrderStrategy::LevelMajor, 4);
  GramTransformer full = make_transformer(small_config(Variant::Full), vocab.size(), 20);
  GramTransformer wng = GramTransformer(small_config(Variant::WNG), full.params());

  // WNG ignores the 2-gram node: rebuilding the graph with only 1-grams
  // must give the identical embedding
  const NGramGraph chars_only = build_graph(tokenize("has"), 1, NodeOrderStrategy::LevelMajor, 4);
  Tape tape;
  const Tensor a = wng.encode(tape, graph, vocab, false, nullptr);
  const Tensor b = wng.encode(tape, chars_only, vocab, false, nullptr);
  CHECK(a.values() == b.values());
}
