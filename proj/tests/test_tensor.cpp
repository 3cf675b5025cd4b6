#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "gramkg/error.hpp"
#include "gramkg/rng.hpp"
#include "gramkg/tensor.hpp"

using namespace gramkg;

namespace {

Tensor random_tensor(std::vector<int64_t> shape, std::mt19937_64& rng, double scale = 1.0) {
  return Tensor::randn(std::move(shape), rng, scale, /*requires_grad=*/true);
}

void check_op_gradients(const char* name,
                        const std::function<Tensor(Tape&, std::vector<Tensor>&)>& op,
                        const std::function<std::vector<Tensor>(std::mt19937_64&)>& make_inputs,
                        int seeds = 20, double tol = 1e-4) {
  for (int seed = 0; seed < seeds; ++seed) {
    std::mt19937_64 rng(static_cast<uint64_t>(seed) * 7919 + 13);
    std::vector<Tensor> inputs = make_inputs(rng);
    std::vector<std::pair<std::string, Tensor>> params;
    for (size_t i = 0; i < inputs.size(); ++i) {
      params.emplace_back(std::string(name) + "#" + std::to_string(i), inputs[i]);
    }
    const auto report = finite_difference_check(
        [&](Tape& tape) { return op(tape, inputs); }, params, 1e-5);
    INFO(name, " seed ", seed, " worst ", report.worst.param, "[", report.worst.index,
         "] ad=", report.worst.autodiff, " fd=", report.worst.central);
    CHECK(report.max_rel_error <= tol);
  }
}

}  // namespace

TEST_CASE("matmul basics") {
  Tape tape;
  const Tensor eye = Tensor::from_values({2, 2}, {1, 0, 0, 1});
  const Tensor b = Tensor::from_values({2, 2}, {3, 4, 5, 6});
  CHECK(tape.matmul(eye, b).values() == b.values());

  const Tensor one = Tensor::from_values({1, 1}, {2});
  const Tensor other = Tensor::from_values({1, 1}, {3});
  CHECK(tape.matmul(one, other).item() == doctest::Approx(6.0).epsilon(1e-15));

  const Tensor bad = Tensor::from_values({3, 1}, {1, 2, 3});
  CHECK_THROWS_AS(tape.matmul(eye, bad), Error);
}

TEST_CASE("softmax rows: symmetry, stability, normalization") {
  Tape tape;
  const Tensor flat = Tensor::from_values({1, 2}, {0, 0});
  CHECK(tape.softmax_rows(flat).at(0, 0) == doctest::Approx(0.5).epsilon(1e-15));

  const Tensor spiky = Tensor::from_values({1, 2}, {1000, 0});
  const Tensor soft = tape.softmax_rows(spiky);
  CHECK(std::isfinite(soft.at(0, 0)));
  CHECK(soft.at(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(soft.at(0, 1) == doctest::Approx(0.0).epsilon(1e-12));

  std::mt19937_64 rng(3);
  const Tensor random = random_tensor({5, 7}, rng, 3.0);
  const Tensor probs = tape.softmax_rows(random);
  for (int64_t i = 0; i < probs.rows(); ++i) {
    double row = 0.0;
    for (int64_t j = 0; j < probs.cols(); ++j) row += probs.at(i, j);
    CHECK(std::abs(row - 1.0) <= 1e-12);
  }
}

TEST_CASE("mean_rows and mul basics") {
  Tape tape;
  const Tensor m = Tensor::from_values({2, 2}, {2, 4, 4, 8});
  const Tensor pooled = tape.mean_rows(m);
  CHECK(pooled.at(0) == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(pooled.at(1) == doctest::Approx(6.0).epsilon(1e-15));

  const Tensor ones = Tensor::full({2, 2}, 1.0);
  CHECK(tape.mul(m, ones).values() == m.values());
}

TEST_CASE("dropout semantics") {
  std::mt19937_64 rng(11);
  Tape tape;
  const Tensor x = Tensor::full({100}, 1.0);
  CHECK(tape.dropout(x, 0.0, true, rng).values() == x.values());
  CHECK(tape.dropout(x, 0.5, false, rng).values() == x.values());
  CHECK_THROWS_AS(tape.dropout(x, 1.0, true, rng), Error);
  CHECK_THROWS_AS(tape.dropout(x, -0.1, true, rng), Error);

  // survivor fraction over 1e5 samples
  const Tensor big = Tensor::full({100000}, 1.0);
  const Tensor dropped = tape.dropout(big, 0.5, true, rng);
  int64_t survivors = 0;
  for (double v : dropped.values()) {
    if (v != 0.0) {
      CHECK(v == doctest::Approx(2.0).epsilon(1e-15));
      ++survivors;
    }
  }
  const double fraction = static_cast<double>(survivors) / 100000.0;
  CHECK(fraction >= 0.49);
  CHECK(fraction <= 0.51);
}

TEST_CASE("cross entropy examples") {
  Tape tape;
  const Tensor flat = Tensor::from_values({1, 2}, {0, 0}, true);
  CHECK(tape.cross_entropy_label_smoothed(flat, {0}, 0.0).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));

  const Tensor confident = Tensor::from_values({1, 2}, {50.0, 0.0}, true);
  CHECK(tape.cross_entropy_label_smoothed(confident, {0}, 0.0).item() ==
        doctest::Approx(0.0).epsilon(1e-12));

  // independent scalar evaluation of the smoothed formula
  std::mt19937_64 rng(5);
  const Tensor logits = random_tensor({3, 4}, rng);
  const std::vector<int> targets{1, 3, 0};
  const double eps = 0.1;
  double expected = 0.0;
  for (int64_t b = 0; b < 3; ++b) {
    double denom = 0.0;
    for (int64_t c = 0; c < 4; ++c) denom += std::exp(logits.at(b, c));
    for (int64_t c = 0; c < 4; ++c) {
      const double p = std::exp(logits.at(b, c)) / denom;
      const double q = eps / 4.0 + (c == targets[static_cast<size_t>(b)] ? 1.0 - eps : 0.0);
      expected -= q * std::log(p);
    }
  }
  expected /= 3.0;
  CHECK(tape.cross_entropy_label_smoothed(logits, targets, eps).item() ==
        doctest::Approx(expected).epsilon(1e-10));

  CHECK_THROWS_AS(tape.cross_entropy_label_smoothed(logits, {1, 9, 0}, 0.0), Error);
  CHECK_THROWS_AS(tape.cross_entropy_label_smoothed(logits, {1, 3, 0}, 1.0), Error);
}

TEST_CASE("gradients accumulate through shared subexpressions") {
  Tape tape;
  const Tensor x = Tensor::from_values({3}, {1.0, -2.0, 0.5}, true);
  const Tensor shared = tape.mul(x, x);
  const Tensor loss = tape.sum_all(tape.add(shared, shared));  // 2*x^2 summed
  tape.backward(loss);
  for (int64_t i = 0; i < 3; ++i) {
    CHECK(x.grad()[static_cast<size_t>(i)] == doctest::Approx(4.0 * x.at(i)).epsilon(1e-12));
  }
}

TEST_CASE("finite_difference_check sanity: f(x)=x^2 at 3") {
  const Tensor x = Tensor::from_values({1}, {3.0}, true);
  const auto report = finite_difference_check(
      [&](Tape& tape) { return tape.sum_all(tape.mul(x, x)); }, {{"x", x}}, 1e-5);
  CHECK(x.grad()[0] == doctest::Approx(6.0).epsilon(1e-10));
  CHECK(report.max_rel_error <= 1e-8);
}

TEST_CASE("every primitive matches central finite differences") {
  check_op_gradients(
      "add", [](Tape& t, std::vector<Tensor>& in) { return t.sum_all(t.mul(t.add(in[0], in[1]), in[2])); },
      [](std::mt19937_64& rng) {
        return std::vector<Tensor>{random_tensor({3, 4}, rng), random_tensor({3, 4}, rng),
                                   random_tensor({3, 4}, rng)};
      });
  check_op_gradients(
      "sub", [](Tape& t, std::vector<Tensor>& in) { return t.sum_all(t.mul(t.sub(in[0], in[1]), in[2])); },
      [](std::mt19937_64& rng) {
        return std::vector<Tensor>{random_tensor({3, 4}, rng), random_tensor({3, 4}, rng),
                                   random_tensor({3, 4}, rng)};
      });
  check_op_gradients(
      "mul", [](Tape& t, std::vector<Tensor>& in) { return t.sum_all(t.mul(in[0], in[1])); },
      [](std::mt19937_64& rng) {
        return std::vector<Tensor>{random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)};
      });
  check_op_gradients(
      "scale", [](Tape& t, std::vector<Tensor>& in) { return t.sum_all(t.scale(in[0], -1.7)); },
      [](std::mt19937_64& rng) { return std::vector<Tensor>{random_tensor({4}, rng)}; });
  check_op_gradients(
      "reciprocal",
      [](Tape& t, std::vector<Tensor>& in) { return t.sum_all(t.reciprocal(in[0])); },
      [](std::mt19937_64& rng) {
        Tensor x = random_tensor({5}, rng);
        for (int64_t i = 0; i < x.size(); ++i) x.at(i) = 1.0 + std::abs(x.at(i));
        return std::vector<Tensor>{x};
      });
  check_op_gradients(
      "sqrt_ew", [](Tape& t, std::vector<Tensor>& in) { return t.sum_all(t.sqrt_ew(in[0])); },
      [](std::mt19937_64& rng) {
        Tensor x = random_tensor({5}, rng);
        for (int64_t i = 0; i < x.size(); ++i) x.at(i) = 0.5 + std::abs(x.at(i));
        return std::vector<Tensor>{x};
      });
  check_op_gradients(
      "gelu", [](Tape& t, std::vector<Tensor>& in) { return t.sum_all(t.gelu(in[0])); },
      [](std::mt19937_64& rng) { return std::vector<Tensor>{random_tensor({6}, rng)}; });
  check_op_gradients(
      "add_rowvec",
      [](Tape& t, std::vector<Tensor>& in) { return t.sum_all(t.mul(t.add_rowvec(in[0], in[1]), in[2])); },
      [](std::mt19937_64& rng) {
        return std::vector<Tensor>{random_tensor({3, 4}, rng), random_tensor({4}, rng),
                                   random_tensor({3, 4}, rng)};
      });
  check_op_gradients(
      "sub_rowvec",
      [](Tape& t, std::vector<Tensor>& in) { return t.sum_all(t.mul(t.sub_rowvec(in[0], in[1]), in[2])); },
      [](std::mt19937_64& rng) {
        return std::vector<Tensor>{random_tensor({3, 4}, rng), random_tensor({4}, rng),
                                   random_tensor({3, 4}, rng)};
      });
  check_op_gradients(
      "scale_rows",
      [](Tape& t, std::vector<Tensor>& in) { return t.sum_all(t.mul(t.scale_rows(in[0], in[1]), in[2])); },
      [](std::mt19937_64& rng) {
        return std::vector<Tensor>{random_tensor({3, 4}, rng), random_tensor({3}, rng),
                                   random_tensor({3, 4}, rng)};
      });
  check_op_gradients(
      "matmul",
      [](Tape& t, std::vector<Tensor>& in) { return t.sum_all(t.mul(t.matmul(in[0], in[1]), in[2])); },
      [](std::mt19937_64& rng) {
        return std::vector<Tensor>{random_tensor({3, 3}, rng), random_tensor({3, 3}, rng),
                                   random_tensor({3, 3}, rng)};
      },
      20, 1e-6);
  check_op_gradients(
      "matvec",
      [](Tape& t, std::vector<Tensor>& in) { return t.sum_all(t.mul(t.matvec(in[0], in[1]), in[2])); },
      [](std::mt19937_64& rng) {
        return std::vector<Tensor>{random_tensor({3, 4}, rng), random_tensor({4}, rng),
                                   random_tensor({3}, rng)};
      });
  check_op_gradients(
      "transpose",
      [](Tape& t, std::vector<Tensor>& in) { return t.sum_all(t.mul(t.transpose(in[0]), in[1])); },
      [](std::mt19937_64& rng) {
        return std::vector<Tensor>{random_tensor({3, 4}, rng), random_tensor({4, 3}, rng)};
      });
  check_op_gradients(
      "softmax_rows",
      [](Tape& t, std::vector<Tensor>& in) { return t.sum_all(t.mul(t.softmax_rows(in[0]), in[1])); },
      [](std::mt19937_64& rng) {
        return std::vector<Tensor>{random_tensor({3, 5}, rng), random_tensor({3, 5}, rng)};
      });
  check_op_gradients(
      "mean_rows",
      [](Tape& t, std::vector<Tensor>& in) { return t.sum_all(t.mul(t.mean_rows(in[0]), in[1])); },
      [](std::mt19937_64& rng) {
        return std::vector<Tensor>{random_tensor({4, 3}, rng), random_tensor({3}, rng)};
      });
  check_op_gradients(
      "row_sums",
      [](Tape& t, std::vector<Tensor>& in) { return t.sum_all(t.mul(t.row_sums(in[0]), in[1])); },
      [](std::mt19937_64& rng) {
        return std::vector<Tensor>{random_tensor({4, 3}, rng), random_tensor({4}, rng)};
      });
  check_op_gradients(
      "concat_cols",
      [](Tape& t, std::vector<Tensor>& in) {
        return t.sum_all(t.mul(t.concat_cols({in[0], in[1]}), in[2]));
      },
      [](std::mt19937_64& rng) {
        return std::vector<Tensor>{random_tensor({3, 2}, rng), random_tensor({3, 3}, rng),
                                   random_tensor({3, 5}, rng)};
      });
  check_op_gradients(
      "stack_rows",
      [](Tape& t, std::vector<Tensor>& in) {
        return t.sum_all(t.mul(t.stack_rows({in[0], in[1]}), in[2]));
      },
      [](std::mt19937_64& rng) {
        return std::vector<Tensor>{random_tensor({4}, rng), random_tensor({4}, rng),
                                   random_tensor({2, 4}, rng)};
      });
  check_op_gradients(
      "row",
      [](Tape& t, std::vector<Tensor>& in) { return t.sum_all(t.mul(t.row(in[0], 1), in[1])); },
      [](std::mt19937_64& rng) {
        return std::vector<Tensor>{random_tensor({3, 4}, rng), random_tensor({4}, rng)};
      });
  check_op_gradients(
      "gather_rows",
      [](Tape& t, std::vector<Tensor>& in) {
        return t.sum_all(t.mul(t.gather_rows(in[0], {2, 0, 2}), in[1]));
      },
      [](std::mt19937_64& rng) {
        return std::vector<Tensor>{random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)};
      });
  check_op_gradients(
      "layer_norm",
      [](Tape& t, std::vector<Tensor>& in) {
        return t.sum_all(t.mul(t.layer_norm(in[0], in[1], in[2]), in[3]));
      },
      [](std::mt19937_64& rng) {
        return std::vector<Tensor>{random_tensor({3, 6}, rng), random_tensor({6}, rng),
                                   random_tensor({6}, rng), random_tensor({3, 6}, rng)};
      });
  check_op_gradients(
      "cross_entropy",
      [](Tape& t, std::vector<Tensor>& in) {
        return t.cross_entropy_label_smoothed(in[0], {1, 0, 3}, 0.1);
      },
      [](std::mt19937_64& rng) { return std::vector<Tensor>{random_tensor({3, 4}, rng)}; });
}

TEST_CASE("mean_rows backward distributes 1/p to each row") {
  Tape tape;
  const Tensor m = Tensor::from_values({2, 2}, {2, 4, 4, 8}, true);
  const Tensor loss = tape.sum_all(tape.mean_rows(m));
  tape.backward(loss);
  for (double g : m.grad()) CHECK(g == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("named tensor files round-trip bit exactly") {
  std::mt19937_64 rng(17);
  TensorMap tensors;
  tensors["weights"] = Tensor::randn({4, 5}, rng, 1.0);
  tensors["bias"] = Tensor::from_values({3}, {1.0 / 3.0, -0.0, 1e-300});
  const std::string path =
      (std::filesystem::temp_directory_path() / "gramkg_tensors_test.json").string();
  save_tensors(path, tensors, R"({"note":"round-trip"})");

  std::string meta;
  const TensorMap loaded = load_tensors(path, &meta);
  CHECK(meta.find("round-trip") != std::string::npos);
  REQUIRE(loaded.size() == 2);
  for (const auto& [name, original] : tensors) {
    const Tensor& restored = loaded.at(name);
    REQUIRE(restored.shape() == original.shape());
    REQUIRE(restored.size() == original.size());
    CHECK(std::memcmp(restored.values().data(), original.values().data(),
                      sizeof(double) * static_cast<size_t>(original.size())) == 0);
  }
  std::filesystem::remove(path);
}

TEST_CASE("tensor shape accessors and errors") {
  const Tensor t = Tensor::zeros({2, 3});
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t.size() == 6);
  CHECK_THROWS_AS(Tensor::from_values({2, 2}, {1.0}), Error);
  CHECK_THROWS_AS(t.item(), Error);
}
