#include "gramkg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "gramkg/error.hpp"
#include "gramkg/rng.hpp"

namespace gramkg {

namespace {

int64_t shape_size(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::string shape_str(const std::vector<int64_t>& shape) {
  std::ostringstream out;
  out << "[";
  for (size_t i = 0; i < shape.size(); ++i) out << (i ? "x" : "") << shape[i];
  out << "]";
  return out.str();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    fail(ErrorKind::ShapeMismatch,
         std::string(op) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void require_rank2(const Tensor& a, const char* op) {
  if (a.rank() != 2) fail(ErrorKind::ShapeMismatch, std::string(op) + ": expected rank-2 tensor");
}

}  // namespace

// ---- Tensor ---------------------------------------------------------------

Tensor Tensor::zeros(std::vector<int64_t> shape, bool requires_grad) {
  auto s = std::make_shared<Storage>();
  s->values.assign(static_cast<size_t>(shape_size(shape)), 0.0);
  s->shape = std::move(shape);
  s->requires_grad = requires_grad;
  return Tensor(std::move(s));
}

Tensor Tensor::full(std::vector<int64_t> shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.values().begin(), t.values().end(), value);
  return t;
}

Tensor Tensor::from_values(std::vector<int64_t> shape, std::vector<double> values,
                           bool requires_grad) {
  if (shape_size(shape) != static_cast<int64_t>(values.size())) {
    fail(ErrorKind::ShapeMismatch, "from_values: data length does not match shape");
  }
  auto s = std::make_shared<Storage>();
  s->shape = std::move(shape);
  s->values = std::move(values);
  s->requires_grad = requires_grad;
  return Tensor(std::move(s));
}

Tensor Tensor::scalar(double value) { return from_values({1}, {value}); }

Tensor Tensor::randn(std::vector<int64_t> shape, std::mt19937_64& rng, double stddev,
                     bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (double& v : t.values()) v = normal01(rng) * stddev;
  return t;
}

Tensor Tensor::xavier_uniform(int64_t fan_in, int64_t fan_out, std::mt19937_64& rng,
                              bool requires_grad) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t = zeros({fan_in, fan_out}, requires_grad);
  for (double& v : t.values()) v = (2.0 * uniform01(rng) - 1.0) * bound;
  return t;
}

int64_t Tensor::rows() const {
  require_rank2(*this, "rows");
  return s_->shape[0];
}

int64_t Tensor::cols() const {
  require_rank2(*this, "cols");
  return s_->shape[1];
}

double Tensor::item() const {
  if (size() != 1) fail(ErrorKind::ShapeMismatch, "item: tensor is not scalar");
  return s_->values[0];
}

std::vector<double>& Tensor::grad() const {
  if (s_->grad.empty()) s_->grad.assign(s_->values.size(), 0.0);
  return s_->grad;
}

void Tensor::zero_grad() const {
  if (s_ && !s_->grad.empty()) std::fill(s_->grad.begin(), s_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  auto s = std::make_shared<Storage>(*s_);
  return Tensor(std::move(s));
}

// ---- Tape primitives -------------------------------------------------------
//
// Pattern: compute the result eagerly; when any input requires grad, mark
// the output and push a closure that reads out.grad() and accumulates into
// the inputs. Closures guard on has_grad() so branches that never reach the
// loss stay inert.

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = Tensor::zeros(a.shape());
  for (int64_t i = 0; i < a.size(); ++i) out.at(i) = a.at(i) + b.at(i);
  if (a.requires_grad() || b.requires_grad()) {
    out.set_requires_grad(true);
    record([a, b, out]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    });
  }
  return out;
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = Tensor::zeros(a.shape());
  for (int64_t i = 0; i < a.size(); ++i) out.at(i) = a.at(i) - b.at(i);
  if (a.requires_grad() || b.requires_grad()) {
    out.set_requires_grad(true);
    record([a, b, out]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        for (size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return out;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out = Tensor::zeros(a.shape());
  for (int64_t i = 0; i < a.size(); ++i) out.at(i) = a.at(i) * b.at(i);
  if (a.requires_grad() || b.requires_grad()) {
    out.set_requires_grad(true);
    record([a, b, out]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b.at(static_cast<int64_t>(i));
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a.at(static_cast<int64_t>(i));
      }
    });
  }
  return out;
}

Tensor Tape::scale(const Tensor& a, double c) {
  Tensor out = Tensor::zeros(a.shape());
  for (int64_t i = 0; i < a.size(); ++i) out.at(i) = a.at(i) * c;
  if (a.requires_grad()) {
    out.set_requires_grad(true);
    record([a, c, out]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      auto& ga = a.grad();
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
    });
  }
  return out;
}

Tensor Tape::reciprocal(const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape());
  for (int64_t i = 0; i < a.size(); ++i) out.at(i) = 1.0 / a.at(i);
  if (a.requires_grad()) {
    out.set_requires_grad(true);
    record([a, out]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      auto& ga = a.grad();
      for (size_t i = 0; i < g.size(); ++i) {
        const double y = out.at(static_cast<int64_t>(i));
        ga[i] -= g[i] * y * y;
      }
    });
  }
  return out;
}

Tensor Tape::sqrt_ew(const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape());
  for (int64_t i = 0; i < a.size(); ++i) out.at(i) = std::sqrt(a.at(i));
  if (a.requires_grad()) {
    out.set_requires_grad(true);
    record([a, out]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      auto& ga = a.grad();
      for (size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i] * 0.5 / out.at(static_cast<int64_t>(i));
      }
    });
  }
  return out;
}

Tensor Tape::gelu(const Tensor& a) {
  static const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  static const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * M_PI);
  Tensor out = Tensor::zeros(a.shape());
  for (int64_t i = 0; i < a.size(); ++i) {
    const double x = a.at(i);
    out.at(i) = 0.5 * x * (1.0 + std::erf(x * inv_sqrt2));
  }
  if (a.requires_grad()) {
    out.set_requires_grad(true);
    record([a, out]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      auto& ga = a.grad();
      for (size_t i = 0; i < g.size(); ++i) {
        const double x = a.at(static_cast<int64_t>(i));
        const double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
        const double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
        ga[i] += g[i] * (cdf + x * pdf);
      }
    });
  }
  return out;
}

Tensor Tape::add_rowvec(const Tensor& m, const Tensor& v) {
  require_rank2(m, "add_rowvec");
  if (v.rank() != 1 || v.size() != m.cols()) {
    fail(ErrorKind::ShapeMismatch, "add_rowvec: vector length must equal matrix cols");
  }
  const int64_t p = m.rows(), q = m.cols();
  Tensor out = Tensor::zeros({p, q});
  for (int64_t i = 0; i < p; ++i) {
    for (int64_t j = 0; j < q; ++j) out.at(i, j) = m.at(i, j) + v.at(j);
  }
  if (m.requires_grad() || v.requires_grad()) {
    out.set_requires_grad(true);
    record([m, v, out, p, q]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      if (m.requires_grad()) {
        auto& gm = m.grad();
        for (size_t i = 0; i < g.size(); ++i) gm[i] += g[i];
      }
      if (v.requires_grad()) {
        auto& gv = v.grad();
        for (int64_t i = 0; i < p; ++i) {
          for (int64_t j = 0; j < q; ++j) gv[static_cast<size_t>(j)] += g[static_cast<size_t>(i * q + j)];
        }
      }
    });
  }
  return out;
}

Tensor Tape::sub_rowvec(const Tensor& m, const Tensor& v) {
  require_rank2(m, "sub_rowvec");
  if (v.rank() != 1 || v.size() != m.cols()) {
    fail(ErrorKind::ShapeMismatch, "sub_rowvec: vector length must equal matrix cols");
  }
  const int64_t p = m.rows(), q = m.cols();
  Tensor out = Tensor::zeros({p, q});
  for (int64_t i = 0; i < p; ++i) {
    for (int64_t j = 0; j < q; ++j) out.at(i, j) = m.at(i, j) - v.at(j);
  }
  if (m.requires_grad() || v.requires_grad()) {
    out.set_requires_grad(true);
    record([m, v, out, p, q]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      if (m.requires_grad()) {
        auto& gm = m.grad();
        for (size_t i = 0; i < g.size(); ++i) gm[i] += g[i];
      }
      if (v.requires_grad()) {
        auto& gv = v.grad();
        for (int64_t i = 0; i < p; ++i) {
          for (int64_t j = 0; j < q; ++j) gv[static_cast<size_t>(j)] -= g[static_cast<size_t>(i * q + j)];
        }
      }
    });
  }
  return out;
}

Tensor Tape::scale_rows(const Tensor& m, const Tensor& v) {
  require_rank2(m, "scale_rows");
  if (v.rank() != 1 || v.size() != m.rows()) {
    fail(ErrorKind::ShapeMismatch, "scale_rows: vector length must equal matrix rows");
  }
  const int64_t p = m.rows(), q = m.cols();
  Tensor out = Tensor::zeros({p, q});
  for (int64_t i = 0; i < p; ++i) {
    for (int64_t j = 0; j < q; ++j) out.at(i, j) = m.at(i, j) * v.at(i);
  }
  if (m.requires_grad() || v.requires_grad()) {
    out.set_requires_grad(true);
    record([m, v, out, p, q]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      if (m.requires_grad()) {
        auto& gm = m.grad();
        for (int64_t i = 0; i < p; ++i) {
          for (int64_t j = 0; j < q; ++j) gm[static_cast<size_t>(i * q + j)] += g[static_cast<size_t>(i * q + j)] * v.at(i);
        }
      }
      if (v.requires_grad()) {
        auto& gv = v.grad();
        for (int64_t i = 0; i < p; ++i) {
          double acc = 0.0;
          for (int64_t j = 0; j < q; ++j) acc += g[static_cast<size_t>(i * q + j)] * m.at(i, j);
          gv[static_cast<size_t>(i)] += acc;
        }
      }
    });
  }
  return out;
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.cols() != b.rows()) {
    fail(ErrorKind::ShapeMismatch,
         "matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const int64_t p = a.rows(), q = a.cols(), r = b.cols();
  Tensor out = Tensor::zeros({p, r});
  for (int64_t i = 0; i < p; ++i) {
    for (int64_t k = 0; k < q; ++k) {
      const double aik = a.at(i, k);
      if (aik == 0.0) continue;
      for (int64_t j = 0; j < r; ++j) out.at(i, j) += aik * b.at(k, j);
    }
  }
  if (a.requires_grad() || b.requires_grad()) {
    out.set_requires_grad(true);
    record([a, b, out, p, q, r]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      if (a.requires_grad()) {
        auto& ga = a.grad();  // dA = dC . B^T
        for (int64_t i = 0; i < p; ++i) {
          for (int64_t k = 0; k < q; ++k) {
            double acc = 0.0;
            for (int64_t j = 0; j < r; ++j) acc += g[static_cast<size_t>(i * r + j)] * b.at(k, j);
            ga[static_cast<size_t>(i * q + k)] += acc;
          }
        }
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();  // dB = A^T . dC
        for (int64_t k = 0; k < q; ++k) {
          for (int64_t j = 0; j < r; ++j) {
            double acc = 0.0;
            for (int64_t i = 0; i < p; ++i) acc += a.at(i, k) * g[static_cast<size_t>(i * r + j)];
            gb[static_cast<size_t>(k * r + j)] += acc;
          }
        }
      }
    });
  }
  return out;
}

Tensor Tape::matvec(const Tensor& m, const Tensor& v) {
  require_rank2(m, "matvec");
  if (v.rank() != 1 || v.size() != m.cols()) {
    fail(ErrorKind::ShapeMismatch, "matvec: vector length must equal matrix cols");
  }
  const int64_t p = m.rows(), q = m.cols();
  Tensor out = Tensor::zeros({p});
  for (int64_t i = 0; i < p; ++i) {
    double acc = 0.0;
    for (int64_t j = 0; j < q; ++j) acc += m.at(i, j) * v.at(j);
    out.at(i) = acc;
  }
  if (m.requires_grad() || v.requires_grad()) {
    out.set_requires_grad(true);
    record([m, v, out, p, q]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      if (m.requires_grad()) {
        auto& gm = m.grad();
        for (int64_t i = 0; i < p; ++i) {
          for (int64_t j = 0; j < q; ++j) gm[static_cast<size_t>(i * q + j)] += g[static_cast<size_t>(i)] * v.at(j);
        }
      }
      if (v.requires_grad()) {
        auto& gv = v.grad();
        for (int64_t i = 0; i < p; ++i) {
          for (int64_t j = 0; j < q; ++j) gv[static_cast<size_t>(j)] += g[static_cast<size_t>(i)] * m.at(i, j);
        }
      }
    });
  }
  return out;
}

Tensor Tape::transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const int64_t p = a.rows(), q = a.cols();
  Tensor out = Tensor::zeros({q, p});
  for (int64_t i = 0; i < p; ++i) {
    for (int64_t j = 0; j < q; ++j) out.at(j, i) = a.at(i, j);
  }
  if (a.requires_grad()) {
    out.set_requires_grad(true);
    record([a, out, p, q]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      auto& ga = a.grad();
      for (int64_t i = 0; i < p; ++i) {
        for (int64_t j = 0; j < q; ++j) ga[static_cast<size_t>(i * q + j)] += g[static_cast<size_t>(j * p + i)];
      }
    });
  }
  return out;
}

Tensor Tape::softmax_rows(const Tensor& a) {
  require_rank2(a, "softmax_rows");
  const int64_t p = a.rows(), q = a.cols();
  Tensor out = Tensor::zeros({p, q});
  for (int64_t i = 0; i < p; ++i) {
    double row_max = a.at(i, 0);
    for (int64_t j = 1; j < q; ++j) row_max = std::max(row_max, a.at(i, j));
    double denom = 0.0;
    for (int64_t j = 0; j < q; ++j) {
      const double e = std::exp(a.at(i, j) - row_max);
      out.at(i, j) = e;
      denom += e;
    }
    for (int64_t j = 0; j < q; ++j) out.at(i, j) /= denom;
  }
  if (a.requires_grad()) {
    out.set_requires_grad(true);
    record([a, out, p, q]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      auto& ga = a.grad();
      for (int64_t i = 0; i < p; ++i) {
        double dot = 0.0;
        for (int64_t j = 0; j < q; ++j) dot += g[static_cast<size_t>(i * q + j)] * out.at(i, j);
        for (int64_t j = 0; j < q; ++j) {
          ga[static_cast<size_t>(i * q + j)] += out.at(i, j) * (g[static_cast<size_t>(i * q + j)] - dot);
        }
      }
    });
  }
  return out;
}

Tensor Tape::mean_rows(const Tensor& a) {
  require_rank2(a, "mean_rows");
  const int64_t p = a.rows(), q = a.cols();
  Tensor out = Tensor::zeros({q});
  for (int64_t i = 0; i < p; ++i) {
    for (int64_t j = 0; j < q; ++j) out.at(j) += a.at(i, j);
  }
  for (int64_t j = 0; j < q; ++j) out.at(j) /= static_cast<double>(p);
  if (a.requires_grad()) {
    out.set_requires_grad(true);
    record([a, out, p, q]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      auto& ga = a.grad();
      const double inv = 1.0 / static_cast<double>(p);
      for (int64_t i = 0; i < p; ++i) {
        for (int64_t j = 0; j < q; ++j) ga[static_cast<size_t>(i * q + j)] += g[static_cast<size_t>(j)] * inv;
      }
    });
  }
  return out;
}

Tensor Tape::row_sums(const Tensor& a) {
  require_rank2(a, "row_sums");
  const int64_t p = a.rows(), q = a.cols();
  Tensor out = Tensor::zeros({p});
  for (int64_t i = 0; i < p; ++i) {
    double acc = 0.0;
    for (int64_t j = 0; j < q; ++j) acc += a.at(i, j);
    out.at(i) = acc;
  }
  if (a.requires_grad()) {
    out.set_requires_grad(true);
    record([a, out, p, q]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      auto& ga = a.grad();
      for (int64_t i = 0; i < p; ++i) {
        for (int64_t j = 0; j < q; ++j) ga[static_cast<size_t>(i * q + j)] += g[static_cast<size_t>(i)];
      }
    });
  }
  return out;
}

Tensor Tape::sum_all(const Tensor& a) {
  double acc = 0.0;
  for (int64_t i = 0; i < a.size(); ++i) acc += a.at(i);
  Tensor out = Tensor::scalar(acc);
  if (a.requires_grad()) {
    out.set_requires_grad(true);
    record([a, out]() mutable {
      if (!out.has_grad()) return;
      const double g = out.grad()[0];
      auto& ga = a.grad();
      for (double& v : ga) v += g;
    });
  }
  return out;
}

Tensor Tape::concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) fail(ErrorKind::EmptyInput, "concat_cols: no parts");
  const int64_t p = parts[0].rows();
  int64_t total = 0;
  bool any_grad = false;
  for (const auto& part : parts) {
    require_rank2(part, "concat_cols");
    if (part.rows() != p) fail(ErrorKind::ShapeMismatch, "concat_cols: row counts differ");
    total += part.cols();
    any_grad = any_grad || part.requires_grad();
  }
  Tensor out = Tensor::zeros({p, total});
  int64_t offset = 0;
  for (const auto& part : parts) {
    const int64_t q = part.cols();
    for (int64_t i = 0; i < p; ++i) {
      for (int64_t j = 0; j < q; ++j) out.at(i, offset + j) = part.at(i, j);
    }
    offset += q;
  }
  if (any_grad) {
    out.set_requires_grad(true);
    record([parts, out, p, total]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      int64_t offset = 0;
      for (auto& part : parts) {
        const int64_t q = part.cols();
        if (part.requires_grad()) {
          auto& gp = part.grad();
          for (int64_t i = 0; i < p; ++i) {
            for (int64_t j = 0; j < q; ++j) {
              gp[static_cast<size_t>(i * q + j)] += g[static_cast<size_t>(i * total + offset + j)];
            }
          }
        }
        offset += q;
      }
    });
  }
  return out;
}

Tensor Tape::stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) fail(ErrorKind::EmptyInput, "stack_rows: no rows");
  const int64_t q = rows[0].size();
  bool any_grad = false;
  for (const auto& r : rows) {
    if (r.rank() != 1 || r.size() != q) fail(ErrorKind::ShapeMismatch, "stack_rows: rows must be equal-length vectors");
    any_grad = any_grad || r.requires_grad();
  }
  const int64_t p = static_cast<int64_t>(rows.size());
  Tensor out = Tensor::zeros({p, q});
  for (int64_t i = 0; i < p; ++i) {
    for (int64_t j = 0; j < q; ++j) out.at(i, j) = rows[static_cast<size_t>(i)].at(j);
  }
  if (any_grad) {
    out.set_requires_grad(true);
    record([rows, out, p, q]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      for (int64_t i = 0; i < p; ++i) {
        auto& r = rows[static_cast<size_t>(i)];
        if (!r.requires_grad()) continue;
        auto& gr = r.grad();
        for (int64_t j = 0; j < q; ++j) gr[static_cast<size_t>(j)] += g[static_cast<size_t>(i * q + j)];
      }
    });
  }
  return out;
}

Tensor Tape::row(const Tensor& a, int64_t i) {
  require_rank2(a, "row");
  if (i < 0 || i >= a.rows()) fail(ErrorKind::IndexOutOfRange, "row: index out of range");
  const int64_t q = a.cols();
  Tensor out = Tensor::zeros({q});
  for (int64_t j = 0; j < q; ++j) out.at(j) = a.at(i, j);
  if (a.requires_grad()) {
    out.set_requires_grad(true);
    record([a, out, i, q]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      auto& ga = a.grad();
      for (int64_t j = 0; j < q; ++j) ga[static_cast<size_t>(i * q + j)] += g[static_cast<size_t>(j)];
    });
  }
  return out;
}

Tensor Tape::gather_rows(const Tensor& table, const std::vector<int>& ids) {
  require_rank2(table, "gather_rows");
  const int64_t q = table.cols();
  for (int id : ids) {
    if (id < 0 || id >= table.rows()) fail(ErrorKind::IndexOutOfRange, "gather_rows: row id out of range");
  }
  const int64_t p = static_cast<int64_t>(ids.size());
  Tensor out = Tensor::zeros({p, q});
  for (int64_t i = 0; i < p; ++i) {
    const int64_t src = ids[static_cast<size_t>(i)];
    for (int64_t j = 0; j < q; ++j) out.at(i, j) = table.at(src, j);
  }
  if (table.requires_grad()) {
    out.set_requires_grad(true);
    record([table, ids, out, p, q]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      auto& gt = table.grad();
      for (int64_t i = 0; i < p; ++i) {
        const int64_t dst = ids[static_cast<size_t>(i)];
        for (int64_t j = 0; j < q; ++j) {
          gt[static_cast<size_t>(dst * q + j)] += g[static_cast<size_t>(i * q + j)];
        }
      }
    });
  }
  return out;
}

Tensor Tape::layer_norm(const Tensor& a, const Tensor& gamma, const Tensor& beta, double eps) {
  require_rank2(a, "layer_norm");
  const int64_t p = a.rows(), q = a.cols();
  if (gamma.rank() != 1 || gamma.size() != q || beta.rank() != 1 || beta.size() != q) {
    fail(ErrorKind::ShapeMismatch, "layer_norm: gamma/beta length must equal cols");
  }
  Tensor out = Tensor::zeros({p, q});
  Tensor normalized = Tensor::zeros({p, q});
  std::vector<double> inv_sigma(static_cast<size_t>(p));
  for (int64_t i = 0; i < p; ++i) {
    double mean = 0.0;
    for (int64_t j = 0; j < q; ++j) mean += a.at(i, j);
    mean /= static_cast<double>(q);
    double var = 0.0;
    for (int64_t j = 0; j < q; ++j) {
      const double d = a.at(i, j) - mean;
      var += d * d;
    }
    var /= static_cast<double>(q);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_sigma[static_cast<size_t>(i)] = inv;
    for (int64_t j = 0; j < q; ++j) {
      const double nh = (a.at(i, j) - mean) * inv;
      normalized.at(i, j) = nh;
      out.at(i, j) = gamma.at(j) * nh + beta.at(j);
    }
  }
  if (a.requires_grad() || gamma.requires_grad() || beta.requires_grad()) {
    out.set_requires_grad(true);
    record([a, gamma, beta, out, normalized, inv_sigma, p, q]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      if (beta.requires_grad()) {
        auto& gb = beta.grad();
        for (int64_t i = 0; i < p; ++i) {
          for (int64_t j = 0; j < q; ++j) gb[static_cast<size_t>(j)] += g[static_cast<size_t>(i * q + j)];
        }
      }
      if (gamma.requires_grad()) {
        auto& gg = gamma.grad();
        for (int64_t i = 0; i < p; ++i) {
          for (int64_t j = 0; j < q; ++j) {
            gg[static_cast<size_t>(j)] += g[static_cast<size_t>(i * q + j)] * normalized.at(i, j);
          }
        }
      }
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (int64_t i = 0; i < p; ++i) {
          // dxhat = g * gamma; dx = inv_sigma * (dxhat - mean(dxhat) - xhat * mean(dxhat*xhat))
          double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
          for (int64_t j = 0; j < q; ++j) {
            const double dxh = g[static_cast<size_t>(i * q + j)] * gamma.at(j);
            mean_dxhat += dxh;
            mean_dxhat_xhat += dxh * normalized.at(i, j);
          }
          mean_dxhat /= static_cast<double>(q);
          mean_dxhat_xhat /= static_cast<double>(q);
          for (int64_t j = 0; j < q; ++j) {
            const double dxh = g[static_cast<size_t>(i * q + j)] * gamma.at(j);
            ga[static_cast<size_t>(i * q + j)] +=
                inv_sigma[static_cast<size_t>(i)] * (dxh - mean_dxhat - normalized.at(i, j) * mean_dxhat_xhat);
          }
        }
      }
    });
  }
  return out;
}

Tensor Tape::dropout(const Tensor& a, double rate, bool training, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) fail(ErrorKind::InvalidRate, "dropout rate must be in [0,1)");
  if (!training || rate == 0.0) return a;  // eval path is the identity
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(static_cast<size_t>(a.size()));
  for (double& m : mask) m = (uniform01(rng) < rate) ? 0.0 : keep_scale;
  Tensor out = Tensor::zeros(a.shape());
  for (int64_t i = 0; i < a.size(); ++i) out.at(i) = a.at(i) * mask[static_cast<size_t>(i)];
  if (a.requires_grad()) {
    out.set_requires_grad(true);
    record([a, out, mask]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      auto& ga = a.grad();
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * mask[i];
    });
  }
  return out;
}

Tensor Tape::cross_entropy_label_smoothed(const Tensor& logits, const std::vector<int>& targets,
                                          double epsilon) {
  require_rank2(logits, "cross_entropy_label_smoothed");
  if (epsilon < 0.0 || epsilon >= 1.0) fail(ErrorKind::InvalidRate, "label smoothing must be in [0,1)");
  const int64_t batch = logits.rows(), classes = logits.cols();
  if (static_cast<int64_t>(targets.size()) != batch) {
    fail(ErrorKind::ShapeMismatch, "cross_entropy: one target per row required");
  }
  for (int t : targets) {
    if (t < 0 || t >= classes) fail(ErrorKind::IndexOutOfRange, "cross_entropy: target class out of range");
  }
  // q = (1-eps)*onehot + eps/C;  loss = mean_b( lse_b - sum_c q_c * logit_c )
  Tensor probs = Tensor::zeros({batch, classes});
  double loss = 0.0;
  const double off = epsilon / static_cast<double>(classes);
  for (int64_t b = 0; b < batch; ++b) {
    double row_max = logits.at(b, 0);
    for (int64_t c = 1; c < classes; ++c) row_max = std::max(row_max, logits.at(b, c));
    double denom = 0.0;
    for (int64_t c = 0; c < classes; ++c) denom += std::exp(logits.at(b, c) - row_max);
    const double lse = row_max + std::log(denom);
    double weighted = 0.0;
    for (int64_t c = 0; c < classes; ++c) {
      probs.at(b, c) = std::exp(logits.at(b, c) - lse);
      const double qc = off + (c == targets[static_cast<size_t>(b)] ? 1.0 - epsilon : 0.0);
      weighted += qc * logits.at(b, c);
    }
    loss += lse - weighted;
  }
  loss /= static_cast<double>(batch);
  Tensor out = Tensor::scalar(loss);
  if (logits.requires_grad()) {
    out.set_requires_grad(true);
    record([logits, targets, epsilon, probs, out, batch, classes, off]() mutable {
      if (!out.has_grad()) return;
      const double g = out.grad()[0] / static_cast<double>(batch);
      auto& gl = logits.grad();
      for (int64_t b = 0; b < batch; ++b) {
        for (int64_t c = 0; c < classes; ++c) {
          const double qc = off + (c == targets[static_cast<size_t>(b)] ? 1.0 - epsilon : 0.0);
          gl[static_cast<size_t>(b * classes + c)] += g * (probs.at(b, c) - qc);
        }
      }
    });
  }
  return out;
}

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1) fail(ErrorKind::ShapeMismatch, "backward: loss must be scalar");
  if (!loss.requires_grad()) return;
  loss.grad()[0] += 1.0;
  for (auto it = backprops_.rbegin(); it != backprops_.rend(); ++it) (*it)();
}

// ---- finite differences ----------------------------------------------------

FiniteDiffReport finite_difference_check(
    const std::function<Tensor(Tape&)>& make_loss,
    const std::vector<std::pair<std::string, Tensor>>& params, double h,
    int64_t max_entries_per_param) {
  for (const auto& [name, p] : params) p.zero_grad();
  Tape tape;
  Tensor loss = make_loss(tape);
  tape.backward(loss);

  std::vector<std::vector<double>> autodiff;
  autodiff.reserve(params.size());
  for (const auto& [name, p] : params) autodiff.push_back(p.grad());

  auto eval = [&]() {
    Tape t;
    return make_loss(t).item();
  };

  FiniteDiffReport report;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor p = params[pi].second;
    const int64_t limit = max_entries_per_param < 0
                              ? p.size()
                              : std::min<int64_t>(p.size(), max_entries_per_param);
    for (int64_t i = 0; i < limit; ++i) {
      const double orig = p.at(i);
      p.at(i) = orig + h;
      const double f_plus = eval();
      p.at(i) = orig - h;
      const double f_minus = eval();
      p.at(i) = orig;
      const double central = (f_plus - f_minus) / (2.0 * h);
      const double ad = autodiff[pi][static_cast<size_t>(i)];
      const double rel = std::abs(ad - central) / std::max({std::abs(ad), std::abs(central), 1e-6});
      ++report.checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst = FiniteDiffEntry{params[pi].first, i, ad, central, rel};
      }
    }
  }
  return report;
}

}  // namespace gramkg
