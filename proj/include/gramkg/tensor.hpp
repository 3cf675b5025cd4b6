#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace gramkg {

/// Dense row-major tensor of 64-bit floats with shape metadata and a
/// gradient slot. Value-semantic handle; copies share storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int64_t> shape, bool requires_grad = false);
  static Tensor full(std::vector<int64_t> shape, double value, bool requires_grad = false);
  static Tensor from_values(std::vector<int64_t> shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double value);
  static Tensor randn(std::vector<int64_t> shape, std::mt19937_64& rng, double stddev,
                      bool requires_grad = false);
  static Tensor xavier_uniform(int64_t fan_in, int64_t fan_out, std::mt19937_64& rng,
                               bool requires_grad = false);

  bool defined() const { return s_ != nullptr; }
  const std::vector<int64_t>& shape() const { return s_->shape; }
  int64_t rank() const { return static_cast<int64_t>(s_->shape.size()); }
  int64_t size() const { return static_cast<int64_t>(s_->values.size()); }
  int64_t rows() const;  // rank-2 only
  int64_t cols() const;

  // Copies share storage, so storage access stays mutable through a const
  // handle (the usual shared-handle semantics).
  std::vector<double>& values() const { return s_->values; }
  double& at(int64_t i) const { return s_->values[static_cast<size_t>(i)]; }
  double& at(int64_t r, int64_t c) const { return s_->values[static_cast<size_t>(r * cols() + c)]; }
  double item() const;  // size()==1

  bool requires_grad() const { return s_->requires_grad; }
  void set_requires_grad(bool flag) { s_->requires_grad = flag; }

  /// Gradient accumulator, allocated (zeroed) on first access.
  std::vector<double>& grad() const;
  bool has_grad() const { return s_ && !s_->grad.empty(); }
  void zero_grad() const;

  /// Deep copy that shares nothing with this tensor.
  Tensor clone() const;
  bool same_storage(const Tensor& other) const { return s_ == other.s_; }

 private:
  struct Storage {
    std::vector<int64_t> shape;
    std::vector<double> values;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Storage> s_;
  explicit Tensor(std::shared_ptr<Storage> s) : s_(std::move(s)) {}
};

/// Records primitive operations during a forward pass and replays their
/// backward rules in reverse order. Single-owner during a pass; distinct
/// tapes may run concurrently.
class Tape {
 public:
  // elementwise
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor scale(const Tensor& a, double c);
  Tensor reciprocal(const Tensor& a);
  Tensor sqrt_ew(const Tensor& a);
  Tensor gelu(const Tensor& a);

  // broadcasting over rows of a rank-2 tensor
  Tensor add_rowvec(const Tensor& m, const Tensor& v);
  Tensor sub_rowvec(const Tensor& m, const Tensor& v);
  Tensor scale_rows(const Tensor& m, const Tensor& v);  // row i times v[i]

  // linear algebra
  Tensor matmul(const Tensor& a, const Tensor& b);
  Tensor matvec(const Tensor& m, const Tensor& v);
  Tensor transpose(const Tensor& a);

  // reductions / structure
  Tensor softmax_rows(const Tensor& a);
  Tensor mean_rows(const Tensor& a);  // [p x q] -> [q]
  Tensor row_sums(const Tensor& a);   // [p x q] -> [p]
  Tensor sum_all(const Tensor& a);    // -> scalar
  Tensor concat_cols(const std::vector<Tensor>& parts);
  Tensor stack_rows(const std::vector<Tensor>& rows);
  Tensor row(const Tensor& a, int64_t i);
  Tensor gather_rows(const Tensor& table, const std::vector<int>& ids);

  // model-specific
  Tensor layer_norm(const Tensor& a, const Tensor& gamma, const Tensor& beta,
                    double eps = 1e-5);
  Tensor dropout(const Tensor& a, double rate, bool training, std::mt19937_64& rng);
  Tensor cross_entropy_label_smoothed(const Tensor& logits, const std::vector<int>& targets,
                                      double epsilon);

  /// Seeds d(loss)/d(loss)=1 and runs every recorded backward rule once,
  /// in reverse record order. Gradients accumulate (+=) into .grad().
  void backward(const Tensor& loss);

  size_t op_count() const { return backprops_.size(); }

 private:
  std::vector<std::function<void()>> backprops_;
  void record(std::function<void()> fn) { backprops_.push_back(std::move(fn)); }
};

// ---- named-tensor serialization (checkpoints, edge-embedding sidecars) ----

using TensorMap = std::map<std::string, Tensor>;

/// JSON container {"format_version":1,"meta":...,"tensors":{name:{shape,data}}}.
/// Doubles round-trip bit-exactly (decimal, <=17 significant digits).
void save_tensors(const std::string& path, const TensorMap& tensors,
                  const std::string& meta_json = "{}");
TensorMap load_tensors(const std::string& path, std::string* meta_json = nullptr);

// ---- finite-difference oracle -------------------------------------------

struct FiniteDiffEntry {
  std::string param;
  int64_t index = 0;
  double autodiff = 0.0;
  double central = 0.0;
  double rel_error = 0.0;
};

struct FiniteDiffReport {
  double max_rel_error = 0.0;
  FiniteDiffEntry worst;
  int64_t checked = 0;
  bool pass(double tol) const { return max_rel_error <= tol; }
};

/// Compares autodiff gradients of a scalar-valued forward pass against
/// central finite differences. `make_loss` must rebuild the loss on the
/// given tape from the (shared) parameter tensors and be deterministic.
FiniteDiffReport finite_difference_check(
    const std::function<Tensor(Tape&)>& make_loss,
    const std::vector<std::pair<std::string, Tensor>>& params, double h = 1e-5,
    int64_t max_entries_per_param = -1);

}  // namespace gramkg
