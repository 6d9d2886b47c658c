#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "covomix/rng.hpp"

namespace covomix::nn {

using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct Node;

// Dense row-major tensor of doubles with optional reverse-mode tape.
// Copies share storage; the tape hangs off `node` and is built only while
// grad mode is enabled.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0,
                      bool requires_grad = false);
  // Scaled-uniform fan-in init: U(-a, a) with a = sqrt(1 / fan_in).
  static Tensor fanin_uniform(Shape shape, int fan_in, Rng& rng,
                              bool requires_grad = false);

  bool defined() const { return data_ != nullptr; }
  const Shape& shape() const { return shape_; }
  std::size_t numel() const { return data_ ? data_->size() : 0; }
  int rows() const { return shape_.empty() ? 0 : shape_[0]; }
  int cols() const { return shape_.size() < 2 ? (shape_.empty() ? 0 : 1) : shape_[1]; }
  bool is_scalar() const;

  double* data() { return data_->data(); }
  const double* data() const { return data_->data(); }
  std::vector<double>& vec() { return *data_; }
  const std::vector<double>& vec() const { return *data_; }

  double value() const;  // scalar tensors only
  double& at(int i, int j) { return (*data_)[static_cast<std::size_t>(i) * shape_[1] + j]; }
  double at(int i, int j) const { return (*data_)[static_cast<std::size_t>(i) * shape_[1] + j]; }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool rg);
  bool has_grad() const { return grad_ != nullptr; }
  std::vector<double>& grad();
  const std::vector<double>& grad() const { return *grad_; }
  void ensure_grad();
  void zero_grad();

  std::shared_ptr<Node> node;

 private:
  Shape shape_;
  std::shared_ptr<std::vector<double>> data_;
  std::shared_ptr<std::vector<double>> grad_;
  bool requires_grad_ = false;
};

struct Node {
  std::vector<Tensor> parents;
  std::function<void(Tensor&)> backprop;  // accumulate out-grad into parents
};

// Grad-mode toggle; generation runs under NoGradGuard so no tape is built.
bool grad_enabled();
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// ----------------------------- ops -----------------------------
// All ops are value-in/value-out and record backward closures when grad
// mode is on and an input requires grad.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);

// C = A[n×k] · B[k×m]
Tensor matmul(const Tensor& a, const Tensor& b);
// C = A[n×k] · B[m×k]^T  (used for attention scores)
Tensor matmul_nt(const Tensor& a, const Tensor& b);
// y = x[T×in] · W[in×out] + b[out]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// Row softmax. `additive_mask`, when non-null, is added to the logits first
// (entries are 0 or -inf); it is constant data, not a graph input.
Tensor softmax_rows(const Tensor& x, const std::vector<double>* additive_mask = nullptr);

// RMSNorm with learned gain g[dim]: y_i = x_i * g_i / rms(x_row).
Tensor rmsnorm(const Tensor& x, const Tensor& gain, double eps = 1e-6);

// y = x * (1 + scale) + shift with scale/shift broadcast over rows ([1×dim]).
Tensor affine_mod(const Tensor& x, const Tensor& scale_row, const Tensor& shift_row);

// Rotary position embedding applied per head to (even, odd) feature pairs.
// Angle for pair i of a head at position p: p * base^(-2i/head_dim).
Tensor rotary(const Tensor& x, int n_heads, double base = 10000.0);

Tensor gelu(const Tensor& x);

Tensor embedding(const std::vector<int>& ids, const Tensor& table);

Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor slice_cols(const Tensor& x, int from, int to);

Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

// Mean squared error over masked rows only: sum over {rows r : mask[r]} of
// |pred_r - target_r|^2, divided by (masked rows × cols). `target` and
// `mask` are constants.
Tensor masked_mse(const Tensor& pred, const Tensor& target,
                  const std::vector<bool>& mask);

// Mean NLL over valid rows of row-softmax(logits) against integer targets.
// Rows with valid[r] == false are excluded from both sum and count.
Tensor cross_entropy_rows(const Tensor& logits, const std::vector<int>& targets,
                          const std::vector<bool>& valid);

// Reverse-mode sweep from a scalar loss. Populates .grad() of every
// requires-grad tensor reachable from `loss`.
void backward(Tensor& loss);

// ----------------------------- parameters -----------------------------

// Named parameter set. Ordered map so iteration (Adam, checkpointing,
// zero_grad) is deterministic.
class ParamStore {
 public:
  Tensor& create(const std::string& name, Tensor t);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool has(const std::string& name) const { return params_.count(name) > 0; }

  std::map<std::string, Tensor>& all() { return params_; }
  const std::map<std::string, Tensor>& all() const { return params_; }

  void zero_grad();
  std::size_t total_elements() const;

 private:
  std::map<std::string, Tensor> params_;
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
  long step = 0;
};

// One Adam update over every parameter in the store using the gradients
// accumulated on the tensors. Throws NumericError on non-finite gradients.
void adam_step(ParamStore& params, AdamState& state, const AdamConfig& cfg);

// ----------------------------- checkpoints -----------------------------
// Archive layout: magic "CVMX", version u32, then tensor records until EOF:
// name length u32 + UTF-8 bytes, rank u32, dims u32 each, payload f32 LE.

void save_checkpoint(const std::string& path,
                     const std::map<std::string, Tensor>& tensors);
std::map<std::string, Tensor> load_checkpoint(const std::string& path);

// Exact f64 training state (params + Adam moments + counters); the f32
// checkpoint cannot round-trip a resumed run bit-exactly.
void save_train_state(const std::string& path, const ParamStore& params,
                      const AdamState& adam,
                      const std::map<std::string, double>& counters);
bool load_train_state(const std::string& path, ParamStore& params,
                      AdamState& adam, std::map<std::string, double>& counters);

}  // namespace covomix::nn
