#include "covomix/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "covomix/errors.hpp"

namespace covomix::nn {

namespace {

thread_local bool g_grad_enabled = true;

bool want_grad(const Tensor& t) { return g_grad_enabled && t.requires_grad(); }

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
}

void check_2d(const Tensor& t, const char* op) {
  if (t.shape().size() != 2) {
    throw DimensionError(std::string(op) + ": expected 2-d tensor, got " +
                         shape_str(t.shape()));
  }
}

// ---- raw gemm kernels (accumulating) ----

// C[n×m] += A[n×k] · B[k×m]
void gemm_nn_acc(const double* a, const double* b, double* c, int n, int k, int m) {
  for (int i = 0; i < n; ++i) {
    const double* arow = a + static_cast<std::size_t>(i) * k;
    double* crow = c + static_cast<std::size_t>(i) * m;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + static_cast<std::size_t>(p) * m;
      for (int j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[n×m] += A[n×k] · B[m×k]^T
void gemm_nt_acc(const double* a, const double* b, double* c, int n, int k, int m) {
  for (int i = 0; i < n; ++i) {
    const double* arow = a + static_cast<std::size_t>(i) * k;
    double* crow = c + static_cast<std::size_t>(i) * m;
    for (int j = 0; j < m; ++j) {
      const double* brow = b + static_cast<std::size_t>(j) * k;
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

// C[k×m] += A[n×k]^T · B[n×m]
void gemm_tn_acc(const double* a, const double* b, double* c, int n, int k, int m) {
  for (int i = 0; i < n; ++i) {
    const double* arow = a + static_cast<std::size_t>(i) * k;
    const double* brow = b + static_cast<std::size_t>(i) * m;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      double* crow = c + static_cast<std::size_t>(p) * m;
      for (int j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

Tensor make_out(Shape shape, bool track) {
  Tensor out = Tensor::zeros(std::move(shape), track && g_grad_enabled);
  return out;
}

void attach(Tensor& out, std::vector<Tensor> parents,
            std::function<void(Tensor&)> fn) {
  if (!g_grad_enabled) return;
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (!any) return;
  out.set_requires_grad(true);
  out.node = std::make_shared<Node>();
  out.node->parents = std::move(parents);
  out.node->backprop = std::move(fn);
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

// ----------------------------- Tensor -----------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  for (int d : shape) {
    if (d <= 0) throw DimensionError("non-positive dim in " + shape_str(shape));
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::make_shared<std::vector<double>>(shape_numel(t.shape_), 0.0);
  t.set_requires_grad(requires_grad);
  return t;
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.data_->begin(), t.data_->end(), value);
  return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("from_data: " + shape_str(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(data.size()));
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::make_shared<std::vector<double>>(std::move(data));
  t.set_requires_grad(requires_grad);
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (double& v : *t.data_) v = rng.normal() * stddev;
  return t;
}

Tensor Tensor::fanin_uniform(Shape shape, int fan_in, Rng& rng, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  const double a = std::sqrt(1.0 / std::max(1, fan_in));
  for (double& v : *t.data_) v = rng.uniform(-a, a);
  return t;
}

bool Tensor::is_scalar() const { return numel() == 1; }

double Tensor::value() const {
  if (!is_scalar()) throw DimensionError("value(): tensor is not scalar");
  return (*data_)[0];
}

void Tensor::set_requires_grad(bool rg) {
  requires_grad_ = rg;
  // Grad storage is allocated as soon as grads are requested so every copy
  // of this tensor shares the same accumulation buffer.
  if (rg && data_) ensure_grad();
}

std::vector<double>& Tensor::grad() {
  ensure_grad();
  return *grad_;
}

void Tensor::ensure_grad() {
  if (!grad_) grad_ = std::make_shared<std::vector<double>>(numel(), 0.0);
}

void Tensor::zero_grad() {
  if (grad_) std::fill(grad_->begin(), grad_->end(), 0.0);
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

// ----------------------------- elementwise -----------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor out = make_out(a.shape(), want_grad(a) || want_grad(b));
  const std::size_t n = a.numel();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
  attach(out, {a, b}, [n](Tensor& o) {
    for (int pi = 0; pi < 2; ++pi) {
      Tensor& p = o.node->parents[pi];
      if (!p.requires_grad()) continue;
      auto& g = p.grad();
      for (std::size_t i = 0; i < n; ++i) g[i] += o.grad()[i];
    }
  });
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor out = make_out(a.shape(), want_grad(a) || want_grad(b));
  const std::size_t n = a.numel();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] - b.data()[i];
  attach(out, {a, b}, [n](Tensor& o) {
    if (o.node->parents[0].requires_grad()) {
      auto& g = o.node->parents[0].grad();
      for (std::size_t i = 0; i < n; ++i) g[i] += o.grad()[i];
    }
    if (o.node->parents[1].requires_grad()) {
      auto& g = o.node->parents[1].grad();
      for (std::size_t i = 0; i < n; ++i) g[i] -= o.grad()[i];
    }
  });
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tensor out = make_out(a.shape(), want_grad(a) || want_grad(b));
  const std::size_t n = a.numel();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
  attach(out, {a, b}, [n](Tensor& o) {
    Tensor& pa = o.node->parents[0];
    Tensor& pb = o.node->parents[1];
    if (pa.requires_grad()) {
      auto& g = pa.grad();
      for (std::size_t i = 0; i < n; ++i) g[i] += o.grad()[i] * pb.data()[i];
    }
    if (pb.requires_grad()) {
      auto& g = pb.grad();
      for (std::size_t i = 0; i < n; ++i) g[i] += o.grad()[i] * pa.data()[i];
    }
  });
  return out;
}

Tensor scale(const Tensor& a, double c) {
  Tensor out = make_out(a.shape(), want_grad(a));
  const std::size_t n = a.numel();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * c;
  attach(out, {a}, [n, c](Tensor& o) {
    Tensor& p = o.node->parents[0];
    if (!p.requires_grad()) return;
    auto& g = p.grad();
    for (std::size_t i = 0; i < n; ++i) g[i] += o.grad()[i] * c;
  });
  return out;
}

Tensor add_scalar(const Tensor& a, double c) {
  Tensor out = make_out(a.shape(), want_grad(a));
  const std::size_t n = a.numel();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + c;
  attach(out, {a}, [n](Tensor& o) {
    Tensor& p = o.node->parents[0];
    if (!p.requires_grad()) return;
    auto& g = p.grad();
    for (std::size_t i = 0; i < n; ++i) g[i] += o.grad()[i];
  });
  return out;
}

// ----------------------------- matmul family -----------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_2d(a, "matmul");
  check_2d(b, "matmul");
  if (a.shape()[1] != b.shape()[0]) {
    throw DimensionError("matmul: " + shape_str(a.shape()) + " · " + shape_str(b.shape()));
  }
  const int n = a.shape()[0], k = a.shape()[1], m = b.shape()[1];
  Tensor out = make_out({n, m}, want_grad(a) || want_grad(b));
  gemm_nn_acc(a.data(), b.data(), out.data(), n, k, m);
  attach(out, {a, b}, [n, k, m](Tensor& o) {
    Tensor& pa = o.node->parents[0];
    Tensor& pb = o.node->parents[1];
    // dA += dC · B^T ; dB += A^T · dC
    if (pa.requires_grad()) gemm_nt_acc(o.grad().data(), pb.data(), pa.grad().data(), n, m, k);
    if (pb.requires_grad()) gemm_tn_acc(pa.data(), o.grad().data(), pb.grad().data(), n, k, m);
  });
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  check_2d(a, "matmul_nt");
  check_2d(b, "matmul_nt");
  if (a.shape()[1] != b.shape()[1]) {
    throw DimensionError("matmul_nt: " + shape_str(a.shape()) + " · " +
                         shape_str(b.shape()) + "^T");
  }
  const int n = a.shape()[0], k = a.shape()[1], m = b.shape()[0];
  Tensor out = make_out({n, m}, want_grad(a) || want_grad(b));
  gemm_nt_acc(a.data(), b.data(), out.data(), n, k, m);
  attach(out, {a, b}, [n, k, m](Tensor& o) {
    Tensor& pa = o.node->parents[0];
    Tensor& pb = o.node->parents[1];
    // C = A·B^T  =>  dA += dC · B ; dB += dC^T · A
    if (pa.requires_grad()) gemm_nn_acc(o.grad().data(), pb.data(), pa.grad().data(), n, m, k);
    if (pb.requires_grad()) gemm_tn_acc(o.grad().data(), pa.data(), pb.grad().data(), n, m, k);
  });
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  check_2d(x, "linear");
  check_2d(w, "linear");
  if (x.shape()[1] != w.shape()[0] || b.numel() != static_cast<std::size_t>(w.shape()[1])) {
    throw DimensionError("linear: x" + shape_str(x.shape()) + " w" +
                         shape_str(w.shape()) + " b" + shape_str(b.shape()));
  }
  const int n = x.shape()[0], k = x.shape()[1], m = w.shape()[1];
  Tensor out = make_out({n, m}, want_grad(x) || want_grad(w) || want_grad(b));
  for (int i = 0; i < n; ++i) {
    std::memcpy(out.data() + static_cast<std::size_t>(i) * m, b.data(),
                sizeof(double) * static_cast<std::size_t>(m));
  }
  gemm_nn_acc(x.data(), w.data(), out.data(), n, k, m);
  attach(out, {x, w, b}, [n, k, m](Tensor& o) {
    Tensor& px = o.node->parents[0];
    Tensor& pw = o.node->parents[1];
    Tensor& pb = o.node->parents[2];
    if (px.requires_grad()) gemm_nt_acc(o.grad().data(), pw.data(), px.grad().data(), n, m, k);
    if (pw.requires_grad()) gemm_tn_acc(px.data(), o.grad().data(), pw.grad().data(), n, k, m);
    if (pb.requires_grad()) {
      auto& g = pb.grad();
      for (int i = 0; i < n; ++i) {
        const double* og = o.grad().data() + static_cast<std::size_t>(i) * m;
        for (int j = 0; j < m; ++j) g[j] += og[j];
      }
    }
  });
  return out;
}

// ----------------------------- softmax -----------------------------

Tensor softmax_rows(const Tensor& x, const std::vector<double>* additive_mask) {
  check_2d(x, "softmax_rows");
  if (additive_mask && additive_mask->size() != x.numel()) {
    throw DimensionError("softmax_rows: mask size mismatch");
  }
  const int n = x.shape()[0], m = x.shape()[1];
  Tensor out = make_out(x.shape(), want_grad(x));
  for (int i = 0; i < n; ++i) {
    const double* row = x.data() + static_cast<std::size_t>(i) * m;
    const double* mrow = additive_mask ? additive_mask->data() + static_cast<std::size_t>(i) * m : nullptr;
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < m; ++j) {
      const double v = row[j] + (mrow ? mrow[j] : 0.0);
      mx = std::max(mx, v);
    }
    double* orow = out.data() + static_cast<std::size_t>(i) * m;
    double z = 0.0;
    for (int j = 0; j < m; ++j) {
      const double v = row[j] + (mrow ? mrow[j] : 0.0);
      orow[j] = std::exp(v - mx);
      z += orow[j];
    }
    for (int j = 0; j < m; ++j) orow[j] /= z;
  }
  attach(out, {x}, [n, m](Tensor& o) {
    Tensor& p = o.node->parents[0];
    if (!p.requires_grad()) return;
    auto& g = p.grad();
    for (int i = 0; i < n; ++i) {
      const double* y = o.data() + static_cast<std::size_t>(i) * m;
      const double* dy = o.grad().data() + static_cast<std::size_t>(i) * m;
      double dot = 0.0;
      for (int j = 0; j < m; ++j) dot += dy[j] * y[j];
      double* grow = g.data() + static_cast<std::size_t>(i) * m;
      for (int j = 0; j < m; ++j) grow[j] += y[j] * (dy[j] - dot);
    }
  });
  return out;
}

// ----------------------------- norms -----------------------------

Tensor rmsnorm(const Tensor& x, const Tensor& gain, double eps) {
  check_2d(x, "rmsnorm");
  const int n = x.shape()[0], d = x.shape()[1];
  if (gain.numel() != static_cast<std::size_t>(d)) {
    throw DimensionError("rmsnorm: gain size mismatch");
  }
  Tensor out = make_out(x.shape(), want_grad(x) || want_grad(gain));
  std::vector<double> inv_rms(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double* row = x.data() + static_cast<std::size_t>(i) * d;
    double s = 0.0;
    for (int j = 0; j < d; ++j) s += row[j] * row[j];
    const double r = 1.0 / std::sqrt(s / d + eps);
    inv_rms[static_cast<std::size_t>(i)] = r;
    double* orow = out.data() + static_cast<std::size_t>(i) * d;
    for (int j = 0; j < d; ++j) orow[j] = row[j] * gain.data()[j] * r;
  }
  attach(out, {x, gain}, [n, d, inv_rms](Tensor& o) {
    Tensor& px = o.node->parents[0];
    Tensor& pg = o.node->parents[1];
    for (int i = 0; i < n; ++i) {
      const double* xi = px.data() + static_cast<std::size_t>(i) * d;
      const double* dy = o.grad().data() + static_cast<std::size_t>(i) * d;
      const double r = inv_rms[static_cast<std::size_t>(i)];
      if (px.requires_grad()) {
        // dx_j = r·g_j·dy_j − x_j·r³/d · Σ_i dy_i·g_i·x_i
        double dot = 0.0;
        for (int j = 0; j < d; ++j) dot += dy[j] * pg.data()[j] * xi[j];
        const double coef = r * r * r / d * dot;
        double* gx = px.grad().data() + static_cast<std::size_t>(i) * d;
        for (int j = 0; j < d; ++j) gx[j] += r * pg.data()[j] * dy[j] - xi[j] * coef;
      }
      if (pg.requires_grad()) {
        auto& gg = pg.grad();
        for (int j = 0; j < d; ++j) gg[j] += dy[j] * xi[j] * r;
      }
    }
  });
  return out;
}

Tensor affine_mod(const Tensor& x, const Tensor& scale_row, const Tensor& shift_row) {
  check_2d(x, "affine_mod");
  const int n = x.shape()[0], d = x.shape()[1];
  if (scale_row.numel() != static_cast<std::size_t>(d) ||
      shift_row.numel() != static_cast<std::size_t>(d)) {
    throw DimensionError("affine_mod: modulation size mismatch");
  }
  Tensor out = make_out(x.shape(), want_grad(x) || want_grad(scale_row) || want_grad(shift_row));
  for (int i = 0; i < n; ++i) {
    const double* row = x.data() + static_cast<std::size_t>(i) * d;
    double* orow = out.data() + static_cast<std::size_t>(i) * d;
    for (int j = 0; j < d; ++j) {
      orow[j] = row[j] * (1.0 + scale_row.data()[j]) + shift_row.data()[j];
    }
  }
  attach(out, {x, scale_row, shift_row}, [n, d](Tensor& o) {
    Tensor& px = o.node->parents[0];
    Tensor& ps = o.node->parents[1];
    Tensor& pt = o.node->parents[2];
    for (int i = 0; i < n; ++i) {
      const double* dy = o.grad().data() + static_cast<std::size_t>(i) * d;
      const double* xi = px.data() + static_cast<std::size_t>(i) * d;
      if (px.requires_grad()) {
        double* gx = px.grad().data() + static_cast<std::size_t>(i) * d;
        for (int j = 0; j < d; ++j) gx[j] += dy[j] * (1.0 + ps.data()[j]);
      }
      if (ps.requires_grad()) {
        auto& gs = ps.grad();
        for (int j = 0; j < d; ++j) gs[j] += dy[j] * xi[j];
      }
      if (pt.requires_grad()) {
        auto& gt = pt.grad();
        for (int j = 0; j < d; ++j) gt[j] += dy[j];
      }
    }
  });
  return out;
}

// ----------------------------- rotary -----------------------------

Tensor rotary(const Tensor& x, int n_heads, double base) {
  check_2d(x, "rotary");
  const int n = x.shape()[0], d = x.shape()[1];
  if (n_heads < 1 || d % n_heads != 0) {
    throw DimensionError("rotary: dim " + std::to_string(d) +
                         " not divisible by heads " + std::to_string(n_heads));
  }
  const int hd = d / n_heads;
  if (hd % 2 != 0) throw DimensionError("rotary: head dim must be even");
  Tensor out = make_out(x.shape(), want_grad(x));

  // Per-pair inverse frequencies, shared across heads.
  std::vector<double> inv_freq(static_cast<std::size_t>(hd / 2));
  for (int i = 0; i < hd / 2; ++i) {
    inv_freq[static_cast<std::size_t>(i)] = std::pow(base, -2.0 * i / hd);
  }

  auto apply = [n, d, hd, n_heads, inv_freq](const double* src, double* dst, double sign) {
    for (int p = 0; p < n; ++p) {
      const double* row = src + static_cast<std::size_t>(p) * d;
      double* orow = dst + static_cast<std::size_t>(p) * d;
      for (int h = 0; h < n_heads; ++h) {
        const int off = h * hd;
        for (int i = 0; i < hd / 2; ++i) {
          const double theta = sign * p * inv_freq[static_cast<std::size_t>(i)];
          const double c = std::cos(theta), s = std::sin(theta);
          const double a = row[off + 2 * i], b = row[off + 2 * i + 1];
          orow[off + 2 * i] = a * c - b * s;
          orow[off + 2 * i + 1] = a * s + b * c;
        }
      }
    }
  };
  apply(x.data(), out.data(), 1.0);
  attach(out, {x}, [apply](Tensor& o) {
    Tensor& p = o.node->parents[0];
    if (!p.requires_grad()) return;
    // Rotation is orthogonal: grad flows through the inverse rotation.
    std::vector<double> tmp(o.numel(), 0.0);
    apply(o.grad().data(), tmp.data(), -1.0);
    auto& g = p.grad();
    for (std::size_t i = 0; i < tmp.size(); ++i) g[i] += tmp[i];
  });
  return out;
}

// ----------------------------- activations -----------------------------

Tensor gelu(const Tensor& x) {
  Tensor out = make_out(x.shape(), want_grad(x));
  const std::size_t n = x.numel();
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  constexpr double inv_sqrt2pi = 0.3989422804014326779;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = x.data()[i];
    out.data()[i] = 0.5 * v * (1.0 + std::erf(v * inv_sqrt2));
  }
  attach(out, {x}, [n](Tensor& o) {
    Tensor& p = o.node->parents[0];
    if (!p.requires_grad()) return;
    auto& g = p.grad();
    for (std::size_t i = 0; i < n; ++i) {
      const double v = p.data()[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
      const double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
      g[i] += o.grad()[i] * (cdf + v * pdf);
    }
  });
  return out;
}

// ----------------------------- embedding / layout -----------------------------

Tensor embedding(const std::vector<int>& ids, const Tensor& table) {
  check_2d(table, "embedding");
  const int v = table.shape()[0], d = table.shape()[1];
  if (ids.empty()) throw DimensionError("embedding: empty id list");
  for (int id : ids) {
    if (id < 0 || id >= v) {
      throw DataError("embedding: id " + std::to_string(id) + " out of range [0," +
                      std::to_string(v) + ")");
    }
  }
  const int n = static_cast<int>(ids.size());
  Tensor out = make_out({n, d}, want_grad(table));
  for (int i = 0; i < n; ++i) {
    std::memcpy(out.data() + static_cast<std::size_t>(i) * d,
                table.data() + static_cast<std::size_t>(ids[static_cast<std::size_t>(i)]) * d,
                sizeof(double) * static_cast<std::size_t>(d));
  }
  attach(out, {table}, [ids, n, d](Tensor& o) {
    Tensor& p = o.node->parents[0];
    if (!p.requires_grad()) return;
    auto& g = p.grad();
    for (int i = 0; i < n; ++i) {
      const double* og = o.grad().data() + static_cast<std::size_t>(i) * d;
      double* grow = g.data() + static_cast<std::size_t>(ids[static_cast<std::size_t>(i)]) * d;
      for (int j = 0; j < d; ++j) grow[j] += og[j];
    }
  });
  return out;
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  check_2d(a, "concat_cols");
  check_2d(b, "concat_cols");
  if (a.shape()[0] != b.shape()[0]) {
    throw DimensionError("concat_cols: row mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
  const int n = a.shape()[0], da = a.shape()[1], db = b.shape()[1];
  Tensor out = make_out({n, da + db}, want_grad(a) || want_grad(b));
  for (int i = 0; i < n; ++i) {
    double* orow = out.data() + static_cast<std::size_t>(i) * (da + db);
    std::memcpy(orow, a.data() + static_cast<std::size_t>(i) * da, sizeof(double) * da);
    std::memcpy(orow + da, b.data() + static_cast<std::size_t>(i) * db, sizeof(double) * db);
  }
  attach(out, {a, b}, [n, da, db](Tensor& o) {
    Tensor& pa = o.node->parents[0];
    Tensor& pb = o.node->parents[1];
    for (int i = 0; i < n; ++i) {
      const double* og = o.grad().data() + static_cast<std::size_t>(i) * (da + db);
      if (pa.requires_grad()) {
        double* g = pa.grad().data() + static_cast<std::size_t>(i) * da;
        for (int j = 0; j < da; ++j) g[j] += og[j];
      }
      if (pb.requires_grad()) {
        double* g = pb.grad().data() + static_cast<std::size_t>(i) * db;
        for (int j = 0; j < db; ++j) g[j] += og[da + j];
      }
    }
  });
  return out;
}

Tensor slice_cols(const Tensor& x, int from, int to) {
  check_2d(x, "slice_cols");
  const int n = x.shape()[0], d = x.shape()[1];
  if (from < 0 || to > d || from >= to) {
    throw DimensionError("slice_cols: [" + std::to_string(from) + "," +
                         std::to_string(to) + ") of width " + std::to_string(d));
  }
  const int w = to - from;
  Tensor out = make_out({n, w}, want_grad(x));
  for (int i = 0; i < n; ++i) {
    std::memcpy(out.data() + static_cast<std::size_t>(i) * w,
                x.data() + static_cast<std::size_t>(i) * d + from, sizeof(double) * w);
  }
  attach(out, {x}, [n, d, from, w](Tensor& o) {
    Tensor& p = o.node->parents[0];
    if (!p.requires_grad()) return;
    auto& g = p.grad();
    for (int i = 0; i < n; ++i) {
      const double* og = o.grad().data() + static_cast<std::size_t>(i) * w;
      double* grow = g.data() + static_cast<std::size_t>(i) * d + from;
      for (int j = 0; j < w; ++j) grow[j] += og[j];
    }
  });
  return out;
}

// ----------------------------- reductions -----------------------------

Tensor sum_all(const Tensor& x) {
  Tensor out = make_out({1}, want_grad(x));
  double acc = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) acc += x.data()[i];
  out.data()[0] = acc;
  attach(out, {x}, [](Tensor& o) {
    Tensor& p = o.node->parents[0];
    if (!p.requires_grad()) return;
    auto& g = p.grad();
    const double d = o.grad()[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += d;
  });
  return out;
}

Tensor mean_all(const Tensor& x) {
  const double inv = 1.0 / static_cast<double>(x.numel());
  return scale(sum_all(x), inv);
}

Tensor masked_mse(const Tensor& pred, const Tensor& target, const std::vector<bool>& mask) {
  check_2d(pred, "masked_mse");
  check_same_shape(pred, target, "masked_mse");
  const int n = pred.shape()[0], d = pred.shape()[1];
  if (mask.size() != static_cast<std::size_t>(n)) {
    throw DimensionError("masked_mse: mask rows mismatch");
  }
  std::size_t masked = 0;
  for (bool b : mask) masked += b ? 1 : 0;
  if (masked == 0) throw DataError("masked_mse: empty mask");
  const double norm = 1.0 / (static_cast<double>(masked) * d);

  Tensor out = make_out({1}, want_grad(pred));
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    const double* pr = pred.data() + static_cast<std::size_t>(i) * d;
    const double* tr = target.data() + static_cast<std::size_t>(i) * d;
    for (int j = 0; j < d; ++j) {
      const double e = pr[j] - tr[j];
      acc += e * e;
    }
  }
  out.data()[0] = acc * norm;
  Tensor tgt = target;  // keep storage alive for the closure
  attach(out, {pred}, [n, d, mask, norm, tgt](Tensor& o) {
    Tensor& p = o.node->parents[0];
    if (!p.requires_grad()) return;
    const double dl = o.grad()[0] * 2.0 * norm;
    auto& g = p.grad();
    for (int i = 0; i < n; ++i) {
      if (!mask[static_cast<std::size_t>(i)]) continue;
      const double* pr = p.data() + static_cast<std::size_t>(i) * d;
      const double* tr = tgt.data() + static_cast<std::size_t>(i) * d;
      double* grow = g.data() + static_cast<std::size_t>(i) * d;
      for (int j = 0; j < d; ++j) grow[j] += dl * (pr[j] - tr[j]);
    }
  });
  return out;
}

Tensor cross_entropy_rows(const Tensor& logits, const std::vector<int>& targets,
                          const std::vector<bool>& valid) {
  check_2d(logits, "cross_entropy_rows");
  const int n = logits.shape()[0], k = logits.shape()[1];
  if (targets.size() != static_cast<std::size_t>(n) || valid.size() != static_cast<std::size_t>(n)) {
    throw DimensionError("cross_entropy_rows: target/valid length mismatch");
  }
  std::size_t count = 0;
  for (bool b : valid) count += b ? 1 : 0;
  if (count == 0) throw DataError("cross_entropy_rows: no valid rows");
  const double norm = 1.0 / static_cast<double>(count);

  // Cache row softmax for the backward pass.
  auto probs = std::make_shared<std::vector<double>>(logits.numel());
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double* row = logits.data() + static_cast<std::size_t>(i) * k;
    double* prow = probs->data() + static_cast<std::size_t>(i) * k;
    double mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (int j = 0; j < k; ++j) {
      prow[j] = std::exp(row[j] - mx);
      z += prow[j];
    }
    for (int j = 0; j < k; ++j) prow[j] /= z;
    if (valid[static_cast<std::size_t>(i)]) {
      const int t = targets[static_cast<std::size_t>(i)];
      if (t < 0 || t >= k) throw DataError("cross_entropy_rows: target out of range");
      acc -= std::log(std::max(prow[t], 1e-300));
    }
  }
  Tensor out = make_out({1}, want_grad(logits));
  out.data()[0] = acc * norm;
  attach(out, {logits}, [n, k, targets, valid, norm, probs](Tensor& o) {
    Tensor& p = o.node->parents[0];
    if (!p.requires_grad()) return;
    const double dl = o.grad()[0] * norm;
    auto& g = p.grad();
    for (int i = 0; i < n; ++i) {
      if (!valid[static_cast<std::size_t>(i)]) continue;
      const double* prow = probs->data() + static_cast<std::size_t>(i) * k;
      double* grow = g.data() + static_cast<std::size_t>(i) * k;
      const int t = targets[static_cast<std::size_t>(i)];
      for (int j = 0; j < k; ++j) grow[j] += dl * (prow[j] - (j == t ? 1.0 : 0.0));
    }
  });
  return out;
}

// ----------------------------- backward -----------------------------

void backward(Tensor& loss) {
  if (!loss.is_scalar()) throw DimensionError("backward: loss must be scalar");
  if (!loss.node && !loss.requires_grad()) {
    throw DataError("backward: loss does not depend on any parameter");
  }
  // Topological order over nodes via iterative DFS keyed on Node pointers.
  std::vector<Tensor> order;
  std::unordered_set<const Node*> seen;
  struct Frame {
    Tensor t;
    std::size_t next_child = 0;
  };
  std::vector<Frame> stack;
  if (loss.node) {
    seen.insert(loss.node.get());
    stack.push_back({loss, 0});
  }
  while (!stack.empty()) {
    Frame& f = stack.back();
    Node* nd = f.t.node.get();
    if (f.next_child < nd->parents.size()) {
      Tensor child = nd->parents[f.next_child++];
      if (child.node && !seen.count(child.node.get())) {
        seen.insert(child.node.get());
        stack.push_back({child, 0});
      }
    } else {
      order.push_back(f.t);
      stack.pop_back();
    }
  }
  loss.ensure_grad();
  loss.grad()[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Tensor& t = *it;
    t.ensure_grad();
    for (Tensor& parent : t.node->parents) {
      if (parent.requires_grad()) parent.ensure_grad();
    }
    t.node->backprop(t);
  }
}

// ----------------------------- ParamStore / Adam -----------------------------

Tensor& ParamStore::create(const std::string& name, Tensor t) {
  if (params_.count(name)) throw DataError("parameter already exists: " + name);
  t.set_requires_grad(true);
  auto [it, ok] = params_.emplace(name, std::move(t));
  (void)ok;
  return it->second;
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw DataError("unknown parameter: " + name);
  return it->second;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw DataError("unknown parameter: " + name);
  return it->second;
}

void ParamStore::zero_grad() {
  for (auto& [name, t] : params_) t.zero_grad();
}

std::size_t ParamStore::total_elements() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params_) n += t.numel();
  return n;
}

void adam_step(ParamStore& params, AdamState& state, const AdamConfig& cfg) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (auto& [name, t] : params.all()) {
    if (!t.has_grad()) t.ensure_grad();
    auto& g = t.grad();
    for (double v : g) {
      if (!std::isfinite(v)) {
        throw NumericError("adam_step: non-finite gradient in '" + name + "'");
      }
    }
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.size() != g.size()) m.assign(g.size(), 0.0);
    if (v.size() != g.size()) v.assign(g.size(), 0.0);
    double* p = t.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

// ----------------------------- checkpoint io -----------------------------

namespace {

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw DataError("checkpoint: truncated u32");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f32(std::ostream& os, float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  write_u32(os, u);
}

float read_f32(std::istream& is) {
  const std::uint32_t u = read_u32(is);
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

void write_u64(std::ostream& os, std::uint64_t v) {
  write_u32(os, static_cast<std::uint32_t>(v & 0xffffffffULL));
  write_u32(os, static_cast<std::uint32_t>(v >> 32));
}

std::uint64_t read_u64(std::istream& is) {
  const std::uint64_t lo = read_u32(is);
  const std::uint64_t hi = read_u32(is);
  return lo | (hi << 32);
}

void write_f64(std::ostream& os, double d) {
  std::uint64_t u;
  std::memcpy(&u, &d, 8);
  write_u64(os, u);
}

double read_f64(std::istream& is) {
  const std::uint64_t u = read_u64(is);
  double d;
  std::memcpy(&d, &u, 8);
  return d;
}

void write_string(std::ostream& os, const std::string& s) {
  write_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
  const std::uint32_t n = read_u32(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw DataError("checkpoint: truncated string");
  return s;
}

constexpr char kCkptMagic[4] = {'C', 'V', 'M', 'X'};
constexpr char kStateMagic[4] = {'C', 'V', 'M', 'S'};
constexpr std::uint32_t kFormatVersion = 1;

}  // namespace

void save_checkpoint(const std::string& path, const std::map<std::string, Tensor>& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write checkpoint: " + path);
  os.write(kCkptMagic, 4);
  write_u32(os, kFormatVersion);
  for (const auto& [name, t] : tensors) {
    write_string(os, name);
    write_u32(os, static_cast<std::uint32_t>(t.shape().size()));
    for (int d : t.shape()) write_u32(os, static_cast<std::uint32_t>(d));
    for (std::size_t i = 0; i < t.numel(); ++i) {
      write_f32(os, static_cast<float>(t.data()[i]));
    }
  }
  if (!os) throw DataError("checkpoint write failed: " + path);
}

std::map<std::string, Tensor> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kCkptMagic, 4) != 0) {
    throw DataError("bad checkpoint magic: " + path);
  }
  const std::uint32_t version = read_u32(is);
  if (version != kFormatVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  std::map<std::string, Tensor> out;
  while (true) {
    is.peek();
    if (is.eof()) break;
    const std::string name = read_string(is);
    const std::uint32_t rank = read_u32(is);
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<int>(read_u32(is));
    Tensor t = Tensor::zeros(shape);
    for (std::size_t i = 0; i < t.numel(); ++i) {
      t.data()[i] = static_cast<double>(read_f32(is));
    }
    out.emplace(name, std::move(t));
  }
  return out;
}

void save_train_state(const std::string& path, const ParamStore& params,
                      const AdamState& adam,
                      const std::map<std::string, double>& counters) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write state: " + path);
  os.write(kStateMagic, 4);
  write_u32(os, kFormatVersion);
  write_u64(os, static_cast<std::uint64_t>(adam.step));
  write_u32(os, static_cast<std::uint32_t>(counters.size()));
  for (const auto& [k, v] : counters) {
    write_string(os, k);
    write_f64(os, v);
  }
  write_u32(os, static_cast<std::uint32_t>(params.all().size()));
  for (const auto& [name, t] : params.all()) {
    write_string(os, name);
    write_u32(os, static_cast<std::uint32_t>(t.shape().size()));
    for (int d : t.shape()) write_u32(os, static_cast<std::uint32_t>(d));
    for (std::size_t i = 0; i < t.numel(); ++i) write_f64(os, t.data()[i]);
    const auto mi = adam.m.find(name);
    const auto vi = adam.v.find(name);
    const bool have = mi != adam.m.end() && vi != adam.v.end();
    write_u32(os, have ? 1u : 0u);
    if (have) {
      for (double d : mi->second) write_f64(os, d);
      for (double d : vi->second) write_f64(os, d);
    }
  }
  if (!os) throw DataError("state write failed: " + path);
}

bool load_train_state(const std::string& path, ParamStore& params, AdamState& adam,
                      std::map<std::string, double>& counters) {
  std::ifstream is(path, std::ios::binary);
  if (!is) return false;
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kStateMagic, 4) != 0) {
    throw DataError("bad state magic: " + path);
  }
  if (read_u32(is) != kFormatVersion) throw DataError("unsupported state version");
  adam.step = static_cast<long>(read_u64(is));
  const std::uint32_t n_counters = read_u32(is);
  counters.clear();
  for (std::uint32_t i = 0; i < n_counters; ++i) {
    const std::string k = read_string(is);
    counters[k] = read_f64(is);
  }
  const std::uint32_t n_params = read_u32(is);
  for (std::uint32_t i = 0; i < n_params; ++i) {
    const std::string name = read_string(is);
    const std::uint32_t rank = read_u32(is);
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<int>(read_u32(is));
    Tensor& t = params.get(name);
    if (t.shape() != shape) {
      throw DataError("state shape mismatch for '" + name + "'");
    }
    for (std::size_t j = 0; j < t.numel(); ++j) t.data()[j] = read_f64(is);
    if (read_u32(is) == 1u) {
      auto& m = adam.m[name];
      auto& v = adam.v[name];
      m.resize(t.numel());
      v.resize(t.numel());
      for (auto& d : m) d = read_f64(is);
      for (auto& d : v) d = read_f64(is);
    }
  }
  return true;
}

}  // namespace covomix::nn
