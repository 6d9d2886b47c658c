#pragma once

// Straight-line scalar reference of one pre-norm transformer block. Written
// independently of the library (plain loops over std::vector, no Tensor, no
// shared helpers) so it can serve as an oracle for the block forward pass.

#include <cmath>
#include <map>
#include <string>
#include <vector>

namespace refblock {

using Mat = std::vector<std::vector<double>>;  // row-major [rows][cols]

struct Params {
  std::map<std::string, std::vector<double>> flat;  // name -> values
  int dim = 0;
  int heads = 0;
  int ffn_mult = 4;
  bool causal = false;
  bool cross = false;   // include a cross-attention sublayer
  int cross_dim = 0;    // encoder width when cross is set
  std::string prefix = "blk";
};

inline Mat as_mat(const std::vector<double>& v, int rows, int cols) {
  Mat m(rows, std::vector<double>(cols));
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m[i][j] = v[static_cast<std::size_t>(i) * cols + j];
  return m;
}

inline Mat ref_linear(const Mat& x, const Mat& w, const std::vector<double>& b) {
  const int n = static_cast<int>(x.size());
  const int k = static_cast<int>(w.size());
  const int m = static_cast<int>(w[0].size());
  Mat y(n, std::vector<double>(m, 0.0));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) {
      double acc = b[j];
      for (int p = 0; p < k; ++p) acc += x[i][p] * w[p][j];
      y[i][j] = acc;
    }
  return y;
}

inline Mat ref_rmsnorm(const Mat& x, const std::vector<double>& g, double eps = 1e-6) {
  Mat y = x;
  const int d = static_cast<int>(x[0].size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) s += x[i][j] * x[i][j];
    const double r = 1.0 / std::sqrt(s / d + eps);
    for (int j = 0; j < d; ++j) y[i][j] = x[i][j] * g[j] * r;
  }
  return y;
}

inline void ref_rotary(Mat& x, int heads, double base = 10000.0) {
  const int d = static_cast<int>(x[0].size());
  const int hd = d / heads;
  for (std::size_t p = 0; p < x.size(); ++p) {
    for (int h = 0; h < heads; ++h) {
      for (int i = 0; i < hd / 2; ++i) {
        const double theta = static_cast<double>(p) * std::pow(base, -2.0 * i / hd);
        const double c = std::cos(theta), s = std::sin(theta);
        const double a = x[p][h * hd + 2 * i];
        const double b = x[p][h * hd + 2 * i + 1];
        x[p][h * hd + 2 * i] = a * c - b * s;
        x[p][h * hd + 2 * i + 1] = a * s + b * c;
      }
    }
  }
}

// Generic scaled-dot attention with optional rotary positions / causal mask.
inline Mat ref_attention(const Mat& q_in, const Mat& kv_in, const Params& p,
                         const std::string& name, bool causal, bool use_rotary) {
  const int d = p.dim;
  const int hd = d / p.heads;
  const int tq = static_cast<int>(q_in.size());
  const int tk = static_cast<int>(kv_in.size());
  const int kv_dim = static_cast<int>(kv_in[0].size());

  auto mat = [&](const std::string& n, int rows, int cols) {
    return as_mat(p.flat.at(n), rows, cols);
  };
  Mat q = ref_linear(q_in, mat(name + ".wq.w", d, d), p.flat.at(name + ".wq.b"));
  Mat k = ref_linear(kv_in, mat(name + ".wk.w", kv_dim, d), p.flat.at(name + ".wk.b"));
  Mat v = ref_linear(kv_in, mat(name + ".wv.w", kv_dim, d), p.flat.at(name + ".wv.b"));
  if (use_rotary) {
    ref_rotary(q, p.heads);
    ref_rotary(k, p.heads);
  }
  Mat ctx(tq, std::vector<double>(d, 0.0));
  for (int h = 0; h < p.heads; ++h) {
    for (int i = 0; i < tq; ++i) {
      std::vector<double> scores(tk, 0.0);
      double mx = -1e300;
      const int jmax = causal ? i + 1 : tk;
      for (int j = 0; j < jmax; ++j) {
        double acc = 0.0;
        for (int e = 0; e < hd; ++e) acc += q[i][h * hd + e] * k[j][h * hd + e];
        scores[j] = acc / std::sqrt(static_cast<double>(hd));
        if (scores[j] > mx) mx = scores[j];
      }
      double z = 0.0;
      for (int j = 0; j < jmax; ++j) {
        scores[j] = std::exp(scores[j] - mx);
        z += scores[j];
      }
      for (int j = 0; j < jmax; ++j) {
        const double w = scores[j] / z;
        for (int e = 0; e < hd; ++e) ctx[i][h * hd + e] += w * v[j][h * hd + e];
      }
    }
  }
  return ref_linear(ctx, mat(name + ".wo.w", d, d), p.flat.at(name + ".wo.b"));
}

// One block: h = x + attn(rmsnorm(x)); optional h += cross(rmsnorm(h), enc);
// out = h + ffn(rmsnorm(h)).
inline Mat forward_block(const Mat& x, const Params& p, const Mat* enc = nullptr) {
  const int t = static_cast<int>(x.size());
  const int d = p.dim;
  auto mat = [&](const std::string& name, int rows, int cols) {
    return as_mat(p.flat.at(name), rows, cols);
  };
  auto vec = [&](const std::string& name) { return p.flat.at(name); };

  Mat n1 = ref_rmsnorm(x, vec(p.prefix + ".norm1.g"));
  Mat attn_out = ref_attention(n1, n1, p, p.prefix + ".attn", p.causal, true);
  Mat h1 = x;
  for (int i = 0; i < t; ++i)
    for (int j = 0; j < d; ++j) h1[i][j] += attn_out[i][j];

  if (p.cross) {
    Mat nc = ref_rmsnorm(h1, vec(p.prefix + ".normc.g"));
    Mat cross_out = ref_attention(nc, *enc, p, p.prefix + ".cross", false, false);
    for (int i = 0; i < t; ++i)
      for (int j = 0; j < d; ++j) h1[i][j] += cross_out[i][j];
  }

  Mat n2 = ref_rmsnorm(h1, vec(p.prefix + ".norm2.g"));
  Mat f1 = ref_linear(n2, mat(p.prefix + ".ffn.w1.w", d, d * p.ffn_mult), vec(p.prefix + ".ffn.w1.b"));
  for (auto& row : f1)
    for (double& val : row) val = 0.5 * val * (1.0 + std::erf(val * 0.7071067811865475244));
  Mat f2 = ref_linear(f1, mat(p.prefix + ".ffn.w2.w", d * p.ffn_mult, d), vec(p.prefix + ".ffn.w2.b"));
  Mat out = h1;
  for (int i = 0; i < t; ++i)
    for (int j = 0; j < d; ++j) out[i][j] += f2[i][j];
  return out;
}

}  // namespace refblock
