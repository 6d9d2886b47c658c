#include "covomix/transformer.hpp"

#include <cmath>
#include <limits>

#include "covomix/errors.hpp"

namespace covomix::nn {

TimeEmbedding time_embedding(double t, int dim) {
  if (dim < 2 || dim % 2 != 0) {
    throw DimensionError("time_embedding: dim must be even and >= 2");
  }
  Tensor e = Tensor::zeros({1, dim});
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    // Frequencies span 1000 down to 0.1 so t in [0,1] is well resolved.
    const double w = 1000.0 * std::pow(10000.0, -static_cast<double>(i) / half);
    e.data()[2 * i] = std::sin(t * w);
    e.data()[2 * i + 1] = std::cos(t * w);
  }
  return TimeEmbedding{t, std::move(e)};
}

namespace {

void init_linear(ParamStore& ps, const std::string& name, int in, int out, Rng& rng,
                 bool zero = false) {
  if (zero) {
    ps.create(name + ".w", Tensor::zeros({in, out}));
    ps.create(name + ".b", Tensor::zeros({out}));
  } else {
    ps.create(name + ".w", Tensor::fanin_uniform({in, out}, in, rng));
    ps.create(name + ".b", Tensor::zeros({out}));
  }
}

void init_norm(ParamStore& ps, const std::string& prefix, int dim, bool time_cond) {
  ps.create(prefix + ".g", Tensor::full({dim}, 1.0));
  if (time_cond) {
    // Zero-initialized modulation: the block starts as a plain RMSNorm.
    ps.create(prefix + ".ts.w", Tensor::zeros({dim, dim}));
    ps.create(prefix + ".ts.b", Tensor::zeros({dim}));
    ps.create(prefix + ".th.w", Tensor::zeros({dim, dim}));
    ps.create(prefix + ".th.b", Tensor::zeros({dim}));
  }
}

std::vector<double> causal_mask(int n) {
  std::vector<double> m(static_cast<std::size_t>(n) * n, 0.0);
  const double ninf = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) m[static_cast<std::size_t>(i) * n + j] = ninf;
  }
  return m;
}

}  // namespace

Tensor cond_rmsnorm(const Tensor& x, const ParamStore& ps, const std::string& prefix,
                    const TimeEmbedding* time) {
  Tensor y = rmsnorm(x, ps.get(prefix + ".g"));
  if (time) {
    Tensor s = linear(time->embedding, ps.get(prefix + ".ts.w"), ps.get(prefix + ".ts.b"));
    Tensor h = linear(time->embedding, ps.get(prefix + ".th.w"), ps.get(prefix + ".th.b"));
    y = affine_mod(y, s, h);
  }
  return y;
}

Tensor multi_head_attention(const Tensor& q_in, const Tensor& kv_in, const ParamStore& ps,
                            const std::string& prefix, int heads, bool causal,
                            bool rotary_positions) {
  const int dim = ps.get(prefix + ".wq.w").shape()[1];
  if (dim % heads != 0) {
    throw DimensionError("attention: dim " + std::to_string(dim) +
                         " not divisible by heads " + std::to_string(heads));
  }
  const int hd = dim / heads;
  Tensor q = linear(q_in, ps.get(prefix + ".wq.w"), ps.get(prefix + ".wq.b"));
  Tensor k = linear(kv_in, ps.get(prefix + ".wk.w"), ps.get(prefix + ".wk.b"));
  Tensor v = linear(kv_in, ps.get(prefix + ".wv.w"), ps.get(prefix + ".wv.b"));
  if (rotary_positions) {
    q = rotary(q, heads);
    k = rotary(k, heads);
  }
  const int tq = q.shape()[0];
  const int tk = k.shape()[0];
  std::vector<double> mask;
  if (causal) {
    if (tq != tk) throw DimensionError("attention: causal requires square scores");
    mask = causal_mask(tq);
  }
  Tensor ctx;
  for (int h = 0; h < heads; ++h) {
    Tensor qh = slice_cols(q, h * hd, (h + 1) * hd);
    Tensor kh = slice_cols(k, h * hd, (h + 1) * hd);
    Tensor vh = slice_cols(v, h * hd, (h + 1) * hd);
    Tensor scores = scale(matmul_nt(qh, kh), 1.0 / std::sqrt(static_cast<double>(hd)));
    Tensor probs = softmax_rows(scores, causal ? &mask : nullptr);
    Tensor ctx_h = matmul(probs, vh);
    ctx = (h == 0) ? ctx_h : concat_cols(ctx, ctx_h);
  }
  (void)tk;
  return linear(ctx, ps.get(prefix + ".wo.w"), ps.get(prefix + ".wo.b"));
}

void init_block_params(ParamStore& ps, const std::string& prefix, const BlockConfig& cfg,
                       Rng& rng) {
  if (cfg.dim % cfg.heads != 0) {
    throw DimensionError("block: dim not divisible by head count");
  }
  init_norm(ps, prefix + ".norm1", cfg.dim, cfg.time_cond);
  init_linear(ps, prefix + ".attn.wq", cfg.dim, cfg.dim, rng);
  init_linear(ps, prefix + ".attn.wk", cfg.dim, cfg.dim, rng);
  init_linear(ps, prefix + ".attn.wv", cfg.dim, cfg.dim, rng);
  init_linear(ps, prefix + ".attn.wo", cfg.dim, cfg.dim, rng);
  if (cfg.cross) {
    const int src = cfg.cross_dim > 0 ? cfg.cross_dim : cfg.dim;
    init_norm(ps, prefix + ".normc", cfg.dim, cfg.time_cond);
    init_linear(ps, prefix + ".cross.wq", cfg.dim, cfg.dim, rng);
    init_linear(ps, prefix + ".cross.wk", src, cfg.dim, rng);
    init_linear(ps, prefix + ".cross.wv", src, cfg.dim, rng);
    init_linear(ps, prefix + ".cross.wo", cfg.dim, cfg.dim, rng);
  }
  init_norm(ps, prefix + ".norm2", cfg.dim, cfg.time_cond);
  init_linear(ps, prefix + ".ffn.w1", cfg.dim, cfg.dim * cfg.ffn_mult, rng);
  init_linear(ps, prefix + ".ffn.w2", cfg.dim * cfg.ffn_mult, cfg.dim, rng);
}

Tensor transformer_block(const Tensor& x, const ParamStore& ps, const std::string& prefix,
                         const BlockConfig& cfg, const TimeEmbedding* time,
                         const Tensor* cross_src) {
  if (x.shape().size() != 2 || x.shape()[1] != cfg.dim) {
    throw DimensionError("block: input " + shape_str(x.shape()) + " vs dim " +
                         std::to_string(cfg.dim));
  }
  if (cfg.time_cond && time == nullptr) {
    throw DimensionError("block: time conditioning configured but no embedding given");
  }
  const TimeEmbedding* te = cfg.time_cond ? time : nullptr;

  Tensor n1 = cond_rmsnorm(x, ps, prefix + ".norm1", te);
  Tensor h = add(x, multi_head_attention(n1, n1, ps, prefix + ".attn", cfg.heads,
                                         cfg.causal, /*rotary_positions=*/true));
  if (cfg.cross) {
    if (cross_src == nullptr) {
      throw DimensionError("block: cross-attention configured but no source given");
    }
    Tensor nc = cond_rmsnorm(h, ps, prefix + ".normc", te);
    h = add(h, multi_head_attention(nc, *cross_src, ps, prefix + ".cross", cfg.heads,
                                    /*causal=*/false, /*rotary_positions=*/false));
  }
  Tensor n2 = cond_rmsnorm(h, ps, prefix + ".norm2", te);
  Tensor f1 = gelu(linear(n2, ps.get(prefix + ".ffn.w1.w"), ps.get(prefix + ".ffn.w1.b")));
  Tensor f2 = linear(f1, ps.get(prefix + ".ffn.w2.w"), ps.get(prefix + ".ffn.w2.b"));
  return add(h, f2);
}

}  // namespace covomix::nn
