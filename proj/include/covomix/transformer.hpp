#pragma once

#include <string>

#include "covomix/tensor.hpp"

namespace covomix::nn {

// Sinusoidal features of a flow step t in [0,1]; deterministic in t.
struct TimeEmbedding {
  double t = 0.0;
  Tensor embedding;  // [1×dim]
};

TimeEmbedding time_embedding(double t, int dim);

struct BlockConfig {
  int dim = 0;
  int heads = 0;
  int ffn_mult = 4;
  bool causal = false;
  bool time_cond = false;  // adaptive RMSNorm driven by a TimeEmbedding
  bool cross = false;      // add a cross-attention sublayer
  int cross_dim = 0;       // key/value source width when cross is set
};

// Registers every parameter of one block under `prefix` (gains, attention
// and FFN projections, and the time-modulation maps when time_cond is set).
void init_block_params(ParamStore& ps, const std::string& prefix,
                       const BlockConfig& cfg, Rng& rng);

// Pre-norm block: x + attn(norm(x)), optional cross-attention sublayer,
// then x + ffn(norm(x)). Rotary positions are applied to self-attention
// queries/keys. When cfg.time_cond is set, `time` must be non-null and each
// norm is followed by (1 + scale(t))·x + shift(t).
Tensor transformer_block(const Tensor& x, const ParamStore& ps, const std::string& prefix,
                         const BlockConfig& cfg, const TimeEmbedding* time = nullptr,
                         const Tensor* cross_src = nullptr);

// Attention sublayer used by transformer_block; exposed for tests.
Tensor multi_head_attention(const Tensor& q_in, const Tensor& kv_in, const ParamStore& ps,
                            const std::string& prefix, int heads, bool causal,
                            bool rotary_positions);

// Norm + optional time modulation under `prefix` (".g", ".ts.*", ".th.*").
Tensor cond_rmsnorm(const Tensor& x, const ParamStore& ps, const std::string& prefix,
                    const TimeEmbedding* time);

}  // namespace covomix::nn
