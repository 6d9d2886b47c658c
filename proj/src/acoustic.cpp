#include "covomix/acoustic.hpp"

#include <algorithm>
#include <cmath>

#include "covomix/errors.hpp"

namespace covomix::acoustic {

Variant variant_from_string(const std::string& s) {
  if (s == "single") return Variant::single;
  if (s == "mix") return Variant::mix;
  if (s == "stereo") return Variant::stereo;
  throw UsageError("unknown acoustic variant '" + s + "' (expected single|mix|stereo)");
}

std::string variant_to_string(Variant v) {
  switch (v) {
    case Variant::single: return "single";
    case Variant::mix: return "mix";
    case Variant::stereo: return "stereo";
  }
  throw DataError("unreachable variant");
}

void AcousticConfig::validate() const {
  if (layers < 1) throw DataError("acoustic: need at least one layer");
  if (dim % heads != 0 || (dim / heads) % 2 != 0) {
    throw DataError("acoustic: dim must split into even-sized heads");
  }
  if (n_mels < 1 || emb_dim < 1) throw DataError("acoustic: bad feature dims");
  if (semantic_vocab < 1) throw DataError("acoustic: semantic vocab unset");
  if (sigma_min < 0.0 || sigma_min >= 1.0) throw DataError("acoustic: sigma_min out of range");
}

nn::Tensor sample_flow_point(const nn::Tensor& target, const nn::Tensor& noise, double t,
                             double sigma_min) {
  if (t < 0.0 || t > 1.0) throw DataError("sample_flow_point: t outside [0,1]");
  if (target.shape() != noise.shape()) {
    throw DimensionError("sample_flow_point: shape mismatch");
  }
  nn::Tensor a = nn::scale(noise, 1.0 - (1.0 - sigma_min) * t);
  return nn::add(a, nn::scale(target, t));
}

nn::Tensor guided_field(const nn::Tensor& v_cond, const nn::Tensor& v_uncond, double alpha) {
  if (v_cond.shape() != v_uncond.shape()) {
    throw DimensionError("guided_field: shape mismatch");
  }
  return nn::sub(nn::scale(v_cond, 1.0 + alpha), nn::scale(v_uncond, alpha));
}

std::vector<bool> make_training_mask(int frames, Rng& rng, double lo, double hi) {
  if (frames < 2) throw DataError("make_training_mask: need at least two frames");
  const double fraction = rng.uniform(lo, hi);
  int span = static_cast<int>(std::lround(fraction * frames));
  span = std::clamp(span, 1, frames);
  if (fraction < 1.0 && span == frames) span = frames - 1;
  const int start = span == frames ? 0 : rng.uniform_int(frames - span + 1);
  std::vector<bool> mask(static_cast<std::size_t>(frames), false);
  for (int i = start; i < start + span; ++i) mask[static_cast<std::size_t>(i)] = true;
  return mask;
}

nn::Tensor integrate_flow(const std::function<nn::Tensor(const nn::Tensor&, double)>& field,
                          nn::Tensor state, int steps, bool midpoint,
                          const std::vector<bool>& mask, const nn::Tensor& prompt) {
  if (steps < 1) throw DataError("integrate_flow: steps must be >= 1");
  if (prompt.shape() != state.shape()) {
    throw DimensionError("integrate_flow: prompt/state shape mismatch");
  }
  if (static_cast<int>(mask.size()) != state.shape()[0]) {
    throw DimensionError("integrate_flow: mask length mismatch");
  }
  const int cols = state.shape()[1];
  auto pin_prompt = [&](nn::Tensor& s) {
    for (int r = 0; r < s.shape()[0]; ++r) {
      if (mask[static_cast<std::size_t>(r)]) continue;
      for (int c = 0; c < cols; ++c) s.at(r, c) = prompt.at(r, c);
    }
  };
  const double dt = 1.0 / steps;
  pin_prompt(state);
  for (int k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) * dt;
    nn::Tensor v = field(state, t);
    if (midpoint) {
      nn::Tensor half = nn::add(state, nn::scale(v, 0.5 * dt));
      pin_prompt(half);
      v = field(half, t + 0.5 * dt);
    }
    state = nn::add(state, nn::scale(v, dt));
    pin_prompt(state);
  }
  return state;
}

namespace {

nn::BlockConfig block_cfg(const AcousticConfig& cfg) {
  nn::BlockConfig b;
  b.dim = cfg.dim;
  b.heads = cfg.heads;
  b.ffn_mult = cfg.ffn_mult;
  b.time_cond = true;
  return b;
}

}  // namespace

AcousticModel::AcousticModel(AcousticConfig cfg, std::uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(init_seed);
  ps_.create("sem_emb", nn::Tensor::fanin_uniform({cfg_.semantic_vocab, cfg_.emb_dim},
                                                  cfg_.emb_dim, rng));
  ps_.create("in.w", nn::Tensor::fanin_uniform({cfg_.in_width(), cfg_.dim}, cfg_.in_width(), rng));
  ps_.create("in.b", nn::Tensor::zeros({cfg_.dim}));
  for (int l = 0; l < cfg_.layers; ++l) {
    nn::init_block_params(ps_, "l" + std::to_string(l), block_cfg(cfg_), rng);
  }
  ps_.create("norm_out.g", nn::Tensor::full({cfg_.dim}, 1.0));
  ps_.create("norm_out.ts.w", nn::Tensor::zeros({cfg_.dim, cfg_.dim}));
  ps_.create("norm_out.ts.b", nn::Tensor::zeros({cfg_.dim}));
  ps_.create("norm_out.th.w", nn::Tensor::zeros({cfg_.dim, cfg_.dim}));
  ps_.create("norm_out.th.b", nn::Tensor::zeros({cfg_.dim}));
  // Zero-initialized head: the field starts at v ≡ 0 for a stable early loss.
  ps_.create("head.w", nn::Tensor::zeros({cfg_.dim, cfg_.out_width()}));
  ps_.create("head.b", nn::Tensor::zeros({cfg_.out_width()}));
}

nn::Tensor AcousticModel::field(const nn::Tensor& w, const std::vector<nn::Tensor>* ctx,
                                const std::vector<std::vector<int>>* tokens, double t) const {
  if (w.shape().size() != 2 || w.shape()[1] != cfg_.out_width()) {
    throw DimensionError("acoustic field: state width " + nn::shape_str(w.shape()));
  }
  const int frames = w.shape()[0];
  const int streams = cfg_.n_streams();
  if (ctx && static_cast<int>(ctx->size()) != streams) {
    throw DimensionError("acoustic field: context stream count");
  }
  if (tokens && static_cast<int>(tokens->size()) != streams) {
    throw DimensionError("acoustic field: token stream count");
  }

  // The state enters as its mixed view: stereo state collapses to the
  // channel sum so the input layer matches the mix variant.
  nn::Tensor x = w;
  if (cfg_.variant == Variant::stereo) {
    x = nn::add(nn::slice_cols(w, 0, cfg_.n_mels), nn::slice_cols(w, cfg_.n_mels, 2 * cfg_.n_mels));
  }
  for (int s = 0; s < streams; ++s) {
    if (ctx) {
      const nn::Tensor& c = (*ctx)[static_cast<std::size_t>(s)];
      if (c.shape() != nn::Shape{frames, cfg_.n_mels}) {
        throw DimensionError("acoustic field: context shape " + nn::shape_str(c.shape()));
      }
      x = nn::concat_cols(x, c);
    } else {
      x = nn::concat_cols(x, nn::Tensor::zeros({frames, cfg_.n_mels}));
    }
  }
  for (int s = 0; s < streams; ++s) {
    if (tokens) {
      const auto& ids = (*tokens)[static_cast<std::size_t>(s)];
      if (static_cast<int>(ids.size()) != frames) {
        throw DimensionError("acoustic field: token stream length");
      }
      x = nn::concat_cols(x, nn::embedding(ids, ps_.get("sem_emb")));
    } else {
      x = nn::concat_cols(x, nn::Tensor::zeros({frames, cfg_.emb_dim}));
    }
  }

  x = nn::linear(x, ps_.get("in.w"), ps_.get("in.b"));
  const nn::TimeEmbedding te = nn::time_embedding(t, cfg_.dim);
  const nn::BlockConfig bc = block_cfg(cfg_);
  for (int l = 0; l < cfg_.layers; ++l) {
    x = nn::transformer_block(x, ps_, "l" + std::to_string(l), bc, &te);
  }
  x = nn::cond_rmsnorm(x, ps_, "norm_out", &te);
  return nn::linear(x, ps_.get("head.w"), ps_.get("head.b"));
}

CfmDraw AcousticModel::draw(const CfmSample& sample, const GuidanceConfig& guidance,
                            Rng& rng) const {
  CfmDraw d;
  d.t = rng.uniform();
  d.noise = nn::Tensor::zeros(sample.target.shape());
  for (auto& v : d.noise.vec()) v = rng.normal();
  d.drop_cond = rng.bernoulli(guidance.p_uncond);
  return d;
}

nn::Tensor AcousticModel::cfm_loss_given(const CfmSample& sample, const CfmDraw& d) const {
  if (sample.target.shape().size() != 2 || sample.target.shape()[1] != cfg_.out_width()) {
    throw DimensionError("cfm loss: target width");
  }
  const int frames = sample.target.shape()[0];
  if (static_cast<int>(sample.mask.size()) != frames) {
    throw DimensionError("cfm loss: mask length");
  }
  bool any = false;
  for (bool b : sample.mask) any = any || b;
  if (!any) throw DataError("cfm loss: empty mask");

  nn::Tensor w = sample_flow_point(sample.target, d.noise, d.t, cfg_.sigma_min);
  nn::Tensor v = d.drop_cond ? field(w, nullptr, nullptr, d.t)
                             : field(w, &sample.ctx, &sample.tokens, d.t);
  // regression target: m − (1 − σ_min)·noise
  nn::Tensor residual = nn::sub(sample.target, nn::scale(d.noise, 1.0 - cfg_.sigma_min));
  return nn::masked_mse(v, residual, sample.mask);
}

nn::Tensor AcousticModel::cfm_loss(const std::vector<CfmSample>& batch,
                                   const GuidanceConfig& guidance, Rng& rng) const {
  if (batch.empty()) throw DataError("cfm loss: empty batch");
  nn::Tensor total;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    nn::Tensor l = cfm_loss_given(batch[i], draw(batch[i], guidance, rng));
    total = i == 0 ? l : nn::add(total, l);
  }
  return nn::scale(total, 1.0 / static_cast<double>(batch.size()));
}

nn::Tensor AcousticModel::ode_sample(const std::vector<std::vector<int>>& tokens,
                                     const std::vector<nn::Tensor>& ctx,
                                     const nn::Tensor& prompt, const std::vector<bool>& mask,
                                     int steps, double alpha, std::uint64_t seed,
                                     bool midpoint) const {
  nn::NoGradGuard ng;
  if (prompt.shape().size() != 2 || prompt.shape()[1] != cfg_.out_width()) {
    throw DimensionError("ode_sample: prompt width");
  }
  const int frames = prompt.shape()[0];
  Rng rng(seed);
  nn::Tensor state = nn::Tensor::zeros({frames, cfg_.out_width()});
  for (auto& v : state.vec()) v = rng.normal();

  auto guided = [&](const nn::Tensor& s, double t) {
    nn::Tensor v_cond = field(s, &ctx, &tokens, t);
    nn::Tensor v_uncond = field(s, nullptr, nullptr, t);
    return guided_field(v_cond, v_uncond, alpha);
  };
  return integrate_flow(guided, std::move(state), steps, midpoint, mask, prompt);
}

void AcousticModel::save(const std::string& path) const {
  std::map<std::string, nn::Tensor> tensors(ps_.all().begin(), ps_.all().end());
  tensors.emplace("meta",
                  nn::Tensor::from_data({9}, {static_cast<double>(static_cast<int>(cfg_.variant)),
                                              static_cast<double>(cfg_.layers),
                                              static_cast<double>(cfg_.dim),
                                              static_cast<double>(cfg_.heads),
                                              static_cast<double>(cfg_.ffn_mult),
                                              static_cast<double>(cfg_.n_mels),
                                              static_cast<double>(cfg_.semantic_vocab),
                                              static_cast<double>(cfg_.emb_dim),
                                              cfg_.sigma_min}));
  nn::save_checkpoint(path, tensors);
}

AcousticModel AcousticModel::load(const std::string& path) {
  auto tensors = nn::load_checkpoint(path);
  auto it = tensors.find("meta");
  if (it == tensors.end() || it->second.numel() != 9) {
    throw DataError("acoustic checkpoint: missing meta record in " + path);
  }
  const auto& m = it->second.vec();
  AcousticConfig cfg;
  cfg.variant = static_cast<Variant>(static_cast<int>(m[0]));
  cfg.layers = static_cast<int>(m[1]);
  cfg.dim = static_cast<int>(m[2]);
  cfg.heads = static_cast<int>(m[3]);
  cfg.ffn_mult = static_cast<int>(m[4]);
  cfg.n_mels = static_cast<int>(m[5]);
  cfg.semantic_vocab = static_cast<int>(m[6]);
  cfg.emb_dim = static_cast<int>(m[7]);
  cfg.sigma_min = m[8];
  AcousticModel model(cfg, 0);
  for (auto& [name, t] : model.ps_.all()) {
    auto found = tensors.find(name);
    if (found == tensors.end()) throw DataError("acoustic checkpoint: missing tensor " + name);
    if (found->second.shape() != t.shape()) {
      throw DataError("acoustic checkpoint: shape mismatch for " + name);
    }
    t.vec() = found->second.vec();
  }
  return model;
}

}  // namespace covomix::acoustic
