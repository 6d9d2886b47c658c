#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "covomix/tensor.hpp"
#include "covomix/transformer.hpp"

namespace covomix::acoustic {

// single: one talker, one context/stream.
// mix:    two contexts/streams, one mixed mel out.
// stereo: same trunk as mix, output head widened to two per-talker mels;
//         the noisy state enters through its channel sum so the first input
//         layer is identical to the mix variant.
enum class Variant { single = 1, mix = 2, stereo = 3 };

Variant variant_from_string(const std::string& s);
std::string variant_to_string(Variant v);

struct AcousticConfig {
  Variant variant = Variant::mix;
  int layers = 8;
  int dim = 1024;
  int heads = 8;
  int ffn_mult = 4;
  int n_mels = 80;
  int semantic_vocab = 0;
  int emb_dim = 32;
  double sigma_min = 1e-4;

  int n_streams() const { return variant == Variant::single ? 1 : 2; }
  int out_width() const { return variant == Variant::stereo ? 2 * n_mels : n_mels; }
  int in_width() const { return n_mels + n_streams() * (n_mels + emb_dim); }
  void validate() const;
};

// One flow-matching training instance. Frame counts must agree everywhere;
// contexts are zeroed on masked frames.
struct CfmSample {
  nn::Tensor target;                    // [frames × out_width]
  std::vector<bool> mask;               // true = frame is to be predicted
  std::vector<nn::Tensor> ctx;          // per stream, [frames × n_mels]
  std::vector<std::vector<int>> tokens; // per stream, one id per frame
};

// Per-sample stochastic draws, split out so losses are replayable.
struct CfmDraw {
  double t = 0.0;
  nn::Tensor noise;  // [frames × out_width]
  bool drop_cond = false;
};

struct GuidanceConfig {
  double p_uncond = 0.3;
  double alpha = 0.7;
};

// w = (1 - (1 - sigma_min)·t)·noise + t·target, elementwise. t in [0,1].
nn::Tensor sample_flow_point(const nn::Tensor& target, const nn::Tensor& noise, double t,
                             double sigma_min);

// (1 + alpha)·v_cond − alpha·v_uncond, elementwise.
nn::Tensor guided_field(const nn::Tensor& v_cond, const nn::Tensor& v_uncond, double alpha);

// Contiguous mask over a span of uniform fraction in [lo, hi] of `frames`;
// always >= 1 masked frame and, when the span is partial, >= 1 unmasked.
std::vector<bool> make_training_mask(int frames, Rng& rng, double lo = 0.7, double hi = 1.0);

// Explicit-Euler (or midpoint) integration of dφ/dt = field(φ, t) from t=0
// to 1. After every step the rows where mask is false are overwritten with
// the matching `prompt` rows, so the prompt region passes through bitwise.
nn::Tensor integrate_flow(const std::function<nn::Tensor(const nn::Tensor&, double)>& field,
                          nn::Tensor state, int steps, bool midpoint,
                          const std::vector<bool>& mask, const nn::Tensor& prompt);

class AcousticModel {
 public:
  AcousticModel(AcousticConfig cfg, std::uint64_t init_seed);

  const AcousticConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return ps_; }
  const nn::ParamStore& params() const { return ps_; }

  // v_t(w, m_ctx, s_emb): transformer over the frame-wise concatenation
  // [w | ctx... | emb...] with adaptive-RMSNorm time conditioning. Null/empty
  // ctx and tokens mean "dropped" (zeros), the unconditional branch.
  nn::Tensor field(const nn::Tensor& w, const std::vector<nn::Tensor>* ctx,
                   const std::vector<std::vector<int>>* tokens, double t) const;

  CfmDraw draw(const CfmSample& sample, const GuidanceConfig& guidance, Rng& rng) const;

  // Masked regression of the flow residual for one sample and its draw:
  // mean over masked elements of |(target − (1−σ)·noise) − v|².
  nn::Tensor cfm_loss_given(const CfmSample& sample, const CfmDraw& d) const;

  // Mean over the batch with fresh draws from `rng`.
  nn::Tensor cfm_loss(const std::vector<CfmSample>& batch, const GuidanceConfig& guidance,
                      Rng& rng) const;

  // Classifier-free-guided sampling. `prompt` is the known output-space mel
  // on unmasked frames ([frames × out_width]); for the single and stereo
  // variants this is exactly the per-channel context, for the mix variant
  // it is the known mixed prompt.
  nn::Tensor ode_sample(const std::vector<std::vector<int>>& tokens,
                        const std::vector<nn::Tensor>& ctx, const nn::Tensor& prompt,
                        const std::vector<bool>& mask, int steps, double alpha,
                        std::uint64_t seed, bool midpoint = false) const;

  void save(const std::string& path) const;
  static AcousticModel load(const std::string& path);

 private:
  AcousticConfig cfg_;
  nn::ParamStore ps_;
};

}  // namespace covomix::acoustic
