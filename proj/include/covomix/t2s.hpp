#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "covomix/tensor.hpp"
#include "covomix/transformer.hpp"

namespace covomix::t2s {

// Text-to-semantic encoder-decoder. n_streams = 1 is the single-talker
// variant; n_streams = 2 decodes both speakers' token streams in lockstep
// from one shared trunk, with the decoder hidden state split into per-stream
// halves in front of the output heads.
struct T2SConfig {
  int enc_layers = 4;
  int dec_layers = 4;
  int enc_dim = 512;
  int dec_dim = 1024;
  int heads = 8;
  int ffn_mult = 4;
  int n_streams = 2;
  int text_vocab = 0;
  int semantic_vocab = 0;

  int stream_width() const { return dec_dim / n_streams; }
  void validate() const;
};

// Frame-synchronous per-speaker token streams of equal length.
struct StreamPair {
  std::vector<std::vector<int>> streams;

  int length() const { return streams.empty() ? 0 : static_cast<int>(streams[0].size()); }
  void validate(int n_streams) const;
};

struct SamplingConfig {
  int max_frames = 0;
  double temperature = 0.0;  // 0 = greedy
  std::uint64_t seed = 0;
  int silence_id = -1;       // stream stop token
  int silence_run = 25;      // consecutive silence frames on all streams
};

class T2SModel {
 public:
  T2SModel(T2SConfig cfg, std::uint64_t init_seed);

  const T2SConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return ps_; }
  const nn::ParamStore& params() const { return ps_; }

  // Teacher-forced per-stream logits, each [frames × K]. Teacher streams are
  // shifted right internally (BOS embedding row at position 0).
  std::vector<nn::Tensor> forward(const std::vector<int>& text_ids,
                                  const StreamPair& teacher) const;

  // Mean negative log-likelihood per valid (non-pad) token across streams.
  nn::Tensor loss(const std::vector<nn::Tensor>& logits, const StreamPair& targets,
                  const std::vector<bool>& valid) const;

  nn::Tensor teacher_forced_loss(const std::vector<int>& text_ids, const StreamPair& teacher,
                                 const std::vector<bool>& valid) const;

  // Fraction of valid positions where the argmax equals the target.
  double teacher_forced_accuracy(const std::vector<int>& text_ids,
                                 const StreamPair& teacher,
                                 const std::vector<bool>& valid) const;

  // Lockstep autoregressive decoding; stops at max_frames or after
  // silence_run consecutive silence tokens on every stream.
  StreamPair generate(const std::vector<int>& text_ids, const SamplingConfig& sampling) const;

  void save(const std::string& path) const;
  static T2SModel load(const std::string& path);

 private:
  nn::Tensor encode(const std::vector<int>& text_ids) const;
  std::vector<nn::Tensor> decode(const nn::Tensor& enc_out,
                                 const std::vector<std::vector<int>>& shifted) const;

  T2SConfig cfg_;
  nn::ParamStore ps_;
};

}  // namespace covomix::t2s
