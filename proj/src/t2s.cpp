#include "covomix/t2s.hpp"

#include <algorithm>
#include <cmath>

#include "covomix/errors.hpp"

namespace covomix::t2s {

void T2SConfig::validate() const {
  if (enc_layers < 1 || dec_layers < 1) throw DataError("t2s: need at least one layer");
  if (n_streams < 1 || n_streams > 2) throw DataError("t2s: n_streams must be 1 or 2");
  if (dec_dim % n_streams != 0) {
    throw DataError("t2s: dec_dim must be divisible by the stream count");
  }
  if (enc_dim % heads != 0 || dec_dim % heads != 0) {
    throw DataError("t2s: dims must be divisible by the head count");
  }
  if ((dec_dim / heads) % 2 != 0 || (enc_dim / heads) % 2 != 0) {
    throw DataError("t2s: head dim must be even for rotary positions");
  }
  if (text_vocab < 1 || semantic_vocab < 1) throw DataError("t2s: vocab sizes unset");
}

void StreamPair::validate(int n_streams) const {
  if (static_cast<int>(streams.size()) != n_streams) {
    throw DimensionError("streams: expected " + std::to_string(n_streams) + " streams, got " +
                         std::to_string(streams.size()));
  }
  for (const auto& s : streams) {
    if (static_cast<int>(s.size()) != length()) {
      throw DimensionError("streams: lengths differ");
    }
  }
  if (length() == 0) throw DataError("streams: empty");
}

namespace {

nn::BlockConfig enc_block_cfg(const T2SConfig& cfg) {
  nn::BlockConfig b;
  b.dim = cfg.enc_dim;
  b.heads = cfg.heads;
  b.ffn_mult = cfg.ffn_mult;
  return b;
}

nn::BlockConfig dec_block_cfg(const T2SConfig& cfg) {
  nn::BlockConfig b;
  b.dim = cfg.dec_dim;
  b.heads = cfg.heads;
  b.ffn_mult = cfg.ffn_mult;
  b.causal = true;
  b.cross = true;
  b.cross_dim = cfg.enc_dim;
  return b;
}

}  // namespace

T2SModel::T2SModel(T2SConfig cfg, std::uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(init_seed);
  ps_.create("text_emb", nn::Tensor::fanin_uniform({cfg_.text_vocab, cfg_.enc_dim},
                                                   cfg_.enc_dim, rng));
  for (int l = 0; l < cfg_.enc_layers; ++l) {
    nn::init_block_params(ps_, "enc.l" + std::to_string(l), enc_block_cfg(cfg_), rng);
  }
  ps_.create("enc.norm_out.g", nn::Tensor::full({cfg_.enc_dim}, 1.0));

  // Shared semantic embedding table; the extra row is the BOS frame.
  ps_.create("sem_emb", nn::Tensor::fanin_uniform({cfg_.semantic_vocab + 1, cfg_.stream_width()},
                                                  cfg_.stream_width(), rng));
  ps_.create("fuse.w", nn::Tensor::fanin_uniform({cfg_.dec_dim, cfg_.dec_dim}, cfg_.dec_dim, rng));
  ps_.create("fuse.b", nn::Tensor::zeros({cfg_.dec_dim}));
  for (int l = 0; l < cfg_.dec_layers; ++l) {
    nn::init_block_params(ps_, "dec.l" + std::to_string(l), dec_block_cfg(cfg_), rng);
  }
  ps_.create("dec.norm_out.g", nn::Tensor::full({cfg_.dec_dim}, 1.0));
  for (int c = 0; c < cfg_.n_streams; ++c) {
    const std::string head = "head" + std::to_string(c);
    ps_.create(head + ".w", nn::Tensor::fanin_uniform({cfg_.stream_width(), cfg_.semantic_vocab},
                                                      cfg_.stream_width(), rng));
    ps_.create(head + ".b", nn::Tensor::zeros({cfg_.semantic_vocab}));
  }
}

nn::Tensor T2SModel::encode(const std::vector<int>& text_ids) const {
  if (text_ids.empty()) throw DataError("t2s: empty text");
  const nn::ParamStore& ps = ps_;
  nn::Tensor h = nn::embedding(text_ids, ps.get("text_emb"));
  const nn::BlockConfig bc = enc_block_cfg(cfg_);
  for (int l = 0; l < cfg_.enc_layers; ++l) {
    h = nn::transformer_block(h, ps, "enc.l" + std::to_string(l), bc);
  }
  return nn::rmsnorm(h, ps.get("enc.norm_out.g"));
}

std::vector<nn::Tensor> T2SModel::decode(const nn::Tensor& enc_out,
                                         const std::vector<std::vector<int>>& shifted) const {
  const nn::ParamStore& ps = ps_;
  // Per-frame decoder input: the streams' previous-token embeddings,
  // concatenated across streams and linearly fused.
  nn::Tensor x = nn::embedding(shifted[0], ps.get("sem_emb"));
  for (int c = 1; c < cfg_.n_streams; ++c) {
    x = nn::concat_cols(x, nn::embedding(shifted[static_cast<std::size_t>(c)], ps.get("sem_emb")));
  }
  x = nn::linear(x, ps.get("fuse.w"), ps.get("fuse.b"));

  const nn::BlockConfig bc = dec_block_cfg(cfg_);
  for (int l = 0; l < cfg_.dec_layers; ++l) {
    x = nn::transformer_block(x, ps, "dec.l" + std::to_string(l), bc, nullptr, &enc_out);
  }
  x = nn::rmsnorm(x, ps.get("dec.norm_out.g"));

  std::vector<nn::Tensor> logits;
  const int w = cfg_.stream_width();
  for (int c = 0; c < cfg_.n_streams; ++c) {
    nn::Tensor chunk = cfg_.n_streams == 1 ? x : nn::slice_cols(x, c * w, (c + 1) * w);
    const std::string head = "head" + std::to_string(c);
    logits.push_back(nn::linear(chunk, ps.get(head + ".w"), ps.get(head + ".b")));
  }
  return logits;
}

std::vector<nn::Tensor> T2SModel::forward(const std::vector<int>& text_ids,
                                          const StreamPair& teacher) const {
  teacher.validate(cfg_.n_streams);
  const int frames = teacher.length();
  const int bos = cfg_.semantic_vocab;  // extra embedding row
  std::vector<std::vector<int>> shifted(static_cast<std::size_t>(cfg_.n_streams));
  for (int c = 0; c < cfg_.n_streams; ++c) {
    auto& s = shifted[static_cast<std::size_t>(c)];
    s.resize(static_cast<std::size_t>(frames));
    s[0] = bos;
    for (int i = 1; i < frames; ++i) {
      const int prev = teacher.streams[static_cast<std::size_t>(c)][static_cast<std::size_t>(i) - 1];
      if (prev < 0 || prev >= cfg_.semantic_vocab) {
        throw DataError("t2s: teacher token out of range");
      }
      s[static_cast<std::size_t>(i)] = prev;
    }
  }
  return decode(encode(text_ids), shifted);
}

nn::Tensor T2SModel::loss(const std::vector<nn::Tensor>& logits, const StreamPair& targets,
                          const std::vector<bool>& valid) const {
  targets.validate(cfg_.n_streams);
  if (static_cast<int>(logits.size()) != cfg_.n_streams) {
    throw DimensionError("t2s loss: logits/stream count mismatch");
  }
  const int frames = targets.length();
  if (static_cast<int>(valid.size()) != frames) {
    throw DimensionError("t2s loss: valid mask length mismatch");
  }
  std::size_t n_valid = 0;
  for (bool b : valid) n_valid += b ? 1 : 0;
  if (n_valid == 0) throw DataError("t2s loss: no valid positions");

  // Mean per token over streams: sum stream NLLs (each a mean over the same
  // valid count) weighted equally.
  nn::Tensor total;
  for (int c = 0; c < cfg_.n_streams; ++c) {
    nn::Tensor l = nn::cross_entropy_rows(logits[static_cast<std::size_t>(c)],
                                          targets.streams[static_cast<std::size_t>(c)], valid);
    total = (c == 0) ? l : nn::add(total, l);
  }
  return nn::scale(total, 1.0 / cfg_.n_streams);
}

nn::Tensor T2SModel::teacher_forced_loss(const std::vector<int>& text_ids,
                                         const StreamPair& teacher,
                                         const std::vector<bool>& valid) const {
  return loss(forward(text_ids, teacher), teacher, valid);
}

double T2SModel::teacher_forced_accuracy(const std::vector<int>& text_ids,
                                         const StreamPair& teacher,
                                         const std::vector<bool>& valid) const {
  nn::NoGradGuard ng;
  const auto logits = forward(text_ids, teacher);
  std::size_t hit = 0, n = 0;
  for (int c = 0; c < cfg_.n_streams; ++c) {
    const nn::Tensor& lg = logits[static_cast<std::size_t>(c)];
    for (int i = 0; i < teacher.length(); ++i) {
      if (!valid[static_cast<std::size_t>(i)]) continue;
      int argmax = 0;
      for (int k = 1; k < cfg_.semantic_vocab; ++k) {
        if (lg.at(i, k) > lg.at(i, argmax)) argmax = k;
      }
      hit += argmax == teacher.streams[static_cast<std::size_t>(c)][static_cast<std::size_t>(i)] ? 1 : 0;
      n += 1;
    }
  }
  return n == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(n);
}

StreamPair T2SModel::generate(const std::vector<int>& text_ids,
                              const SamplingConfig& sampling) const {
  if (sampling.max_frames <= 0) throw DataError("t2s generate: max_frames must be positive");
  nn::NoGradGuard ng;
  Rng rng(sampling.seed);
  const nn::Tensor enc_out = encode(text_ids);
  const int bos = cfg_.semantic_vocab;

  StreamPair out;
  out.streams.assign(static_cast<std::size_t>(cfg_.n_streams), {});
  std::vector<std::vector<int>> shifted(static_cast<std::size_t>(cfg_.n_streams),
                                        std::vector<int>{bos});
  int silence_tail = 0;
  for (int step = 0; step < sampling.max_frames; ++step) {
    const auto logits = decode(enc_out, shifted);
    bool all_silent = true;
    for (int c = 0; c < cfg_.n_streams; ++c) {
      const nn::Tensor& lg = logits[static_cast<std::size_t>(c)];
      const int last = lg.rows() - 1;
      int token;
      if (sampling.temperature <= 0.0) {
        token = 0;
        for (int k = 1; k < cfg_.semantic_vocab; ++k) {
          if (lg.at(last, k) > lg.at(last, token)) token = k;
        }
      } else {
        // temperature softmax sampling
        double mx = lg.at(last, 0);
        for (int k = 1; k < cfg_.semantic_vocab; ++k) mx = std::max(mx, lg.at(last, k));
        std::vector<double> p(static_cast<std::size_t>(cfg_.semantic_vocab));
        double z = 0.0;
        for (int k = 0; k < cfg_.semantic_vocab; ++k) {
          p[static_cast<std::size_t>(k)] = std::exp((lg.at(last, k) - mx) / sampling.temperature);
          z += p[static_cast<std::size_t>(k)];
        }
        double u = rng.uniform() * z;
        token = cfg_.semantic_vocab - 1;
        for (int k = 0; k < cfg_.semantic_vocab; ++k) {
          u -= p[static_cast<std::size_t>(k)];
          if (u <= 0.0) {
            token = k;
            break;
          }
        }
      }
      out.streams[static_cast<std::size_t>(c)].push_back(token);
      shifted[static_cast<std::size_t>(c)].push_back(token);
      all_silent = all_silent && token == sampling.silence_id;
    }
    silence_tail = all_silent ? silence_tail + 1 : 0;
    if (sampling.silence_id >= 0 && silence_tail >= sampling.silence_run) break;
  }
  return out;
}

void T2SModel::save(const std::string& path) const {
  std::map<std::string, nn::Tensor> tensors(ps_.all().begin(), ps_.all().end());
  tensors.emplace("meta",
                  nn::Tensor::from_data({9}, {static_cast<double>(cfg_.enc_layers),
                                              static_cast<double>(cfg_.dec_layers),
                                              static_cast<double>(cfg_.enc_dim),
                                              static_cast<double>(cfg_.dec_dim),
                                              static_cast<double>(cfg_.heads),
                                              static_cast<double>(cfg_.ffn_mult),
                                              static_cast<double>(cfg_.n_streams),
                                              static_cast<double>(cfg_.text_vocab),
                                              static_cast<double>(cfg_.semantic_vocab)}));
  nn::save_checkpoint(path, tensors);
}

T2SModel T2SModel::load(const std::string& path) {
  auto tensors = nn::load_checkpoint(path);
  auto it = tensors.find("meta");
  if (it == tensors.end() || it->second.numel() != 9) {
    throw DataError("t2s checkpoint: missing meta record in " + path);
  }
  const auto& m = it->second.vec();
  T2SConfig cfg;
  cfg.enc_layers = static_cast<int>(m[0]);
  cfg.dec_layers = static_cast<int>(m[1]);
  cfg.enc_dim = static_cast<int>(m[2]);
  cfg.dec_dim = static_cast<int>(m[3]);
  cfg.heads = static_cast<int>(m[4]);
  cfg.ffn_mult = static_cast<int>(m[5]);
  cfg.n_streams = static_cast<int>(m[6]);
  cfg.text_vocab = static_cast<int>(m[7]);
  cfg.semantic_vocab = static_cast<int>(m[8]);
  T2SModel model(cfg, 0);
  for (auto& [name, t] : model.ps_.all()) {
    auto found = tensors.find(name);
    if (found == tensors.end()) throw DataError("t2s checkpoint: missing tensor " + name);
    if (found->second.shape() != t.shape()) {
      throw DataError("t2s checkpoint: shape mismatch for " + name);
    }
    t.vec() = found->second.vec();
  }
  return model;
}

}  // namespace covomix::t2s
