#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include "covomix/acoustic.hpp"
#include "covomix/errors.hpp"
#include "covomix/manifest.hpp"
#include "covomix/pipeline.hpp"
#include "covomix/t2s.hpp"
#include "covomix/tokenizer.hpp"
#include "pipeline_util.hpp"

namespace covomix::pipeline {

namespace fs = std::filesystem;
using detail::join_path;

namespace {

constexpr std::uint64_t kShuffleTag = 0x5f5f;
constexpr std::uint64_t kDrawTag = 0xac00;
constexpr std::uint64_t kValTag = 0x7a11;

struct LossCsv {
  std::string path;

  void start_fresh() const {
    std::ofstream os(path);
    os << "epoch,step,train_loss,valid_loss\n";
  }
  void append(int epoch, long step, double train, double valid) const {
    std::ofstream os(path, std::ios::app);
    os << epoch << "," << step << "," << train << "," << valid << "\n";
  }
};

// train/valid split: every k-th item is validation; k from valid_frac.
void split_items(std::size_t n, double valid_frac, std::vector<std::size_t>& train,
                 std::vector<std::size_t>& valid) {
  train.clear();
  valid.clear();
  if (valid_frac <= 0.0 || n < 4) {
    for (std::size_t i = 0; i < n; ++i) train.push_back(i);
    valid = train;
    return;
  }
  const std::size_t k = std::max<std::size_t>(2, static_cast<std::size_t>(std::lround(1.0 / valid_frac)));
  for (std::size_t i = 0; i < n; ++i) {
    if (i % k == k - 1) {
      valid.push_back(i);
    } else {
      train.push_back(i);
    }
  }
  if (valid.empty()) valid = train;
}

// ----------------------------- text-to-semantic -----------------------------

struct T2SItem {
  std::vector<int> text_ids;
  t2s::StreamPair streams;
  std::vector<bool> valid;
};

std::vector<T2SItem> load_t2s_items(const std::string& out_dir,
                                    const std::vector<ManifestEntry>& entries,
                                    const tok::TextVocab& vocab, int n_streams,
                                    int silence_id) {
  std::vector<T2SItem> items;
  for (const auto& e : entries) {
    const bool is_dialogue = e.kind == "dialogue" || e.kind == "sim_dialogue";
    const bool is_monologue = e.kind == "monologue" || e.kind == "monologue_short";
    if (n_streams == 1 && !is_monologue) continue;
    if (!is_dialogue && !is_monologue) continue;
    if (e.tokens_ch.empty()) {
      throw DataError("train-t2s: manifest entry '" + e.id +
                      "' has no token files (run fit-codebook first)");
    }
    T2SItem item;
    item.text_ids = tok::tokenize_text(e.text, vocab).ids;
    for (const auto& rel : e.tokens_ch) {
      item.streams.streams.push_back(tok::read_tokens(join_path(out_dir, rel)).ids);
    }
    while (static_cast<int>(item.streams.streams.size()) < n_streams) {
      // a silent second talker fills the missing stream
      item.streams.streams.push_back(
          std::vector<int>(item.streams.streams[0].size(), silence_id));
    }
    if (static_cast<int>(item.streams.streams.size()) != n_streams) continue;
    item.streams.validate(n_streams);
    item.valid.assign(static_cast<std::size_t>(item.streams.length()), true);
    items.push_back(std::move(item));
  }
  return items;
}

double t2s_eval_loss(const t2s::T2SModel& model, const std::vector<T2SItem>& items,
                     const std::vector<std::size_t>& subset) {
  nn::NoGradGuard ng;
  double acc = 0.0;
  for (std::size_t i : subset) {
    acc += model.teacher_forced_loss(items[i].text_ids, items[i].streams, items[i].valid).value();
  }
  return acc / static_cast<double>(subset.size());
}

// ----------------------------- acoustic -----------------------------

struct AcousticItem {
  nn::Tensor target;                    // [frames × out_width]
  std::vector<nn::Tensor> channel_mels; // per stream, [frames × n_mels]
  std::vector<std::vector<int>> tokens;
  int frames = 0;
};

std::vector<AcousticItem> load_acoustic_items(const std::string& out_dir,
                                              const std::vector<ManifestEntry>& entries,
                                              acoustic::Variant variant) {
  std::vector<AcousticItem> items;
  for (const auto& e : entries) {
    const bool is_dialogue = e.kind == "dialogue" || e.kind == "sim_dialogue";
    const bool is_monologue = e.kind == "monologue" || e.kind == "monologue_short";
    const bool want = variant == acoustic::Variant::single ? is_monologue : is_dialogue;
    if (!want) continue;
    if (e.tokens_ch.empty()) {
      throw DataError("train-acoustic: manifest entry '" + e.id +
                      "' has no token files (run fit-codebook first)");
    }
    AcousticItem item;
    for (const auto& rel : e.mel_ch) {
      item.channel_mels.push_back(detail::mel_to_tensor(dsp::read_mel(join_path(out_dir, rel))));
    }
    for (const auto& rel : e.tokens_ch) {
      item.tokens.push_back(tok::read_tokens(join_path(out_dir, rel)).ids);
    }
    item.frames = item.channel_mels[0].shape()[0];
    for (const auto& m : item.channel_mels) {
      if (m.shape()[0] != item.frames) throw DataError("train-acoustic: channel frame mismatch");
    }
    for (const auto& t : item.tokens) {
      if (static_cast<int>(t.size()) != item.frames) {
        throw DataError("train-acoustic: token/mel frame mismatch for '" + e.id + "'");
      }
    }
    switch (variant) {
      case acoustic::Variant::single:
        item.target = item.channel_mels[0];
        break;
      case acoustic::Variant::mix: {
        if (e.mel_mix.empty()) throw DataError("train-acoustic: entry lacks mixed mel");
        item.target = detail::mel_to_tensor(dsp::read_mel(join_path(out_dir, e.mel_mix)));
        break;
      }
      case acoustic::Variant::stereo:
        item.target = nn::concat_cols(item.channel_mels[0], item.channel_mels[1]);
        break;
    }
    if (item.target.shape()[0] != item.frames) {
      throw DataError("train-acoustic: target frame mismatch for '" + e.id + "'");
    }
    items.push_back(std::move(item));
  }
  return items;
}

acoustic::CfmSample build_cfm_sample(const AcousticItem& item, Rng& rng) {
  acoustic::CfmSample s;
  s.target = item.target;
  s.mask = acoustic::make_training_mask(item.frames, rng);
  for (const auto& mel : item.channel_mels) {
    nn::Tensor ctx = nn::Tensor::from_data(mel.shape(), mel.vec());
    for (int f = 0; f < item.frames; ++f) {
      if (!s.mask[static_cast<std::size_t>(f)]) continue;
      for (int m = 0; m < ctx.shape()[1]; ++m) ctx.at(f, m) = 0.0;
    }
    s.ctx.push_back(std::move(ctx));
  }
  s.tokens = item.tokens;
  return s;
}

}  // namespace

int run_train_t2s(const cfg::RunConfig& config) {
  const std::string out_dir = config.get_dir("out_dir");
  const int n_streams = config.get_str("variant", "mix") == "single" ? 1 : 2;
  const std::uint64_t seed = config.get_u64("seed", 0);
  const int epochs = config.get_int("epochs", 10);
  const int batch = std::max(1, config.get_int("batch", 2));
  const long max_steps = config.get_int("max_steps", 0);
  const double valid_frac = config.get_f64("valid_frac", 0.0);
  nn::AdamConfig adam_cfg;
  adam_cfg.lr = config.get_f64("lr", 1e-4);

  const tok::TextVocab vocab = tok::TextVocab::load(
      config.has("vocab") ? config.get_path("vocab") : join_path(out_dir, "vocab.txt"));
  const tok::Codebook cb = tok::Codebook::load(
      config.has("codebook") ? config.get_path("codebook") : join_path(out_dir, "codebook.bin"));
  const auto entries = read_manifest(join_path(out_dir, "manifest.jsonl"));
  const auto items = load_t2s_items(out_dir, entries, vocab, n_streams, cb.silence_id);
  if (items.empty()) throw DataError("train-t2s: no usable training samples in manifest");

  t2s::T2SConfig mc;
  mc.enc_layers = config.get_int("enc_layers", 4);
  mc.dec_layers = config.get_int("dec_layers", 4);
  mc.enc_dim = config.get_int("enc_dim", 128);
  mc.dec_dim = config.get_int("dec_dim", 128);
  mc.heads = config.get_int("heads", 2);
  mc.ffn_mult = config.get_int("ffn_mult", 4);
  mc.n_streams = n_streams;
  mc.text_vocab = vocab.size();
  mc.semantic_vocab = cb.size();
  t2s::T2SModel model(mc, Rng::mix(seed, 0x7251));

  const std::string ckpt = config.get_str("t2s_ckpt", join_path(out_dir, "t2s_" +
                                          std::string(n_streams == 1 ? "single" : "mix") + ".ckpt"));
  const std::string state_path = ckpt + ".state";
  const LossCsv csv{ckpt + ".loss.csv"};

  std::vector<std::size_t> train_idx, valid_idx;
  split_items(items.size(), valid_frac, train_idx, valid_idx);

  nn::AdamState adam;
  int start_epoch = 0;
  long global_step = 0;
  double best_valid = std::numeric_limits<double>::infinity();
  std::map<std::string, double> counters;
  if (config.get_bool("resume", false) &&
      nn::load_train_state(state_path, model.params(), adam, counters)) {
    start_epoch = static_cast<int>(counters["epoch_done"]);
    global_step = static_cast<long>(counters["global_step"]);
    best_valid = counters["best_valid"];
    std::printf("train-t2s: resumed at epoch %d (step %ld)\n", start_epoch, global_step);
  } else {
    csv.start_fresh();
  }

  if (epochs == 0 && start_epoch == 0) {
    model.save(ckpt);
    nn::save_train_state(state_path, model.params(), adam,
                         {{"epoch_done", 0.0},
                          {"global_step", 0.0},
                          {"best_valid", best_valid}});
    std::printf("train-t2s: 0 epochs requested; wrote initialization checkpoint\n");
    return 0;
  }

  for (int epoch = start_epoch; epoch < epochs; ++epoch) {
    if (max_steps > 0 && global_step >= max_steps) break;
    Rng shuffle_rng(Rng::mix(Rng::mix(seed, kShuffleTag), static_cast<std::uint64_t>(epoch)));
    std::vector<std::size_t> order = train_idx;
    shuffle_rng.shuffle(order);

    double train_loss_acc = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(batch)) {
      if (max_steps > 0 && global_step >= max_steps) break;
      model.params().zero_grad();
      nn::Tensor total;
      int in_batch = 0;
      for (std::size_t i = b; i < std::min(order.size(), b + static_cast<std::size_t>(batch)); ++i) {
        const T2SItem& item = items[order[i]];
        nn::Tensor l = model.teacher_forced_loss(item.text_ids, item.streams, item.valid);
        total = in_batch == 0 ? l : nn::add(total, l);
        ++in_batch;
      }
      nn::Tensor loss = nn::scale(total, 1.0 / in_batch);
      if (!std::isfinite(loss.value())) {
        throw NumericError("train-t2s: non-finite loss at step " + std::to_string(global_step) +
                           "; last good checkpoint kept at " + ckpt);
      }
      nn::backward(loss);
      nn::adam_step(model.params(), adam, adam_cfg);
      ++global_step;
      train_loss_acc += loss.value();
      ++n_batches;
    }
    const double train_loss = n_batches ? train_loss_acc / static_cast<double>(n_batches) : 0.0;
    const double valid_loss = t2s_eval_loss(model, items, valid_idx);
    csv.append(epoch + 1, global_step, train_loss, valid_loss);
    if (valid_loss < best_valid) {
      best_valid = valid_loss;
      model.save(ckpt);
    }
    nn::save_train_state(state_path, model.params(), adam,
                         {{"epoch_done", static_cast<double>(epoch + 1)},
                          {"global_step", static_cast<double>(global_step)},
                          {"best_valid", best_valid}});
  }
  std::printf("train-t2s: %ld steps, best validation loss %.6f, checkpoint %s\n", global_step,
              best_valid, ckpt.c_str());
  return 0;
}

int run_train_acoustic(const cfg::RunConfig& config) {
  const std::string out_dir = config.get_dir("out_dir");
  const acoustic::Variant variant =
      acoustic::variant_from_string(config.get_str("variant", "mix"));
  const std::uint64_t seed = config.get_u64("seed", 0);
  const int epochs = config.get_int("epochs", 100);
  const int batch = std::max(1, config.get_int("batch", 2));
  const long max_steps = config.get_int("max_steps", 0);
  const double valid_frac = config.get_f64("valid_frac", 0.0);
  nn::AdamConfig adam_cfg;
  adam_cfg.lr = config.get_f64("lr", 1e-4);
  acoustic::GuidanceConfig guidance;
  guidance.p_uncond = config.get_f64("p_uncond", 0.3);

  const tok::Codebook cb = tok::Codebook::load(
      config.has("codebook") ? config.get_path("codebook") : join_path(out_dir, "codebook.bin"));
  const auto entries = read_manifest(join_path(out_dir, "manifest.jsonl"));
  const auto items = load_acoustic_items(out_dir, entries, variant);
  if (items.empty()) throw DataError("train-acoustic: no usable training samples in manifest");

  acoustic::AcousticConfig mc;
  mc.variant = variant;
  mc.layers = config.get_int("layers", 2);
  mc.dim = config.get_int("dim", 128);
  mc.heads = config.get_int("heads", 2);
  mc.ffn_mult = config.get_int("ffn_mult", 4);
  mc.n_mels = items[0].channel_mels[0].shape()[1];
  mc.semantic_vocab = cb.size();
  mc.emb_dim = config.get_int("emb_dim", 32);
  mc.sigma_min = config.get_f64("sigma_min", 1e-4);
  acoustic::AcousticModel model(mc, Rng::mix(seed, 0xacc0));

  const std::string ckpt = config.get_str(
      "acoustic_ckpt", join_path(out_dir, "acoustic_" + acoustic::variant_to_string(variant) + ".ckpt"));
  const std::string state_path = ckpt + ".state";
  const LossCsv csv{ckpt + ".loss.csv"};

  std::vector<std::size_t> train_idx, valid_idx;
  split_items(items.size(), valid_frac, train_idx, valid_idx);

  nn::AdamState adam;
  int start_epoch = 0;
  long global_step = 0;
  double best_valid = std::numeric_limits<double>::infinity();
  std::map<std::string, double> counters;
  if (config.get_bool("resume", false) &&
      nn::load_train_state(state_path, model.params(), adam, counters)) {
    start_epoch = static_cast<int>(counters["epoch_done"]);
    global_step = static_cast<long>(counters["global_step"]);
    best_valid = counters["best_valid"];
    std::printf("train-acoustic: resumed at epoch %d (step %ld)\n", start_epoch, global_step);
  } else {
    csv.start_fresh();
  }

  if (epochs == 0 && start_epoch == 0) {
    model.save(ckpt);
    nn::save_train_state(state_path, model.params(), adam,
                         {{"epoch_done", 0.0},
                          {"global_step", 0.0},
                          {"best_valid", best_valid}});
    std::printf("train-acoustic: 0 epochs requested; wrote initialization checkpoint\n");
    return 0;
  }

  auto eval_loss = [&](int epoch) {
    nn::NoGradGuard ng;
    Rng val_rng(Rng::mix(Rng::mix(seed, kValTag), static_cast<std::uint64_t>(epoch)));
    double acc = 0.0;
    for (std::size_t i : valid_idx) {
      acoustic::CfmSample s = build_cfm_sample(items[i], val_rng);
      acc += model.cfm_loss_given(s, model.draw(s, guidance, val_rng)).value();
    }
    return acc / static_cast<double>(valid_idx.size());
  };

  for (int epoch = start_epoch; epoch < epochs; ++epoch) {
    if (max_steps > 0 && global_step >= max_steps) break;
    Rng shuffle_rng(Rng::mix(Rng::mix(seed, kShuffleTag), static_cast<std::uint64_t>(epoch)));
    std::vector<std::size_t> order = train_idx;
    shuffle_rng.shuffle(order);

    double train_loss_acc = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(batch)) {
      if (max_steps > 0 && global_step >= max_steps) break;
      model.params().zero_grad();
      nn::Tensor total;
      int in_batch = 0;
      for (std::size_t i = b; i < std::min(order.size(), b + static_cast<std::size_t>(batch)); ++i) {
        // Every stochastic draw comes from a per-(epoch, item) generator so
        // resumed runs replay the exact same batches.
        Rng draw_rng(Rng::mix(Rng::mix(Rng::mix(seed, kDrawTag), static_cast<std::uint64_t>(epoch)),
                              static_cast<std::uint64_t>(order[i])));
        acoustic::CfmSample s = build_cfm_sample(items[order[i]], draw_rng);
        nn::Tensor l = model.cfm_loss_given(s, model.draw(s, guidance, draw_rng));
        total = in_batch == 0 ? l : nn::add(total, l);
        ++in_batch;
      }
      nn::Tensor loss = nn::scale(total, 1.0 / in_batch);
      if (!std::isfinite(loss.value())) {
        throw NumericError("train-acoustic: non-finite loss at step " +
                           std::to_string(global_step) + "; last good checkpoint kept at " + ckpt);
      }
      nn::backward(loss);
      nn::adam_step(model.params(), adam, adam_cfg);
      ++global_step;
      train_loss_acc += loss.value();
      ++n_batches;
    }
    const double train_loss = n_batches ? train_loss_acc / static_cast<double>(n_batches) : 0.0;
    const double valid_loss = eval_loss(epoch);
    csv.append(epoch + 1, global_step, train_loss, valid_loss);
    if (valid_loss < best_valid) {
      best_valid = valid_loss;
      model.save(ckpt);
    }
    nn::save_train_state(state_path, model.params(), adam,
                         {{"epoch_done", static_cast<double>(epoch + 1)},
                          {"global_step", static_cast<double>(global_step)},
                          {"best_valid", best_valid}});
  }
  std::printf("train-acoustic[%s]: %ld steps, best validation loss %.6f, checkpoint %s\n",
              acoustic::variant_to_string(variant).c_str(), global_step, best_valid, ckpt.c_str());
  return 0;
}

}  // namespace covomix::pipeline
