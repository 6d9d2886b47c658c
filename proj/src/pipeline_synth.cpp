#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "covomix/acoustic.hpp"
#include "covomix/errors.hpp"
#include "covomix/pipeline.hpp"
#include "covomix/t2s.hpp"
#include "covomix/tokenizer.hpp"
#include "pipeline_util.hpp"

namespace covomix::pipeline {

namespace fs = std::filesystem;

namespace {

struct Prompt {
  nn::Tensor mel;               // [frames × n_mels]
  std::vector<int> tokens;
  dsp::Waveform wave;
};

Prompt load_prompt(const std::string& path, const tok::Codebook& cb,
                   const dsp::MelConfig& mel_cfg) {
  const auto channels = dsp::read_wav(path);
  if (channels.size() != 1) {
    throw DataError("prompt must be a mono wav (one target speaker): " + path);
  }
  Prompt p;
  p.wave = channels[0];
  const dsp::MelSpectrogram mel = dsp::mel_spectrogram(channels[0], mel_cfg);
  p.mel = detail::mel_to_tensor(mel);
  p.tokens = tok::speech_to_semantic(mel, cb).ids;
  return p;
}

// Pads prompt mels/tokens to a common frame count with silence.
void pad_prompts(std::vector<Prompt>& prompts, const tok::Codebook& cb,
                 const dsp::MelConfig& mel_cfg, int frames) {
  const auto silence_row = dsp::silence_mel_frame(mel_cfg);
  for (auto& p : prompts) {
    const int have = p.mel.shape()[0];
    if (have == frames) continue;
    nn::Tensor padded = nn::Tensor::zeros({frames, mel_cfg.n_mels});
    for (int f = 0; f < frames; ++f) {
      for (int m = 0; m < mel_cfg.n_mels; ++m) {
        padded.at(f, m) = f < have ? p.mel.at(f, m) : silence_row[static_cast<std::size_t>(m)];
      }
    }
    p.mel = std::move(padded);
    p.tokens.resize(static_cast<std::size_t>(frames), cb.silence_id);
  }
}

struct Timeline {
  std::vector<std::vector<int>> tokens;
  std::vector<nn::Tensor> ctx;
  std::vector<bool> mask;
  nn::Tensor prompt_out;
  int prompt_frames = 0;
  int total_frames = 0;
};

// Prompt prefix [0, P) is known context; the content region [P, T) is masked
// and generated. Contexts are zero on masked frames.
Timeline build_timeline(const acoustic::AcousticConfig& cfg, const std::vector<Prompt>& prompts,
                        const std::vector<std::vector<int>>& content_tokens,
                        const nn::Tensor& prompt_out_rows, const dsp::MelConfig& mel_cfg) {
  Timeline tl;
  tl.prompt_frames = prompts.empty() ? 0 : prompts[0].mel.shape()[0];
  const int content = static_cast<int>(content_tokens[0].size());
  tl.total_frames = tl.prompt_frames + content;
  const int streams = cfg.n_streams();
  if (static_cast<int>(prompts.size()) != streams ||
      static_cast<int>(content_tokens.size()) != streams) {
    throw DataError("timeline: stream count mismatch");
  }

  for (int c = 0; c < streams; ++c) {
    std::vector<int> ids = prompts[static_cast<std::size_t>(c)].tokens;
    ids.insert(ids.end(), content_tokens[static_cast<std::size_t>(c)].begin(),
               content_tokens[static_cast<std::size_t>(c)].end());
    tl.tokens.push_back(std::move(ids));

    nn::Tensor ctx = nn::Tensor::zeros({tl.total_frames, mel_cfg.n_mels});
    for (int f = 0; f < tl.prompt_frames; ++f) {
      for (int m = 0; m < mel_cfg.n_mels; ++m) {
        ctx.at(f, m) = prompts[static_cast<std::size_t>(c)].mel.at(f, m);
      }
    }
    tl.ctx.push_back(std::move(ctx));
  }

  tl.mask.assign(static_cast<std::size_t>(tl.total_frames), true);
  for (int f = 0; f < tl.prompt_frames; ++f) tl.mask[static_cast<std::size_t>(f)] = false;

  tl.prompt_out = nn::Tensor::zeros({tl.total_frames, cfg.out_width()});
  for (int f = 0; f < tl.prompt_frames && f < prompt_out_rows.shape()[0]; ++f) {
    for (int m = 0; m < cfg.out_width(); ++m) tl.prompt_out.at(f, m) = prompt_out_rows.at(f, m);
  }
  return tl;
}

// Output-space prompt rows: the mixed prompt mel (mix), the single prompt
// mel (single), or the stacked per-channel prompts (stereo).
nn::Tensor output_prompt_rows(const acoustic::AcousticConfig& cfg,
                              const std::vector<Prompt>& prompts,
                              const dsp::MelConfig& mel_cfg) {
  if (cfg.variant == acoustic::Variant::single) return prompts[0].mel;
  if (cfg.variant == acoustic::Variant::stereo) {
    return nn::concat_cols(prompts[0].mel, prompts[1].mel);
  }
  dsp::Waveform mixed = dsp::mix_waveforms(prompts[0].wave, prompts[1].wave);
  nn::Tensor rows = detail::mel_to_tensor(dsp::mel_spectrogram(mixed, mel_cfg));
  // padding may have extended the prompt mels past the mixed wav's frames
  const int want = prompts[0].mel.shape()[0];
  if (rows.shape()[0] < want) {
    nn::Tensor padded = nn::Tensor::zeros({want, mel_cfg.n_mels});
    const auto silence_row = dsp::silence_mel_frame(mel_cfg);
    for (int f = 0; f < want; ++f) {
      for (int m = 0; m < mel_cfg.n_mels; ++m) {
        padded.at(f, m) = f < rows.shape()[0] ? rows.at(f, m) : silence_row[static_cast<std::size_t>(m)];
      }
    }
    return padded;
  }
  return rows;
}

struct SynthOutputs {
  dsp::MelSpectrogram mel_mix;               // mono/mixed output
  std::vector<dsp::MelSpectrogram> mel_ch;   // stereo outputs
};

SynthOutputs run_ode(const acoustic::AcousticModel& model, const Timeline& tl, int steps,
                     double alpha, std::uint64_t seed, bool midpoint) {
  const nn::Tensor out =
      model.ode_sample(tl.tokens, tl.ctx, tl.prompt_out, tl.mask, steps, alpha, seed, midpoint);
  // strip the prompt prefix
  const int frames = tl.total_frames - tl.prompt_frames;
  const int n_mels = model.config().n_mels;
  SynthOutputs so;
  if (model.config().variant == acoustic::Variant::stereo) {
    for (int c = 0; c < 2; ++c) {
      dsp::MelSpectrogram mel;
      mel.n_frames = frames;
      mel.n_mels = n_mels;
      mel.values.resize(static_cast<std::size_t>(frames) * n_mels);
      for (int f = 0; f < frames; ++f) {
        for (int m = 0; m < n_mels; ++m) {
          mel.at(f, m) = out.at(tl.prompt_frames + f, c * n_mels + m);
        }
      }
      so.mel_ch.push_back(std::move(mel));
    }
  } else {
    dsp::MelSpectrogram mel;
    mel.n_frames = frames;
    mel.n_mels = n_mels;
    mel.values.resize(static_cast<std::size_t>(frames) * n_mels);
    for (int f = 0; f < frames; ++f) {
      for (int m = 0; m < n_mels; ++m) mel.at(f, m) = out.at(tl.prompt_frames + f, m);
    }
    so.mel_mix = std::move(mel);
  }
  return so;
}

std::vector<std::string> split_turns(const std::string& text) {
  // split the serialized transcript at [spkchange]
  std::vector<std::string> turns;
  std::string cur;
  std::istringstream is(text);
  std::string word;
  while (is >> word) {
    if (word == "[spkchange]" || word == "|") {
      turns.push_back(cur);
      cur.clear();
    } else {
      if (!cur.empty()) cur += ' ';
      cur += word;
    }
  }
  turns.push_back(cur);
  return turns;
}

std::string out_with_suffix(const std::string& path, const std::string& suffix) {
  fs::path p(path);
  return (p.parent_path() / (p.stem().string() + suffix + p.extension().string())).string();
}

}  // namespace

int run_synth(const cfg::RunConfig& config) {
  const std::string text = config.get_str("text");
  const std::string out_path = config.get_str("out");
  const int steps = config.get_int("steps", 32);
  const double alpha = config.get_f64("alpha", 0.7);
  const std::uint64_t seed = config.get_u64("seed", 0);
  const int max_frames = config.get_int("max_frames", 400);
  const double temperature = config.get_f64("temperature", 0.0);
  const bool midpoint = config.get_str("solver", "euler") == "midpoint";
  const int gl_iters = config.get_int("griffin_lim_iters", 60);
  const dsp::MelConfig mel_cfg;

  const tok::Codebook cb = tok::Codebook::load(config.get_path("codebook"));
  const tok::TextVocab vocab = tok::TextVocab::load(config.get_path("vocab"));
  t2s::T2SModel t2s_model = t2s::T2SModel::load(config.get_path("t2s_ckpt"));
  acoustic::AcousticModel ac_model = acoustic::AcousticModel::load(config.get_path("acoustic_ckpt"));
  const acoustic::AcousticConfig& ac = ac_model.config();

  // prompts per sample channel
  std::vector<Prompt> prompts;
  const char* prompt_keys[2] = {"prompt_a", "prompt_b"};
  for (int c = 0; c < ac.n_streams(); ++c) {
    if (!config.has(prompt_keys[c])) {
      std::string needed;
      for (int i = 0; i < ac.n_streams(); ++i) {
        needed += std::string(i ? ", " : "") + prompt_keys[i];
      }
      throw DataError("synth: missing acoustic prompt '" + std::string(prompt_keys[c]) +
                      "' (this variant needs: " + needed + ")");
    }
    prompts.push_back(load_prompt(config.get_path(prompt_keys[c]), cb, mel_cfg));
  }

  t2s::SamplingConfig sampling;
  sampling.max_frames = max_frames;
  sampling.temperature = temperature;
  sampling.seed = Rng::mix(seed, 0x7e57);
  sampling.silence_id = cb.silence_id;

  const bool single_turnwise =
      ac.variant == acoustic::Variant::single && t2s_model.config().n_streams == 1 &&
      split_turns(text).size() > 1;

  if (single_turnwise) {
    // concatenation path: each turn is synthesized as its own monologue with
    // alternating prompts, then the waveforms are joined in transcript order
    const auto turns = split_turns(text);
    dsp::Waveform joined;
    joined.sample_rate = mel_cfg.sample_rate;
    for (std::size_t turn = 0; turn < turns.size(); ++turn) {
      const Prompt& prompt = prompts.size() > 1 ? prompts[turn % prompts.size()] : prompts[0];
      std::vector<Prompt> one = {prompt};
      t2s::SamplingConfig s = sampling;
      s.seed = Rng::mix(sampling.seed, turn);
      const t2s::StreamPair streams = t2s_model.generate(
          tok::tokenize_text(turns[turn], vocab).ids, s);
      Timeline tl = build_timeline(ac, one, streams.streams,
                                   output_prompt_rows(ac, one, mel_cfg), mel_cfg);
      const SynthOutputs so = run_ode(ac_model, tl, steps, alpha, Rng::mix(seed, 0xde + turn),
                                      midpoint);
      detail::append_wave(joined, dsp::griffin_lim(so.mel_mix, gl_iters,
                                                   Rng::mix(seed, 0x91 + turn), mel_cfg));
    }
    dsp::write_wav(out_path, {joined});
    std::printf("synth: %zu turns -> %s (%.2f s)\n", split_turns(text).size(), out_path.c_str(),
                joined.duration_s());
    return 0;
  }

  // lockstep path: generate all streams at once and render in one pass
  int prompt_frames = 0;
  for (const auto& p : prompts) prompt_frames = std::max(prompt_frames, p.mel.shape()[0]);
  pad_prompts(prompts, cb, mel_cfg, prompt_frames);
  t2s::StreamPair streams = t2s_model.generate(tok::tokenize_text(text, vocab).ids, sampling);
  std::vector<std::vector<int>> content = streams.streams;
  while (static_cast<int>(content.size()) < ac.n_streams()) {
    // single-stream front-end driving a two-stream acoustic model: the
    // second talker's stream is all silence tokens
    content.push_back(std::vector<int>(content[0].size(), cb.silence_id));
  }
  if (static_cast<int>(content.size()) > ac.n_streams()) {
    throw DataError("synth: text-to-semantic streams exceed acoustic model streams");
  }

  Timeline tl = build_timeline(ac, prompts, content, output_prompt_rows(ac, prompts, mel_cfg),
                               mel_cfg);
  const SynthOutputs so = run_ode(ac_model, tl, steps, alpha, Rng::mix(seed, 0xde), midpoint);

  if (ac.variant == acoustic::Variant::stereo) {
    std::vector<dsp::Waveform> waves;
    for (int c = 0; c < 2; ++c) {
      dsp::write_mel(out_with_suffix(out_path, "_ch" + std::to_string(c)) + ".melf", so.mel_ch[static_cast<std::size_t>(c)]);
      waves.push_back(dsp::griffin_lim(so.mel_ch[static_cast<std::size_t>(c)], gl_iters,
                                       Rng::mix(seed, 0x91 + static_cast<std::uint64_t>(c)), mel_cfg));
      dsp::write_wav(out_with_suffix(out_path, "_ch" + std::to_string(c)), {waves.back()});
    }
    const dsp::Waveform mixed = dsp::mix_waveforms(waves[0], waves[1]);
    dsp::write_wav(out_path, {mixed});
    std::printf("synth[stereo]: %d frames -> %s plus per-channel wavs\n", so.mel_ch[0].n_frames,
                out_path.c_str());
    return 0;
  }

  dsp::write_mel(out_path + ".melf", so.mel_mix);
  const dsp::Waveform wave = dsp::griffin_lim(so.mel_mix, gl_iters, Rng::mix(seed, 0x91), mel_cfg);
  dsp::write_wav(out_path, {wave});
  std::printf("synth[%s]: %d frames -> %s (%.2f s)\n",
              acoustic::variant_to_string(ac.variant).c_str(), so.mel_mix.n_frames,
              out_path.c_str(), wave.duration_s());
  return 0;
}

int run_vc(const cfg::RunConfig& config) {
  const std::string source_path = config.get_path("source");
  const std::string out_path = config.get_str("out");
  const int steps = config.get_int("steps", 32);
  const double alpha = config.get_f64("alpha", 0.7);
  const std::uint64_t seed = config.get_u64("seed", 0);
  const bool midpoint = config.get_str("solver", "euler") == "midpoint";
  const int gl_iters = config.get_int("griffin_lim_iters", 60);
  const dsp::MelConfig mel_cfg;

  const tok::Codebook cb = tok::Codebook::load(config.get_path("codebook"));
  acoustic::AcousticModel ac_model = acoustic::AcousticModel::load(config.get_path("acoustic_ckpt"));
  const acoustic::AcousticConfig& ac = ac_model.config();

  // source channels: stereo as-is; mono becomes (source, silence)
  auto channels = dsp::read_wav(source_path);
  if (channels.size() == 1 && ac.n_streams() == 2) {
    channels.push_back(detail::silence_wave(channels[0].samples.size(), channels[0].sample_rate));
  }
  std::vector<std::vector<int>> source_tokens;
  std::vector<bool> channel_active;
  for (const auto& ch : channels) {
    const auto stream = tok::speech_to_semantic(dsp::mel_spectrogram(ch, mel_cfg), cb);
    bool active = false;
    for (int id : stream.ids) active = active || id != cb.silence_id;
    channel_active.push_back(active);
    source_tokens.push_back(stream.ids);
  }

  // prompts for the target speakers
  const char* prompt_keys[2] = {"prompt_a", "prompt_b"};
  std::vector<Prompt> prompts;
  for (std::size_t c = 0; c < channels.size(); ++c) {
    if (!config.has(prompt_keys[c])) {
      if (channel_active[c]) {
        throw DataError("vc: source channel " + std::to_string(c) +
                        " is active but no '" + prompt_keys[c] + "' prompt was given");
      }
      // inactive channel: a silent stand-in prompt
      Prompt p;
      p.wave = detail::silence_wave(static_cast<std::size_t>(mel_cfg.win_length) * 4,
                                    mel_cfg.sample_rate);
      const auto mel = dsp::mel_spectrogram(p.wave, mel_cfg);
      p.mel = detail::mel_to_tensor(mel);
      p.tokens = tok::speech_to_semantic(mel, cb).ids;
      prompts.push_back(std::move(p));
    } else {
      prompts.push_back(load_prompt(config.get_path(prompt_keys[c]), cb, mel_cfg));
    }
  }

  if (ac.variant == acoustic::Variant::single) {
    // convert each channel individually, then mix
    std::vector<dsp::Waveform> converted;
    for (std::size_t c = 0; c < channels.size(); ++c) {
      std::vector<Prompt> one = {prompts[c]};
      Timeline tl = build_timeline(ac, one, {source_tokens[c]},
                                   output_prompt_rows(ac, one, mel_cfg), mel_cfg);
      const SynthOutputs so = run_ode(ac_model, tl, steps, alpha, Rng::mix(seed, 0xc0 + c),
                                      midpoint);
      converted.push_back(dsp::griffin_lim(so.mel_mix, gl_iters, Rng::mix(seed, 0xb0 + c), mel_cfg));
      dsp::write_wav(out_with_suffix(out_path, "_ch" + std::to_string(c)), {converted.back()});
    }
    dsp::Waveform mixed = converted[0];
    for (std::size_t c = 1; c < converted.size(); ++c) mixed = dsp::mix_waveforms(mixed, converted[c]);
    dsp::write_wav(out_path, {mixed});
    std::printf("vc[single]: %zu channels converted and mixed -> %s\n", converted.size(),
                out_path.c_str());
    return 0;
  }

  // mix / stereo path: both channels converted simultaneously
  const int pf = std::max(prompts[0].mel.shape()[0], prompts[1].mel.shape()[0]);
  pad_prompts(prompts, cb, mel_cfg, pf);
  Timeline tl = build_timeline(ac, prompts, source_tokens,
                               output_prompt_rows(ac, prompts, mel_cfg), mel_cfg);
  const SynthOutputs so = run_ode(ac_model, tl, steps, alpha, Rng::mix(seed, 0xc0), midpoint);
  if (ac.variant == acoustic::Variant::stereo) {
    std::vector<dsp::Waveform> waves;
    for (int c = 0; c < 2; ++c) {
      waves.push_back(dsp::griffin_lim(so.mel_ch[static_cast<std::size_t>(c)], gl_iters,
                                       Rng::mix(seed, 0xb0 + static_cast<std::uint64_t>(c)), mel_cfg));
      dsp::write_wav(out_with_suffix(out_path, "_ch" + std::to_string(c)), {waves.back()});
    }
    dsp::write_wav(out_path, {dsp::mix_waveforms(waves[0], waves[1])});
  } else {
    dsp::write_mel(out_path + ".melf", so.mel_mix);
    dsp::write_wav(out_path, {dsp::griffin_lim(so.mel_mix, gl_iters, Rng::mix(seed, 0xb0), mel_cfg)});
  }
  std::printf("vc[%s]: %d source frames -> %s\n", acoustic::variant_to_string(ac.variant).c_str(),
              static_cast<int>(source_tokens[0].size()), out_path.c_str());
  return 0;
}

}  // namespace covomix::pipeline
