#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <set>

#include "covomix/errors.hpp"
#include "covomix/manifest.hpp"
#include "covomix/pipeline.hpp"
#include "covomix/rng.hpp"
#include "covomix/tokenizer.hpp"
#include "pipeline_util.hpp"

namespace covomix::pipeline {

namespace fs = std::filesystem;
using detail::join_path;

namespace {

struct PooledMonologue {
  prep::MonologueSample sample;
  std::string recording;  // stem
  int channel = -1;       // source wav channel
};

struct RecordingOutput {
  std::vector<ManifestEntry> entries;
  std::vector<PooledMonologue> pool;  // long monologues for simulation
};

// Speaker -> wav channel by order of first appearance in chronological order.
std::map<std::string, int> channel_map(std::vector<prep::Utterance> utts) {
  std::sort(utts.begin(), utts.end(), [](const prep::Utterance& a, const prep::Utterance& b) {
    if (a.start_s != b.start_s) return a.start_s < b.start_s;
    return a.speaker < b.speaker;
  });
  std::map<std::string, int> out;
  int next = 0;
  for (const auto& u : utts) {
    if (out.emplace(u.speaker, next).second) ++next;
  }
  return out;
}

dsp::Waveform concat_utterances(const dsp::Waveform& channel,
                                const std::vector<prep::Utterance>& utts) {
  dsp::Waveform out;
  out.sample_rate = channel.sample_rate;
  for (const auto& u : utts) {
    detail::append_wave(out, detail::slice_wave(channel, u.start_s, u.end_s));
  }
  return out;
}

struct SampleFiles {
  std::string wav_mix;
  std::vector<std::string> wav_ch;
  std::string mel_mix;
  std::vector<std::string> mel_ch;
};

// Writes the channel/mix wav and mel files for one sample.
SampleFiles write_sample_audio(const std::string& out_dir, const std::string& id,
                               const std::vector<dsp::Waveform>& channels,
                               const dsp::MelConfig& mel_cfg) {
  SampleFiles files;
  dsp::Waveform mixed;
  for (std::size_t c = 0; c < channels.size(); ++c) {
    const std::string wav_rel = "wav/" + id + ".ch" + std::to_string(c) + ".wav";
    const std::string mel_rel = "mel/" + id + ".ch" + std::to_string(c) + ".melf";
    dsp::write_wav(join_path(out_dir, wav_rel), {channels[c]});
    dsp::write_mel(join_path(out_dir, mel_rel), dsp::mel_spectrogram(channels[c], mel_cfg));
    files.wav_ch.push_back(wav_rel);
    files.mel_ch.push_back(mel_rel);
    mixed = c == 0 ? channels[c] : dsp::mix_waveforms(mixed, channels[c]);
  }
  if (channels.size() > 1) {
    files.wav_mix = "wav/" + id + ".mix.wav";
    files.mel_mix = "mel/" + id + ".mix.melf";
    dsp::write_wav(join_path(out_dir, files.wav_mix), {mixed});
    dsp::write_mel(join_path(out_dir, files.mel_mix), dsp::mel_spectrogram(mixed, mel_cfg));
  }
  return files;
}

RecordingOutput process_recording(const std::string& data_dir, const std::string& out_dir,
                                  const std::string& stem, double max_duration,
                                  double min_mono, double min_short, double pad_tail,
                                  const dsp::MelConfig& mel_cfg) {
  RecordingOutput out;
  const auto utts = prep::read_utterances_jsonl(join_path(data_dir, stem + ".jsonl"));
  if (utts.empty()) return out;
  const auto channels = dsp::read_wav(join_path(data_dir, stem + ".wav"));
  if (channels.size() != 2) {
    throw DataError(stem + ".wav: dialogue sources must be stereo (one speaker per channel)");
  }
  const auto spk_channel = channel_map(utts);
  if (spk_channel.size() > 2) {
    throw DataError(stem + ".jsonl: more than two speakers in one recording");
  }
  const int sr = channels[0].sample_rate;
  const std::size_t pad = static_cast<std::size_t>(pad_tail * sr);

  // dialogues
  const auto dialogues = prep::prepare_dialogues(utts, max_duration);
  for (std::size_t d = 0; d < dialogues.size(); ++d) {
    const auto& dlg = dialogues[d];
    const std::string id = stem + "_d" + detail::zero_pad(d);
    const auto speakers = dlg.speakers();
    std::vector<dsp::Waveform> ch;
    for (const auto& spk : speakers) {
      dsp::Waveform w =
          detail::slice_wave(channels[static_cast<std::size_t>(spk_channel.at(spk))],
                             dlg.start_s(), dlg.end_s());
      detail::append_wave(w, detail::silence_wave(pad, sr));
      ch.push_back(std::move(w));
    }
    const SampleFiles files = write_sample_audio(out_dir, id, ch, mel_cfg);

    ManifestEntry e;
    e.id = id;
    e.kind = "dialogue";
    e.speakers = speakers;
    e.text = dlg.serialized_text;
    e.duration_s = dlg.duration_s() + pad_tail;
    e.wav_mix = files.wav_mix;
    e.wav_ch = files.wav_ch;
    e.mel_mix = files.mel_mix;
    e.mel_ch = files.mel_ch;
    for (const auto& u : dlg.utterances) {
      for (const auto& l : u.laughter) {
        e.laughter.push_back({l.start_s - dlg.start_s(), l.end_s - dlg.start_s()});
      }
    }
    out.entries.push_back(std::move(e));
  }

  // monologues, long (pooled for simulation) and short
  auto emit_monologues = [&](double min_duration, const std::string& kind,
                             const std::string& tag, bool pooled) {
    const auto monos = prep::slice_monologues(utts, min_duration);
    for (std::size_t m = 0; m < monos.size(); ++m) {
      const auto& mono = monos[m];
      const std::string id = stem + "_" + tag + detail::zero_pad(m);
      const int src_ch = spk_channel.at(mono.speaker);
      dsp::Waveform w = concat_utterances(channels[static_cast<std::size_t>(src_ch)],
                                          mono.utterances);
      detail::append_wave(w, detail::silence_wave(pad, sr));
      const SampleFiles files = write_sample_audio(out_dir, id, {w}, mel_cfg);

      ManifestEntry e;
      e.id = id;
      e.kind = kind;
      e.speakers = {mono.speaker};
      e.text = mono.text;
      e.duration_s = mono.speech_s + pad_tail;
      e.wav_ch = files.wav_ch;
      e.mel_ch = files.mel_ch;
      out.entries.push_back(std::move(e));
      if (pooled) out.pool.push_back({mono, stem, src_ch});
    }
  };
  emit_monologues(min_mono, "monologue", "m", true);
  emit_monologues(min_short, "monologue_short", "s", false);
  return out;
}

}  // namespace

int run_prepare(const cfg::RunConfig& config) {
  const std::string data_dir = config.get_dir("data_dir");
  const std::string out_dir = config.get_str("out_dir");
  const double max_duration = config.get_f64("max_duration", 40.0);
  const double min_mono = config.get_f64("min_monologue_s", 10.0);
  const double min_short = config.get_f64("min_short_monologue_s", 1.0);
  const double pad_tail = config.get_f64("pad_tail_s", 0.5);
  const std::uint64_t seed = config.get_u64("seed", 0);
  const int threads = cfg::resolve_threads(config);
  dsp::MelConfig mel_cfg;

  fs::create_directories(fs::path(out_dir) / "wav");
  fs::create_directories(fs::path(out_dir) / "mel");

  std::vector<std::string> stems;
  for (const auto& entry : fs::directory_iterator(data_dir)) {
    if (entry.path().extension() == ".jsonl") stems.push_back(entry.path().stem().string());
  }
  std::sort(stems.begin(), stems.end());
  if (stems.empty()) {
    write_manifest(join_path(out_dir, "manifest.jsonl"), {});
    tok::TextVocab().save(join_path(out_dir, "vocab.txt"));
    std::printf("prepare: no transcripts found in %s; wrote empty manifest\n", data_dir.c_str());
    return 0;
  }

  std::vector<RecordingOutput> per_recording(stems.size());
  detail::parallel_for(stems.size(), threads, [&](std::size_t i) {
    per_recording[i] = process_recording(data_dir, out_dir, stems[i], max_duration, min_mono,
                                         min_short, pad_tail, mel_cfg);
  });

  std::vector<ManifestEntry> entries;
  std::vector<PooledMonologue> pool;
  for (auto& rec : per_recording) {
    for (auto& e : rec.entries) entries.push_back(std::move(e));
    for (auto& p : rec.pool) pool.push_back(std::move(p));
  }

  // simulated dialogues from the long-monologue pool
  std::size_t n_sim = 0;
  if (pool.size() >= 2) {
    std::vector<prep::MonologueSample> monos;
    for (const auto& p : pool) monos.push_back(p.sample);
    std::set<std::string> speakers;
    for (const auto& m : monos) speakers.insert(m.speaker);
    if (speakers.size() >= 2) {
      const auto sims = prep::simulate_dialogues(monos, Rng::mix(seed, 0x51));
      const int sr = dsp::MelConfig{}.sample_rate;
      const std::size_t pad = static_cast<std::size_t>(pad_tail * sr);
      for (std::size_t s = 0; s < sims.size(); ++s) {
        const auto& sim = sims[s];
        const std::string id = "sim_" + detail::zero_pad(s);
        const PooledMonologue& first = pool[sim.first_idx];
        const PooledMonologue& second = pool[sim.second_idx];
        auto load_channel = [&](const PooledMonologue& p) {
          const auto chans = dsp::read_wav(join_path(data_dir, p.recording + ".wav"));
          return concat_utterances(chans[static_cast<std::size_t>(p.channel)],
                                   p.sample.utterances);
        };
        const dsp::Waveform wa = load_channel(first);
        const dsp::Waveform wb = load_channel(second);
        const std::size_t gap = static_cast<std::size_t>(sim.gap_s * sr);

        dsp::Waveform ch0 = wa;
        detail::append_wave(ch0, detail::silence_wave(gap + wb.samples.size() + pad, sr));
        dsp::Waveform ch1 = detail::silence_wave(wa.samples.size() + gap, sr);
        detail::append_wave(ch1, wb);
        detail::append_wave(ch1, detail::silence_wave(pad, sr));

        const SampleFiles files = write_sample_audio(out_dir, id, {ch0, ch1}, mel_cfg);
        ManifestEntry e;
        e.id = id;
        e.kind = "sim_dialogue";
        e.speakers = {first.sample.speaker, second.sample.speaker};
        e.text = sim.sample.serialized_text;
        e.duration_s = sim.sample.duration_s() + pad_tail;
        e.wav_mix = files.wav_mix;
        e.wav_ch = files.wav_ch;
        e.mel_mix = files.mel_mix;
        e.mel_ch = files.mel_ch;
        entries.push_back(std::move(e));
        ++n_sim;
      }
    }
  }

  // corpus vocab over every serialized text
  std::vector<std::string> texts;
  for (const auto& e : entries) texts.push_back(e.text);
  tok::TextVocab::build(texts).save(join_path(out_dir, "vocab.txt"));
  write_manifest(join_path(out_dir, "manifest.jsonl"), entries);

  std::size_t n_dialogue = 0, n_mono = 0, n_short = 0;
  double total_s = 0.0;
  for (const auto& e : entries) {
    total_s += e.duration_s;
    if (e.kind == "dialogue") ++n_dialogue;
    if (e.kind == "monologue") ++n_mono;
    if (e.kind == "monologue_short") ++n_short;
  }
  std::printf(
      "prepare: %zu recordings -> %zu dialogues, %zu monologues, %zu short monologues, "
      "%zu simulated; %.1f s of samples\n",
      stems.size(), n_dialogue, n_mono, n_short, n_sim, total_s);
  return 0;
}

int run_fit_codebook(const cfg::RunConfig& config) {
  const std::string out_dir = config.get_dir("out_dir");
  const int k = config.get_int("codebook_size", 64);
  const std::uint64_t seed = config.get_u64("seed", 0);
  const std::string manifest_path = join_path(out_dir, "manifest.jsonl");
  auto entries = read_manifest(manifest_path);
  if (entries.empty()) throw DataError("fit-codebook: manifest is empty: " + manifest_path);

  // Fit on every channel mel (per-speaker audio), never the mixtures.
  std::vector<dsp::MelSpectrogram> mels;
  for (const auto& e : entries) {
    for (const auto& rel : e.mel_ch) mels.push_back(dsp::read_mel(join_path(out_dir, rel)));
  }
  std::vector<const dsp::MelSpectrogram*> mel_ptrs;
  for (const auto& m : mels) mel_ptrs.push_back(&m);
  const dsp::MelConfig mel_cfg;
  tok::Codebook cb = tok::fit_codebook(mel_ptrs, k, seed, mel_cfg.power_floor);
  cb.save(join_path(out_dir, "codebook.bin"));

  fs::create_directories(fs::path(out_dir) / "tokens");
  std::size_t mel_idx = 0;
  std::size_t n_tokens = 0;
  for (auto& e : entries) {
    e.tokens_ch.clear();
    for (std::size_t c = 0; c < e.mel_ch.size(); ++c) {
      const tok::SemanticTokenStream stream =
          tok::speech_to_semantic(mels[mel_idx], cb);
      ++mel_idx;
      const std::string rel = "tokens/" + e.id + ".ch" + std::to_string(c) + ".semt";
      tok::write_tokens(join_path(out_dir, rel), stream);
      e.tokens_ch.push_back(rel);
      n_tokens += stream.ids.size();
    }
  }
  write_manifest(manifest_path, entries);
  std::printf("fit-codebook: K=%d over %zu mels (%zu tokens), silence id %d\n", cb.size(),
              mels.size(), n_tokens, cb.silence_id);
  return 0;
}

}  // namespace covomix::pipeline
