#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "covomix/dialmetrics.hpp"
#include "covomix/errors.hpp"
#include "covomix/pipeline.hpp"
#include "pipeline_util.hpp"

namespace covomix::pipeline {

namespace fs = std::filesystem;
using detail::join_path;
using nlohmann::json;

namespace {

struct SideFiles {
  std::map<std::string, std::string> audio;     // stem -> wav/melf path
  std::map<std::string, std::string> segments;  // stem -> segments jsonl
  std::map<std::string, std::string> emb;       // stem -> embedding json
};

SideFiles scan_side(const std::string& dir) {
  SideFiles side;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const fs::path p = entry.path();
    const std::string name = p.filename().string();
    if (name.size() > 15 && name.ends_with(".segments.jsonl")) {
      side.segments[name.substr(0, name.size() - 15)] = p.string();
    } else if (name.size() > 9 && name.ends_with(".emb.json")) {
      side.emb[name.substr(0, name.size() - 9)] = p.string();
    } else if (p.extension() == ".melf") {
      side.audio[p.stem().string()] = p.string();
    } else if (p.extension() == ".wav") {
      side.audio.emplace(p.stem().string(), p.string());  // melf wins if both
    }
  }
  return side;
}

dsp::MelSpectrogram load_audio_mel(const std::string& path) {
  if (fs::path(path).extension() == ".melf") return dsp::read_mel(path);
  const auto channels = dsp::read_wav(path);
  dsp::Waveform mono = channels[0];
  for (std::size_t c = 1; c < channels.size(); ++c) mono = dsp::mix_waveforms(mono, channels[c]);
  return dsp::mel_spectrogram(mono, {});
}

// Segments jsonl shares the utterance schema; speakers become the two sides.
struct DialogueAnnotation {
  metrics::SpeakerSegments segments;
  std::vector<metrics::Interval> laughter;
};

DialogueAnnotation load_annotation(const std::string& path) {
  const auto utts = prep::read_utterances_jsonl(path);
  std::vector<std::string> speakers;
  for (const auto& u : utts) {
    if (std::find(speakers.begin(), speakers.end(), u.speaker) == speakers.end()) {
      speakers.push_back(u.speaker);
    }
  }
  if (speakers.size() != 2) {
    throw DataError(path + ": turn-taking annotations need exactly two speakers, got " +
                    std::to_string(speakers.size()));
  }
  DialogueAnnotation ann;
  ann.segments.speakers = speakers;
  ann.segments.intervals.resize(2);
  for (const auto& u : utts) {
    const int idx = u.speaker == speakers[0] ? 0 : 1;
    ann.segments.intervals[static_cast<std::size_t>(idx)].push_back({u.start_s, u.end_s});
    for (const auto& l : u.laughter) ann.laughter.push_back({l.start_s, l.end_s});
  }
  return ann;
}

std::vector<double> parse_bins(const std::string& csv) {
  std::vector<double> edges;
  std::istringstream is(csv);
  std::string tok;
  while (std::getline(is, tok, ',')) {
    if (!tok.empty()) edges.push_back(std::stod(tok));
  }
  return edges;
}

json summary_of(const metrics::DistributionSummary& s) {
  json j;
  j["count"] = s.count;
  j["mean"] = s.mean;
  j["median"] = s.median;
  return j;
}

void write_hist_csv(const std::string& path, const metrics::DistributionSummary& s) {
  std::ofstream os(path);
  os << "bin_lo,bin_hi,count\n";
  for (std::size_t b = 0; b + 1 < s.bin_edges.size(); ++b) {
    os << s.bin_edges[b] << "," << s.bin_edges[b + 1] << "," << s.bin_counts[b] << "\n";
  }
}

void write_side_reports(const std::string& report_dir, const std::string& side_name,
                        const SideFiles& side, const std::vector<double>& bins, json& summary) {
  if (side.segments.empty()) return;
  std::vector<metrics::TurnTakingEvents> events;
  std::vector<std::vector<metrics::Interval>> laughter;
  for (const auto& [stem, path] : side.segments) {
    const DialogueAnnotation ann = load_annotation(path);
    events.push_back(metrics::extract_turn_events(ann.segments));
    laughter.push_back(ann.laughter);
  }
  const metrics::TurnStats ts = metrics::turn_stats(events, bins);
  json turn;
  turn["intra_pause"] = summary_of(ts.intra_pause);
  turn["inter_silence"] = summary_of(ts.inter_silence);
  turn["overlap"] = summary_of(ts.overlap);
  turn["active"] = summary_of(ts.active);
  summary["turn_taking"][side_name] = turn;

  write_hist_csv(join_path(report_dir, "hist_" + side_name + "_intra_pause.csv"), ts.intra_pause);
  write_hist_csv(join_path(report_dir, "hist_" + side_name + "_inter_silence.csv"), ts.inter_silence);
  write_hist_csv(join_path(report_dir, "hist_" + side_name + "_overlap.csv"), ts.overlap);
  write_hist_csv(join_path(report_dir, "hist_" + side_name + "_active.csv"), ts.active);

  const metrics::LaughterStats ls = metrics::laughter_stats(laughter);
  json lj;
  lj["count"] = ls.count;
  lj["mean_duration_s"] = ls.mean_duration_s;
  lj["defined"] = ls.defined;
  summary["laughter"][side_name] = lj;
}

}  // namespace

int run_eval(const cfg::RunConfig& config) {
  const std::string hyp_dir = config.get_dir("hyp_dir");
  const std::string ref_dir = config.get_dir("ref_dir");
  const std::string report_dir = config.get_str("report_dir");
  const int order = config.get_int("mcd_order", metrics::kMcdDefaultOrder);
  const std::vector<double> bins =
      parse_bins(config.get_str("hist_bins", "0,0.1,0.25,0.5,0.75,1,1.5,2,3,5"));
  const int threads = cfg::resolve_threads(config);
  fs::create_directories(report_dir);

  const SideFiles hyp = scan_side(hyp_dir);
  const SideFiles ref = scan_side(ref_dir);

  std::vector<std::string> paired, unpaired;
  for (const auto& [stem, path] : hyp.audio) {
    if (ref.audio.count(stem)) {
      paired.push_back(stem);
    } else {
      unpaired.push_back(stem + " (hyp only)");
    }
  }
  for (const auto& [stem, path] : ref.audio) {
    if (!hyp.audio.count(stem)) unpaired.push_back(stem + " (ref only)");
  }
  std::sort(paired.begin(), paired.end());
  std::sort(unpaired.begin(), unpaired.end());

  // per-pair MCD-DTW
  std::vector<double> mcd(paired.size(), 0.0);
  detail::parallel_for(paired.size(), threads, [&](std::size_t i) {
    const dsp::MelSpectrogram h = load_audio_mel(hyp.audio.at(paired[i]));
    const dsp::MelSpectrogram r = load_audio_mel(ref.audio.at(paired[i]));
    mcd[i] = metrics::mcd_dtw(r, h, order);
  });

  {
    std::ofstream os(join_path(report_dir, "mcd.csv"));
    os << "stem,mcd_dtw\n";
    for (std::size_t i = 0; i < paired.size(); ++i) {
      os << paired[i] << "," << mcd[i] << "\n";
    }
  }

  json summary;
  summary["pairs"] = paired.size();
  summary["unpaired"] = unpaired;
  if (!paired.empty()) {
    double mean = 0.0;
    for (double v : mcd) mean += v;
    summary["mcd_dtw_mean"] = mean / static_cast<double>(paired.size());
  }

  write_side_reports(report_dir, "hyp", hyp, bins, summary);
  write_side_reports(report_dir, "ref", ref, bins, summary);

  // speaker-consistency matrices from provided embeddings
  json consistency = json::object();
  for (const auto& [stem, path] : hyp.emb) {
    std::ifstream is(path);
    json j;
    try {
      is >> j;
    } catch (const json::exception& e) {
      throw DataError(path + ": malformed embedding json: " + e.what());
    }
    std::vector<std::vector<double>> embeddings;
    for (const auto& row : j) embeddings.push_back(row.get<std::vector<double>>());
    const metrics::ConsistencyMatrix m = metrics::consistency_matrix(embeddings);
    std::ofstream os(join_path(report_dir, "consistency_" + stem + ".csv"));
    double off_diag = 0.0;
    for (int i = 0; i < m.n; ++i) {
      for (int c = 0; c < m.n; ++c) {
        os << m.at(i, c) << (c + 1 == m.n ? "\n" : ",");
        if (i != c) off_diag += m.at(i, c);
      }
    }
    consistency[stem] = m.n > 1 ? off_diag / (m.n * (m.n - 1)) : 1.0;
  }
  if (!consistency.empty()) summary["consistency_mean_offdiag"] = consistency;

  std::ofstream os(join_path(report_dir, "summary.json"));
  os << summary.dump(2) << "\n";

  for (const auto& u : unpaired) std::fprintf(stderr, "eval: unpaired: %s\n", u.c_str());
  std::printf("eval: %zu pairs scored, %zu unpaired, reports in %s\n", paired.size(),
              unpaired.size(), report_dir.c_str());
  const bool empty = paired.empty() && hyp.segments.empty() && ref.segments.empty() && hyp.emb.empty();
  if (!unpaired.empty() || empty) return 2;
  return 0;
}

}  // namespace covomix::pipeline
