#include "covomix/dataprep.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "covomix/errors.hpp"
#include "covomix/rng.hpp"

namespace covomix::prep {

namespace {

void check_utterance(const Utterance& u) {
  if (!(u.start_s < u.end_s)) {
    throw DataError("utterance: start must precede end (speaker '" + u.speaker + "', start " +
                    std::to_string(u.start_s) + ")");
  }
  for (const auto& l : u.laughter) {
    if (l.start_s < u.start_s - 1e-9 || l.end_s > u.end_s + 1e-9 || l.start_s >= l.end_s) {
      throw DataError("utterance: laughter span outside utterance (speaker '" + u.speaker + "')");
    }
  }
}

bool chrono_less(const Utterance& a, const Utterance& b) {
  if (a.start_s != b.start_s) return a.start_s < b.start_s;
  if (a.speaker != b.speaker) return a.speaker < b.speaker;
  return a.end_s < b.end_s;
}

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::istringstream is(text);
  std::string w;
  while (is >> w) words.push_back(w);
  return words;
}

}  // namespace

double DialogueSample::start_s() const { return utterances.front().start_s; }

double DialogueSample::end_s() const {
  double e = utterances.front().end_s;
  for (const auto& u : utterances) e = std::max(e, u.end_s);
  return e;
}

std::vector<std::string> DialogueSample::speakers() const {
  std::vector<std::string> out;
  for (const auto& u : utterances) {
    if (std::find(out.begin(), out.end(), u.speaker) == out.end()) out.push_back(u.speaker);
  }
  return out;
}

std::vector<DialogueSample> prepare_dialogues(std::vector<Utterance> utterances,
                                              double max_duration_s) {
  if (max_duration_s <= 0.0) throw DataError("prepare_dialogues: max duration must be positive");
  for (const auto& u : utterances) check_utterance(u);
  std::stable_sort(utterances.begin(), utterances.end(), chrono_less);

  std::vector<DialogueSample> out;
  std::vector<Utterance> cache;
  std::set<std::string> speakers;

  auto seed_cache = [&](const Utterance& u) {
    cache.clear();
    speakers.clear();
    cache.push_back(u);
    speakers.insert(u.speaker);
  };

  for (const auto& u : utterances) {
    if (cache.empty()) {
      seed_cache(u);
    } else if (cache.back().end_s - cache.front().start_s > max_duration_s) {
      // Over-long cache: drop it without emitting; the arrival starts fresh.
      seed_cache(u);
    } else if (u.start_s > cache.back().end_s && speakers.size() > 1) {
      DialogueSample sample;
      sample.utterances = cache;
      sample.serialized_text = serialize_transcript(cache);
      out.push_back(std::move(sample));
      seed_cache(u);
    } else {
      cache.push_back(u);
      speakers.insert(u.speaker);
    }
  }
  // Trailing cache never flushes: its closing boundary is unknown.
  return out;
}

std::string serialize_transcript(const std::vector<Utterance>& chronological) {
  std::vector<std::string> parts;  // word stream with separators
  const std::string* prev_speaker = nullptr;
  for (const auto& u : chronological) {
    if (prev_speaker != nullptr && *prev_speaker != u.speaker) {
      parts.emplace_back("[spkchange]");
    }
    const std::vector<std::string> words = split_words(u.text);
    const int n_words = static_cast<int>(words.size());
    // laughter tags land at the word index proportional to their offset
    std::vector<std::vector<int>> tags(static_cast<std::size_t>(n_words) + 1);
    for (std::size_t li = 0; li < u.laughter.size(); ++li) {
      const double dur = u.end_s - u.start_s;
      const double rel = dur > 0.0 ? (u.laughter[li].start_s - u.start_s) / dur : 0.0;
      int idx = static_cast<int>(std::lround(rel * n_words));
      idx = std::clamp(idx, 0, n_words);
      tags[static_cast<std::size_t>(idx)].push_back(static_cast<int>(li));
    }
    for (int i = 0; i <= n_words; ++i) {
      for (std::size_t t = 0; t < tags[static_cast<std::size_t>(i)].size(); ++t) {
        parts.emplace_back("[laughter]");
      }
      if (i < n_words) parts.push_back(words[static_cast<std::size_t>(i)]);
    }
    prev_speaker = &u.speaker;
  }
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += ' ';
    out += parts[i];
  }
  return out;
}

std::vector<MonologueSample> slice_monologues(const std::vector<Utterance>& utterances,
                                              double min_duration_s) {
  if (min_duration_s <= 0.0) throw DataError("slice_monologues: min duration must be positive");
  for (const auto& u : utterances) check_utterance(u);

  // Per-speaker chronological streams; order speakers deterministically.
  std::map<std::string, std::vector<Utterance>> streams;
  for (const auto& u : utterances) streams[u.speaker].push_back(u);

  std::vector<MonologueSample> out;
  for (auto& [speaker, utts] : streams) {
    std::stable_sort(utts.begin(), utts.end(), chrono_less);
    MonologueSample cur;
    cur.speaker = speaker;
    for (const auto& u : utts) {
      cur.utterances.push_back(u);
      cur.speech_s += u.end_s - u.start_s;
      if (cur.speech_s >= min_duration_s) {
        std::string text;
        for (const auto& cu : cur.utterances) {
          if (!text.empty()) text += ' ';
          text += cu.text;
        }
        cur.text = std::move(text);
        out.push_back(std::move(cur));
        cur = MonologueSample{};
        cur.speaker = speaker;
      }
    }
    // remainder below the minimum is dropped
  }
  return out;
}

std::vector<SimulatedDialogue> simulate_dialogues(
    const std::vector<MonologueSample>& monologues, std::uint64_t seed) {
  std::set<std::string> speakers;
  for (const auto& m : monologues) speakers.insert(m.speaker);
  if (speakers.size() < 2) {
    throw DataError("simulate_dialogues: need monologues from at least two speakers");
  }

  Rng rng(seed);
  std::vector<std::size_t> order(monologues.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);

  std::vector<SimulatedDialogue> out;
  std::vector<bool> used(monologues.size(), false);
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (used[order[i]]) continue;
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      if (used[order[j]]) continue;
      const MonologueSample& a = monologues[order[i]];
      const MonologueSample& b = monologues[order[j]];
      if (a.speaker == b.speaker) continue;

      SimulatedDialogue sim;
      sim.first_idx = order[i];
      sim.second_idx = order[j];
      sim.gap_s = rng.uniform(0.1, 0.6);

      Utterance ua;
      ua.speaker = a.speaker;
      ua.start_s = 0.0;
      ua.end_s = a.speech_s;
      ua.text = a.text;
      Utterance ub;
      ub.speaker = b.speaker;
      ub.start_s = a.speech_s + sim.gap_s;
      ub.end_s = ub.start_s + b.speech_s;
      ub.text = b.text;

      sim.sample.utterances = {ua, ub};
      sim.sample.serialized_text = serialize_transcript(sim.sample.utterances);
      out.push_back(std::move(sim));
      used[order[i]] = true;
      used[order[j]] = true;
      break;
    }
  }
  return out;
}

// ----------------------------- JSONL io -----------------------------

std::vector<Utterance> read_utterances_jsonl(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open transcript: " + path);
  std::vector<Utterance> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      Utterance u;
      u.speaker = j.at("speaker").get<std::string>();
      u.start_s = j.at("start").get<double>();
      u.end_s = j.at("end").get<double>();
      u.text = j.at("text").get<std::string>();
      if (j.contains("laughter")) {
        for (const auto& span : j.at("laughter")) {
          u.laughter.push_back({span.at(0).get<double>(), span.at(1).get<double>()});
        }
      }
      check_utterance(u);
      out.push_back(std::move(u));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": malformed utterance: " + e.what());
    }
  }
  return out;
}

void write_utterances_jsonl(const std::string& path, const std::vector<Utterance>& utts) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write transcript: " + path);
  for (const auto& u : utts) {
    nlohmann::json j;
    j["speaker"] = u.speaker;
    j["start"] = u.start_s;
    j["end"] = u.end_s;
    j["text"] = u.text;
    if (!u.laughter.empty()) {
      nlohmann::json spans = nlohmann::json::array();
      for (const auto& l : u.laughter) spans.push_back({l.start_s, l.end_s});
      j["laughter"] = spans;
    }
    os << j.dump() << "\n";
  }
}

}  // namespace covomix::prep
