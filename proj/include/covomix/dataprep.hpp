#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace covomix::prep {

struct LaughterSpan {
  double start_s = 0.0;
  double end_s = 0.0;
};

struct Utterance {
  std::string speaker;
  double start_s = 0.0;
  double end_s = 0.0;
  std::string text;
  std::vector<LaughterSpan> laughter;
};

struct DialogueSample {
  std::vector<Utterance> utterances;  // chronological
  std::string serialized_text;

  double start_s() const;
  double end_s() const;
  double duration_s() const { return end_s() - start_s(); }
  // Distinct speakers in order of first appearance.
  std::vector<std::string> speakers() const;
};

struct MonologueSample {
  std::string speaker;
  std::string text;
  std::vector<Utterance> utterances;  // consecutive, same speaker
  double speech_s = 0.0;              // summed utterance durations

  double start_s() const { return utterances.front().start_s; }
  double end_s() const { return utterances.back().end_s; }
};

// Dialogue segmentation with a rolling cache. Input order is irrelevant
// (sorted internally by start time, ties by speaker id then end time).
// A cache whose span exceeds max_duration_s is dropped at the next arrival;
// a flush happens when the new utterance starts strictly after the last
// cached utterance ends and the cache holds more than one distinct speaker.
// In both cases the arriving utterance seeds the fresh cache. The trailing
// cache is discarded.
std::vector<DialogueSample> prepare_dialogues(std::vector<Utterance> utterances,
                                              double max_duration_s);

// Chronological serialization: same-speaker neighbours joined with a space,
// speaker changes marked with [spkchange], laughter spans emitted inline as
// [laughter] at the word index proportional to the span's start offset.
// Overlap is not annotated.
std::string serialize_transcript(const std::vector<Utterance>& chronological);

// Greedy per-speaker concatenation of consecutive utterances until the
// summed speech duration reaches min_duration_s; the remainder is dropped.
std::vector<MonologueSample> slice_monologues(const std::vector<Utterance>& utterances,
                                              double min_duration_s);

struct SimulatedDialogue {
  std::size_t first_idx = 0;   // index into the monologue pool
  std::size_t second_idx = 0;
  double gap_s = 0.0;          // silence between the two turns
  DialogueSample sample;       // synthetic times starting at 0
};

// Pairs monologues of distinct speakers (seeded shuffle) into two-turn
// dialogues separated by a sampled gap; no overlap is produced.
std::vector<SimulatedDialogue> simulate_dialogues(
    const std::vector<MonologueSample>& monologues, std::uint64_t seed);

// JSON-lines utterances: {"speaker": str, "start": float, "end": float,
// "text": str, "laughter": [[s,e],...]} ("laughter" optional).
std::vector<Utterance> read_utterances_jsonl(const std::string& path);
void write_utterances_jsonl(const std::string& path, const std::vector<Utterance>& utts);

}  // namespace covomix::prep
