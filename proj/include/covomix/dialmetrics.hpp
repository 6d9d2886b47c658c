#pragma once

#include <string>
#include <vector>

#include "covomix/dsp.hpp"

namespace covomix::metrics {

struct Interval {
  double start_s = 0.0;
  double end_s = 0.0;
  double duration() const { return end_s - start_s; }
};

// Active-speech intervals for exactly two speakers (the dialogue setting).
struct SpeakerSegments {
  std::vector<std::string> speakers;             // size 2
  std::vector<std::vector<Interval>> intervals;  // per speaker; normalized on use
};

struct TurnTakingEvents {
  std::vector<Interval> intra_pauses;
  std::vector<Interval> inter_silences;
  std::vector<Interval> overlaps;
  std::vector<std::vector<Interval>> active;  // merged, per speaker
  double active_union_s = 0.0;                // duration of speech by anyone
};

// Event taxonomy: overlaps are pairwise cross-speaker intersections; a gap
// between consecutive active regions is an intra-pause when the bounding
// speech on both sides belongs to the same speaker, else an inter-speaker
// silence. Zero-length gaps are not events. Throws for != 2 speakers.
TurnTakingEvents extract_turn_events(const SpeakerSegments& segs);

struct DistributionSummary {
  std::size_t count = 0;
  double mean = 0.0;
  double median = 0.0;
  std::vector<double> bin_edges;       // size B+1
  std::vector<std::size_t> bin_counts; // size B; [edge_i, edge_{i+1}), last bin inclusive
};

DistributionSummary summarize_durations(std::vector<double> durations,
                                        const std::vector<double>& bin_edges);

struct TurnStats {
  DistributionSummary intra_pause;
  DistributionSummary inter_silence;
  DistributionSummary overlap;
  DistributionSummary active;
};

TurnStats turn_stats(const std::vector<TurnTakingEvents>& corpus,
                     const std::vector<double>& bin_edges);

struct LaughterStats {
  std::size_t count = 0;
  double mean_duration_s = 0.0;
  bool defined = false;  // false when there were no spans (mean reported as 0)
};

LaughterStats laughter_stats(const std::vector<std::vector<Interval>>& spans_per_dialogue);

struct ConsistencyMatrix {
  int n = 0;
  std::vector<double> values;  // n × n cosine similarities

  double at(int i, int j) const { return values[static_cast<std::size_t>(i) * n + j]; }
};

// Pairwise cosine similarity; throws on zero-norm or mismatched dimensions.
ConsistencyMatrix consistency_matrix(const std::vector<std::vector<double>>& embeddings);

inline constexpr int kMcdDefaultOrder = 13;

// Mel-cepstral distortion minimized over a DTW alignment with steps
// {(1,0),(0,1),(1,1)}. Per-pair cost uses the 10·sqrt(2)/ln(10) constant over
// cepstra c1..c_order; the optimal path cost is normalized by the path's
// node count (ties in cost resolved toward fewer nodes).
double mcd_dtw(const dsp::MelSpectrogram& ref, const dsp::MelSpectrogram& hyp,
               int order = kMcdDefaultOrder);

}  // namespace covomix::metrics
