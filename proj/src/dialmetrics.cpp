#include "covomix/dialmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "covomix/errors.hpp"

namespace covomix::metrics {

namespace {

std::vector<Interval> normalize(std::vector<Interval> v) {
  for (const auto& i : v) {
    if (i.end_s < i.start_s) throw DataError("interval: negative length");
  }
  std::sort(v.begin(), v.end(), [](const Interval& a, const Interval& b) {
    if (a.start_s != b.start_s) return a.start_s < b.start_s;
    return a.end_s < b.end_s;
  });
  std::vector<Interval> out;
  for (const auto& i : v) {
    if (i.end_s <= i.start_s) continue;  // drop empty
    if (!out.empty() && i.start_s <= out.back().end_s) {
      out.back().end_s = std::max(out.back().end_s, i.end_s);
    } else {
      out.push_back(i);
    }
  }
  return out;
}

}  // namespace

TurnTakingEvents extract_turn_events(const SpeakerSegments& segs) {
  if (segs.speakers.size() != 2 || segs.intervals.size() != 2) {
    throw DataError("extract_turn_events: exactly two speakers are supported");
  }
  TurnTakingEvents ev;
  ev.active.resize(2);
  ev.active[0] = normalize(segs.intervals[0]);
  ev.active[1] = normalize(segs.intervals[1]);

  // overlaps: pairwise intersections across speakers
  for (const auto& a : ev.active[0]) {
    for (const auto& b : ev.active[1]) {
      const double lo = std::max(a.start_s, b.start_s);
      const double hi = std::min(a.end_s, b.end_s);
      if (hi > lo) ev.overlaps.push_back({lo, hi});
    }
  }

  // union of speech over both speakers
  std::vector<Interval> all = ev.active[0];
  all.insert(all.end(), ev.active[1].begin(), ev.active[1].end());
  const std::vector<Interval> merged = normalize(all);
  for (const auto& m : merged) ev.active_union_s += m.duration();

  // The owner of a union boundary: who is speaking right at that edge. When
  // both speakers touch the edge, the nearer onset/offset wins.
  auto left_owner = [&](double t) {
    int owner = -1;
    double latest_start = -std::numeric_limits<double>::infinity();
    for (int s = 0; s < 2; ++s) {
      for (const auto& i : ev.active[static_cast<std::size_t>(s)]) {
        if (i.end_s == t && i.start_s > latest_start) {
          latest_start = i.start_s;
          owner = s;
        }
      }
    }
    return owner;
  };
  auto right_owner = [&](double t) {
    int owner = -1;
    double earliest_end = std::numeric_limits<double>::infinity();
    for (int s = 0; s < 2; ++s) {
      for (const auto& i : ev.active[static_cast<std::size_t>(s)]) {
        if (i.start_s == t && i.end_s < earliest_end) {
          earliest_end = i.end_s;
          owner = s;
        }
      }
    }
    return owner;
  };

  for (std::size_t g = 1; g < merged.size(); ++g) {
    const double lo = merged[g - 1].end_s;
    const double hi = merged[g].start_s;
    if (hi <= lo) continue;  // zero-length gaps are not events
    const int before = left_owner(lo);
    const int after = right_owner(hi);
    if (before < 0 || after < 0) continue;  // unreachable for merged input
    if (before == after) {
      ev.intra_pauses.push_back({lo, hi});
    } else {
      ev.inter_silences.push_back({lo, hi});
    }
  }
  return ev;
}

DistributionSummary summarize_durations(std::vector<double> durations,
                                        const std::vector<double>& bin_edges) {
  DistributionSummary s;
  s.bin_edges = bin_edges;
  if (!bin_edges.empty()) {
    if (bin_edges.size() < 2) throw DataError("summarize: need at least two bin edges");
    for (std::size_t i = 1; i < bin_edges.size(); ++i) {
      if (bin_edges[i] <= bin_edges[i - 1]) throw DataError("summarize: bin edges must increase");
    }
    s.bin_counts.assign(bin_edges.size() - 1, 0);
  }
  if (durations.empty()) return s;
  std::sort(durations.begin(), durations.end());
  s.count = durations.size();
  double acc = 0.0;
  for (double d : durations) acc += d;
  s.mean = acc / static_cast<double>(s.count);
  const std::size_t mid = s.count / 2;
  s.median = (s.count % 2 == 1) ? durations[mid] : 0.5 * (durations[mid - 1] + durations[mid]);
  if (!bin_edges.empty()) {
    for (double d : durations) {
      if (d < bin_edges.front() || d > bin_edges.back()) continue;
      std::size_t b = 0;
      while (b + 2 < bin_edges.size() && d >= bin_edges[b + 1]) ++b;
      s.bin_counts[b] += 1;
    }
  }
  return s;
}

TurnStats turn_stats(const std::vector<TurnTakingEvents>& corpus,
                     const std::vector<double>& bin_edges) {
  if (corpus.empty()) throw DataError("turn_stats: empty corpus");
  std::vector<double> intra, inter, over, active;
  for (const auto& ev : corpus) {
    for (const auto& i : ev.intra_pauses) intra.push_back(i.duration());
    for (const auto& i : ev.inter_silences) inter.push_back(i.duration());
    for (const auto& i : ev.overlaps) over.push_back(i.duration());
    for (const auto& spk : ev.active) {
      for (const auto& i : spk) active.push_back(i.duration());
    }
  }
  TurnStats ts;
  ts.intra_pause = summarize_durations(std::move(intra), bin_edges);
  ts.inter_silence = summarize_durations(std::move(inter), bin_edges);
  ts.overlap = summarize_durations(std::move(over), bin_edges);
  ts.active = summarize_durations(std::move(active), bin_edges);
  return ts;
}

LaughterStats laughter_stats(const std::vector<std::vector<Interval>>& spans_per_dialogue) {
  LaughterStats ls;
  double total = 0.0;
  for (const auto& spans : spans_per_dialogue) {
    for (const auto& s : spans) {
      if (s.end_s < s.start_s) throw DataError("laughter_stats: negative span");
      ls.count += 1;
      total += s.duration();
    }
  }
  if (ls.count > 0) {
    ls.defined = true;
    ls.mean_duration_s = total / static_cast<double>(ls.count);
  }
  return ls;
}

ConsistencyMatrix consistency_matrix(const std::vector<std::vector<double>>& embeddings) {
  if (embeddings.size() < 2) throw DataError("consistency_matrix: need at least two embeddings");
  const std::size_t dim = embeddings[0].size();
  std::vector<double> norms(embeddings.size());
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    if (embeddings[i].size() != dim) {
      throw DimensionError("consistency_matrix: embedding dims differ");
    }
    double sq = 0.0;
    for (double v : embeddings[i]) sq += v * v;
    if (sq == 0.0) throw DataError("consistency_matrix: zero-norm embedding");
    norms[i] = std::sqrt(sq);
  }
  ConsistencyMatrix m;
  m.n = static_cast<int>(embeddings.size());
  m.values.assign(static_cast<std::size_t>(m.n) * m.n, 0.0);
  for (int i = 0; i < m.n; ++i) {
    m.values[static_cast<std::size_t>(i) * m.n + i] = 1.0;
    for (int j = i + 1; j < m.n; ++j) {
      double dot = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        dot += embeddings[static_cast<std::size_t>(i)][d] * embeddings[static_cast<std::size_t>(j)][d];
      }
      const double c = dot / (norms[static_cast<std::size_t>(i)] * norms[static_cast<std::size_t>(j)]);
      m.values[static_cast<std::size_t>(i) * m.n + j] = c;
      m.values[static_cast<std::size_t>(j) * m.n + i] = c;
    }
  }
  return m;
}

double mcd_dtw(const dsp::MelSpectrogram& ref, const dsp::MelSpectrogram& hyp, int order) {
  if (ref.n_frames < 1 || hyp.n_frames < 1) throw DataError("mcd_dtw: empty spectrogram");
  if (ref.n_mels != hyp.n_mels) throw DimensionError("mcd_dtw: mel dims differ");
  const dsp::RealMatrix ca = dsp::mel_cepstra(ref, order);
  const dsp::RealMatrix cb = dsp::mel_cepstra(hyp, order);
  const int n = ca.rows, m = cb.rows;
  const double k_mcd = 10.0 * std::sqrt(2.0) / std::log(10.0);

  std::vector<double> cost(static_cast<std::size_t>(n) * m);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      double acc = 0.0;
      for (int c = 0; c < order; ++c) {
        const double d = ca.at(i, c) - cb.at(j, c);
        acc += d * d;
      }
      cost[static_cast<std::size_t>(i) * m + j] = k_mcd * std::sqrt(acc);
    }
  }

  // DP over (total cost, node count), lexicographic min.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> best(static_cast<std::size_t>(n) * m, inf);
  std::vector<int> len(static_cast<std::size_t>(n) * m, 0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      const std::size_t idx = static_cast<std::size_t>(i) * m + j;
      if (i == 0 && j == 0) {
        best[idx] = cost[idx];
        len[idx] = 1;
        continue;
      }
      double b = inf;
      int l = 0;
      auto consider = [&](int pi, int pj) {
        if (pi < 0 || pj < 0) return;
        const std::size_t p = static_cast<std::size_t>(pi) * m + pj;
        if (best[p] < b || (best[p] == b && len[p] < l)) {
          b = best[p];
          l = len[p];
        }
      };
      consider(i - 1, j - 1);
      consider(i - 1, j);
      consider(i, j - 1);
      best[idx] = b + cost[idx];
      len[idx] = l + 1;
    }
  }
  const std::size_t goal = static_cast<std::size_t>(n) * m - 1;
  return best[goal] / static_cast<double>(len[goal]);
}

}  // namespace covomix::metrics
