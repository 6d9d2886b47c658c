#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "covomix/dialmetrics.hpp"
#include "covomix/errors.hpp"
#include "covomix/rng.hpp"
#include "reference_metrics.hpp"
#include "testutil.hpp"

using namespace covomix;
using namespace covomix::metrics;

namespace {

SpeakerSegments two_speakers(std::vector<Interval> a, std::vector<Interval> b) {
  SpeakerSegments s;
  s.speakers = {"A", "B"};
  s.intervals = {std::move(a), std::move(b)};
  return s;
}

double total(const std::vector<Interval>& v) {
  double acc = 0.0;
  for (const auto& i : v) acc += i.duration();
  return acc;
}

// Random two-speaker segment sets on a 10 ms grid with globally distinct
// endpoint values, so boundary ownership is unambiguous at cell resolution.
SpeakerSegments random_grid_segments(Rng& rng) {
  std::vector<double> used;
  auto fresh = [&](double t) {
    for (double u : used) {
      if (std::abs(u - t) < 0.005) return false;
    }
    return true;
  };
  SpeakerSegments segs;
  segs.speakers = {"A", "B"};
  segs.intervals.resize(2);
  for (int s = 0; s < 2; ++s) {
    double t = 0.01 * rng.uniform_int(100);
    const int n = 1 + rng.uniform_int(4);
    for (int i = 0; i < n; ++i) {
      double start = t + 0.01 * (1 + rng.uniform_int(150));
      while (!fresh(start)) start += 0.01;
      double end = start + 0.01 * (1 + rng.uniform_int(200));
      while (!fresh(end)) end += 0.01;
      used.push_back(start);
      used.push_back(end);
      segs.intervals[static_cast<std::size_t>(s)].push_back({start, end});
      t = end;
    }
  }
  return segs;
}

dsp::MelSpectrogram random_mel(Rng& rng, int frames, int mels = 8) {
  dsp::MelSpectrogram mel;
  mel.n_frames = frames;
  mel.n_mels = mels;
  mel.values.resize(static_cast<std::size_t>(frames) * mels);
  for (auto& v : mel.values) v = rng.normal();
  return mel;
}

std::vector<std::vector<double>> pair_costs(const dsp::MelSpectrogram& a,
                                            const dsp::MelSpectrogram& b, int order) {
  const dsp::RealMatrix ca = dsp::mel_cepstra(a, order);
  const dsp::RealMatrix cb = dsp::mel_cepstra(b, order);
  const double k_mcd = 10.0 * std::sqrt(2.0) / std::log(10.0);
  std::vector<std::vector<double>> cost(static_cast<std::size_t>(ca.rows),
                                        std::vector<double>(static_cast<std::size_t>(cb.rows)));
  for (int i = 0; i < ca.rows; ++i) {
    for (int j = 0; j < cb.rows; ++j) {
      double acc = 0.0;
      for (int c = 0; c < order; ++c) {
        const double d = ca.at(i, c) - cb.at(j, c);
        acc += d * d;
      }
      cost[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = k_mcd * std::sqrt(acc);
    }
  }
  return cost;
}

}  // namespace

TEST_CASE("turn-taking hand cases") {
  SUBCASE("overlap of 0.5 s") {
    auto ev = extract_turn_events(two_speakers({{0.0, 2.0}}, {{1.5, 3.0}}));
    REQUIRE(ev.overlaps.size() == 1);
    CHECK(ev.overlaps[0].start_s == 1.5);
    CHECK(ev.overlaps[0].end_s == 2.0);
    CHECK(ev.overlaps[0].duration() == 0.5);
    CHECK(ev.intra_pauses.empty());
    CHECK(ev.inter_silences.empty());
  }

  SUBCASE("intra-speaker pause of 1.0 s") {
    auto ev = extract_turn_events(two_speakers({{0.0, 1.0}, {2.0, 3.0}}, {}));
    REQUIRE(ev.intra_pauses.size() == 1);
    CHECK(ev.intra_pauses[0].start_s == 1.0);
    CHECK(ev.intra_pauses[0].end_s == 2.0);
    CHECK(ev.inter_silences.empty());
  }

  SUBCASE("inter-speaker silence of 1.0 s") {
    auto ev = extract_turn_events(two_speakers({{0.0, 1.0}}, {{2.0, 3.0}}));
    REQUIRE(ev.inter_silences.size() == 1);
    CHECK(ev.inter_silences[0].duration() == doctest::Approx(1.0));
    CHECK(ev.intra_pauses.empty());
  }

  SUBCASE("more than two speakers is a documented error") {
    SpeakerSegments s;
    s.speakers = {"A", "B", "C"};
    s.intervals = {{}, {}, {}};
    CHECK_THROWS_AS((void)extract_turn_events(s), DataError);
  }

  SUBCASE("zero-length gaps are not events") {
    auto ev = extract_turn_events(two_speakers({{0.0, 1.0}}, {{1.0, 2.0}}));
    CHECK(ev.inter_silences.empty());
    CHECK(ev.intra_pauses.empty());
    CHECK(ev.overlaps.empty());
  }
}

TEST_CASE("event partition covers the dialogue span") {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    SpeakerSegments segs = random_grid_segments(rng);
    auto ev = extract_turn_events(segs);
    double lo = 1e300, hi = -1e300;
    for (const auto& spk : segs.intervals) {
      for (const auto& i : spk) {
        lo = std::min(lo, i.start_s);
        hi = std::max(hi, i.end_s);
      }
    }
    const double gaps = total(ev.intra_pauses) + total(ev.inter_silences);
    CHECK(ev.active_union_s + gaps == doctest::Approx(hi - lo).epsilon(1e-9));
    // overlaps live inside the active union
    CHECK(total(ev.overlaps) <= ev.active_union_s + 1e-9);
  }
}

TEST_CASE("grid discretization oracle agrees per kind") {
  Rng rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    SpeakerSegments segs = random_grid_segments(rng);
    auto ev = extract_turn_events(segs);
    std::vector<refmetrics::Span> a, b;
    for (const auto& i : segs.intervals[0]) a.push_back({i.start_s, i.end_s});
    for (const auto& i : segs.intervals[1]) b.push_back({i.start_s, i.end_s});
    const refmetrics::GridTotals g = refmetrics::grid_turn_totals(a, b);
    const double cell = 0.010 + 1e-9;
    CHECK(std::abs(total(ev.intra_pauses) - g.intra) <= cell);
    CHECK(std::abs(total(ev.inter_silences) - g.inter) <= cell);
    CHECK(std::abs(total(ev.overlaps) - g.overlap) <= cell);
    CHECK(std::abs(ev.active_union_s - g.active_union) <= cell);
  }
}

TEST_CASE("turn_stats") {
  SUBCASE("single event: mean = median = duration") {
    TurnTakingEvents ev;
    ev.intra_pauses.push_back({0.0, 0.5});
    ev.active.resize(2);
    TurnStats ts = turn_stats({ev}, {});
    CHECK(ts.intra_pause.count == 1);
    CHECK(ts.intra_pause.mean == doctest::Approx(0.5));
    CHECK(ts.intra_pause.median == doctest::Approx(0.5));
  }

  SUBCASE("durations 1,2,3: mean 2, median 2") {
    TurnTakingEvents ev;
    ev.inter_silences.push_back({0.0, 1.0});
    ev.inter_silences.push_back({2.0, 4.0});
    ev.inter_silences.push_back({5.0, 8.0});
    ev.active.resize(2);
    TurnStats ts = turn_stats({ev}, {0.0, 1.5, 2.5, 10.0});
    CHECK(ts.inter_silence.mean == doctest::Approx(2.0));
    CHECK(ts.inter_silence.median == doctest::Approx(2.0));
    CHECK(ts.inter_silence.bin_counts == std::vector<std::size_t>{1, 1, 1});
  }

  SUBCASE("matches a scalar-loop reference on random corpora") {
    Rng rng(13);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<TurnTakingEvents> corpus;
      std::vector<double> expect_overlap;
      const int n_dial = 1 + rng.uniform_int(5);
      for (int d = 0; d < n_dial; ++d) {
        TurnTakingEvents ev;
        ev.active.resize(2);
        const int n_ev = rng.uniform_int(6);
        for (int e = 0; e < n_ev; ++e) {
          const double s = rng.uniform(0.0, 50.0);
          const double dur = rng.uniform(0.01, 3.0);
          ev.overlaps.push_back({s, s + dur});
          expect_overlap.push_back(dur);
        }
        corpus.push_back(ev);
      }
      if (expect_overlap.empty()) continue;
      TurnStats ts = turn_stats(corpus, {});
      double mean = 0.0;
      for (double d : expect_overlap) mean += d;
      mean /= static_cast<double>(expect_overlap.size());
      std::sort(expect_overlap.begin(), expect_overlap.end());
      const std::size_t n = expect_overlap.size();
      const double median = n % 2 == 1 ? expect_overlap[n / 2]
                                       : 0.5 * (expect_overlap[n / 2 - 1] + expect_overlap[n / 2]);
      CHECK(ts.overlap.count == n);
      CHECK(ts.overlap.mean == doctest::Approx(mean).epsilon(1e-12));
      CHECK(ts.overlap.median == doctest::Approx(median).epsilon(1e-12));
    }
  }

  SUBCASE("empty corpus is an error") {
    CHECK_THROWS_AS((void)turn_stats({}, {}), DataError);
  }
}

TEST_CASE("laughter_stats") {
  SUBCASE("no spans reports zero with the undefined flag") {
    LaughterStats ls = laughter_stats({{}, {}});
    CHECK(ls.count == 0);
    CHECK(ls.mean_duration_s == 0.0);
    CHECK_FALSE(ls.defined);
  }

  SUBCASE("two spans of 1 and 2 seconds") {
    LaughterStats ls = laughter_stats({{{0.0, 1.0}, {2.0, 4.0}}});
    CHECK(ls.count == 2);
    CHECK(ls.mean_duration_s == doctest::Approx(1.5));
    CHECK(ls.defined);
  }

  SUBCASE("matches a loop oracle on random spans") {
    Rng rng(17);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<std::vector<Interval>> spans;
      std::size_t count = 0;
      double sum = 0.0;
      const int n_dial = 1 + rng.uniform_int(4);
      for (int d = 0; d < n_dial; ++d) {
        std::vector<Interval> v;
        const int n = rng.uniform_int(5);
        for (int i = 0; i < n; ++i) {
          const double s = rng.uniform(0.0, 30.0);
          const double dur = rng.uniform(0.05, 2.0);
          v.push_back({s, s + dur});
          count += 1;
          sum += dur;
        }
        spans.push_back(v);
      }
      LaughterStats ls = laughter_stats(spans);
      CHECK(ls.count == count);
      if (count > 0) {
        CHECK(ls.mean_duration_s ==
              doctest::Approx(sum / static_cast<double>(count)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("consistency matrix") {
  SUBCASE("identical embeddings give all ones") {
    ConsistencyMatrix m = consistency_matrix({{1.0, 2.0}, {1.0, 2.0}, {1.0, 2.0}});
    for (double v : m.values) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("orthogonal pair gives zero off-diagonal") {
    ConsistencyMatrix m = consistency_matrix({{1.0, 0.0}, {0.0, 1.0}});
    CHECK(m.at(0, 1) == 0.0);
    CHECK(m.at(0, 0) == 1.0);
  }

  SUBCASE("v and -v give -1") {
    ConsistencyMatrix m = consistency_matrix({{0.3, -0.7, 2.0}, {-0.3, 0.7, -2.0}});
    CHECK(m.at(0, 1) == doctest::Approx(-1.0).epsilon(1e-12));
  }

  SUBCASE("zero-norm embedding is an error") {
    CHECK_THROWS_AS((void)consistency_matrix({{0.0, 0.0}, {1.0, 0.0}}), DataError);
  }

  SUBCASE("power-of-two scaling leaves the matrix bitwise unchanged") {
    Rng rng(23);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<std::vector<double>> emb;
      const int n = 2 + rng.uniform_int(4);
      for (int i = 0; i < n; ++i) {
        std::vector<double> v(6);
        for (auto& x : v) x = rng.normal();
        emb.push_back(v);
      }
      ConsistencyMatrix base = consistency_matrix(emb);
      auto scaled = emb;
      for (auto& x : scaled[0]) x *= 4.0;
      for (auto& x : scaled[1]) x *= 0.25;
      ConsistencyMatrix after = consistency_matrix(scaled);
      CHECK(base.values == after.values);
    }
  }

  SUBCASE("symmetric, unit diagonal, entries in [-1, 1]") {
    Rng rng(29);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<std::vector<double>> emb;
      const int n = 2 + rng.uniform_int(5);
      for (int i = 0; i < n; ++i) {
        std::vector<double> v(4);
        for (auto& x : v) x = rng.normal();
        emb.push_back(v);
      }
      ConsistencyMatrix m = consistency_matrix(emb);
      for (int i = 0; i < m.n; ++i) {
        CHECK(m.at(i, i) == 1.0);
        for (int j = 0; j < m.n; ++j) {
          CHECK(m.at(i, j) == m.at(j, i));
          CHECK(m.at(i, j) >= -1.0 - 1e-12);
          CHECK(m.at(i, j) <= 1.0 + 1e-12);
        }
      }
    }
  }
}

TEST_CASE("mcd_dtw") {
  Rng rng(31);

  SUBCASE("identical spectrograms give exactly zero") {
    dsp::MelSpectrogram a = random_mel(rng, 12);
    CHECK(mcd_dtw(a, a, 5) == 0.0);
  }

  SUBCASE("a duplicated frame is absorbed by the warp") {
    dsp::MelSpectrogram a = random_mel(rng, 10);
    dsp::MelSpectrogram b = a;
    b.n_frames = 11;
    // duplicate frame 4
    b.values.insert(b.values.begin() + 4 * a.n_mels, a.row(4), a.row(4) + a.n_mels);
    CHECK(mcd_dtw(a, b, 5) == 0.0);
    CHECK(mcd_dtw(b, a, 5) == 0.0);
  }

  SUBCASE("symmetry is bitwise") {
    for (int trial = 0; trial < 20; ++trial) {
      dsp::MelSpectrogram a = random_mel(rng, 3 + rng.uniform_int(15));
      dsp::MelSpectrogram b = random_mel(rng, 3 + rng.uniform_int(15));
      CHECK(mcd_dtw(a, b, 5) == mcd_dtw(b, a, 5));
    }
  }

  SUBCASE("equals the memoized exhaustive-path oracle") {
    for (int trial = 0; trial < 40; ++trial) {
      dsp::MelSpectrogram a = random_mel(rng, 2 + rng.uniform_int(19));
      dsp::MelSpectrogram b = random_mel(rng, 2 + rng.uniform_int(19));
      const double expect = refmetrics::dtw_best_ratio(pair_costs(a, b, 5));
      CHECK(mcd_dtw(a, b, 5) == doctest::Approx(expect).epsilon(1e-12));
    }
  }

  SUBCASE("equals literal enumeration over all paths on tiny inputs") {
    for (int trial = 0; trial < 15; ++trial) {
      dsp::MelSpectrogram a = random_mel(rng, 2 + rng.uniform_int(5));
      dsp::MelSpectrogram b = random_mel(rng, 2 + rng.uniform_int(5));
      const auto cost = pair_costs(a, b, 5);
      CHECK(mcd_dtw(a, b, 5) == doctest::Approx(refmetrics::dtw_enumerated_ratio(cost)).epsilon(1e-12));
      CHECK(refmetrics::dtw_best_ratio(cost) ==
            doctest::Approx(refmetrics::dtw_enumerated_ratio(cost)).epsilon(1e-12));
    }
  }

  SUBCASE("never exceeds the frame-aligned cost for equal lengths") {
    for (int trial = 0; trial < 20; ++trial) {
      const int frames = 4 + rng.uniform_int(10);
      dsp::MelSpectrogram a = random_mel(rng, frames);
      dsp::MelSpectrogram b = random_mel(rng, frames);
      const auto cost = pair_costs(a, b, 5);
      double aligned = 0.0;
      for (int i = 0; i < frames; ++i) aligned += cost[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)];
      aligned /= frames;
      CHECK(mcd_dtw(a, b, 5) <= aligned + 1e-12);
    }
  }

  SUBCASE("empty input and mel mismatch are errors") {
    dsp::MelSpectrogram a = random_mel(rng, 5);
    dsp::MelSpectrogram empty;
    empty.n_mels = a.n_mels;
    CHECK_THROWS_AS((void)mcd_dtw(a, empty, 5), DataError);
    dsp::MelSpectrogram narrow = random_mel(rng, 5, 4);
    CHECK_THROWS_AS((void)mcd_dtw(a, narrow, 3), DimensionError);
  }
}
