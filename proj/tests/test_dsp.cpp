#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "covomix/dsp.hpp"
#include "covomix/errors.hpp"
#include "covomix/rng.hpp"
#include "testutil.hpp"

using namespace covomix;
using namespace covomix::dsp;

namespace {

Waveform sine(double freq_hz, double seconds, double amp, int sr = 8000) {
  Waveform w;
  w.sample_rate = sr;
  const std::size_t n = static_cast<std::size_t>(seconds * sr);
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    w.samples[i] = amp * std::sin(2.0 * std::numbers::pi * freq_hz * static_cast<double>(i) / sr);
  }
  return w;
}

Waveform seeded_noise(std::uint64_t seed, std::size_t n, double amp, int sr = 8000) {
  Waveform w;
  w.sample_rate = sr;
  w.samples.resize(n);
  Rng rng(seed);
  for (auto& s : w.samples) s = rng.uniform(-amp, amp);
  return w;
}

// Independent mel-scale math for the filter-center oracle.
double oracle_center_hz(int filter, int n_mels, int sr) {
  const double mel_max = 2595.0 * std::log10(1.0 + (sr / 2.0) / 700.0);
  const double mel = mel_max * (filter + 1) / (n_mels + 1);
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

// Independent DCT-II oracle written from the transform definition.
std::vector<double> oracle_dct(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<double> out(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += x[i] * std::cos(std::numbers::pi / static_cast<double>(n) *
                             (static_cast<double>(i) + 0.5) * static_cast<double>(k));
    }
    acc *= std::sqrt(2.0 / static_cast<double>(n));
    if (k == 0) acc /= std::sqrt(2.0);
    out[k] = acc;
  }
  return out;
}

}  // namespace

TEST_CASE("mel spectrogram basics") {
  MelConfig cfg;

  SUBCASE("frame count arithmetic") {
    Waveform w = seeded_noise(1, 4000, 0.5);
    MelSpectrogram mel = mel_spectrogram(w, cfg);
    CHECK(mel.n_frames == (4000 - cfg.win_length) / cfg.hop_length + 1);
    CHECK(mel.n_mels == 80);
    CHECK(mel.frame_shift_ms == doctest::Approx(20.0));
  }

  SUBCASE("empty / too-short waveform rejected") {
    Waveform w;
    CHECK_THROWS_AS((void)mel_spectrogram(w, cfg), DataError);
    w.samples.assign(100, 0.0);
    CHECK_THROWS_AS((void)mel_spectrogram(w, cfg), DataError);
  }

  SUBCASE("all-zero waveform gives ln(floor) everywhere") {
    Waveform w;
    w.samples.assign(2000, 0.0);
    MelSpectrogram mel = mel_spectrogram(w, cfg);
    const double expect = std::log(cfg.power_floor);
    for (double v : mel.values) CHECK(v == doctest::Approx(expect));
  }

  SUBCASE("pure sine at a filter center peaks in that filter") {
    const int target = 40;
    const double freq = oracle_center_hz(target, cfg.n_mels, cfg.sample_rate);
    // cross-check the production centers agree with the oracle formula
    const auto centers = mel_filter_centers_hz(cfg);
    CHECK(centers[static_cast<std::size_t>(target)] == doctest::Approx(freq).epsilon(1e-9));

    Waveform w = sine(freq, 1.0, 0.5);
    MelSpectrogram mel = mel_spectrogram(w, cfg);
    for (int f = 2; f < mel.n_frames - 2; ++f) {
      int argmax = 0;
      for (int m = 1; m < mel.n_mels; ++m) {
        if (mel.at(f, m) > mel.at(f, argmax)) argmax = m;
      }
      CHECK(argmax == target);
    }
  }

  SUBCASE("deterministic") {
    Waveform w = seeded_noise(7, 3000, 0.3);
    CHECK(mel_spectrogram(w, cfg).values == mel_spectrogram(w, cfg).values);
  }

  SUBCASE("mel of mix has same shape but is not the sum of log-mels") {
    Waveform a = seeded_noise(2, 4000, 0.3);
    Waveform b = seeded_noise(3, 4000, 0.3);
    MelSpectrogram ma = mel_spectrogram(a, cfg);
    MelSpectrogram mb = mel_spectrogram(b, cfg);
    MelSpectrogram mm = mel_spectrogram(mix_waveforms(a, b), cfg);
    CHECK(mm.n_frames == ma.n_frames);
    CHECK(mm.n_mels == ma.n_mels);
    double diff = 0.0;
    for (std::size_t i = 0; i < mm.values.size(); ++i) {
      diff = std::max(diff, std::abs(mm.values[i] - (ma.values[i] + mb.values[i])));
    }
    CHECK(diff > 0.1);
  }
}

TEST_CASE("mix_waveforms") {
  SUBCASE("a + silence = a") {
    Waveform a = seeded_noise(5, 1000, 0.4);
    Waveform silence;
    silence.samples.assign(1000, 0.0);
    Waveform m = mix_waveforms(a, silence);
    CHECK(m.samples == a.samples);
  }

  SUBCASE("a + (-a) = zeros") {
    Waveform a = seeded_noise(6, 1000, 0.4);
    Waveform neg = a;
    for (auto& s : neg.samples) s = -s;
    Waveform m = mix_waveforms(a, neg);
    for (double s : m.samples) CHECK(s == 0.0);
  }

  SUBCASE("matches a scalar-loop reference on seeded noise") {
    Waveform a = seeded_noise(10, 900, 0.8);
    Waveform b = seeded_noise(11, 1100, 0.8);
    Waveform m = mix_waveforms(a, b);
    REQUIRE(m.samples.size() == 1100);
    for (std::size_t i = 0; i < m.samples.size(); ++i) {
      double expect = (i < 900 ? a.samples[i] : 0.0) + b.samples[i];
      if (expect > 1.0) expect = 1.0;
      if (expect < -1.0) expect = -1.0;
      CHECK(m.samples[i] == expect);
    }
  }

  SUBCASE("sample-rate mismatch is an error") {
    Waveform a = seeded_noise(1, 100, 0.1, 8000);
    Waveform b = seeded_noise(2, 100, 0.1, 16000);
    CHECK_THROWS_AS((void)mix_waveforms(a, b), DataError);
  }
}

TEST_CASE("mel cepstra") {
  SUBCASE("constant row gives all-zero retained coefficients") {
    MelSpectrogram mel;
    mel.n_frames = 2;
    mel.n_mels = 8;
    mel.values.assign(16, 3.25);
    RealMatrix c = mel_cepstra(mel, 5);
    CHECK(c.rows == 2);
    CHECK(c.cols == 5);
    for (double v : c.values) CHECK(v == doctest::Approx(0.0).scale(1));
  }

  SUBCASE("cosine row at DCT basis k excites only coefficient k") {
    const int n = 8, k = 3;
    MelSpectrogram mel;
    mel.n_frames = 1;
    mel.n_mels = n;
    mel.values.resize(n);
    for (int i = 0; i < n; ++i) {
      mel.values[static_cast<std::size_t>(i)] =
          std::cos(std::numbers::pi * (i + 0.5) * k / n);
    }
    RealMatrix c = mel_cepstra(mel, 6);
    for (int j = 0; j < 6; ++j) {
      if (j + 1 == k) {
        CHECK(std::abs(c.at(0, j)) > 0.5);
      } else {
        CHECK(c.at(0, j) == doctest::Approx(0.0).scale(1));
      }
    }
  }

  SUBCASE("random input matches the independent DCT oracle") {
    Rng rng(17);
    MelSpectrogram mel;
    mel.n_frames = 3;
    mel.n_mels = 8;
    mel.values.resize(24);
    for (auto& v : mel.values) v = rng.normal();
    RealMatrix c = mel_cepstra(mel, 7);
    for (int f = 0; f < 3; ++f) {
      std::vector<double> row(mel.row(f), mel.row(f) + 8);
      const std::vector<double> expect = oracle_dct(row);
      for (int k = 0; k < 7; ++k) {
        CHECK(c.at(f, k) == doctest::Approx(expect[static_cast<std::size_t>(k) + 1]).epsilon(1e-9));
      }
    }
  }

  SUBCASE("orthonormal: transpose recovers rows within 1e-9") {
    Rng rng(19);
    std::vector<double> row(16);
    for (auto& v : row) v = rng.normal();
    const std::vector<double> rec = idct2_orthonormal(dct2_orthonormal(row));
    CHECK(testutil::max_abs_diff(row, rec) < 1e-9);
  }

  SUBCASE("order bounds") {
    MelSpectrogram mel;
    mel.n_frames = 1;
    mel.n_mels = 8;
    mel.values.assign(8, 0.0);
    CHECK_THROWS_AS((void)mel_cepstra(mel, 0), DataError);
    CHECK_THROWS_AS((void)mel_cepstra(mel, 8), DataError);
  }
}

TEST_CASE("griffin-lim") {
  MelConfig cfg;

  SUBCASE("zero iterations: output length = (frames-1)*hop + win") {
    Waveform w = seeded_noise(21, 4000, 0.5);
    MelSpectrogram mel = mel_spectrogram(w, cfg);
    Waveform out = griffin_lim(mel, 0, 99, cfg);
    CHECK(out.samples.size() ==
          static_cast<std::size_t>((mel.n_frames - 1) * cfg.hop_length + cfg.win_length));
  }

  SUBCASE("all-floor mel reconstructs near-silence") {
    MelSpectrogram mel;
    mel.n_frames = 20;
    mel.n_mels = cfg.n_mels;
    mel.values.assign(static_cast<std::size_t>(20) * cfg.n_mels, std::log(cfg.power_floor));
    Waveform out = griffin_lim(mel, 10, 3, cfg);
    double mx = 0.0;
    for (double s : out.samples) mx = std::max(mx, std::abs(s));
    CHECK(mx < 1e-3);
  }

  SUBCASE("round-trip log-mel correlation >= 0.9 on a noise-burst signal") {
    // 1 s with alternating loud/quiet 100 ms noise bursts
    Waveform w;
    w.sample_rate = 8000;
    w.samples.resize(8000);
    Rng rng(31);
    for (std::size_t i = 0; i < w.samples.size(); ++i) {
      const bool loud = (i / 800) % 2 == 0;
      w.samples[i] = rng.uniform(-1.0, 1.0) * (loud ? 0.5 : 0.02);
    }
    MelSpectrogram mel = mel_spectrogram(w, cfg);
    Waveform rec = griffin_lim(mel, 60, 7, cfg);
    MelSpectrogram mel2 = mel_spectrogram(rec, cfg);
    REQUIRE(mel2.n_frames >= mel.n_frames);
    // compare over the common frame range
    std::vector<double> a(mel.values.begin(),
                          mel.values.begin() + static_cast<std::ptrdiff_t>(mel.values.size()));
    std::vector<double> b(mel2.values.begin(),
                          mel2.values.begin() + static_cast<std::ptrdiff_t>(mel.values.size()));
    CHECK(testutil::pearson(a, b) >= 0.9);
  }

  SUBCASE("deterministic for fixed seed") {
    Waveform w = seeded_noise(41, 2000, 0.5);
    MelSpectrogram mel = mel_spectrogram(w, cfg);
    Waveform r1 = griffin_lim(mel, 5, 11, cfg);
    Waveform r2 = griffin_lim(mel, 5, 11, cfg);
    CHECK(r1.samples == r2.samples);
  }

  SUBCASE("negative iteration count rejected") {
    MelSpectrogram mel;
    mel.n_frames = 4;
    mel.n_mels = cfg.n_mels;
    mel.values.assign(static_cast<std::size_t>(4) * cfg.n_mels, -5.0);
    CHECK_THROWS_AS((void)griffin_lim(mel, -1, 0, cfg), DataError);
  }
}

TEST_CASE("wav io round-trip") {
  testutil::ScratchDir dir("wav");

  SUBCASE("mono") {
    Waveform w = seeded_noise(51, 500, 0.7);
    write_wav(dir.str("m.wav"), {w});
    auto channels = read_wav(dir.str("m.wav"));
    REQUIRE(channels.size() == 1);
    CHECK(channels[0].sample_rate == 8000);
    REQUIRE(channels[0].samples.size() == 500);
    for (std::size_t i = 0; i < 500; ++i) {
      CHECK(channels[0].samples[i] == doctest::Approx(w.samples[i]).epsilon(1e-3));
    }
  }

  SUBCASE("stereo with unequal lengths pads the short channel") {
    Waveform a = seeded_noise(52, 400, 0.7);
    Waveform b = seeded_noise(53, 300, 0.7);
    write_wav(dir.str("s.wav"), {a, b});
    auto channels = read_wav(dir.str("s.wav"));
    REQUIRE(channels.size() == 2);
    CHECK(channels[0].samples.size() == 400);
    CHECK(channels[1].samples.size() == 400);
    for (std::size_t i = 300; i < 400; ++i) CHECK(channels[1].samples[i] == 0.0);
  }

  SUBCASE("garbage file rejected") {
    std::ofstream os(dir.str("junk.wav"), std::ios::binary);
    os << "this is not audio";
    os.close();
    CHECK_THROWS_AS((void)read_wav(dir.str("junk.wav")), DataError);
  }
}

TEST_CASE("mel file round-trip") {
  testutil::ScratchDir dir("melf");
  Rng rng(61);
  MelSpectrogram mel;
  mel.n_frames = 7;
  mel.n_mels = 5;
  mel.frame_shift_ms = 20.0;
  mel.values.resize(35);
  for (auto& v : mel.values) v = rng.normal();
  write_mel(dir.str("x.melf"), mel);
  MelSpectrogram r = read_mel(dir.str("x.melf"));
  CHECK(r.n_frames == 7);
  CHECK(r.n_mels == 5);
  CHECK(r.frame_shift_ms == 20.0);
  for (std::size_t i = 0; i < mel.values.size(); ++i) {
    CHECK(r.values[i] == doctest::Approx(mel.values[i]).epsilon(1e-6));
  }
}
