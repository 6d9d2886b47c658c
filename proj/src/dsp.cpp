#include "covomix/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <numbers>

#include "covomix/errors.hpp"
#include "covomix/rng.hpp"

namespace covomix::dsp {

namespace {

using cd = std::complex<double>;
constexpr double kPi = std::numbers::pi;

// ---- radix-2 FFT (n must be a power of two) ----

void fft_inplace(std::vector<cd>& a, bool inverse) {
  const std::size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0) throw DimensionError("fft: size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * kPi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    const cd wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      cd w(1.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        const cd u = a[i + j];
        const cd v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse) {
    for (auto& x : a) x /= static_cast<double>(n);
  }
}

std::vector<double> hann_window(int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    w[static_cast<std::size_t>(i)] = 0.5 * (1.0 - std::cos(2.0 * kPi * i / n));
  }
  return w;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Triangular filters peaking at 1.0, HTK-style mel spacing over [0, sr/2].
// Rows: n_mels, cols: n_fft/2 + 1.
std::vector<double> mel_filterbank(const MelConfig& cfg) {
  const int n_bins = cfg.n_fft / 2 + 1;
  const double f_max = cfg.sample_rate / 2.0;
  const double mel_max = hz_to_mel(f_max);
  std::vector<double> edges(static_cast<std::size_t>(cfg.n_mels) + 2);
  for (int i = 0; i < cfg.n_mels + 2; ++i) {
    edges[static_cast<std::size_t>(i)] = mel_to_hz(mel_max * i / (cfg.n_mels + 1));
  }
  std::vector<double> fb(static_cast<std::size_t>(cfg.n_mels) * n_bins, 0.0);
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double lo = edges[static_cast<std::size_t>(m)];
    const double mid = edges[static_cast<std::size_t>(m) + 1];
    const double hi = edges[static_cast<std::size_t>(m) + 2];
    for (int b = 0; b < n_bins; ++b) {
      const double f = static_cast<double>(b) * cfg.sample_rate / cfg.n_fft;
      double w = 0.0;
      if (f > lo && f < mid) {
        w = (f - lo) / (mid - lo);
      } else if (f >= mid && f < hi) {
        w = (hi - f) / (hi - mid);
      }
      fb[static_cast<std::size_t>(m) * n_bins + b] = w;
    }
  }
  return fb;
}

int frame_count(std::size_t samples, const MelConfig& cfg) {
  if (samples < static_cast<std::size_t>(cfg.win_length)) return 0;
  return static_cast<int>((samples - cfg.win_length) / cfg.hop_length) + 1;
}

// Power spectrogram, frames × (n_fft/2 + 1).
std::vector<double> power_stft(const std::vector<double>& samples, const MelConfig& cfg,
                               int n_frames) {
  const int n_bins = cfg.n_fft / 2 + 1;
  const std::vector<double> window = hann_window(cfg.win_length);
  std::vector<double> power(static_cast<std::size_t>(n_frames) * n_bins);
  std::vector<cd> buf(static_cast<std::size_t>(cfg.n_fft));
  for (int f = 0; f < n_frames; ++f) {
    const std::size_t off = static_cast<std::size_t>(f) * cfg.hop_length;
    std::fill(buf.begin(), buf.end(), cd(0.0));
    for (int i = 0; i < cfg.win_length; ++i) {
      buf[static_cast<std::size_t>(i)] = samples[off + i] * window[static_cast<std::size_t>(i)];
    }
    fft_inplace(buf, false);
    for (int b = 0; b < n_bins; ++b) {
      power[static_cast<std::size_t>(f) * n_bins + b] = std::norm(buf[static_cast<std::size_t>(b)]);
    }
  }
  return power;
}

void check_waveform(const Waveform& w, const char* op) {
  if (w.sample_rate <= 0) throw DataError(std::string(op) + ": non-positive sample rate");
  for (double s : w.samples) {
    if (!std::isfinite(s)) throw DataError(std::string(op) + ": non-finite sample");
  }
}

}  // namespace

MelSpectrogram mel_spectrogram(const Waveform& w, const MelConfig& cfg) {
  check_waveform(w, "mel_spectrogram");
  if (w.samples.size() < static_cast<std::size_t>(cfg.win_length)) {
    throw DataError("mel_spectrogram: waveform shorter than one window");
  }
  const int n_frames = frame_count(w.samples.size(), cfg);
  const int n_bins = cfg.n_fft / 2 + 1;
  const std::vector<double> fb = mel_filterbank(cfg);
  const std::vector<double> power = power_stft(w.samples, cfg, n_frames);

  MelSpectrogram mel;
  mel.n_frames = n_frames;
  mel.n_mels = cfg.n_mels;
  mel.frame_shift_ms = 1000.0 * cfg.hop_length / cfg.sample_rate;
  mel.values.resize(static_cast<std::size_t>(n_frames) * cfg.n_mels);
  for (int f = 0; f < n_frames; ++f) {
    const double* prow = power.data() + static_cast<std::size_t>(f) * n_bins;
    for (int m = 0; m < cfg.n_mels; ++m) {
      const double* frow = fb.data() + static_cast<std::size_t>(m) * n_bins;
      double acc = 0.0;
      for (int b = 0; b < n_bins; ++b) acc += frow[b] * prow[b];
      mel.at(f, m) = std::log(std::max(acc, cfg.power_floor));
    }
  }
  return mel;
}

std::vector<double> mel_filter_centers_hz(const MelConfig& cfg) {
  const double mel_max = hz_to_mel(cfg.sample_rate / 2.0);
  std::vector<double> centers(static_cast<std::size_t>(cfg.n_mels));
  for (int m = 0; m < cfg.n_mels; ++m) {
    centers[static_cast<std::size_t>(m)] = mel_to_hz(mel_max * (m + 1) / (cfg.n_mels + 1));
  }
  return centers;
}

Waveform mix_waveforms(const Waveform& a, const Waveform& b) {
  check_waveform(a, "mix_waveforms");
  check_waveform(b, "mix_waveforms");
  if (a.sample_rate != b.sample_rate) {
    throw DataError("mix_waveforms: sample rate mismatch " + std::to_string(a.sample_rate) +
                    " vs " + std::to_string(b.sample_rate));
  }
  Waveform out;
  out.sample_rate = a.sample_rate;
  out.samples.resize(std::max(a.samples.size(), b.samples.size()), 0.0);
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    const double va = i < a.samples.size() ? a.samples[i] : 0.0;
    const double vb = i < b.samples.size() ? b.samples[i] : 0.0;
    out.samples[i] = std::clamp(va + vb, -1.0, 1.0);
  }
  return out;
}

std::vector<double> dct2_orthonormal(const std::vector<double>& row) {
  const int n = static_cast<int>(row.size());
  std::vector<double> out(static_cast<std::size_t>(n), 0.0);
  for (int k = 0; k < n; ++k) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      acc += row[static_cast<std::size_t>(i)] * std::cos(kPi * (i + 0.5) * k / n);
    }
    const double s = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
    out[static_cast<std::size_t>(k)] = s * acc;
  }
  return out;
}

std::vector<double> idct2_orthonormal(const std::vector<double>& coeffs) {
  const int n = static_cast<int>(coeffs.size());
  std::vector<double> out(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int k = 0; k < n; ++k) {
      const double s = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
      acc += s * coeffs[static_cast<std::size_t>(k)] * std::cos(kPi * (i + 0.5) * k / n);
    }
    out[static_cast<std::size_t>(i)] = acc;
  }
  return out;
}

RealMatrix mel_cepstra(const MelSpectrogram& mel, int order) {
  if (order < 1) throw DataError("mel_cepstra: order must be >= 1");
  if (order >= mel.n_mels) {
    throw DataError("mel_cepstra: order must be < n_mels (c0 is dropped)");
  }
  RealMatrix out;
  out.rows = mel.n_frames;
  out.cols = order;
  out.values.resize(static_cast<std::size_t>(mel.n_frames) * order);
  std::vector<double> row(static_cast<std::size_t>(mel.n_mels));
  for (int f = 0; f < mel.n_frames; ++f) {
    std::copy(mel.row(f), mel.row(f) + mel.n_mels, row.begin());
    const std::vector<double> c = dct2_orthonormal(row);
    for (int k = 0; k < order; ++k) out.at(f, k) = c[static_cast<std::size_t>(k) + 1];
  }
  return out;
}

std::vector<double> silence_mel_frame(const MelConfig& cfg) {
  return std::vector<double>(static_cast<std::size_t>(cfg.n_mels),
                             std::log(cfg.power_floor));
}

// ----------------------------- griffin-lim -----------------------------

namespace {

// Non-negative least squares x >= 0 with M x ~= b via multiplicative updates.
// M is the mel filterbank (n_mels × n_bins), b a mel power column.
std::vector<double> mel_to_linear_power(const std::vector<double>& fb, int n_mels,
                                        int n_bins, const std::vector<double>& mel_power) {
  // x0: transpose projection normalized by filter row sums.
  std::vector<double> x(static_cast<std::size_t>(n_bins), 0.0);
  for (int b = 0; b < n_bins; ++b) {
    double num = 0.0, den = 0.0;
    for (int m = 0; m < n_mels; ++m) {
      const double w = fb[static_cast<std::size_t>(m) * n_bins + b];
      num += w * mel_power[static_cast<std::size_t>(m)];
      den += w;
    }
    x[static_cast<std::size_t>(b)] = den > 0.0 ? num / den : 0.0;
  }
  std::vector<double> mx(static_cast<std::size_t>(n_mels));
  std::vector<double> mtmx(static_cast<std::size_t>(n_bins));
  std::vector<double> mtb(static_cast<std::size_t>(n_bins), 0.0);
  for (int b = 0; b < n_bins; ++b) {
    double acc = 0.0;
    for (int m = 0; m < n_mels; ++m) {
      acc += fb[static_cast<std::size_t>(m) * n_bins + b] * mel_power[static_cast<std::size_t>(m)];
    }
    mtb[static_cast<std::size_t>(b)] = acc;
  }
  constexpr double eps = 1e-12;
  for (int it = 0; it < 30; ++it) {
    for (int m = 0; m < n_mels; ++m) {
      double acc = 0.0;
      const double* frow = fb.data() + static_cast<std::size_t>(m) * n_bins;
      for (int b = 0; b < n_bins; ++b) acc += frow[b] * x[static_cast<std::size_t>(b)];
      mx[static_cast<std::size_t>(m)] = acc;
    }
    for (int b = 0; b < n_bins; ++b) {
      double acc = 0.0;
      for (int m = 0; m < n_mels; ++m) {
        acc += fb[static_cast<std::size_t>(m) * n_bins + b] * mx[static_cast<std::size_t>(m)];
      }
      mtmx[static_cast<std::size_t>(b)] = acc;
    }
    for (int b = 0; b < n_bins; ++b) {
      x[static_cast<std::size_t>(b)] *= mtb[static_cast<std::size_t>(b)] /
                                        (mtmx[static_cast<std::size_t>(b)] + eps);
    }
  }
  return x;
}

std::vector<double> istft(const std::vector<cd>& spec, int n_frames, const MelConfig& cfg) {
  const int n_bins = cfg.n_fft / 2 + 1;
  const int out_len = (n_frames - 1) * cfg.hop_length + cfg.win_length;
  const std::vector<double> window = hann_window(cfg.win_length);
  std::vector<double> out(static_cast<std::size_t>(out_len), 0.0);
  std::vector<double> wsum(static_cast<std::size_t>(out_len), 0.0);
  std::vector<cd> buf(static_cast<std::size_t>(cfg.n_fft));
  for (int f = 0; f < n_frames; ++f) {
    const cd* srow = spec.data() + static_cast<std::size_t>(f) * n_bins;
    for (int b = 0; b < n_bins; ++b) buf[static_cast<std::size_t>(b)] = srow[b];
    for (int b = n_bins; b < cfg.n_fft; ++b) {
      buf[static_cast<std::size_t>(b)] = std::conj(srow[cfg.n_fft - b]);
    }
    fft_inplace(buf, true);
    const std::size_t off = static_cast<std::size_t>(f) * cfg.hop_length;
    for (int i = 0; i < cfg.win_length; ++i) {
      const double w = window[static_cast<std::size_t>(i)];
      out[off + i] += buf[static_cast<std::size_t>(i)].real() * w;
      wsum[off + i] += w * w;
    }
  }
  // Floor the overlap normalizer: the first/last part-window positions would
  // otherwise divide by a vanishing w² sum and amplify inconsistent phases.
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] /= std::max(wsum[i], 1e-3);
  }
  return out;
}

std::vector<cd> stft_complex(const std::vector<double>& samples, int n_frames,
                             const MelConfig& cfg) {
  const int n_bins = cfg.n_fft / 2 + 1;
  const std::vector<double> window = hann_window(cfg.win_length);
  std::vector<cd> spec(static_cast<std::size_t>(n_frames) * n_bins);
  std::vector<cd> buf(static_cast<std::size_t>(cfg.n_fft));
  for (int f = 0; f < n_frames; ++f) {
    const std::size_t off = static_cast<std::size_t>(f) * cfg.hop_length;
    std::fill(buf.begin(), buf.end(), cd(0.0));
    for (int i = 0; i < cfg.win_length; ++i) {
      if (off + i < samples.size()) {
        buf[static_cast<std::size_t>(i)] = samples[off + i] * window[static_cast<std::size_t>(i)];
      }
    }
    fft_inplace(buf, false);
    for (int b = 0; b < n_bins; ++b) {
      spec[static_cast<std::size_t>(f) * n_bins + b] = buf[static_cast<std::size_t>(b)];
    }
  }
  return spec;
}

}  // namespace

Waveform griffin_lim(const MelSpectrogram& mel, int iterations, std::uint64_t seed,
                     const MelConfig& cfg) {
  if (iterations < 0) throw DataError("griffin_lim: iterations must be >= 0");
  if (mel.n_frames < 1) throw DataError("griffin_lim: empty spectrogram");
  if (mel.n_mels != cfg.n_mels) {
    throw DimensionError("griffin_lim: mel bins " + std::to_string(mel.n_mels) +
                         " vs config " + std::to_string(cfg.n_mels));
  }
  const int n_bins = cfg.n_fft / 2 + 1;
  const std::vector<double> fb = mel_filterbank(cfg);

  // per-frame linear magnitudes from mel powers
  std::vector<double> mag(static_cast<std::size_t>(mel.n_frames) * n_bins);
  std::vector<double> mel_power(static_cast<std::size_t>(mel.n_mels));
  for (int f = 0; f < mel.n_frames; ++f) {
    for (int m = 0; m < mel.n_mels; ++m) mel_power[static_cast<std::size_t>(m)] = std::exp(mel.at(f, m));
    const std::vector<double> lin = mel_to_linear_power(fb, cfg.n_mels, n_bins, mel_power);
    for (int b = 0; b < n_bins; ++b) {
      mag[static_cast<std::size_t>(f) * n_bins + b] = std::sqrt(std::max(lin[static_cast<std::size_t>(b)], 0.0));
    }
  }

  // seeded random initial phase; keep DC and Nyquist real
  Rng rng(seed);
  std::vector<cd> spec(static_cast<std::size_t>(mel.n_frames) * n_bins);
  for (int f = 0; f < mel.n_frames; ++f) {
    for (int b = 0; b < n_bins; ++b) {
      const double phase = (b == 0 || b == n_bins - 1) ? 0.0 : rng.uniform(0.0, 2.0 * kPi);
      const double m = mag[static_cast<std::size_t>(f) * n_bins + b];
      spec[static_cast<std::size_t>(f) * n_bins + b] = std::polar(m, phase);
    }
  }

  std::vector<double> wav;
  for (int it = 0; it < iterations; ++it) {
    wav = istft(spec, mel.n_frames, cfg);
    const std::vector<cd> est = stft_complex(wav, mel.n_frames, cfg);
    for (std::size_t i = 0; i < spec.size(); ++i) {
      const double a = std::abs(est[i]);
      const cd phase = a > 1e-14 ? est[i] / a : cd(1.0, 0.0);
      spec[i] = mag[i] * phase;
    }
  }
  wav = istft(spec, mel.n_frames, cfg);

  Waveform out;
  out.sample_rate = cfg.sample_rate;
  out.samples.resize(wav.size());
  for (std::size_t i = 0; i < wav.size(); ++i) out.samples[i] = std::clamp(wav[i], -1.0, 1.0);
  return out;
}

// ----------------------------- WAV io -----------------------------

namespace {

void put_u32(std::vector<unsigned char>& b, std::uint32_t v) {
  b.push_back(static_cast<unsigned char>(v & 0xff));
  b.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
  b.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
  b.push_back(static_cast<unsigned char>((v >> 24) & 0xff));
}

void put_u16(std::vector<unsigned char>& b, std::uint16_t v) {
  b.push_back(static_cast<unsigned char>(v & 0xff));
  b.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
}

std::int16_t to_pcm16(double v) {
  const double c = std::clamp(v, -1.0, 1.0);
  return static_cast<std::int16_t>(std::lround(c * 32767.0));
}

}  // namespace

void write_wav(const std::string& path, const std::vector<Waveform>& channels) {
  if (channels.empty() || channels.size() > 2) {
    throw DataError("write_wav: expects 1 or 2 channels");
  }
  const int sr = channels[0].sample_rate;
  std::size_t n = 0;
  for (const auto& ch : channels) {
    if (ch.sample_rate != sr) throw DataError("write_wav: channel sample rates differ");
    n = std::max(n, ch.samples.size());
  }
  const std::uint16_t n_ch = static_cast<std::uint16_t>(channels.size());
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(n * n_ch * 2);

  std::vector<unsigned char> out;
  out.reserve(44 + data_bytes);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32(out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, n_ch);
  put_u32(out, static_cast<std::uint32_t>(sr));
  put_u32(out, static_cast<std::uint32_t>(sr) * n_ch * 2);
  put_u16(out, static_cast<std::uint16_t>(n_ch * 2));
  put_u16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32(out, data_bytes);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& ch : channels) {
      const double v = i < ch.samples.size() ? ch.samples[i] : 0.0;
      const std::int16_t s = to_pcm16(v);
      out.push_back(static_cast<unsigned char>(s & 0xff));
      out.push_back(static_cast<unsigned char>((s >> 8) & 0xff));
    }
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("write_wav: cannot open " + path);
  os.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!os) throw DataError("write_wav: write failed for " + path);
}

std::vector<Waveform> read_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("read_wav: cannot open " + path);
  std::vector<unsigned char> raw((std::istreambuf_iterator<char>(is)),
                                 std::istreambuf_iterator<char>());
  auto u32 = [&](std::size_t off) -> std::uint32_t {
    return static_cast<std::uint32_t>(raw[off]) | (static_cast<std::uint32_t>(raw[off + 1]) << 8) |
           (static_cast<std::uint32_t>(raw[off + 2]) << 16) |
           (static_cast<std::uint32_t>(raw[off + 3]) << 24);
  };
  auto u16 = [&](std::size_t off) -> std::uint16_t {
    return static_cast<std::uint16_t>(raw[off] | (raw[off + 1] << 8));
  };
  if (raw.size() < 44 || std::memcmp(raw.data(), "RIFF", 4) != 0 ||
      std::memcmp(raw.data() + 8, "WAVE", 4) != 0) {
    throw DataError("read_wav: not a RIFF/WAVE file: " + path);
  }
  int n_ch = 0, sr = 0, bits = 0;
  std::size_t data_off = 0, data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= raw.size()) {
    const std::uint32_t chunk_len = u32(pos + 4);
    if (std::memcmp(raw.data() + pos, "fmt ", 4) == 0) {
      if (u16(pos + 8) != 1) throw DataError("read_wav: only PCM supported");
      n_ch = u16(pos + 10);
      sr = static_cast<int>(u32(pos + 12));
      bits = u16(pos + 22);
    } else if (std::memcmp(raw.data() + pos, "data", 4) == 0) {
      data_off = pos + 8;
      data_len = chunk_len;
    }
    pos += 8 + chunk_len + (chunk_len & 1);
  }
  if (n_ch < 1 || n_ch > 2 || bits != 16 || data_off == 0) {
    throw DataError("read_wav: need 16-bit PCM mono/stereo: " + path);
  }
  const std::size_t n = data_len / (static_cast<std::size_t>(n_ch) * 2);
  std::vector<Waveform> channels(static_cast<std::size_t>(n_ch));
  for (auto& ch : channels) {
    ch.sample_rate = sr;
    ch.samples.resize(n);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < n_ch; ++c) {
      const std::size_t off = data_off + (i * n_ch + static_cast<std::size_t>(c)) * 2;
      const std::int16_t s = static_cast<std::int16_t>(raw[off] | (raw[off + 1] << 8));
      channels[static_cast<std::size_t>(c)].samples[i] = static_cast<double>(s) / 32767.0;
    }
  }
  return channels;
}

// ----------------------------- MELF io -----------------------------

namespace {

void stream_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t stream_read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw DataError("mel file: truncated");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_mel(const std::string& path, const MelSpectrogram& mel) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("write_mel: cannot open " + path);
  os.write("MELF", 4);
  stream_u32(os, 1);
  stream_u32(os, static_cast<std::uint32_t>(mel.n_frames));
  stream_u32(os, static_cast<std::uint32_t>(mel.n_mels));
  const float shift = static_cast<float>(mel.frame_shift_ms);
  std::uint32_t shift_bits;
  std::memcpy(&shift_bits, &shift, 4);
  stream_u32(os, shift_bits);
  for (double v : mel.values) {
    const float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    stream_u32(os, bits);
  }
  if (!os) throw DataError("write_mel: write failed for " + path);
}

MelSpectrogram read_mel(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("read_mel: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "MELF", 4) != 0) {
    throw DataError("read_mel: bad magic in " + path);
  }
  const std::uint32_t version = stream_read_u32(is);
  if (version != 1) throw DataError("read_mel: unsupported version");
  MelSpectrogram mel;
  mel.n_frames = static_cast<int>(stream_read_u32(is));
  mel.n_mels = static_cast<int>(stream_read_u32(is));
  const std::uint32_t shift_bits = stream_read_u32(is);
  float shift;
  std::memcpy(&shift, &shift_bits, 4);
  mel.frame_shift_ms = static_cast<double>(shift);
  mel.values.resize(static_cast<std::size_t>(mel.n_frames) * mel.n_mels);
  for (double& v : mel.values) {
    const std::uint32_t bits = stream_read_u32(is);
    float f;
    std::memcpy(&f, &bits, 4);
    v = static_cast<double>(f);
  }
  return mel;
}

}  // namespace covomix::dsp
