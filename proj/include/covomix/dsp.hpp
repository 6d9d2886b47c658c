#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace covomix::dsp {

struct Waveform {
  std::vector<double> samples;  // in [-1, 1]
  int sample_rate = 8000;

  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

// Log-amplitude mel spectrogram, row-major frames × n_mels. The 20 ms frame
// shift keeps mel frames aligned one-to-one with semantic tokens.
struct MelSpectrogram {
  int n_frames = 0;
  int n_mels = 0;
  double frame_shift_ms = 20.0;
  std::vector<double> values;

  double& at(int frame, int mel) {
    return values[static_cast<std::size_t>(frame) * n_mels + mel];
  }
  double at(int frame, int mel) const {
    return values[static_cast<std::size_t>(frame) * n_mels + mel];
  }
  const double* row(int frame) const {
    return values.data() + static_cast<std::size_t>(frame) * n_mels;
  }
};

struct RealMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> values;

  double& at(int r, int c) { return values[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return values[static_cast<std::size_t>(r) * cols + c]; }
};

struct MelConfig {
  int sample_rate = 8000;
  int n_mels = 80;
  int win_length = 400;  // 50 ms
  int hop_length = 160;  // 20 ms
  int n_fft = 512;
  double power_floor = 1e-10;
};

// frames = floor((len - win) / hop) + 1; log taken as ln(max(power, floor)).
MelSpectrogram mel_spectrogram(const Waveform& w, const MelConfig& cfg = {});

// Center frequency (Hz) of each triangular mel filter.
std::vector<double> mel_filter_centers_hz(const MelConfig& cfg = {});

// Elementwise sum; the shorter input is zero-padded; output clamped to [-1,1].
Waveform mix_waveforms(const Waveform& a, const Waveform& b);

// Orthonormal DCT-II of a full row (all coefficients, including c0).
std::vector<double> dct2_orthonormal(const std::vector<double>& row);
// Inverse of the above (the transpose).
std::vector<double> idct2_orthonormal(const std::vector<double>& coeffs);

// Row-wise cepstra: coefficients c1..c_order of the orthonormal DCT-II of
// each log-mel row (c0 dropped). Requires 1 <= order < n_mels.
RealMatrix mel_cepstra(const MelSpectrogram& mel, int order);

// Phase-reconstruction pseudo-vocoder. Deterministic for a fixed seed; the
// output length is (frames - 1) * hop + win.
Waveform griffin_lim(const MelSpectrogram& mel, int iterations, std::uint64_t seed,
                     const MelConfig& cfg = {});

// A single all-floor log-mel frame (the "silence" frame).
std::vector<double> silence_mel_frame(const MelConfig& cfg = {});

// ----------------------------- file formats -----------------------------

// 16-bit PCM WAV; one Waveform per channel (mono or stereo).
void write_wav(const std::string& path, const std::vector<Waveform>& channels);
std::vector<Waveform> read_wav(const std::string& path);

// Mel binary: magic "MELF", version u32, n_frames u32, n_mels u32,
// frame_shift_ms f32, row-major f32 LE payload.
void write_mel(const std::string& path, const MelSpectrogram& mel);
MelSpectrogram read_mel(const std::string& path);

}  // namespace covomix::dsp
