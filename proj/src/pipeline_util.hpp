#pragma once

// Internal helpers shared by the pipeline translation units.

#include <filesystem>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "covomix/dataprep.hpp"
#include "covomix/dsp.hpp"
#include "covomix/tensor.hpp"

namespace covomix::pipeline::detail {

// Chunked parallel loop; results must be written to per-index slots.
inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t]() {
      try {
        for (std::size_t i = static_cast<std::size_t>(t); i < n; i += static_cast<std::size_t>(threads)) {
          fn(i);
        }
      } catch (...) {
        errors[static_cast<std::size_t>(t)] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

inline dsp::Waveform slice_wave(const dsp::Waveform& w, double start_s, double end_s) {
  const auto n = static_cast<std::ptrdiff_t>(w.samples.size());
  auto lo = static_cast<std::ptrdiff_t>(start_s * w.sample_rate);
  auto hi = static_cast<std::ptrdiff_t>(end_s * w.sample_rate);
  lo = std::clamp<std::ptrdiff_t>(lo, 0, n);
  hi = std::clamp<std::ptrdiff_t>(hi, lo, n);
  dsp::Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.assign(w.samples.begin() + lo, w.samples.begin() + hi);
  return out;
}

inline dsp::Waveform silence_wave(std::size_t samples, int sample_rate) {
  dsp::Waveform w;
  w.sample_rate = sample_rate;
  w.samples.assign(samples, 0.0);
  return w;
}

inline void append_wave(dsp::Waveform& dst, const dsp::Waveform& src) {
  dst.samples.insert(dst.samples.end(), src.samples.begin(), src.samples.end());
}

inline nn::Tensor mel_to_tensor(const dsp::MelSpectrogram& mel) {
  return nn::Tensor::from_data({mel.n_frames, mel.n_mels}, mel.values);
}

inline dsp::MelSpectrogram tensor_to_mel(const nn::Tensor& t, double frame_shift_ms = 20.0) {
  dsp::MelSpectrogram mel;
  mel.n_frames = t.shape()[0];
  mel.n_mels = t.shape()[1];
  mel.frame_shift_ms = frame_shift_ms;
  mel.values = t.vec();
  return mel;
}

inline std::string zero_pad(std::size_t value, int width = 3) {
  std::string s = std::to_string(value);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

inline std::string join_path(const std::string& dir, const std::string& leaf) {
  return (std::filesystem::path(dir) / leaf).string();
}

}  // namespace covomix::pipeline::detail
