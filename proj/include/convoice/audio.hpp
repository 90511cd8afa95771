// convoice/audio.hpp
//
// Audio frontend: WAV I/O, band-limited resampling, STFT/iSTFT, HTK mel
// filterbanks, natural-log mel spectrograms, corpus-level per-channel
// normalization and the pseudo-inverse mapping back to linear magnitudes.

#pragma once

#include <complex>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "convoice/tensor.hpp"

namespace convoice {

struct Waveform {
  std::vector<float> samples;
  int sample_rate_hz = 22050;

  double DurationSeconds() const {
    return static_cast<double>(samples.size()) / static_cast<double>(sample_rate_hz);
  }
};

struct FrontendConfig {
  int sample_rate_hz = 22050;
  std::size_t n_fft = 1024;
  std::size_t window_length = 1024;
  std::size_t hop_length = 256;
  std::size_t n_mels = 80;
  double fmin_hz = 0.0;
  double fmax_hz = 11025.0;
  double log_floor = 1e-5;

  // 22050 Hz, 1024-point window and FFT, 256 hop, 80 mels.
  static FrontendConfig Encoder();
  // 16 kHz, 25 ms (400 sample) window, 10 ms (160 sample) hop, 512 FFT, 40 mels.
  static FrontendConfig Speaker();

  void Validate() const;
  std::size_t Bins() const { return n_fft / 2 + 1; }
  // Center-padded framing: floor(num_samples / hop) + 1.
  std::size_t NumFrames(std::size_t num_samples) const { return num_samples / hop_length + 1; }

  bool operator==(const FrontendConfig&) const = default;
};

struct MelSpectrogram {
  Tensor<float> values;  // [n_mels x frames], natural-log magnitude
  FrontendConfig config;

  std::size_t frames() const { return values.dim(1); }
  std::size_t channels() const { return values.dim(0); }
};

// Row-major [bins x frames] complex matrix.
struct ComplexSpectrogram {
  std::size_t bins = 0;
  std::size_t frames = 0;
  std::vector<std::complex<double>> data;

  ComplexSpectrogram() = default;
  ComplexSpectrogram(std::size_t b, std::size_t f) : bins(b), frames(f), data(b * f) {}
  std::complex<double>& at(std::size_t bin, std::size_t frame) { return data[bin * frames + frame]; }
  const std::complex<double>& at(std::size_t bin, std::size_t frame) const {
    return data[bin * frames + frame];
  }
};

// Row-major [bins x frames] real magnitudes.
struct MagnitudeSpectrogram {
  std::size_t bins = 0;
  std::size_t frames = 0;
  std::vector<double> data;

  MagnitudeSpectrogram() = default;
  MagnitudeSpectrogram(std::size_t b, std::size_t f) : bins(b), frames(f), data(b * f, 0.0) {}
  double& at(std::size_t bin, std::size_t frame) { return data[bin * frames + frame]; }
  double at(std::size_t bin, std::size_t frame) const { return data[bin * frames + frame]; }
};

struct NormStats {
  std::vector<float> mean;
  std::vector<float> std;
};

// --- WAV -------------------------------------------------------------------

// Reads RIFF/WAVE PCM-16 or IEEE float-32, mono or stereo (averaged to mono).
Waveform LoadWav(const std::filesystem::path& path);
Waveform DecodeWav(const std::vector<unsigned char>& bytes);
// Writes mono PCM-16; samples are scaled by 32768, rounded and clamped.
void SaveWav(const Waveform& wave, const std::filesystem::path& path);
std::vector<unsigned char> EncodeWav(const Waveform& wave);

// --- Resampling ------------------------------------------------------------

// Polyphase windowed-sinc resampler (Kaiser window, beta 8.6, 64 taps per
// phase at the lower of the two rates). Output length is
// round(num_samples * target / source). Identity when the rates match.
Waveform Resample(const Waveform& wave, int target_rate_hz);

// --- STFT ------------------------------------------------------------------

// Periodic Hann window of window_length, centred inside an n_fft frame.
std::vector<double> AnalysisWindow(const FrontendConfig& config);

// Reflect-padded by n_fft/2 on both sides; frame t starts at t*hop - n_fft/2.
ComplexSpectrogram Stft(std::span<const double> signal, const FrontendConfig& config);
ComplexSpectrogram Stft(const Waveform& wave, const FrontendConfig& config);

// Windowed overlap-add divided by the summed squared window. `length` is the
// number of output samples; 0 means hop * (frames - 1).
std::vector<double> Istft(const ComplexSpectrogram& spec, const FrontendConfig& config,
                          std::size_t length = 0);

MagnitudeSpectrogram Magnitude(const ComplexSpectrogram& spec);

// --- Mel -------------------------------------------------------------------

double HzToMel(double hz);
double MelToHz(double mel);

// [n_mels x bins] unit-peak triangles with centres uniform on the HTK mel scale.
Tensor<double> MelFilterbank(const FrontendConfig& config);

// ln(max(filterbank * |STFT|, log_floor)).
MelSpectrogram LogMel(const Waveform& wave, const FrontendConfig& config);

// out[c, t] = (x[c, t] - mean[c]) / std[c].
MelSpectrogram NormalizePerChannel(const MelSpectrogram& mel, const NormStats& stats);
Tensor<float> NormalizePerChannel(const Tensor<float>& mel, const NormStats& stats);

// Per-channel mean and standard deviation pooled over every frame of every mel.
NormStats ComputeNormStats(const std::vector<Tensor<float>>& mels);

// exp(mel) mapped through the filterbank pseudo-inverse, clamped at zero.
MagnitudeSpectrogram MelToLinear(const MelSpectrogram& mel);

// Moore-Penrose pseudo-inverse of the filterbank, [bins x n_mels]. Cached.
const Tensor<double>& FilterbankPseudoInverse(const FrontendConfig& config);

}  // namespace convoice
