// convoice/vocoder.cpp

#include "convoice/vocoder.hpp"

#include <algorithm>
#include <cmath>

namespace convoice {

void GriffinLimConfig::Validate() const {
  if (n_iters < 1) throw ConfigError("griffin-lim: n_iters must be >= 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("griffin-lim: momentum must be in [0, 1)");
  frontend.Validate();
}

double SpectralConvergence(std::span<const double> signal, const MagnitudeSpectrogram& magnitude,
                           const FrontendConfig& frontend) {
  const ComplexSpectrogram s = Stft(signal, frontend);
  double err = 0.0, ref = 0.0;
  for (std::size_t k = 0; k < magnitude.bins; ++k)
    for (std::size_t t = 0; t < magnitude.frames; ++t) {
      const double target = magnitude.at(k, t);
      const double d = (t < s.frames ? std::abs(s.at(k, t)) : 0.0) - target;
      err += d * d;
      ref += target * target;
    }
  return ref > 0.0 ? std::sqrt(err / ref) : std::sqrt(err);
}

std::vector<double> GriffinLim(const MagnitudeSpectrogram& magnitude, const GriffinLimConfig& config,
                               std::size_t length, std::vector<double>* convergence) {
  config.Validate();
  const FrontendConfig& fe = config.frontend;
  if (magnitude.bins != fe.Bins()) {
    throw ShapeError("griffin-lim: axis 0 (bins) is " + std::to_string(magnitude.bins) + ", expected " +
                     std::to_string(fe.Bins()));
  }
  const std::size_t frames = magnitude.frames;
  if (frames == 0 || length == 0) return std::vector<double>(length, 0.0);
  // A signal of `length` samples has `analysis_frames` >= frames STFT frames;
  // frames beyond the target keep whatever the last projection produced.
  const std::size_t analysis_frames = fe.NumFrames(length);
  if (analysis_frames < frames) throw ShapeError("griffin-lim: output length too short for frame count");

  ComplexSpectrogram estimate(fe.Bins(), analysis_frames);
  ComplexSpectrogram previous(fe.Bins(), analysis_frames);
  for (std::size_t k = 0; k < fe.Bins(); ++k)
    for (std::size_t t = 0; t < frames; ++t) estimate.at(k, t) = magnitude.at(k, t);  // zero phase

  const double alpha = config.momentum / (1.0 + config.momentum);
  double ref = 0.0;
  for (double v : magnitude.data) ref += v * v;
  ref = std::sqrt(ref);

  std::vector<double> signal;
  for (std::size_t it = 0; it < config.n_iters; ++it) {
    signal = Istft(estimate, fe, length);
    ComplexSpectrogram rebuilt = Stft(std::span<const double>(signal), fe);
    if (convergence) {
      double err = 0.0;
      for (std::size_t k = 0; k < fe.Bins(); ++k)
        for (std::size_t t = 0; t < frames; ++t) {
          const double d = std::abs(rebuilt.at(k, t)) - magnitude.at(k, t);
          err += d * d;
        }
      convergence->push_back(ref > 0.0 ? std::sqrt(err) / ref : std::sqrt(err));
    }
    for (std::size_t k = 0; k < fe.Bins(); ++k) {
      for (std::size_t t = 0; t < analysis_frames; ++t) {
        const std::complex<double> r = rebuilt.at(k, t);
        if (t >= frames) {
          estimate.at(k, t) = r;
          continue;
        }
        std::complex<double> a = r - alpha * previous.at(k, t);
        const double mag = std::abs(a);
        a = mag > 1e-16 ? a / mag : std::complex<double>(1.0, 0.0);
        estimate.at(k, t) = magnitude.at(k, t) * a;
      }
    }
    previous = std::move(rebuilt);
  }
  signal = Istft(estimate, fe, length);
  if (convergence) convergence->push_back(SpectralConvergence(signal, magnitude, fe));
  return signal;
}

Waveform Synthesize(const MelSpectrogram& mel, const GriffinLimConfig& config) {
  config.Validate();
  const FrontendConfig& fe = config.frontend;
  const FrontendConfig& mc = mel.config;
  if (mc.sample_rate_hz != fe.sample_rate_hz || mc.n_fft != fe.n_fft || mc.hop_length != fe.hop_length ||
      mc.window_length != fe.window_length || mc.n_mels != fe.n_mels) {
    throw ConfigError("synthesize: mel frontend does not match the vocoder frontend (" +
                      std::to_string(fe.n_mels) + " mels, n_fft " + std::to_string(fe.n_fft) + ", hop " +
                      std::to_string(fe.hop_length) + " at " + std::to_string(fe.sample_rate_hz) + " Hz)");
  }
  const std::size_t frames = mel.values.dim(1);
  const std::vector<double> y = GriffinLim(MelToLinear(mel), config, frames * fe.hop_length);
  double peak = 0.0;
  for (double v : y) peak = std::max(peak, std::abs(v));
  const double gain = peak >= kSilencePeak ? kOutputPeak / peak : 1.0;
  Waveform out;
  out.sample_rate_hz = fe.sample_rate_hz;
  out.samples.resize(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    out.samples[i] = static_cast<float>(std::clamp(y[i] * gain, -1.0, 1.0));
  }
  return out;
}

}  // namespace convoice
