// convoice/vocoder.hpp
//
// Griffin-Lim phase reconstruction (fast variant with momentum) from an
// 80-channel log-mel spectrogram. Deterministic: phases start at zero.

#pragma once

#include <vector>

#include "convoice/audio.hpp"

namespace convoice {

struct GriffinLimConfig {
  std::size_t n_iters = 60;
  double momentum = 0.99;
  FrontendConfig frontend = FrontendConfig::Encoder();

  void Validate() const;
};

// Reconstructs a signal of `length` samples whose STFT magnitude approximates
// `magnitude` ([bins x T]). When `convergence` is given it receives, per
// iteration, the spectral convergence || |STFT(y)| - M ||_F / ||M||_F of the
// estimate entering that iteration, followed by the final estimate's value.
std::vector<double> GriffinLim(const MagnitudeSpectrogram& magnitude, const GriffinLimConfig& config,
                               std::size_t length, std::vector<double>* convergence = nullptr);

// Spectral convergence of `signal` against the target magnitude (first T frames).
double SpectralConvergence(std::span<const double> signal, const MagnitudeSpectrogram& magnitude,
                           const FrontendConfig& frontend);

// Peak level below which synthesize leaves the output unscaled.
inline constexpr double kSilencePeak = 1e-3;
inline constexpr double kOutputPeak = 0.95;

// mel -> linear magnitude -> Griffin-Lim -> peak normalization. Output has
// exactly T * hop samples at the frontend sample rate.
Waveform Synthesize(const MelSpectrogram& mel, const GriffinLimConfig& config = {});

}  // namespace convoice
