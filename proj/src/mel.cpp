// convoice/mel.cpp

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <mutex>
#include <tuple>

#include "convoice/audio.hpp"

namespace convoice {

double HzToMel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double MelToHz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Tensor<double> MelFilterbank(const FrontendConfig& config) {
  config.Validate();
  const std::size_t bins = config.Bins();
  const double mel_lo = HzToMel(config.fmin_hz);
  const double mel_hi = HzToMel(config.fmax_hz);
  std::vector<double> edges(config.n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = MelToHz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                    static_cast<double>(config.n_mels + 1));
  }
  edges.front() = config.fmin_hz;
  edges.back() = config.fmax_hz;
  const double bin_hz = static_cast<double>(config.sample_rate_hz) / static_cast<double>(config.n_fft);
  Tensor<double> fb({config.n_mels, bins});
  for (std::size_t m = 0; m < config.n_mels; ++m) {
    const double lo = edges[m], centre = edges[m + 1], hi = edges[m + 2];
    bool support = false;
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * bin_hz;
      double w = 0.0;
      if (f > lo && f <= centre) {
        w = (f - lo) / (centre - lo);
      } else if (f > centre && f < hi) {
        w = (hi - f) / (hi - centre);
      }
      if (w > 0.0) support = true;
      fb.at(m, k) = w;
    }
    if (!support) {
      throw ConfigError("mel filterbank: filter " + std::to_string(m) +
                        " has empty support; too many mels for n_fft " + std::to_string(config.n_fft));
    }
  }
  return fb;
}

namespace {

using BasisKey = std::tuple<int, std::size_t, std::size_t, double, double>;

BasisKey KeyOf(const FrontendConfig& c) {
  return {c.sample_rate_hz, c.n_fft, c.n_mels, c.fmin_hz, c.fmax_hz};
}

struct MelBasis {
  Tensor<double> filterbank;
  Tensor<double> pinv;
};

const MelBasis& BasisFor(const FrontendConfig& config) {
  static std::mutex mu;
  static std::map<BasisKey, MelBasis> cache;
  std::lock_guard<std::mutex> lock(mu);
  const BasisKey key = KeyOf(config);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  MelBasis basis;
  basis.filterbank = MelFilterbank(config);
  const std::size_t rows = basis.filterbank.dim(0);
  const std::size_t cols = basis.filterbank.dim(1);
  Eigen::MatrixXd fb(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) fb(i, j) = basis.filterbank.at(i, j);
  const Eigen::MatrixXd pinv = fb.completeOrthogonalDecomposition().pseudoInverse();
  basis.pinv = Tensor<double>({cols, rows});
  for (std::size_t i = 0; i < cols; ++i)
    for (std::size_t j = 0; j < rows; ++j) basis.pinv.at(i, j) = pinv(i, j);
  return cache.emplace(key, std::move(basis)).first->second;
}

}  // namespace

const Tensor<double>& FilterbankPseudoInverse(const FrontendConfig& config) {
  return BasisFor(config).pinv;
}

MelSpectrogram LogMel(const Waveform& wave, const FrontendConfig& config) {
  config.Validate();
  if (wave.sample_rate_hz != config.sample_rate_hz) {
    throw ConfigError("log_mel: waveform rate " + std::to_string(wave.sample_rate_hz) +
                      " Hz does not match frontend rate " + std::to_string(config.sample_rate_hz) + " Hz");
  }
  if (wave.samples.empty()) throw InputError("log_mel: empty waveform");
  const MagnitudeSpectrogram mag = Magnitude(Stft(wave, config));
  const Tensor<double>& fb = BasisFor(config).filterbank;
  MelSpectrogram mel{Tensor<float>({config.n_mels, mag.frames}), config};
  std::vector<double> acc(mag.frames);
  for (std::size_t m = 0; m < config.n_mels; ++m) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t k = 0; k < mag.bins; ++k) {
      const double w = fb.at(m, k);
      if (w == 0.0) continue;
      const double* row = mag.data.data() + k * mag.frames;
      for (std::size_t t = 0; t < mag.frames; ++t) acc[t] += w * row[t];
    }
    for (std::size_t t = 0; t < mag.frames; ++t) {
      mel.values.at(m, t) = static_cast<float>(std::log(std::max(acc[t], config.log_floor)));
    }
  }
  return mel;
}

Tensor<float> NormalizePerChannel(const Tensor<float>& mel, const NormStats& stats) {
  CheckRank(mel, 2, "normalize input");
  const std::size_t channels = mel.dim(0);
  if (stats.mean.size() != channels || stats.std.size() != channels) {
    throw ShapeError("normalize: stats length " + std::to_string(stats.mean.size()) +
                     " does not match axis 0 (channels) " + std::to_string(channels));
  }
  Tensor<float> out(mel.dims());
  for (std::size_t c = 0; c < channels; ++c) {
    if (!(stats.std[c] > 0.0f)) {
      throw DomainError("normalize: std[" + std::to_string(c) + "] is not positive");
    }
    const double mean = stats.mean[c];
    const double sd = stats.std[c];
    for (std::size_t t = 0; t < mel.dim(1); ++t) {
      out.at(c, t) = static_cast<float>((mel.at(c, t) - mean) / sd);
    }
  }
  return out;
}

MelSpectrogram NormalizePerChannel(const MelSpectrogram& mel, const NormStats& stats) {
  return {NormalizePerChannel(mel.values, stats), mel.config};
}

NormStats ComputeNormStats(const std::vector<Tensor<float>>& mels) {
  if (mels.empty()) throw InputError("norm stats: no spectrograms");
  const std::size_t channels = mels.front().dim(0);
  std::vector<double> sum(channels, 0.0), sq(channels, 0.0);
  std::size_t count = 0;
  for (const auto& m : mels) {
    CheckRank(m, 2, "norm stats input");
    if (m.dim(0) != channels) throw ShapeError("norm stats: axis 0 (channels) differs across inputs");
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t t = 0; t < m.dim(1); ++t) sum[c] += m.at(c, t);
    count += m.dim(1);
  }
  NormStats s;
  s.mean.resize(channels);
  s.std.resize(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    const double mean = sum[c] / static_cast<double>(count);
    for (const auto& m : mels)
      for (std::size_t t = 0; t < m.dim(1); ++t) sq[c] += (m.at(c, t) - mean) * (m.at(c, t) - mean);
    s.mean[c] = static_cast<float>(mean);
    s.std[c] = static_cast<float>(std::sqrt(sq[c] / static_cast<double>(count)));
  }
  return s;
}

MagnitudeSpectrogram MelToLinear(const MelSpectrogram& mel) {
  const FrontendConfig& config = mel.config;
  if (mel.values.dim(0) != config.n_mels) {
    throw ShapeError("mel_to_linear: axis 0 (channels) is " + std::to_string(mel.values.dim(0)) +
                     ", expected " + std::to_string(config.n_mels));
  }
  const Tensor<double>& pinv = BasisFor(config).pinv;
  const std::size_t frames = mel.values.dim(1);
  const std::size_t bins = pinv.dim(0);
  MagnitudeSpectrogram out(bins, frames);
  Tensor<double> energy({config.n_mels, frames});
  for (std::size_t i = 0; i < energy.size(); ++i) energy[i] = std::exp(static_cast<double>(mel.values[i]));
  for (std::size_t k = 0; k < bins; ++k) {
    double* row = out.data.data() + k * frames;
    for (std::size_t m = 0; m < config.n_mels; ++m) {
      const double w = pinv.at(k, m);
      const double* e = energy.row(m);
      for (std::size_t t = 0; t < frames; ++t) row[t] += w * e[t];
    }
    for (std::size_t t = 0; t < frames; ++t) row[t] = std::max(row[t], 0.0);
  }
  return out;
}

}  // namespace convoice
