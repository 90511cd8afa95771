// convoice/spectral.cpp
//
// STFT / iSTFT on top of FFTW. Plans are created once per FFT size under a
// mutex and then only executed through the thread-safe new-array interface.

#include <fftw3.h>

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

#include "convoice/audio.hpp"

namespace convoice {
namespace {

struct FftPlans {
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;
};

const FftPlans& PlansFor(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, FftPlans> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  const int size = static_cast<int>(n);
  double* real = fftw_alloc_real(n);
  fftw_complex* cplx = fftw_alloc_complex(n / 2 + 1);
  FftPlans plans;
  plans.forward = fftw_plan_dft_r2c_1d(size, real, cplx, FFTW_ESTIMATE | FFTW_UNALIGNED);
  plans.inverse = fftw_plan_dft_c2r_1d(size, cplx, real, FFTW_ESTIMATE | FFTW_UNALIGNED);
  fftw_free(real);
  fftw_free(cplx);
  return cache.emplace(n, plans).first->second;
}

// numpy-style 'reflect' padding index, bouncing as often as needed.
std::size_t ReflectIndex(long i, long n) {
  if (n == 1) return 0;
  const long period = 2 * (n - 1);
  long m = i % period;
  if (m < 0) m += period;
  return static_cast<std::size_t>(m < n ? m : period - m);
}

}  // namespace

FrontendConfig FrontendConfig::Encoder() { return FrontendConfig{}; }

FrontendConfig FrontendConfig::Speaker() {
  FrontendConfig c;
  c.sample_rate_hz = 16000;
  c.n_fft = 512;
  c.window_length = 400;
  c.hop_length = 160;
  c.n_mels = 40;
  c.fmin_hz = 0.0;
  c.fmax_hz = 8000.0;
  c.log_floor = 1e-5;
  return c;
}

void FrontendConfig::Validate() const {
  if (sample_rate_hz <= 0 || n_fft == 0 || window_length == 0 || hop_length == 0 || n_mels == 0) {
    throw ConfigError("frontend config: sizes must be positive");
  }
  if (!(hop_length <= window_length && window_length <= n_fft)) {
    throw ConfigError("frontend config: need hop <= window <= n_fft");
  }
  if (!(fmin_hz >= 0.0 && fmin_hz < fmax_hz && fmax_hz <= sample_rate_hz / 2.0)) {
    throw ConfigError("frontend config: need 0 <= fmin < fmax <= sample_rate / 2");
  }
  if (!(log_floor > 0.0)) throw ConfigError("frontend config: log floor must be positive");
}

std::vector<double> AnalysisWindow(const FrontendConfig& config) {
  std::vector<double> w(config.n_fft, 0.0);
  const std::size_t offset = (config.n_fft - config.window_length) / 2;
  for (std::size_t i = 0; i < config.window_length; ++i) {
    w[offset + i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                         static_cast<double>(config.window_length));
  }
  return w;
}

ComplexSpectrogram Stft(std::span<const double> signal, const FrontendConfig& config) {
  config.Validate();
  if (signal.empty()) throw InputError("stft: empty signal");
  const std::size_t n_fft = config.n_fft;
  const std::size_t bins = config.Bins();
  const std::size_t frames = config.NumFrames(signal.size());
  const long pad = static_cast<long>(n_fft / 2);
  const long n = static_cast<long>(signal.size());
  const std::vector<double> window = AnalysisWindow(config);
  const FftPlans& plans = PlansFor(n_fft);

  ComplexSpectrogram spec(bins, frames);
  std::vector<double> frame(n_fft);
  std::vector<std::complex<double>> out(bins);
  for (std::size_t t = 0; t < frames; ++t) {
    const long start = static_cast<long>(t * config.hop_length) - pad;
    for (std::size_t i = 0; i < n_fft; ++i) {
      const long idx = start + static_cast<long>(i);
      const double x = (idx >= 0 && idx < n) ? signal[static_cast<std::size_t>(idx)]
                                              : signal[ReflectIndex(idx, n)];
      frame[i] = x * window[i];
    }
    fftw_execute_dft_r2c(plans.forward, frame.data(), reinterpret_cast<fftw_complex*>(out.data()));
    for (std::size_t k = 0; k < bins; ++k) spec.at(k, t) = out[k];
  }
  return spec;
}

ComplexSpectrogram Stft(const Waveform& wave, const FrontendConfig& config) {
  std::vector<double> x(wave.samples.begin(), wave.samples.end());
  return Stft(std::span<const double>(x), config);
}

std::vector<double> Istft(const ComplexSpectrogram& spec, const FrontendConfig& config,
                          std::size_t length) {
  config.Validate();
  const std::size_t n_fft = config.n_fft;
  if (spec.bins != config.Bins()) {
    throw ShapeError("istft: axis 0 (bins) is " + std::to_string(spec.bins) + ", expected " +
                     std::to_string(config.Bins()));
  }
  if (spec.frames == 0) return std::vector<double>(length, 0.0);
  if (length == 0) length = config.hop_length * (spec.frames - 1);
  const std::size_t pad = n_fft / 2;
  const std::size_t total = std::max(n_fft + config.hop_length * (spec.frames - 1), pad + length);
  const std::vector<double> window = AnalysisWindow(config);
  const FftPlans& plans = PlansFor(n_fft);

  std::vector<double> acc(total, 0.0), wsum(total, 0.0);
  std::vector<std::complex<double>> in(spec.bins);
  std::vector<double> frame(n_fft);
  for (std::size_t t = 0; t < spec.frames; ++t) {
    for (std::size_t k = 0; k < spec.bins; ++k) in[k] = spec.at(k, t);
    // c2r ignores the imaginary parts of the DC and Nyquist bins.
    fftw_execute_dft_c2r(plans.inverse, reinterpret_cast<fftw_complex*>(in.data()), frame.data());
    const std::size_t start = t * config.hop_length;
    for (std::size_t i = 0; i < n_fft; ++i) {
      acc[start + i] += frame[i] / static_cast<double>(n_fft) * window[i];
      wsum[start + i] += window[i] * window[i];
    }
  }
  constexpr double kTiny = 1e-10;
  std::vector<double> out(length, 0.0);
  for (std::size_t i = 0; i < length; ++i) {
    const std::size_t j = i + pad;
    if (j < total && wsum[j] > kTiny) out[i] = acc[j] / wsum[j];
  }
  return out;
}

MagnitudeSpectrogram Magnitude(const ComplexSpectrogram& spec) {
  MagnitudeSpectrogram m(spec.bins, spec.frames);
  for (std::size_t i = 0; i < spec.data.size(); ++i) m.data[i] = std::abs(spec.data[i]);
  return m;
}

}  // namespace convoice
