// convoice/resample.cpp

#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>

#include "convoice/audio.hpp"

namespace convoice {
namespace {

constexpr double kKaiserBeta = 8.6;
constexpr std::int64_t kHalfTaps = 32;  // 64 taps per phase at the lower rate

double Sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

double Kaiser(double x) {  // x in [-1, 1]
  if (std::abs(x) > 1.0) return 0.0;
  return std::cyl_bessel_i(0.0, kKaiserBeta * std::sqrt(1.0 - x * x)) /
         std::cyl_bessel_i(0.0, kKaiserBeta);
}

}  // namespace

Waveform Resample(const Waveform& wave, int target_rate_hz) {
  if (target_rate_hz <= 0) throw ConfigError("resample: target rate must be positive");
  if (wave.sample_rate_hz <= 0) throw ConfigError("resample: source rate must be positive");
  if (target_rate_hz == wave.sample_rate_hz) return wave;

  const std::int64_t g = std::gcd(target_rate_hz, wave.sample_rate_hz);
  const std::int64_t up = target_rate_hz / g;
  const std::int64_t down = wave.sample_rate_hz / g;
  const auto n_in = static_cast<std::int64_t>(wave.samples.size());
  const std::int64_t n_out = (2 * n_in * up + down) / (2 * down);

  // Cutoff at the lower Nyquist, expressed in input-sample units.
  const double ratio = std::min(1.0, static_cast<double>(up) / static_cast<double>(down));
  const auto half = static_cast<std::int64_t>(std::ceil(kHalfTaps / ratio));
  const std::int64_t taps = 2 * half;

  // table[phase][j] weights x[base + j - half + 1] for output position base + phase/up.
  std::vector<double> table(static_cast<std::size_t>(up * taps));
  for (std::int64_t phase = 0; phase < up; ++phase) {
    const double frac = static_cast<double>(phase) / static_cast<double>(up);
    double sum = 0.0;
    for (std::int64_t j = 0; j < taps; ++j) {
      const double tau = frac - static_cast<double>(j - half + 1);
      const double h = ratio * Sinc(ratio * tau) * Kaiser(tau / static_cast<double>(half));
      table[static_cast<std::size_t>(phase * taps + j)] = h;
      sum += h;
    }
    for (std::int64_t j = 0; j < taps; ++j) table[static_cast<std::size_t>(phase * taps + j)] /= sum;
  }

  Waveform out;
  out.sample_rate_hz = target_rate_hz;
  out.samples.resize(static_cast<std::size_t>(n_out));
  for (std::int64_t n = 0; n < n_out; ++n) {
    const std::int64_t pos = n * down;
    const std::int64_t base = pos / up;
    const std::int64_t phase = pos % up;
    const double* h = table.data() + phase * taps;
    double acc = 0.0;
    const std::int64_t first = base - half + 1;
    const std::int64_t j0 = std::max<std::int64_t>(0, -first);
    const std::int64_t j1 = std::min<std::int64_t>(taps, n_in - first);
    for (std::int64_t j = j0; j < j1; ++j) acc += h[j] * wave.samples[static_cast<std::size_t>(first + j)];
    out.samples[static_cast<std::size_t>(n)] = static_cast<float>(acc);
  }
  return out;
}

}  // namespace convoice
