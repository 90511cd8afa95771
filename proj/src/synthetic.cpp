// convoice/synthetic.cpp

#include "convoice/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

namespace convoice {
namespace {

constexpr std::array<std::array<double, 3>, 8> kVowels{{
    {730, 1090, 2440},
    {270, 2290, 3010},
    {300, 870, 2240},
    {530, 1840, 2480},
    {570, 840, 2410},
    {660, 1720, 2410},
    {490, 1350, 1690},
    {520, 1190, 2390},
}};

constexpr std::size_t kControlBlock = 32;
constexpr std::size_t kMaxHarmonics = 64;

std::uint64_t Mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a * 0x9E3779B97F4A7C15ull ^ (b + 0x632BE59BD9B4E019ull + (a << 6) + (a >> 2));
  x ^= x >> 31;
  x *= 0xBF58476D1CE4E5B9ull;
  x ^= x >> 27;
  return x;
}

double Envelope(const VoiceProfile& v, const std::array<double, 3>& formants, double f) {
  double e = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double bw = 50.0 + 0.06 * formants[i];
    const double d = (f - formants[i]) / bw;
    e += v.formant_gains[i] / (1.0 + d * d);
  }
  return e * std::pow(1.0 + f / 300.0, -v.tilt);
}

}  // namespace

Waveform RenderSegments(const VoiceProfile& voice, std::span<const Segment> segments, int sample_rate,
                        std::uint64_t seed) {
  if (sample_rate <= 0) throw ConfigError("synthetic: sample rate must be positive");
  Waveform out;
  out.sample_rate_hz = sample_rate;
  const double sr = sample_rate;
  std::vector<std::size_t> bounds{0};
  for (const Segment& s : segments) bounds.push_back(bounds.back() + static_cast<std::size_t>(std::lround(s.seconds * sr)));
  const std::size_t n = bounds.back();
  out.samples.assign(n, 0.0f);
  if (n == 0) return out;

  Rng rng(seed);
  const std::size_t glide = static_cast<std::size_t>(0.03 * sr);
  const double vib_rate = 4.5 + rng.Uniform(0.0, 1.5);
  const double vib_phase = rng.Uniform(0.0, 2.0 * std::numbers::pi);

  // Formants and voicing at sample i: linear glide into each segment.
  auto state_at = [&](std::size_t i, std::array<double, 3>& f) -> double {
    std::size_t s = std::upper_bound(bounds.begin(), bounds.end(), i) - bounds.begin() - 1;
    s = std::min(s, segments.size() - 1);
    f = segments[s].formants_hz;
    double voiced = segments[s].silent ? 0.0 : 1.0;
    const std::size_t into = i - bounds[s];
    if (s > 0 && into < glide) {
      const double a = static_cast<double>(into) / glide;
      const Segment& prev = segments[s - 1];
      if (!prev.silent && !segments[s].silent) {
        for (std::size_t k = 0; k < 3; ++k) f[k] = (1 - a) * prev.formants_hz[k] + a * f[k];
      } else {
        voiced = (1 - a) * (prev.silent ? 0.0 : 1.0) + a * voiced;
        if (segments[s].silent) f = prev.formants_hz;
      }
    }
    return voiced;
  };

  std::vector<double> y(n, 0.0);
  std::vector<double> amp0(kMaxHarmonics + 1, 0.0), amp1(kMaxHarmonics + 1, 0.0);
  double phase = 0.0;
  double lp = 0.0;
  auto fill_amps = [&](std::size_t i, std::vector<double>& amps) {
    std::array<double, 3> f{};
    const double voiced = state_at(std::min(i, n - 1), f);
    const double f0 = voice.f0_hz * (1.0 + 0.03 * std::sin(2.0 * std::numbers::pi * vib_rate * i / sr + vib_phase));
    for (std::size_t h = 1; h <= kMaxHarmonics; ++h) {
      const double fh = h * f0;
      amps[h] = fh < 0.45 * sr ? voiced * Envelope(voice, f, fh) : 0.0;
    }
    return voiced;
  };
  double v0 = fill_amps(0, amp0);
  for (std::size_t start = 0; start < n; start += kControlBlock) {
    const std::size_t end = std::min(n, start + kControlBlock);
    const double v1 = fill_amps(end, amp1);
    for (std::size_t i = start; i < end; ++i) {
      const double a = static_cast<double>(i - start) / kControlBlock;
      const double f0 =
          voice.f0_hz * (1.0 + 0.03 * std::sin(2.0 * std::numbers::pi * vib_rate * i / sr + vib_phase));
      phase += 2.0 * std::numbers::pi * f0 / sr;
      if (phase > 2.0 * std::numbers::pi) phase -= 2.0 * std::numbers::pi;
      const std::complex<double> z = std::polar(1.0, phase);
      std::complex<double> p = z;
      double s = 0.0;
      for (std::size_t h = 1; h <= kMaxHarmonics; ++h) {
        const double ah = (1 - a) * amp0[h] + a * amp1[h];
        if (ah == 0.0 && amp0[h] == 0.0 && amp1[h] == 0.0 && h * f0 >= 0.45 * sr) break;
        s += ah * p.imag();
        p *= z;
      }
      lp = 0.7 * lp + 0.3 * rng.Normal();
      const double voiced = (1 - a) * v0 + a * v1;
      y[i] = s + voiced * voice.breath * 4.0 * lp;
    }
    std::swap(amp0, amp1);
    v0 = v1;
  }
  double peak = 0.0;
  for (double v : y) peak = std::max(peak, std::abs(v));
  const double gain = peak > 0.0 ? 0.5 / peak : 0.0;
  for (std::size_t i = 0; i < n; ++i) out.samples[i] = static_cast<float>(y[i] * gain);
  return out;
}

VoiceProfile SyntheticSpeakerSet::Speaker(std::size_t speaker) const {
  Rng r(Mix(seed, 0x5bd1e995ull + speaker));
  VoiceProfile v;
  v.f0_hz = std::exp(r.Uniform(std::log(85.0), std::log(250.0)));
  v.formant_scale = r.Uniform(0.82, 1.22);
  for (double& g : v.formant_gains) g = std::exp(r.Normal(0.0, 0.5));
  v.tilt = r.Uniform(0.6, 1.6);
  v.breath = r.Uniform(0.01, 0.06);
  return v;
}

Waveform SyntheticSpeakerSet::Utterance(std::size_t speaker, std::size_t index, double seconds,
                                        int sample_rate) const {
  Rng r(Mix(Mix(seed, speaker), index + 1));
  VoiceProfile v = Speaker(speaker);
  v.f0_hz *= std::exp(r.Normal(0.0, jitter));
  v.formant_scale *= std::exp(r.Normal(0.0, jitter / 2));
  for (double& g : v.formant_gains) g *= std::exp(r.Normal(0.0, jitter));

  std::vector<Segment> segs;
  segs.push_back({{}, 0.05, true});
  double total = 0.05;
  while (total < seconds) {
    if (segs.size() > 1 && r.Uniform() < 0.15) {
      const double d = r.Uniform(0.03, 0.08);
      segs.push_back({{}, d, true});
      total += d;
      continue;
    }
    Segment s;
    const auto& base = kVowels[r.Index(kVowels.size())];
    for (std::size_t k = 0; k < 3; ++k) s.formants_hz[k] = base[k] * v.formant_scale * std::exp(r.Normal(0.0, 0.03));
    s.seconds = r.Uniform(0.08, 0.22);
    segs.push_back(s);
    total += s.seconds;
  }
  Waveform w = RenderSegments(v, segs, sample_rate, r.Next());
  w.samples.resize(static_cast<std::size_t>(std::lround(seconds * sample_rate)), 0.0f);
  return w;
}

Waveform RenderTokens(std::span<const int> tokens, const VoiceProfile& voice, int sample_rate,
                      std::uint64_t seed, double token_seconds) {
  std::vector<Segment> segs;
  segs.push_back({{}, 0.1, true});
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const int k = tokens[i];
    if (k <= 0) throw InputError("synthetic: token ids must be positive");
    Segment s;
    s.formants_hz = {250.0 + (k * 137) % 600, 800.0 + (k * 389) % 1700, 2200.0 + (k * 211) % 900};
    for (double& f : s.formants_hz) f *= voice.formant_scale;
    s.seconds = token_seconds;
    segs.push_back(s);
    segs.push_back({{}, 0.04, true});
  }
  segs.push_back({{}, 0.06, true});
  return RenderSegments(voice, segs, sample_rate, seed);
}

Waveform SineWave(double freq_hz, double seconds, int sample_rate, double amp) {
  Waveform w;
  w.sample_rate_hz = sample_rate;
  w.samples.resize(static_cast<std::size_t>(std::lround(seconds * sample_rate)));
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    w.samples[i] = static_cast<float>(amp * std::sin(2.0 * std::numbers::pi * freq_hz * i / sample_rate));
  }
  return w;
}

}  // namespace convoice
