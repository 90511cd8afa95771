#include "doctest.h"

#include <cmath>
#include <numbers>

#include "convoice/audio.hpp"
#include "convoice/params.hpp"
#include "convoice/synthetic.hpp"

using namespace convoice;

namespace {

Waveform RandomPcm(std::size_t n, int rate, std::uint64_t seed) {
  Rng rng(seed);
  Waveform w;
  w.sample_rate_hz = rate;
  for (std::size_t i = 0; i < n; ++i) {
    const long v = static_cast<long>(rng.Index(65536)) - 32768;
    w.samples.push_back(static_cast<float>(v) / 32768.0f);
  }
  return w;
}

std::vector<double> ToDouble(const Waveform& w) { return {w.samples.begin(), w.samples.end()}; }

// Power of a sine of `freq` in `w`, by least squares against sin/cos.
double SineAmplitude(const Waveform& w, double freq, std::size_t skip) {
  double ss = 0, sc = 0, cc = 0, ys = 0, yc = 0;
  for (std::size_t i = skip; i + skip < w.samples.size(); ++i) {
    const double ph = 2 * std::numbers::pi * freq * i / w.sample_rate_hz;
    const double s = std::sin(ph), c = std::cos(ph);
    ss += s * s, sc += s * c, cc += c * c, ys += w.samples[i] * s, yc += w.samples[i] * c;
  }
  const double det = ss * cc - sc * sc;
  const double a = (ys * cc - yc * sc) / det, b = (yc * ss - ys * sc) / det;
  return std::hypot(a, b);
}

}  // namespace

TEST_CASE("wav pcm16 round trip is bit exact") {
  const Waveform w = RandomPcm(5000, 22050, 1);
  const Waveform back = DecodeWav(EncodeWav(w));
  CHECK(back.sample_rate_hz == 22050);
  CHECK(back.samples == w.samples);
}

TEST_CASE("wav scaling and length") {
  Waveform w;
  w.samples.assign(22050, 32767.0f / 32768.0f);
  const Waveform back = DecodeWav(EncodeWav(w));
  CHECK(back.samples.size() == 22050);
  CHECK(back.samples[0] == doctest::Approx(32767.0 / 32768.0).epsilon(1e-9));
}

TEST_CASE("malformed wav names the chunk") {
  auto bytes = EncodeWav(RandomPcm(100, 16000, 2));
  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_WITH_AS(DecodeWav(bad), doctest::Contains("RIFF"), FormatError);
  // A short data chunk is read as far as it goes (streamed writers leave the size unset).
  auto streamed = std::vector<unsigned char>(bytes.begin(), bytes.end() - 50);
  CHECK(DecodeWav(streamed).samples.size() < 100);
  auto truncated = std::vector<unsigned char>(bytes.begin(), bytes.begin() + 30);
  CHECK_THROWS_WITH_AS(DecodeWav(truncated), doctest::Contains("fmt "), FormatError);
  auto codec = bytes;
  codec[20] = 2;  // ADPCM
  CHECK_THROWS_WITH_AS(DecodeWav(codec), doctest::Contains("fmt "), FormatError);
}

TEST_CASE("resample length arithmetic and identity") {
  const Waveform w = SineWave(440.0, 1.0, 22050);
  CHECK(Resample(w, 16000).samples.size() == 16000);
  CHECK(Resample(w, 22050).samples == w.samples);
  CHECK_THROWS_AS(Resample(w, 0), ConfigError);
}

TEST_CASE("resampled 440 Hz sine keeps its pitch and stays clean") {
  const Waveform r = Resample(SineWave(440.0, 1.0, 22050), 16000);
  FrontendConfig fe = FrontendConfig::Speaker();
  fe.n_fft = fe.window_length = 4096;
  fe.hop_length = 1024;
  fe.fmax_hz = 8000.0;
  const MagnitudeSpectrogram m = Magnitude(Stft(ToDouble(r), fe));
  const std::size_t t = m.frames / 2;
  std::size_t peak = 0;
  for (std::size_t k = 0; k < m.bins; ++k)
    if (m.at(k, t) > m.at(peak, t)) peak = k;
  const double bin_hz = 16000.0 / fe.n_fft;
  CHECK(std::abs(peak * bin_hz - 440.0) <= bin_hz);
  double in_band = 0, out_band = 0;
  for (std::size_t k = 0; k < m.bins; ++k) {
    const double e = m.at(k, t) * m.at(k, t);
    (k + 6 >= peak && k <= peak + 6 ? in_band : out_band) += e;
  }
  CHECK(10 * std::log10(in_band / out_band) >= 50.0);
}

TEST_CASE("resample round trip preserves band-limited sines within 0.5 dB") {
  for (double f : {440.0, 3000.0, 6000.0}) {
    const Waveform w = SineWave(f, 1.0, 22050);
    const Waveform back = Resample(Resample(w, 16000), 22050);
    REQUIRE(back.samples.size() == w.samples.size());
    const double ratio = SineAmplitude(back, f, 512) / SineAmplitude(w, f, 512);
    CHECK(std::abs(20 * std::log10(ratio)) < 0.5);
  }
}

TEST_CASE("stft of zero is zero and istft inverts stft") {
  const FrontendConfig fe = FrontendConfig::Encoder();
  const ComplexSpectrogram z = Stft(std::vector<double>(4000, 0.0), fe);
  for (const auto& v : z.data) CHECK(std::abs(v) == 0.0);
  Rng rng(3);
  for (int trial = 0; trial < 3; ++trial) {
    std::vector<double> x(22050);
    for (auto& v : x) v = rng.Uniform(-1, 1);
    const std::vector<double> y = Istft(Stft(x, fe), fe, x.size());
    double err = 0;
    for (std::size_t i = 0; i < x.size(); ++i) err = std::max(err, std::abs(x[i] - y[i]));
    CHECK(err < 1e-6);
  }
}

TEST_CASE("sine at an exact bin frequency peaks at that bin") {
  const FrontendConfig fe = FrontendConfig::Encoder();
  for (std::size_t k : {5u, 20u, 100u, 400u}) {
    const double f = k * 22050.0 / 1024.0;
    const MagnitudeSpectrogram m = Magnitude(Stft(SineWave(f, 0.5, 22050), fe));
    for (std::size_t t = 2; t + 2 < m.frames; ++t) {
      std::size_t best = 0;
      for (std::size_t b = 0; b < m.bins; ++b)
        if (m.at(b, t) > m.at(best, t)) best = b;
      CHECK(best == k);
    }
  }
}

TEST_CASE("parseval per frame") {
  const FrontendConfig fe = FrontendConfig::Encoder();
  Rng rng(4);
  std::vector<double> x(8192);
  for (auto& v : x) v = rng.Normal();
  const ComplexSpectrogram s = Stft(x, fe);
  const std::vector<double> win = AnalysisWindow(fe);
  for (std::size_t t = 4; t < 20; ++t) {
    double time_energy = 0;
    const std::size_t start = t * fe.hop_length - fe.n_fft / 2;
    for (std::size_t n = 0; n < fe.n_fft; ++n) time_energy += std::pow(win[n] * x[start + n], 2);
    double freq_energy = 0;
    for (std::size_t k = 0; k < s.bins; ++k) {
      const double w = (k == 0 || k + 1 == s.bins) ? 1.0 : 2.0;  // one-sided spectrum
      freq_energy += w * std::norm(s.at(k, t));
    }
    freq_energy /= static_cast<double>(fe.n_fft);
    CHECK(std::abs(freq_energy - time_energy) / time_energy < 1e-6);
  }
}

TEST_CASE("frame count formula") {
  const FrontendConfig fe = FrontendConfig::Encoder();
  for (std::size_t n : {256u, 1000u, 77175u, 100000u, 1000000u}) CHECK(fe.NumFrames(n) == n / 256 + 1);
  Waveform w = SineWave(300.0, 3.5, 22050);
  CHECK(w.samples.size() == 77175);
  const MelSpectrogram m = LogMel(w, fe);
  CHECK(m.values.dims() == Dims{80, 302});
  for (std::size_t n : {300u, 1023u, 5000u}) {
    Waveform s;
    s.samples.assign(n, 0.1f);
    CHECK(Stft(s, fe).frames == fe.NumFrames(n));
  }
}

TEST_CASE("mel filterbank shape and overlap") {
  const FrontendConfig fe = FrontendConfig::Encoder();
  const Tensor<double> fb = MelFilterbank(fe);
  REQUIRE(fb.dims() == Dims{80, 513});
  for (std::size_t m = 0; m < 80; ++m) {
    int runs = 0;
    bool inside = false;
    double peak = 0;
    for (std::size_t k = 0; k < 513; ++k) {
      CHECK(fb.at(m, k) >= 0.0);
      peak = std::max(peak, fb.at(m, k));
      if (fb.at(m, k) > 0 && !inside) ++runs;
      inside = fb.at(m, k) > 0;
    }
    CHECK(runs == 1);
    CHECK(peak <= 1.0 + 1e-12);
  }
  const double lo_center = MelToHz(HzToMel(0.0) + (HzToMel(11025.0) - HzToMel(0.0)) / 81.0);
  const double hi_center = MelToHz(HzToMel(0.0) + 80.0 * (HzToMel(11025.0) - HzToMel(0.0)) / 81.0);
  const double bin_hz = 22050.0 / 1024.0;
  for (std::size_t k = 0; k < 513; ++k) {
    double s = 0;
    for (std::size_t m = 0; m < 80; ++m) s += fb.at(m, k);
    CHECK(s <= 2.0);
    const double f = k * bin_hz;
    if (f >= lo_center && f <= hi_center) CHECK(s >= 0.99);
  }
  CHECK(HzToMel(700.0) == doctest::Approx(2595.0 * std::log10(2.0)));
  CHECK(MelToHz(HzToMel(1234.5)) == doctest::Approx(1234.5));
}

TEST_CASE("too many mels for the fft is a config error") {
  FrontendConfig fe = FrontendConfig::Speaker();
  fe.n_mels = 200;
  CHECK_THROWS_AS(MelFilterbank(fe), ConfigError);
}

TEST_CASE("log mel floor, gain and rate checks") {
  const FrontendConfig fe = FrontendConfig::Encoder();
  Waveform zero;
  zero.samples.assign(4000, 0.0f);
  const MelSpectrogram silent = LogMel(zero, fe);
  for (float v : silent.values.data()) CHECK(v == doctest::Approx(std::log(1e-5)));
  const Waveform w = SyntheticSpeakerSet{2, 1, 5, 0.05}.Utterance(0, 0, 0.5, 22050);
  Waveform louder = w;
  for (auto& v : louder.samples) v *= 2.0f;
  const MelSpectrogram a = LogMel(w, fe), b = LogMel(louder, fe);
  const float floor = static_cast<float>(std::log(1e-5));
  for (std::size_t i = 0; i < a.values.size(); ++i)
    if (a.values[i] > floor + 1.0f) CHECK(b.values[i] - a.values[i] == doctest::Approx(std::log(2.0)).epsilon(1e-4));
  CHECK_THROWS_AS(LogMel(Resample(w, 16000), fe), ConfigError);
}

TEST_CASE("log mel is translation covariant by one hop") {
  const FrontendConfig fe = FrontendConfig::Encoder();
  const Waveform w = SyntheticSpeakerSet{2, 1, 6, 0.05}.Utterance(1, 0, 1.0, 22050);
  Waveform shifted = w;
  shifted.samples.insert(shifted.samples.begin(), fe.hop_length, 0.0f);
  const MelSpectrogram a = LogMel(w, fe), b = LogMel(shifted, fe);
  for (std::size_t c = 0; c < 80; ++c)
    for (std::size_t t = 4; t + 4 < a.frames(); ++t)
      CHECK(std::abs(a.values.at(c, t) - b.values.at(c, t + 1)) < 1e-4);
}

TEST_CASE("per-channel normalization") {
  const FrontendConfig fe = FrontendConfig::Encoder();
  const MelSpectrogram m = LogMel(SyntheticSpeakerSet{2, 1, 7, 0.05}.Utterance(0, 0, 1.0, 22050), fe);
  NormStats identity{std::vector<float>(80, 0.0f), std::vector<float>(80, 1.0f)};
  CHECK(NormalizePerChannel(m, identity).values == m.values);
  const NormStats own = ComputeNormStats({m.values});
  const MelSpectrogram n = NormalizePerChannel(m, own);
  for (std::size_t c = 0; c < 80; ++c) {
    double mean = 0, var = 0;
    for (std::size_t t = 0; t < n.frames(); ++t) mean += n.values.at(c, t);
    mean /= n.frames();
    for (std::size_t t = 0; t < n.frames(); ++t) var += std::pow(n.values.at(c, t) - mean, 2);
    if (own.std[c] > 1e-3f) {
      CHECK(std::abs(mean) < 1e-5);
      CHECK(std::sqrt(var / n.frames()) == doctest::Approx(1.0).epsilon(1e-5));
    }
  }
  MelSpectrogram shifted = m;
  NormStats shifted_stats = own;
  for (auto& v : shifted.values.data()) v += 3.0f;
  for (auto& v : shifted_stats.mean) v += 3.0f;
  const MelSpectrogram n2 = NormalizePerChannel(shifted, shifted_stats);
  for (std::size_t i = 0; i < n.values.size(); ++i) CHECK(n2.values[i] == doctest::Approx(n.values[i]).epsilon(1e-4));
  NormStats zero_std = identity;
  zero_std.std[3] = 0.0f;
  CHECK_THROWS_AS(NormalizePerChannel(m, zero_std), DomainError);
}

TEST_CASE("mel to linear") {
  const FrontendConfig fe = FrontendConfig::Encoder();
  MelSpectrogram floor_mel{Tensor<float>({80, 10}, static_cast<float>(std::log(1e-5))), fe};
  for (double v : MelToLinear(floor_mel).data) CHECK(v <= 1e-4);
  const MelSpectrogram m = LogMel(SyntheticSpeakerSet{2, 1, 8, 0.05}.Utterance(0, 0, 1.0, 22050), fe);
  const MagnitudeSpectrogram lin = MelToLinear(m);
  for (double v : lin.data) CHECK(v >= 0.0);
  const Tensor<double> fb = MelFilterbank(fe);
  double err = 0, ref = 0;
  for (std::size_t t = 0; t < m.frames(); ++t)
    for (std::size_t c = 0; c < 80; ++c) {
      double e = 0;
      for (std::size_t k = 0; k < lin.bins; ++k) e += fb.at(c, k) * lin.at(k, t);
      const double target = std::exp(static_cast<double>(m.values.at(c, t)));
      err += std::abs(e - target);
      ref += target;
    }
  CHECK(err / ref < 0.10);
}

TEST_CASE("named configs") {
  const FrontendConfig e = FrontendConfig::Encoder(), s = FrontendConfig::Speaker();
  CHECK(e.sample_rate_hz == 22050);
  CHECK(e.n_fft == 1024);
  CHECK(e.window_length == 1024);
  CHECK(e.hop_length == 256);
  CHECK(e.n_mels == 80);
  CHECK(s.sample_rate_hz == 16000);
  CHECK(s.window_length == 400);
  CHECK(s.hop_length == 160);
  CHECK(s.n_fft == 512);
  CHECK(s.n_mels == 40);
}
