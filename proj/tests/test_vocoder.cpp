#include "doctest.h"

#include <cmath>

#include "convoice/synthetic.hpp"
#include "convoice/vocoder.hpp"

using namespace convoice;

TEST_CASE("griffin-lim reaches 10 dB spectral snr in 60 iterations") {
  const FrontendConfig fe = FrontendConfig::Encoder();
  const SyntheticSpeakerSet set{4, 1, 3, 0.05};
  for (std::size_t s = 0; s < 2; ++s) {
    const MelSpectrogram mel = LogMel(set.Utterance(s, 0, 2.0, 22050), fe);
    const MagnitudeSpectrogram target = MelToLinear(mel);
    GriffinLimConfig cfg;
    REQUIRE(cfg.n_iters == 60);
    const auto y = GriffinLim(target, cfg, mel.frames() * fe.hop_length);
    const double sc = SpectralConvergence(y, target, fe);
    CHECK(-20.0 * std::log10(sc) >= 10.0);
  }
}

TEST_CASE("plain griffin-lim never increases spectral convergence") {
  const FrontendConfig fe = FrontendConfig::Encoder();
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Waveform w = SyntheticSpeakerSet{3, 1, seed, 0.05}.Utterance(seed % 3, 0, 0.6, 22050);
    const MelSpectrogram mel = LogMel(w, fe);
    GriffinLimConfig cfg;
    cfg.momentum = 0.0;
    cfg.n_iters = 25;
    std::vector<double> trace;
    GriffinLim(MelToLinear(mel), cfg, mel.frames() * fe.hop_length, &trace);
    REQUIRE(trace.size() == 26);
    for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1] + 1e-12);
  }
}

TEST_CASE("synthesize length, level and determinism") {
  const FrontendConfig fe = FrontendConfig::Encoder();
  const MelSpectrogram mel = LogMel(SyntheticSpeakerSet{2, 1, 9, 0.05}.Utterance(0, 0, 0.8, 22050), fe);
  GriffinLimConfig cfg;
  cfg.n_iters = 10;
  const Waveform a = Synthesize(mel, cfg);
  CHECK(a.samples.size() == mel.frames() * 256);
  CHECK(a.sample_rate_hz == 22050);
  float peak = 0;
  for (float v : a.samples) peak = std::max(peak, std::abs(v));
  CHECK(peak <= 0.95f + 1e-6f);
  CHECK(peak > 0.9f);
  CHECK(Synthesize(mel, cfg).samples == a.samples);
}

TEST_CASE("floor mel synthesizes near silence") {
  MelSpectrogram mel{Tensor<float>({80, 20}, static_cast<float>(std::log(1e-5))), FrontendConfig::Encoder()};
  GriffinLimConfig cfg;
  cfg.n_iters = 5;
  const Waveform w = Synthesize(mel, cfg);
  CHECK(w.samples.size() == 20 * 256);
  for (float v : w.samples) CHECK(std::abs(v) < 1e-3f);
}

TEST_CASE("istft of zero and linearity") {
  const FrontendConfig fe = FrontendConfig::Encoder();
  ComplexSpectrogram zero(fe.Bins(), 8);
  for (double v : Istft(zero, fe)) CHECK(v == 0.0);
  Rng rng(2);
  std::vector<double> x(6000);
  for (auto& v : x) v = rng.Normal();
  ComplexSpectrogram s = Stft(x, fe);
  const auto base = Istft(s, fe);
  for (auto& v : s.data) v *= 2.5;
  const auto scaled = Istft(s, fe);
  for (std::size_t i = 0; i < base.size(); ++i) CHECK(std::abs(scaled[i] - 2.5 * base[i]) < 1e-9);
}

TEST_CASE("vocoder config errors") {
  GriffinLimConfig cfg;
  cfg.n_iters = 0;
  CHECK_THROWS_AS(cfg.Validate(), ConfigError);
  cfg = {};
  cfg.momentum = 1.0;
  CHECK_THROWS_AS(cfg.Validate(), ConfigError);
  MelSpectrogram mel{Tensor<float>({40, 10}), FrontendConfig::Speaker()};
  CHECK_THROWS_AS(Synthesize(mel, GriffinLimConfig{}), ConfigError);
}
