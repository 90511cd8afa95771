#include "doctest.h"

#include <cmath>

#include "convoice/decoder.hpp"

using namespace convoice;

namespace {

struct Model {
  DecoderConfig cfg = DecoderConfig::Toy();
  ParamStore<double> p;
  Model() {
    Rng rng(21);
    InitDecoder(p, cfg, rng);
    for (auto& [name, t] : p) {
      if (name.ends_with("bn_mean") || name.ends_with("bn_beta")) t = rng.NormalTensor<double>(t.dims(), 0.2);
      if (name.ends_with("bn_var")) t = rng.UniformTensor<double>(t.dims(), 0.5, 1.5);
      if (name.ends_with(".b")) t = rng.NormalTensor<double>(t.dims(), 0.1);
    }
  }
};

std::vector<double> UnitVector(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  double s = 0;
  for (auto& x : v) s += (x = rng.Normal()) * x;
  for (auto& x : v) x /= std::sqrt(s);
  return v;
}

std::size_t HandCountToyDecoder() {
  std::size_t n = 0, in = 64 + 256;
  for (std::size_t k : {5u, 7u, 9u}) {
    n += in * k + 64 * in + 2 * 64;     // repeat 1
    n += 64 * k + 64 * 64 + 2 * 64;     // repeat 2
    if (in != 64) n += 64 * in + 64;    // projection
    in = 64;
  }
  n += 64 * 5 + 64 * 64 + 64;  // upsample conv
  return n + 80 * 64 + 80;      // head
}

}  // namespace

TEST_CASE("conditioning layout") {
  Rng rng(1);
  const auto f = rng.NormalTensor<double>({3, 5}, 1.0);
  const std::vector<double> s1{0.6, 0.8}, s2{1.0, 0.0}, z{0.0, 0.0};
  const auto c1 = Condition(f, std::span<const double>(s1));
  REQUIRE(c1.dims() == Dims{5, 5});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t t = 0; t < 5; ++t) CHECK(c1.at(c, t) == f.at(c, t));
  for (std::size_t t = 0; t < 5; ++t) {
    CHECK(c1.at(3, t) == 0.6);
    CHECK(c1.at(4, t) == 0.8);
  }
  const auto c0 = Condition(f, std::span<const double>(z));
  for (std::size_t t = 0; t < 5; ++t) CHECK((c0.at(3, t) == 0.0 && c0.at(4, t) == 0.0));
  const auto c2 = Condition(f, std::span<const double>(s2));
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t t = 0; t < 5; ++t) CHECK(c2.at(c, t) == c1.at(c, t));
  CHECK(c2.at(3, 0) != c1.at(3, 0));
}

TEST_CASE("decoder emits exactly the source frame count") {
  const Model m;
  const Decoder<double> dec(m.cfg, m.p);
  Rng rng(2);
  const auto spk = UnitVector(256, 3);
  for (std::size_t frames : {1u, 2u, 3u, 255u, 256u, 257u, 1001u}) {
    const std::size_t t_enc = (frames + 1) / 2;
    const auto x = Condition(rng.NormalTensor<double>({64, t_enc}, 1.0), std::span<const double>(spk));
    CHECK(dec.Decode(x, frames).dims() == Dims{80, frames});
  }
  const auto x = Condition(rng.NormalTensor<double>({64, 128}, 1.0), std::span<const double>(spk));
  CHECK_THROWS_AS(dec.Decode(x, 300), ShapeError);
  CHECK_THROWS_AS(dec.Decode(Tensor<double>({100, 128}), 256), ShapeError);
}

TEST_CASE("speaker perturbation reaches every output frame") {
  const Model m;
  const Decoder<double> dec(m.cfg, m.p);
  Rng rng(4);
  const auto feat = rng.NormalTensor<double>({64, 60}, 1.0);
  const auto a = dec.Decode(Condition(feat, std::span<const double>(UnitVector(256, 5))), 119);
  const auto b = dec.Decode(Condition(feat, std::span<const double>(UnitVector(256, 6))), 119);
  for (std::size_t t = 0; t < 119; ++t) {
    double delta = 0;
    for (std::size_t c = 0; c < 80; ++c) delta += std::abs(a.at(c, t) - b.at(c, t));
    CHECK(delta > 0.0);
  }
}

TEST_CASE("folded decoder matches training-graph inference") {
  const Model m;
  Rng rng(7);
  const auto x = Condition(rng.NormalTensor<double>({64, 30}, 1.0), std::span<const double>(UnitVector(256, 8)));
  DecoderTrainCache<double> cache;
  const auto ref = DecoderTrainForward(m.cfg, m.p, x, 59, NormMode::kInference, cache);
  const auto folded = Decoder<double>(m.cfg, m.p).Decode(x, 59);
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(ref[i] - folded[i]) < 1e-9);
}

TEST_CASE("segmented decoding equals per-item decoding") {
  const Model m;
  const Decoder<double> dec(m.cfg, m.p);
  Rng rng(9);
  const auto spk = UnitVector(256, 10);
  const std::size_t frames = 41, t_enc = 21, items = 3;
  std::vector<Tensor<double>> parts;
  Tensor<double> joined({64 + 256, items * t_enc});
  for (std::size_t s = 0; s < items; ++s) {
    parts.push_back(Condition(rng.NormalTensor<double>({64, t_enc}, 1.0), std::span<const double>(spk)));
    for (std::size_t c = 0; c < joined.dim(0); ++c)
      for (std::size_t t = 0; t < t_enc; ++t) joined.at(c, s * t_enc + t) = parts[s].at(c, t);
  }
  const auto out = dec.DecodeSegments(joined, items, frames);
  REQUIRE(out.dims() == Dims{80, items * frames});
  for (std::size_t s = 0; s < items; ++s) {
    const auto single = dec.Decode(parts[s], frames);
    for (std::size_t c = 0; c < 80; ++c)
      for (std::size_t t = 0; t < frames; ++t) CHECK(std::abs(out.at(c, s * frames + t) - single.at(c, t)) < 1e-10);
  }
}

TEST_CASE("decoder parameter counts") {
  CHECK(DecoderParamCount(DecoderConfig::Toy()) == HandCountToyDecoder());
  const Model m;
  std::size_t stored = 0;
  for (const auto& [name, t] : m.p)
    if (!name.ends_with("bn_mean") && !name.ends_with("bn_var")) stored += t.size();
  CHECK(stored == DecoderParamCount(m.cfg));
  // A single 1 -> 1 conv with K = 3 and a bias holds 4 parameters.
  CHECK(ConvSpec{1, 1, 3, 1, 1}.ParamCount(true) == 4);
}

TEST_CASE("decoder config validation") {
  DecoderConfig c = DecoderConfig::Toy();
  c.blocks.pop_back();
  CHECK_THROWS_AS(c.Validate(), ConfigError);
  c = DecoderConfig::Toy();
  c.out_channels = 64;
  CHECK_THROWS_AS(c.Validate(), ConfigError);
  c = DecoderConfig::Toy();
  c.upsample_factor = 0;
  CHECK_THROWS_AS(c.Validate(), ConfigError);
}
