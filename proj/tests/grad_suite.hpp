// Finite-difference gradient cases shared by the unit tests and the
// acceptance runner. Every case projects the op's output onto a fixed random
// tensor so the check sees a scalar loss.

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "convoice/conv_stack.hpp"
#include "convoice/decoder.hpp"
#include "convoice/grad_check.hpp"
#include "convoice/losses.hpp"
#include "convoice/speaker_encoder.hpp"

namespace convoice::testing {

struct GradCase {
  std::string name;
  GradCheckResult result;
};

using StoreLoss = std::function<double(const ParamStore<double>&, const Tensor<double>&)>;
using StoreGrad =
    std::function<Tensor<double>(const ParamStore<double>&, const Tensor<double>&, ParamStore<double>&)>;

// Checks d/dx and d/d(every named parameter) of a store-based function.
inline GradCheckResult StoreGradCheck(const ParamStore<double>& params, const std::vector<std::string>& names,
                                      const Tensor<double>& x, const StoreLoss& loss, const StoreGrad& grad) {
  auto unpack = [&](const std::vector<Tensor<double>>& in) {
    ParamStore<double> p = params;
    for (std::size_t i = 0; i < names.size(); ++i) p[names[i]] = in[i + 1];
    return p;
  };
  std::vector<Tensor<double>> inputs{x};
  for (const auto& n : names) inputs.push_back(GetParam(params, n));
  return GradCheck([&](const std::vector<Tensor<double>>& in) { return loss(unpack(in), in[0]); },
                   [&](const std::vector<Tensor<double>>& in) {
                     ParamStore<double> p = unpack(in);
                     ParamStore<double> g;
                     std::vector<Tensor<double>> out{grad(p, in[0], g)};
                     for (const auto& n : names) {
                       auto it = g.find(n);
                       out.push_back(it == g.end() ? Tensor<double>(in[out.size()].dims()) : it->second);
                     }
                     return out;
                   },
                   inputs);
}

inline GradCase Conv1dCase() {
  Rng rng(101);
  const ConvSpec spec{2, 3, 3, 2, 1};
  const auto r = rng.NormalTensor<double>({3, 4}, 1.0);
  auto loss = [&](const std::vector<Tensor<double>>& in) { return Project(r, Conv1d(in[0], in[1], spec, &in[2])); };
  auto grad = [&](const std::vector<Tensor<double>>& in) {
    ConvGrads<double> g = Conv1dBackward(in[0], in[1], spec, r, true);
    return std::vector<Tensor<double>>{g.input, g.weight, g.bias};
  };
  return {"conv1d", GradCheck(loss, grad,
                              {rng.NormalTensor<double>({2, 7}, 1.0), rng.NormalTensor<double>({3, 2, 3}, 1.0),
                               rng.NormalTensor<double>({3}, 1.0)})};
}

inline GradCase DilatedConv1dCase() {
  Rng rng(102);
  const ConvSpec spec{2, 2, 3, 1, 2};
  const auto r = rng.NormalTensor<double>({2, 6}, 1.0);
  auto loss = [&](const std::vector<Tensor<double>>& in) { return Project(r, Conv1d(in[0], in[1], spec)); };
  auto grad = [&](const std::vector<Tensor<double>>& in) {
    ConvGrads<double> g = Conv1dBackward(in[0], in[1], spec, r, false);
    return std::vector<Tensor<double>>{g.input, g.weight};
  };
  return {"conv1d (dilated)",
          GradCheck(loss, grad, {rng.NormalTensor<double>({2, 6}, 1.0), rng.NormalTensor<double>({2, 2, 3}, 1.0)})};
}

inline GradCase SeparableCase() {
  Rng rng(103);
  const ConvSpec spec{3, 4, 5, 2, 1};
  const auto r = rng.NormalTensor<double>({4, 5}, 1.0);
  auto loss = [&](const std::vector<Tensor<double>>& in) {
    return Project(r, SeparableConv1d(in[0], in[1], in[2], spec, &in[3]));
  };
  auto grad = [&](const std::vector<Tensor<double>>& in) {
    SeparableGrads<double> g = SeparableConv1dBackward(in[0], in[1], in[2], spec, r, true);
    return std::vector<Tensor<double>>{g.input, g.depthwise, g.pointwise, g.bias};
  };
  return {"separable conv1d",
          GradCheck(loss, grad,
                    {rng.NormalTensor<double>({3, 9}, 1.0), rng.NormalTensor<double>({3, 5}, 1.0),
                     rng.NormalTensor<double>({4, 3}, 1.0), rng.NormalTensor<double>({4}, 1.0)})};
}

inline BatchNormParams<double> BnParams(const std::vector<Tensor<double>>& in) {
  const std::size_t c = in[1].size();
  Tensor<double> mean({c}), var({c});
  for (std::size_t i = 0; i < c; ++i) {
    mean[i] = 0.1 * static_cast<double>(i) - 0.2;
    var[i] = 0.5 + 0.3 * static_cast<double>(i);
  }
  return {in[1], in[2], mean, var, 1e-5};
}

inline GradCase BatchNormCase(bool train) {
  Rng rng(train ? 105 : 104);
  const auto r = rng.NormalTensor<double>({3, 7}, 1.0);
  auto loss = [&](const std::vector<Tensor<double>>& in) {
    const auto p = BnParams(in);
    return Project(r, train ? BatchNorm1dTrain(in[0], p).output : BatchNorm1d(in[0], p));
  };
  auto grad = [&](const std::vector<Tensor<double>>& in) {
    const auto p = BnParams(in);
    BatchNormGrads<double> g =
        train ? BatchNorm1dTrainBackward(BatchNorm1dTrain(in[0], p), p, r) : BatchNorm1dBackward(in[0], p, r);
    return std::vector<Tensor<double>>{g.input, g.gamma, g.beta};
  };
  return {train ? "batchnorm (training)" : "batchnorm (inference)",
          GradCheck(loss, grad,
                    {rng.NormalTensor<double>({3, 7}, 1.0), rng.UniformTensor<double>({3}, 0.5, 1.5),
                     rng.NormalTensor<double>({3}, 1.0)})};
}

inline GradCase LinearCase() {
  Rng rng(106);
  const auto r = rng.NormalTensor<double>({2, 3}, 1.0);
  auto loss = [&](const std::vector<Tensor<double>>& in) { return Project(r, Linear(in[0], in[1], in[2])); };
  auto grad = [&](const std::vector<Tensor<double>>& in) {
    LinearGrads<double> g = LinearBackward(in[0], in[1], r);
    return std::vector<Tensor<double>>{g.input, g.weight, g.bias};
  };
  return {"linear", GradCheck(loss, grad,
                              {rng.NormalTensor<double>({2, 4}, 1.0), rng.NormalTensor<double>({3, 4}, 1.0),
                               rng.NormalTensor<double>({3}, 1.0)})};
}

inline GradCase ReluCase() {
  Rng rng(107);
  const auto r = rng.NormalTensor<double>({3, 5}, 1.0);
  const auto x = rng.NormalTensor<double>({3, 5}, 1.0);
  auto loss = [&](const std::vector<Tensor<double>>& in) { return Project(r, Relu(in[0])); };
  auto grad = [&](const std::vector<Tensor<double>>& in) { return std::vector<Tensor<double>>{ReluBackward(in[0], r)}; };
  // The kink at zero is the only non-smooth point.
  auto smooth = [&](std::size_t, std::size_t e) { return std::abs(x[e]) > 1e-3; };
  return {"relu", GradCheck(loss, grad, {x}, 1e-6, smooth)};
}

inline GradCase LstmCase() {
  Rng rng(108);
  const std::size_t steps = 5, d = 3, h = 2;
  const auto r = rng.NormalTensor<double>({steps, h}, 1.0);
  auto layers_of = [&](const std::vector<Tensor<double>>& in) {
    return std::vector<LstmLayerWeights<double>>{{in[1], in[2], in[3]}, {in[4], in[5], in[6]}};
  };
  auto loss = [&](const std::vector<Tensor<double>>& in) {
    return Project(r, LstmForward(in[0], layers_of(in)).outputs);
  };
  auto grad = [&](const std::vector<Tensor<double>>& in) {
    const auto layers = layers_of(in);
    LstmGrads<double> g = LstmBackward(LstmForward(in[0], layers), layers, r);
    return std::vector<Tensor<double>>{g.input,           g.layers[0].w_ih, g.layers[0].w_hh, g.layers[0].bias,
                                       g.layers[1].w_ih,  g.layers[1].w_hh, g.layers[1].bias};
  };
  return {"lstm (2 layers)",
          GradCheck(loss, grad,
                    {rng.NormalTensor<double>({steps, d}, 1.0), rng.NormalTensor<double>({4 * h, d}, 0.7),
                     rng.NormalTensor<double>({4 * h, h}, 0.7), rng.NormalTensor<double>({4 * h}, 0.3),
                     rng.NormalTensor<double>({4 * h, h}, 0.7), rng.NormalTensor<double>({4 * h, h}, 0.7),
                     rng.NormalTensor<double>({4 * h}, 0.3)})};
}

inline GradCase CtcCase() {
  Rng rng(109);
  const std::vector<int> target{1, 2, 2};
  auto loss = [&](const std::vector<Tensor<double>>& in) { return CtcLoss(in[0], target).loss; };
  auto grad = [&](const std::vector<Tensor<double>>& in) { return std::vector<Tensor<double>>{CtcLoss(in[0], target).grad}; };
  return {"ctc", GradCheck(loss, grad, {rng.NormalTensor<double>({7, 4}, 1.5)})};
}

inline GradCase Ge2eCase() {
  Rng rng(110);
  auto loss = [&](const std::vector<Tensor<double>>& in) { return Ge2eLoss(in[0], in[1][0], in[2][0], false).loss; };
  auto grad = [&](const std::vector<Tensor<double>>& in) {
    Ge2eResult g = Ge2eLoss(in[0], in[1][0], in[2][0], false);
    return std::vector<Tensor<double>>{g.grad_embeddings, Tensor<double>({1}, g.grad_w), Tensor<double>({1}, g.grad_b)};
  };
  return {"ge2e", GradCheck(loss, grad,
                            {rng.NormalTensor<double>({3, 3, 4}, 1.0), Tensor<double>({1}, 2.0),
                             Tensor<double>({1}, -1.0)})};
}

inline GradCase L2Case() {
  Rng rng(111);
  auto loss = [&](const std::vector<Tensor<double>>& in) { return L2Loss(in[0], in[1]).loss; };
  auto grad = [&](const std::vector<Tensor<double>>& in) {
    L2Result<double> g = L2Loss(in[0], in[1]);
    Tensor<double> neg = g.grad;
    for (auto& v : neg.data()) v = -v;
    return std::vector<Tensor<double>>{g.grad, neg};
  };
  return {"l2", GradCheck(loss, grad, {rng.NormalTensor<double>({4, 6}, 1.0), rng.NormalTensor<double>({4, 6}, 1.0)})};
}

inline GradCase ResidualBlockCase() {
  Rng rng(112);
  const StackBlock b{"g.block", 3, 4, 3, 2, 1, true, false};
  ParamStore<double> p;
  InitBlock(p, b, rng);
  std::vector<std::string> names;
  for (const auto& [n, t] : p)
    if (n.find("bn_mean") == std::string::npos && n.find("bn_var") == std::string::npos) names.push_back(n);
  const auto r = rng.NormalTensor<double>({4, 6}, 1.0);
  auto loss = [&](const ParamStore<double>& q, const Tensor<double>& x) {
    return Project(r, BlockForward(q, b, x, NormMode::kTrain));
  };
  auto grad = [&](const ParamStore<double>& q, const Tensor<double>& x, ParamStore<double>& g) {
    BlockCache<double> cache;
    BlockForward(q, b, x, NormMode::kTrain, &cache);
    return BlockBackward(q, b, cache, NormMode::kTrain, r, g);
  };
  return {"residual separable block", StoreGradCheck(p, names, rng.NormalTensor<double>({3, 6}, 1.0), loss, grad)};
}

inline GradCase DecoderCase() {
  Rng rng(113);
  DecoderConfig cfg;
  cfg.content_channels = 3;
  cfg.speaker_dim = 2;
  cfg.blocks = {{4, 3}, {4, 3}, {5, 3}};
  cfg.repeats = 1;
  cfg.upsample_kernel = 3;
  ParamStore<double> p;
  InitDecoder(p, cfg, rng);
  std::vector<std::string> names;
  for (const auto& [n, t] : p)
    if (n.find("bn_mean") == std::string::npos && n.find("bn_var") == std::string::npos) names.push_back(n);
  const std::size_t frames = 7;
  const auto r = rng.NormalTensor<double>({80, frames}, 1.0);
  auto loss = [&](const ParamStore<double>& q, const Tensor<double>& x) {
    DecoderTrainCache<double> c;
    return Project(r, DecoderTrainForward(cfg, q, x, frames, NormMode::kTrain, c));
  };
  auto grad = [&](const ParamStore<double>& q, const Tensor<double>& x, ParamStore<double>& g) {
    DecoderTrainCache<double> c;
    DecoderTrainForward(cfg, q, x, frames, NormMode::kTrain, c);
    return DecoderTrainBackward(cfg, q, c, NormMode::kTrain, r, g);
  };
  return {"decoder (end to end)", StoreGradCheck(p, names, rng.NormalTensor<double>({5, 4}, 1.0), loss, grad)};
}

inline GradCase SpeakerEncoderCase() {
  Rng rng(114);
  SpeakerConfig cfg;
  cfg.n_mels = 3;
  cfg.hidden = 2;
  cfg.layers = 2;
  cfg.embedding_dim = 3;
  cfg.window_frames = 5;
  ParamStore<double> p;
  InitSpeakerEncoder(p, cfg, rng);
  const std::vector<std::string> names{"speaker.lstm1.w_ih", "speaker.lstm1.w_hh", "speaker.lstm1.b",
                                       "speaker.lstm2.w_ih", "speaker.lstm2.w_hh", "speaker.lstm2.b",
                                       "speaker.fc.w",       "speaker.fc.b"};
  const auto r = rng.NormalTensor<double>({3}, 1.0);
  // The window is data, so only parameters are probed.
  auto unpack = [&](const std::vector<Tensor<double>>& in) {
    ParamStore<double> q = p;
    for (std::size_t i = 0; i < names.size(); ++i) q[names[i]] = in[i];
    return q;
  };
  const auto x = rng.NormalTensor<double>({3, 5}, 1.0);
  std::vector<Tensor<double>> inputs;
  for (const auto& n : names) inputs.push_back(p.at(n));
  return {"speaker encoder (lstm + fc + l2 norm)",
          GradCheck([&](const std::vector<Tensor<double>>& in) {
                      return Project(r, SpeakerEncodeTrain(unpack(in), cfg, x).embedding);
                    },
                    [&](const std::vector<Tensor<double>>& in) {
                      ParamStore<double> q = unpack(in), g;
                      SpeakerEncodeBackward(q, cfg, SpeakerEncodeTrain(q, cfg, x), r, g);
                      std::vector<Tensor<double>> out;
                      for (const auto& n : names) out.push_back(g.at(n));
                      return out;
                    },
                    inputs)};
}

inline std::vector<GradCase> RunGradientSuite() {
  return {Conv1dCase(),     DilatedConv1dCase(), SeparableCase(), BatchNormCase(false), BatchNormCase(true),
          LinearCase(),     ReluCase(),          LstmCase(),      CtcCase(),            Ge2eCase(),
          L2Case(),         ResidualBlockCase(), DecoderCase(),   SpeakerEncoderCase()};
}

}  // namespace convoice::testing
