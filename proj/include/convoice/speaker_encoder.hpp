// convoice/speaker_encoder.hpp
//
// LSTM speaker encoder. A 40-channel log-mel window of 160 frames (1.6 s at
// a 10 ms hop) runs through a stacked LSTM; the top layer's state at the last
// frame goes through a fully connected layer and is L2-normalized. Whole
// utterances are cut into 50%-overlapping windows whose embeddings are
// averaged and re-normalized.
//
// Weight names: speaker.lstm{1..L}.{w_ih,w_hh,b}, speaker.fc.{w,b}, and the
// fixed input statistics speaker.input_mean / speaker.input_std applied to
// every mel channel before the LSTM.

#pragma once

#include <utility>
#include <vector>

#include "convoice/audio.hpp"
#include "convoice/kernels.hpp"
#include "convoice/params.hpp"

namespace convoice {

struct SpeakerConfig {
  std::size_t n_mels = 40;
  std::size_t hidden = 256;
  std::size_t layers = 3;
  std::size_t embedding_dim = 256;
  std::size_t window_frames = 160;
  std::size_t hop_frames = 80;

  static SpeakerConfig Full();
  // Narrow LSTM for desk-scale training; the embedding stays 256-d.
  static SpeakerConfig Toy();

  void Validate() const;
};

std::size_t SpeakerParamCount(const SpeakerConfig& config);

struct SpeakerEmbedding {
  std::vector<float> values;

  bool operator==(const SpeakerEmbedding&) const = default;
};

struct WindowPlan {
  std::size_t window_frames = 160;
  std::size_t hop_frames = 80;
  std::vector<std::pair<std::size_t, std::size_t>> windows;  // [start, end)
  bool zero_padded = false;  // utterance shorter than one window
};

// Windows at 0, hop, 2*hop, ... while they fit; a final window clamped to end
// at T covers any remainder. Shorter utterances get one zero-padded window.
WindowPlan PlanWindows(std::size_t frames, std::size_t window_frames = 160, std::size_t hop_frames = 80);

// Mean of the embeddings followed by L2 normalization. The inputs are put
// into a canonical (lexicographic) order before summation, so the result is
// bitwise independent of the order they were given in.
SpeakerEmbedding AverageEmbeddings(std::vector<SpeakerEmbedding> embeddings);

// Dot product of two unit-norm embeddings.
double CosineSimilarity(const SpeakerEmbedding& a, const SpeakerEmbedding& b);

template <typename T>
std::vector<LstmLayerWeights<T>> LoadLstm(const ParamStore<T>& p, const SpeakerConfig& cfg) {
  std::vector<LstmLayerWeights<T>> layers;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string n = "speaker.lstm" + std::to_string(l + 1);
    layers.push_back({GetParam(p, n + ".w_ih"), GetParam(p, n + ".w_hh"), GetParam(p, n + ".b")});
  }
  return layers;
}

template <typename T>
void InitSpeakerEncoder(ParamStore<T>& p, const SpeakerConfig& cfg, Rng& rng) {
  cfg.Validate();
  std::size_t in = cfg.n_mels;
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.hidden));
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string n = "speaker.lstm" + std::to_string(l + 1);
    p[n + ".w_ih"] = rng.UniformTensor<T>({4 * cfg.hidden, in}, -scale, scale);
    p[n + ".w_hh"] = rng.UniformTensor<T>({4 * cfg.hidden, cfg.hidden}, -scale, scale);
    Tensor<T> b({4 * cfg.hidden});
    for (std::size_t j = cfg.hidden; j < 2 * cfg.hidden; ++j) b[j] = T(1);  // forget-gate bias
    p[n + ".b"] = b;
    in = cfg.hidden;
  }
  p["speaker.fc.w"] = rng.NormalTensor<T>({cfg.embedding_dim, cfg.hidden}, std::sqrt(1.0 / cfg.hidden));
  p["speaker.fc.b"] = Tensor<T>({cfg.embedding_dim}, T(0));
  p["speaker.input_mean"] = Tensor<T>({cfg.n_mels}, T(0));
  p["speaker.input_std"] = Tensor<T>({cfg.n_mels}, T(1));
}

// [n_mels x frames] log-mel -> normalized [frames x n_mels] LSTM input.
template <typename T>
Tensor<T> SpeakerInput(const ParamStore<T>& p, const SpeakerConfig& cfg, const Tensor<T>& mel) {
  CheckRank(mel, 2, "speaker window");
  if (mel.dim(0) != cfg.n_mels) {
    throw ShapeError("speaker window: axis 0 (mel channels) is " + std::to_string(mel.dim(0)) +
                     ", expected " + std::to_string(cfg.n_mels));
  }
  const Tensor<T>& mean = GetParam(p, "speaker.input_mean");
  const Tensor<T>& sd = GetParam(p, "speaker.input_std");
  Tensor<T> x({mel.dim(1), cfg.n_mels});
  for (std::size_t c = 0; c < cfg.n_mels; ++c)
    for (std::size_t t = 0; t < mel.dim(1); ++t) x.at(t, c) = (mel.at(c, t) - mean[c]) / sd[c];
  return x;
}

template <typename T>
struct SpeakerForward {
  LstmResult<T> lstm;
  Tensor<T> last;        // [H] top-layer state at the final frame
  Tensor<T> projected;   // [E] FC output before normalization
  Tensor<T> embedding;   // [E] unit norm
};

template <typename T>
SpeakerForward<T> SpeakerEncodeTrain(const ParamStore<T>& p, const SpeakerConfig& cfg,
                                     const Tensor<T>& mel_window) {
  SpeakerForward<T> f;
  f.lstm = LstmForward(SpeakerInput(p, cfg, mel_window), LoadLstm(p, cfg));
  const std::size_t steps = f.lstm.outputs.dim(0);
  f.last = Tensor<T>({cfg.hidden});
  std::copy(f.lstm.outputs.row(steps - 1), f.lstm.outputs.row(steps - 1) + cfg.hidden, f.last.data().begin());
  f.projected = Linear(f.last, GetParam(p, "speaker.fc.w"), GetParam(p, "speaker.fc.b"));
  T norm = 0;
  for (T v : f.projected.data()) norm += v * v;
  norm = std::sqrt(norm);
  if (!(norm > T(0))) throw DomainError("speaker encoder: embedding has zero norm");
  f.embedding = f.projected;
  for (auto& v : f.embedding.data()) v /= norm;
  return f;
}

// dL/d(unit embedding) -> parameter gradients accumulated into `grads`.
template <typename T>
void SpeakerEncodeBackward(const ParamStore<T>& p, const SpeakerConfig& cfg, const SpeakerForward<T>& f,
                           const Tensor<T>& grad_embedding, ParamStore<T>& grads) {
  T norm = 0;
  for (T v : f.projected.data()) norm += v * v;
  norm = std::sqrt(norm);
  T dot = 0;
  for (std::size_t i = 0; i < grad_embedding.size(); ++i) dot += grad_embedding[i] * f.embedding[i];
  Tensor<T> d_proj(f.projected.dims());
  for (std::size_t i = 0; i < d_proj.size(); ++i) d_proj[i] = (grad_embedding[i] - f.embedding[i] * dot) / norm;
  LinearGrads<T> gl = LinearBackward(f.last, GetParam(p, "speaker.fc.w"), d_proj);
  Accumulate(grads, "speaker.fc.w", gl.weight);
  Accumulate(grads, "speaker.fc.b", gl.bias);
  Tensor<T> d_out(f.lstm.outputs.dims());
  const std::size_t last_row = d_out.dim(0) - 1;
  for (std::size_t j = 0; j < cfg.hidden; ++j) d_out.at(last_row, j) = gl.input[j];
  const auto layers = LoadLstm(p, cfg);
  LstmGrads<T> g = LstmBackward(f.lstm, layers, d_out);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string n = "speaker.lstm" + std::to_string(l + 1);
    Accumulate(grads, n + ".w_ih", g.layers[l].w_ih);
    Accumulate(grads, n + ".w_hh", g.layers[l].w_hh);
    Accumulate(grads, n + ".b", g.layers[l].bias);
  }
}

// Inference-time speaker encoder (32-bit). Immutable and thread-safe.
class SpeakerEncoder {
 public:
  SpeakerEncoder(SpeakerConfig config, const ParamStore<float>& params);

  const SpeakerConfig& config() const { return config_; }

  // Requires exactly window_frames frames of n_mels channels.
  SpeakerEmbedding EncodeWindow(const Tensor<float>& mel40) const;
  // FC output before normalization.
  std::vector<float> ProjectWindow(const Tensor<float>& mel40) const;

  // Resample to 16 kHz, 40-mel frontend, window, encode, average.
  SpeakerEmbedding EmbedUtterance(const Waveform& wave) const;
  SpeakerEmbedding EmbedMel(const Tensor<float>& mel40) const;
  // Each reference embedded separately, then averaged and re-normalized.
  SpeakerEmbedding EmbedSpeaker(const std::vector<Waveform>& references) const;

 private:
  SpeakerConfig config_;
  ParamStore<float> params_;
};

}  // namespace convoice
