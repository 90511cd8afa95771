// convoice/speaker_encoder.cpp

#include "convoice/speaker_encoder.hpp"

#include <algorithm>
#include <cmath>

#include "convoice/parallel.hpp"

namespace convoice {

SpeakerConfig SpeakerConfig::Full() { return SpeakerConfig{}; }

SpeakerConfig SpeakerConfig::Toy() {
  SpeakerConfig c;
  c.hidden = 32;
  return c;
}

void SpeakerConfig::Validate() const {
  if (n_mels == 0 || hidden == 0 || layers == 0 || embedding_dim == 0 || window_frames == 0 ||
      hop_frames == 0) {
    throw ConfigError("speaker config: sizes must be positive");
  }
}

std::size_t SpeakerParamCount(const SpeakerConfig& c) {
  std::size_t n = 0;
  std::size_t in = c.n_mels;
  for (std::size_t l = 0; l < c.layers; ++l) {
    n += 4 * c.hidden * (in + c.hidden + 1);
    in = c.hidden;
  }
  return n + c.embedding_dim * (c.hidden + 1);
}

WindowPlan PlanWindows(std::size_t frames, std::size_t window_frames, std::size_t hop_frames) {
  if (frames == 0) throw InputError("plan_windows: utterance has no frames");
  WindowPlan plan{window_frames, hop_frames, {}, false};
  if (frames < window_frames) {
    plan.windows.emplace_back(0, window_frames);
    plan.zero_padded = true;
    return plan;
  }
  std::size_t start = 0;
  for (; start + window_frames <= frames; start += hop_frames) {
    plan.windows.emplace_back(start, start + window_frames);
  }
  if (plan.windows.back().second < frames) plan.windows.emplace_back(frames - window_frames, frames);
  return plan;
}

SpeakerEmbedding AverageEmbeddings(std::vector<SpeakerEmbedding> embeddings) {
  if (embeddings.empty()) throw InputError("average: no embeddings");
  const std::size_t dim = embeddings.front().values.size();
  for (const auto& e : embeddings) {
    if (e.values.size() != dim) throw ShapeError("average: embedding dimensions differ");
  }
  std::sort(embeddings.begin(), embeddings.end(),
            [](const SpeakerEmbedding& a, const SpeakerEmbedding& b) { return a.values < b.values; });
  std::vector<double> sum(dim, 0.0);
  for (const auto& e : embeddings)
    for (std::size_t i = 0; i < dim; ++i) sum[i] += e.values[i];
  double norm = 0.0;
  for (double& v : sum) {
    v /= static_cast<double>(embeddings.size());
    norm += v * v;
  }
  norm = std::sqrt(norm);
  if (!(norm > 0.0)) throw DomainError("average: mean embedding has zero norm");
  SpeakerEmbedding out;
  out.values.resize(dim);
  for (std::size_t i = 0; i < dim; ++i) out.values[i] = static_cast<float>(sum[i] / norm);
  return out;
}

double CosineSimilarity(const SpeakerEmbedding& a, const SpeakerEmbedding& b) {
  if (a.values.size() != b.values.size()) throw ShapeError("cosine: embedding dimensions differ");
  double dot = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) dot += static_cast<double>(a.values[i]) * b.values[i];
  return std::clamp(dot, -1.0, 1.0);
}

SpeakerEncoder::SpeakerEncoder(SpeakerConfig config, const ParamStore<float>& params)
    : config_(config), params_(Subset(params, "speaker.")) {
  config_.Validate();
  const auto layers = LoadLstm(params_, config_);
  std::size_t in = config_.n_mels;
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const std::string n = "speaker.lstm" + std::to_string(l + 1);
    CheckDims(layers[l].w_ih, {4 * config_.hidden, in}, n + ".w_ih");
    CheckDims(layers[l].w_hh, {4 * config_.hidden, config_.hidden}, n + ".w_hh");
    CheckDims(layers[l].bias, {4 * config_.hidden}, n + ".b");
    in = config_.hidden;
  }
  CheckDims(GetParam(params_, "speaker.fc.w"), {config_.embedding_dim, config_.hidden}, "speaker.fc.w");
  CheckDims(GetParam(params_, "speaker.fc.b"), {config_.embedding_dim}, "speaker.fc.b");
  CheckDims(GetParam(params_, "speaker.input_mean"), {config_.n_mels}, "speaker.input_mean");
  CheckDims(GetParam(params_, "speaker.input_std"), {config_.n_mels}, "speaker.input_std");
}

std::vector<float> SpeakerEncoder::ProjectWindow(const Tensor<float>& mel40) const {
  CheckDims(mel40, {config_.n_mels, config_.window_frames}, "speaker window");
  const LstmResult<float> r = LstmForward(SpeakerInput(params_, config_, mel40), LoadLstm(params_, config_));
  const Tensor<float> projected =
      Linear(r.final_hidden.back(), GetParam(params_, "speaker.fc.w"), GetParam(params_, "speaker.fc.b"));
  return projected.vec();
}

SpeakerEmbedding SpeakerEncoder::EncodeWindow(const Tensor<float>& mel40) const {
  std::vector<float> v = ProjectWindow(mel40);
  double norm = 0.0;
  for (float x : v) norm += static_cast<double>(x) * x;
  norm = std::sqrt(norm);
  if (!(norm > 0.0)) throw DomainError("speaker encoder: embedding has zero norm");
  SpeakerEmbedding e;
  e.values.resize(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) e.values[i] = static_cast<float>(v[i] / norm);
  return e;
}

SpeakerEmbedding SpeakerEncoder::EmbedMel(const Tensor<float>& mel) const {
  CheckRank(mel, 2, "speaker mel");
  const WindowPlan plan = PlanWindows(mel.dim(1), config_.window_frames, config_.hop_frames);
  std::vector<SpeakerEmbedding> parts(plan.windows.size());
  ParallelFor(plan.windows.size(), [&](std::size_t w) {
    const auto [start, end] = plan.windows[w];
    // Zero padding happens in the normalized-input domain via the mean value.
    Tensor<float> window({config_.n_mels, config_.window_frames});
    const Tensor<float>& mean = GetParam(params_, "speaker.input_mean");
    for (std::size_t c = 0; c < config_.n_mels; ++c) {
      for (std::size_t t = 0; t < config_.window_frames; ++t) {
        const std::size_t src = start + t;
        window.at(c, t) = src < mel.dim(1) && src < end ? mel.at(c, src) : mean[c];
      }
    }
    parts[w] = EncodeWindow(window);
  });
  if (parts.size() == 1) return parts.front();
  return AverageEmbeddings(std::move(parts));
}

SpeakerEmbedding SpeakerEncoder::EmbedUtterance(const Waveform& wave) const {
  if (wave.samples.empty()) throw InputError("embed_utterance: empty audio");
  const FrontendConfig fe = FrontendConfig::Speaker();
  const Waveform resampled = Resample(wave, fe.sample_rate_hz);
  if (resampled.samples.empty()) throw InputError("embed_utterance: audio too short after resampling");
  return EmbedMel(LogMel(resampled, fe).values);
}

SpeakerEmbedding SpeakerEncoder::EmbedSpeaker(const std::vector<Waveform>& references) const {
  if (references.empty()) throw InputError("embed_speaker: no reference audio");
  std::vector<SpeakerEmbedding> parts;
  for (const Waveform& w : references) parts.push_back(EmbedUtterance(w));
  if (parts.size() == 1) return parts.front();
  return AverageEmbeddings(std::move(parts));
}

}  // namespace convoice
