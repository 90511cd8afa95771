// convoice/training.cpp

#include "convoice/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>

#include "convoice/losses.hpp"

namespace convoice {
namespace {

bool StoreFinite(const ParamStore<double>& s) {
  for (const auto& [name, t] : s)
    if (!AllFinite(t)) return false;
  return true;
}

void CheckLoss(double loss, long step) {
  if (!std::isfinite(loss)) throw TrainingError("training: non-finite loss", step);
}

void CheckParams(const ParamStore<double>& p, long step) {
  if (!StoreFinite(p)) throw TrainingError("training: non-finite parameter after update", step);
}

void Scale(ParamStore<double>& grads, double s) {
  for (auto& [name, g] : grads)
    for (auto& v : g.data()) v *= s;
}

// Running stats := average of the batch stats accumulated in `sums`.
void ApplyBatchStats(ParamStore<double>& params, const ParamStore<double>& sums, std::size_t count) {
  for (const auto& [name, t] : sums) {
    Tensor<double> avg = t;
    for (auto& v : avg.data()) v /= static_cast<double>(count);
    params[name] = std::move(avg);
  }
}

// Epoch-wise shuffled example order.
class Sampler {
 public:
  Sampler(std::size_t n, std::uint64_t seed) : order_(n), rng_(seed) { Shuffle(); }
  std::size_t Next() {
    if (pos_ == order_.size()) Shuffle();
    return order_[pos_++];
  }

 private:
  void Shuffle() {
    std::iota(order_.begin(), order_.end(), 0);
    for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng_.Index(i)]);
    pos_ = 0;
  }
  std::vector<std::size_t> order_;
  Rng rng_;
  std::size_t pos_ = 0;
};

void PutBack(ParamStore<float>& dst, const ParamStore<double>& src) {
  for (const auto& [name, t] : src) dst[name] = t.Cast<float>();
}

}  // namespace

void Adam::Step(ParamStore<double>& params, const ParamStore<double>& grads) {
  ++step_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  for (const auto& [name, g] : grads) {
    auto it = params.find(name);
    if (it == params.end()) throw InputError("adam: gradient for unknown parameter '" + name + "'");
    Tensor<double>& p = it->second;
    CheckDims(g, p.dims(), "adam gradient " + name);
    auto [mi, m_new] = m_.try_emplace(name, p.dims());
    auto [vi, v_new] = v_.try_emplace(name, p.dims());
    Tensor<double>& m = mi->second;
    Tensor<double>& v = vi->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      p[i] -= config_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps);
    }
  }
}

void LossTrace::WriteCsv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << "step,loss\n" << std::setprecision(17);
  for (std::size_t i = 0; i < losses.size(); ++i) out << i << ',' << losses[i] << '\n';
}

double ClipGradNorm(ParamStore<double>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, g] : grads)
    for (double v : g.data()) sq += v * v;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) Scale(grads, max_norm / norm);
  return norm;
}

// --- Decoder ---------------------------------------------------------------

std::vector<DecoderPair> SyntheticDecoderPairs(std::size_t utterances, std::size_t speakers, double seconds,
                                               std::uint64_t seed) {
  if (speakers == 0) throw ConfigError("synthetic pairs: need at least one speaker");
  const std::size_t per = (utterances + speakers - 1) / speakers;
  const SyntheticSpeakerSet set{speakers, per + 1, seed, 0.05};
  std::vector<DecoderPair> pairs;
  for (std::size_t i = 0; i < utterances; ++i) {
    const std::size_t s = i % speakers, u = i / speakers;
    pairs.push_back({set.Utterance(s, u, seconds, 22050), set.Utterance(s, per, seconds, 16000)});
  }
  return pairs;
}

DecoderTrainResult TrainDecoderToy(const ModelBundle& bundle, const std::vector<DecoderPair>& dataset,
                                   const TrainOptions& options) {
  if (dataset.empty()) throw TrainingError("train decoder: empty dataset", 0);
  if (options.batch == 0) throw ConfigError("train decoder: batch must be >= 1");
  bundle.Validate();
  const FrontendConfig fe = FrontendConfig::Encoder();
  const ContentEncoder<float> encoder(bundle.encoder, bundle.params);
  const SpeakerEncoder speaker(bundle.speaker, bundle.params);

  struct Example {
    Tensor<double> conditioned;
    Tensor<double> target;
  };
  std::vector<Example> examples;
  for (const DecoderPair& pair : dataset) {
    const MelSpectrogram mel = LogMel(Resample(pair.audio, fe.sample_rate_hz), fe);
    const Tensor<float> features = encoder.Encode(NormalizePerChannel(mel.values, bundle.norm)).values;
    const SpeakerEmbedding emb = speaker.EmbedUtterance(pair.reference);
    const std::vector<double> spk(emb.values.begin(), emb.values.end());
    examples.push_back({Condition<double>(features.Cast<double>(), spk), mel.values.Cast<double>()});
  }

  const DecoderConfig& cfg = bundle.decoder;
  ParamStore<double> params = CastStore<double>(Subset(bundle.params, "decoder."));

  auto run = [&](const Example& ex, ParamStore<double>* grads, ParamStore<double>* stats) {
    DecoderTrainCache<double> cache;
    const Tensor<double> pred =
        DecoderTrainForward(cfg, params, ex.conditioned, ex.target.dim(1), NormMode::kTrain, cache);
    L2Result<double> l2 = L2Loss(pred, ex.target);
    if (grads) DecoderTrainBackward(cfg, params, cache, NormMode::kTrain, l2.grad, *grads);
    if (stats) {
      const auto stack = cfg.Stack();
      for (std::size_t i = 0; i < stack.size(); ++i) CollectBatchStats(stack[i], cache.blocks[i], *stats);
    }
    return l2.loss;
  };
  auto dataset_loss = [&] {
    double sum = 0.0;
    for (const Example& ex : examples) sum += run(ex, nullptr, nullptr);
    return sum / static_cast<double>(examples.size());
  };

  DecoderTrainResult result;
  result.initial_loss = dataset_loss();
  CheckLoss(result.initial_loss, 0);
  Adam adam({options.lr});
  Sampler sampler(examples.size(), options.seed);
  for (std::size_t step = 0; step < options.steps; ++step) {
    ParamStore<double> grads;
    double loss = 0.0;
    for (std::size_t k = 0; k < options.batch; ++k) loss += run(examples[sampler.Next()], &grads, nullptr);
    loss /= static_cast<double>(options.batch);
    CheckLoss(loss, static_cast<long>(step));
    Scale(grads, 1.0 / static_cast<double>(options.batch));
    adam.Step(params, grads);
    CheckParams(params, static_cast<long>(step));
    result.trace.losses.push_back(loss);
  }
  result.final_loss = dataset_loss();

  result.bundle = bundle;
  if (options.steps > 0) {
    ParamStore<double> stats;
    for (const Example& ex : examples) run(ex, nullptr, &stats);
    ApplyBatchStats(params, stats, examples.size());
    PutBack(result.bundle.params, params);
  }
  return result;
}

// --- Speaker encoder -------------------------------------------------------

SimilarityReport EvaluateSpeakers(const SpeakerEncoder& encoder, const SyntheticSpeakerSet& set, double seconds) {
  std::vector<std::vector<SpeakerEmbedding>> emb(set.n_speakers);
  for (std::size_t s = 0; s < set.n_speakers; ++s)
    for (std::size_t u = 0; u < set.utterances_per_speaker; ++u) {
      emb[s].push_back(encoder.EmbedUtterance(set.Utterance(s, u, seconds, 16000)));
    }
  double intra = 0.0, inter = 0.0;
  std::size_t n_intra = 0, n_inter = 0;
  for (std::size_t s = 0; s < emb.size(); ++s)
    for (std::size_t u = 0; u < emb[s].size(); ++u)
      for (std::size_t s2 = s; s2 < emb.size(); ++s2)
        for (std::size_t u2 = (s2 == s ? u + 1 : 0); u2 < emb[s2].size(); ++u2) {
          const double c = CosineSimilarity(emb[s][u], emb[s2][u2]);
          if (s == s2) {
            intra += c;
            ++n_intra;
          } else {
            inter += c;
            ++n_inter;
          }
        }
  return {n_intra ? intra / n_intra : 0.0, n_inter ? inter / n_inter : 0.0};
}

SpeakerTrainResult TrainSpeakerToy(const SyntheticSpeakerSet& set, const SpeakerConfig& config,
                                   const SpeakerTrainOptions& options) {
  const std::size_t N = options.speakers_per_batch;
  const std::size_t M = options.utterances_per_speaker;
  if (N < 4 || M < 4) throw ConfigError("train speaker: need at least 4 speakers x 4 utterances per batch");
  if (set.n_speakers < N || set.utterances_per_speaker < M) {
    throw ConfigError("train speaker: synthetic set smaller than one batch");
  }
  config.Validate();
  const FrontendConfig fe = FrontendConfig::Speaker();

  // Mel pool [speaker][utterance], each at least one window long.
  std::vector<std::vector<Tensor<double>>> pool(set.n_speakers);
  std::vector<Tensor<float>> for_stats;
  const double min_seconds = (config.window_frames + 2) * static_cast<double>(fe.hop_length) / fe.sample_rate_hz;
  const double seconds = std::max(options.utterance_seconds, min_seconds);
  for (std::size_t s = 0; s < set.n_speakers; ++s)
    for (std::size_t u = 0; u < set.utterances_per_speaker; ++u) {
      MelSpectrogram mel = LogMel(set.Utterance(s, u, seconds, fe.sample_rate_hz), fe);
      for_stats.push_back(mel.values);
      pool[s].push_back(mel.values.Cast<double>());
    }

  Rng rng(options.seed);
  ParamStore<double> params;
  InitSpeakerEncoder(params, config, rng);
  const NormStats stats = ComputeNormStats(for_stats);
  params["speaker.input_mean"] = Tensor<float>({config.n_mels}, stats.mean).Cast<double>();
  params["speaker.input_std"] = Tensor<float>({config.n_mels}, stats.std).Cast<double>();
  params["ge2e.w"] = Tensor<double>({1}, 10.0);
  params["ge2e.b"] = Tensor<double>({1}, -5.0);

  SpeakerTrainResult result;
  Adam adam({options.lr});
  const std::size_t W = config.window_frames;
  for (std::size_t step = 0; step < options.steps; ++step) {
    // N distinct speakers, M distinct utterances each, random window crops.
    std::vector<std::size_t> speakers(set.n_speakers);
    std::iota(speakers.begin(), speakers.end(), 0);
    for (std::size_t i = 0; i < N; ++i) std::swap(speakers[i], speakers[i + rng.Index(speakers.size() - i)]);
    std::vector<Tensor<double>> windows;
    for (std::size_t j = 0; j < N; ++j) {
      std::vector<std::size_t> utts(set.utterances_per_speaker);
      std::iota(utts.begin(), utts.end(), 0);
      for (std::size_t i = 0; i < M; ++i) std::swap(utts[i], utts[i + rng.Index(utts.size() - i)]);
      for (std::size_t i = 0; i < M; ++i) {
        const Tensor<double>& mel = pool[speakers[j]][utts[i]];
        const std::size_t start = rng.Index(mel.dim(1) - W + 1);
        Tensor<double> win({config.n_mels, W});
        for (std::size_t c = 0; c < config.n_mels; ++c)
          std::copy(mel.row(c) + start, mel.row(c) + start + W, win.row(c));
        windows.push_back(std::move(win));
      }
    }

    std::vector<SpeakerForward<double>> fwd;
    Tensor<double> emb({N, M, config.embedding_dim});
    for (std::size_t k = 0; k < windows.size(); ++k) {
      fwd.push_back(SpeakerEncodeTrain(params, config, windows[k]));
      std::copy(fwd.back().embedding.data().begin(), fwd.back().embedding.data().end(),
                emb.data().begin() + k * config.embedding_dim);
    }
    const double w = params["ge2e.w"][0];
    const double b = params["ge2e.b"][0];
    const Ge2eResult ge2e = Ge2eLoss(emb, w, b);
    CheckLoss(ge2e.loss, static_cast<long>(step));

    ParamStore<double> grads;
    for (std::size_t k = 0; k < windows.size(); ++k) {
      Tensor<double> g({config.embedding_dim});
      std::copy(ge2e.grad_embeddings.data().begin() + k * config.embedding_dim,
                ge2e.grad_embeddings.data().begin() + (k + 1) * config.embedding_dim, g.data().begin());
      SpeakerEncodeBackward(params, config, fwd[k], g, grads);
    }
    grads["ge2e.w"] = Tensor<double>({1}, ge2e.grad_w);
    grads["ge2e.b"] = Tensor<double>({1}, ge2e.grad_b);
    ClipGradNorm(grads, options.clip_norm);
    adam.Step(params, grads);
    params["ge2e.w"][0] = std::max(params["ge2e.w"][0], 1e-6);
    CheckParams(params, static_cast<long>(step));
    result.trace.losses.push_back(ge2e.loss);
    result.w_trace.push_back(params["ge2e.w"][0]);
  }

  result.w = params["ge2e.w"][0];
  result.b = params["ge2e.b"][0];
  params.erase("ge2e.w");
  params.erase("ge2e.b");
  result.weights = CastStore<float>(params);
  result.train_report = EvaluateSpeakers(SpeakerEncoder(config, result.weights), set, seconds);
  return result;
}

// --- ASR -------------------------------------------------------------------

std::vector<AsrPair> SyntheticAsrPairs(const std::vector<std::vector<int>>& targets, const NormStats& norm,
                                       std::uint64_t seed) {
  const SyntheticSpeakerSet voices{1, 1, seed, 0.0};
  const VoiceProfile voice = voices.Speaker(0);
  std::vector<AsrPair> pairs;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const Waveform w = RenderTokens(targets[i], voice, 22050, seed + i);
    const MelSpectrogram mel = LogMel(w, FrontendConfig::Encoder());
    pairs.push_back({NormalizePerChannel(mel.values, norm), targets[i]});
  }
  return pairs;
}

void CheckAsrPairs(const EncoderConfig& config, const std::vector<AsrPair>& pairs) {
  if (pairs.empty()) throw TrainingError("train asr: empty dataset", 0);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const AsrPair& p = pairs[i];
    const std::string where = "train asr: pair " + std::to_string(i);
    if (p.mel.rank() != 2 || p.mel.dim(0) != config.n_mels) {
      throw ShapeError(where + ": mel must be [" + std::to_string(config.n_mels) + " x T]");
    }
    const std::size_t t_enc = config.OutputLength(p.mel.dim(1));
    if (2 * p.tokens.size() + 1 > t_enc) {
      throw InputError(where + ": target of " + std::to_string(p.tokens.size()) + " tokens needs " +
                       std::to_string(2 * p.tokens.size() + 1) + " encoder frames, has " + std::to_string(t_enc));
    }
    for (int tok : p.tokens) {
      if (tok <= 0 || tok >= static_cast<int>(config.vocab_size)) {
        throw InputError(where + ": token " + std::to_string(tok) + " outside [1, " +
                         std::to_string(config.vocab_size) + ")");
      }
    }
  }
}

AsrTrainResult TrainAsrToy(const EncoderConfig& config, const ParamStore<float>& init,
                           const std::vector<AsrPair>& pairs, const TrainOptions& options) {
  config.Validate();
  CheckAsrPairs(config, pairs);
  if (options.batch == 0) throw ConfigError("train asr: batch must be >= 1");
  ParamStore<double> params = CastStore<double>(Subset(init, "encoder."));
  std::vector<Tensor<double>> mels;
  for (const AsrPair& p : pairs) mels.push_back(p.mel.Cast<double>());

  auto run = [&](std::size_t i, NormMode mode, ParamStore<double>* grads, ParamStore<double>* stats) {
    EncoderTrainCache<double> cache;
    const Tensor<double> logits = EncoderTrainForward(config, params, mels[i], mode, cache);
    const CtcResult ctc = CtcLoss(Transposed(logits), pairs[i].tokens);
    if (grads) EncoderTrainBackward(config, params, cache, mode, Transposed(ctc.grad), *grads);
    if (stats) {
      const auto stack = config.Stack();
      for (std::size_t b = 0; b < stack.size(); ++b) CollectBatchStats(stack[b], cache.blocks[b], *stats);
    }
    return ctc.loss;
  };

  AsrTrainResult result;
  Adam adam({options.lr});
  Sampler sampler(pairs.size(), options.seed);
  const std::size_t batch = std::min(options.batch, pairs.size());
  for (std::size_t step = 0; step < options.steps; ++step) {
    ParamStore<double> grads;
    double loss = 0.0;
    for (std::size_t k = 0; k < batch; ++k) loss += run(sampler.Next(), NormMode::kTrain, &grads, nullptr);
    loss /= static_cast<double>(batch);
    CheckLoss(loss, static_cast<long>(step));
    Scale(grads, 1.0 / static_cast<double>(batch));
    adam.Step(params, grads);
    CheckParams(params, static_cast<long>(step));
    result.trace.losses.push_back(loss);
  }
  if (options.steps > 0) {
    ParamStore<double> stats;
    for (std::size_t i = 0; i < pairs.size(); ++i) run(i, NormMode::kTrain, nullptr, &stats);
    ApplyBatchStats(params, stats, pairs.size());
  }
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    result.final_losses.push_back(run(i, NormMode::kInference, nullptr, nullptr));
  }
  result.weights = CastStore<float>(params);
  return result;
}

}  // namespace convoice
