// convoice/training.hpp
//
// Adam and the three desk-scale trainers. All training runs in 64-bit;
// trained weights are handed back as 32-bit stores. After a run with at
// least one step, batchnorm running statistics are recalibrated by averaging
// the batch statistics of one training-mode pass over the whole dataset.

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "convoice/bundle.hpp"
#include "convoice/synthetic.hpp"

namespace convoice {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// OptimizerState: moments are created lazily, shape-matched to the
// parameters they follow.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  // Updates every parameter that has a gradient; others are left alone.
  void Step(ParamStore<double>& params, const ParamStore<double>& grads);

  long step() const { return step_; }
  const AdamConfig& config() const { return config_; }
  const ParamStore<double>& first_moments() const { return m_; }
  const ParamStore<double>& second_moments() const { return v_; }

 private:
  AdamConfig config_;
  ParamStore<double> m_;
  ParamStore<double> v_;
  long step_ = 0;
};

struct LossTrace {
  std::vector<double> losses;  // one entry per step

  void WriteCsv(const std::filesystem::path& path) const;  // "step,loss"
};

// Scales all gradients so their global L2 norm is at most `max_norm`.
// Returns the norm before clipping.
double ClipGradNorm(ParamStore<double>& grads, double max_norm);

struct TrainOptions {
  std::size_t steps = 200;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  std::size_t batch = 4;  // examples per step (decoder, asr)
};

// --- Decoder ---------------------------------------------------------------

struct DecoderPair {
  Waveform audio;      // source utterance; also the reconstruction target
  Waveform reference;  // same-speaker reference for the embedding
};

struct DecoderTrainResult {
  ModelBundle bundle;
  LossTrace trace;
  double initial_loss = 0.0;  // dataset mean L2 (training-mode batchnorm)
  double final_loss = 0.0;
};

// `utterances` synthetic utterances spread round-robin over `speakers`
// voices; each reference is another utterance of the same voice.
std::vector<DecoderPair> SyntheticDecoderPairs(std::size_t utterances, std::size_t speakers, double seconds,
                                               std::uint64_t seed);

// Self-reconstruction with frozen encoders: only decoder.* changes.
DecoderTrainResult TrainDecoderToy(const ModelBundle& bundle, const std::vector<DecoderPair>& dataset,
                                   const TrainOptions& options);

// --- Speaker encoder -------------------------------------------------------

struct SpeakerTrainOptions {
  std::size_t steps = 300;
  double lr = 3e-3;
  std::uint64_t seed = 0;
  std::size_t speakers_per_batch = 4;       // N
  std::size_t utterances_per_speaker = 4;   // M
  double utterance_seconds = 1.8;
  double clip_norm = 3.0;
};

struct SimilarityReport {
  double intra = 0.0;  // mean cosine between utterances of one speaker
  double inter = 0.0;  // mean cosine across speakers
  double margin() const { return intra - inter; }
};

struct SpeakerTrainResult {
  ParamStore<float> weights;  // speaker.*
  double w = 10.0;
  double b = -5.0;
  LossTrace trace;
  std::vector<double> w_trace;
  SimilarityReport train_report;
};

SpeakerTrainResult TrainSpeakerToy(const SyntheticSpeakerSet& set, const SpeakerConfig& config,
                                   const SpeakerTrainOptions& options);

// Embeds every utterance of `set` and compares them pairwise.
SimilarityReport EvaluateSpeakers(const SpeakerEncoder& encoder, const SyntheticSpeakerSet& set,
                                  double seconds = 2.0);

// --- ASR -------------------------------------------------------------------

struct AsrPair {
  Tensor<float> mel;        // normalized [80 x T]
  std::vector<int> tokens;  // no blanks
};

struct AsrTrainResult {
  ParamStore<float> weights;  // encoder.*
  LossTrace trace;
  std::vector<double> final_losses;  // per pair, inference-mode batchnorm
};

// Each target rendered by RenderTokens with a seeded voice, then 80-mel and
// normalized with `norm`.
std::vector<AsrPair> SyntheticAsrPairs(const std::vector<std::vector<int>>& targets, const NormStats& norm,
                                       std::uint64_t seed);

// Throws InputError naming the pair index when 2 * |target| + 1 > T_enc or
// a token is outside [1, vocab).
void CheckAsrPairs(const EncoderConfig& config, const std::vector<AsrPair>& pairs);

AsrTrainResult TrainAsrToy(const EncoderConfig& config, const ParamStore<float>& init,
                           const std::vector<AsrPair>& pairs, const TrainOptions& options);

}  // namespace convoice
