// convoice/pipeline.hpp
//
// End-to-end conversion: source audio -> 80-mel -> content features; target
// references -> speaker embedding; both -> decoder -> Griffin-Lim.

#pragma once

#include <string>
#include <vector>

#include "convoice/bundle.hpp"
#include "convoice/vocoder.hpp"

namespace convoice {

// A module error re-thrown with the pipeline stage it came from.
class PipelineError : public Error {
 public:
  PipelineError(std::string stage, const std::string& what)
      : Error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct Conversion {
  Waveform audio;
  MelSpectrogram mel;          // predicted, raw log-mel
  std::size_t source_frames = 0;
};

// Owns folded inference copies of the three networks; never touches the
// bundle it was built from. Const methods are safe to call concurrently.
class VoiceConverter {
 public:
  explicit VoiceConverter(const ModelBundle& bundle);

  // Resample to 22050 Hz, log-mel, normalize.
  Tensor<float> SourceFeatures(const Waveform& source) const;
  SpeakerEmbedding EmbedTarget(const std::vector<Waveform>& references) const;

  // Encoder + decoder on one normalized mel; output has the same frame count.
  Tensor<float> PredictMel(const Tensor<float>& normalized_mel, const SpeakerEmbedding& speaker) const;

  // Batched encoder + decoder. Mels are padded to the longest with the
  // normalized log floor and laid end to end; each output is cropped back to
  // its own length.
  std::vector<Tensor<float>> PredictMelBatch(const std::vector<Tensor<float>>& normalized_mels,
                                             const SpeakerEmbedding& speaker) const;

  Conversion Convert(const Waveform& source, const std::vector<Waveform>& references,
                     const GriffinLimConfig& vocoder = {}) const;

  const FrontendConfig& frontend() const { return frontend_; }
  const SpeakerEncoder& speaker_encoder() const { return speaker_; }

 private:
  FrontendConfig frontend_ = FrontendConfig::Encoder();
  NormStats norm_;
  ContentEncoder<float> encoder_;
  SpeakerEncoder speaker_;
  Decoder<float> decoder_;
};

// Convenience: build a converter and convert once.
Conversion Convert(const Waveform& source, const std::vector<Waveform>& references, const ModelBundle& bundle,
                   const GriffinLimConfig& vocoder = {});

}  // namespace convoice
