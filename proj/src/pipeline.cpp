// convoice/pipeline.cpp

#include "convoice/pipeline.hpp"

#include <algorithm>

#include "convoice/parallel.hpp"

namespace convoice {
namespace {

template <typename Fn>
auto Stage(const char* stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const PipelineError&) {
    throw;
  } catch (const Error& e) {
    throw PipelineError(stage, e.what());
  }
}

const ModelBundle& Checked(const ModelBundle& b) {
  Stage("load", [&] {
    b.Validate();
    return 0;
  });
  return b;
}

}  // namespace

VoiceConverter::VoiceConverter(const ModelBundle& bundle)
    : norm_(Checked(bundle).norm),
      encoder_(bundle.encoder, bundle.params),
      speaker_(bundle.speaker, bundle.params),
      decoder_(bundle.decoder, bundle.params) {}

Tensor<float> VoiceConverter::SourceFeatures(const Waveform& source) const {
  if (source.samples.empty()) throw PipelineError("frontend", "source audio is empty");
  return Stage("frontend", [&] {
    const MelSpectrogram mel = LogMel(Resample(source, frontend_.sample_rate_hz), frontend_);
    return NormalizePerChannel(mel.values, norm_);
  });
}

SpeakerEmbedding VoiceConverter::EmbedTarget(const std::vector<Waveform>& references) const {
  if (references.empty()) throw PipelineError("speaker", "no target reference audio");
  return Stage("speaker", [&] { return speaker_.EmbedSpeaker(references); });
}

Tensor<float> VoiceConverter::PredictMel(const Tensor<float>& mel, const SpeakerEmbedding& speaker) const {
  const ContentFeatures<float> features = Stage("encoder", [&] { return encoder_.Encode(mel); });
  return Stage("decoder", [&] {
    return decoder_.Decode(Condition<float>(features.values, speaker.values), mel.dim(1));
  });
}

std::vector<Tensor<float>> VoiceConverter::PredictMelBatch(const std::vector<Tensor<float>>& mels,
                                                           const SpeakerEmbedding& speaker) const {
  if (mels.empty()) return {};
  std::size_t longest = 0;
  for (const auto& m : mels) {
    CheckRank(m, 2, "batch mel");
    longest = std::max(longest, m.dim(1));
  }
  const std::size_t channels = mels.front().dim(0);
  const std::size_t n = mels.size();

  // Split the batch across kernel threads; each worker runs one segmented pass.
  const std::size_t workers = std::min(KernelThreads(), n);
  std::vector<Tensor<float>> out(n);
  ParallelFor(workers, [&](std::size_t w) {
    const std::size_t lo = n * w / workers, hi = n * (w + 1) / workers;
    const std::size_t count = hi - lo;
    Tensor<float> packed({channels, count * longest});
    for (std::size_t i = lo; i < hi; ++i) {
      const Tensor<float>& m = mels[i];
      if (m.dim(0) != channels) throw ShapeError("batch mel: channel counts differ");
      for (std::size_t c = 0; c < channels; ++c) {
        const float fill = (static_cast<float>(std::log(frontend_.log_floor)) - norm_.mean[c]) / norm_.std[c];
        float* dst = packed.row(c) + (i - lo) * longest;
        std::copy(m.row(c), m.row(c) + m.dim(1), dst);
        std::fill(dst + m.dim(1), dst + longest, fill);
      }
    }
    const Tensor<float> features = Stage("encoder", [&] { return encoder_.EncodeSegments(packed, count); });
    const Tensor<float> decoded = Stage("decoder", [&] {
      return decoder_.DecodeSegments(Condition<float>(features, speaker.values), count, longest);
    });
    for (std::size_t i = lo; i < hi; ++i) {
      Tensor<float> y({decoded.dim(0), mels[i].dim(1)});
      for (std::size_t c = 0; c < decoded.dim(0); ++c) {
        const float* src = decoded.row(c) + (i - lo) * longest;
        std::copy(src, src + mels[i].dim(1), y.row(c));
      }
      out[i] = std::move(y);
    }
  });
  return out;
}

Conversion VoiceConverter::Convert(const Waveform& source, const std::vector<Waveform>& references,
                                   const GriffinLimConfig& vocoder) const {
  const Tensor<float> mel = SourceFeatures(source);
  const SpeakerEmbedding speaker = EmbedTarget(references);
  Conversion c;
  c.source_frames = mel.dim(1);
  c.mel.values = PredictMel(mel, speaker);
  c.mel.config = frontend_;
  c.audio = Stage("vocoder", [&] { return Synthesize(c.mel, vocoder); });
  return c;
}

Conversion Convert(const Waveform& source, const std::vector<Waveform>& references, const ModelBundle& bundle,
                   const GriffinLimConfig& vocoder) {
  return VoiceConverter(bundle).Convert(source, references, vocoder);
}

}  // namespace convoice
