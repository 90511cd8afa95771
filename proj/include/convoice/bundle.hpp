// convoice/bundle.hpp
//
// A ModelBundle is everything inference needs: the three model configs,
// their 32-bit weights, and the corpus-level mel normalization statistics.
// On disk it is one CVCK file; the configs live in the "__config__" entry
// and the statistics in the tensors frontend.norm_mean / frontend.norm_std.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"

#include "convoice/audio.hpp"
#include "convoice/checkpoint.hpp"
#include "convoice/content_encoder.hpp"
#include "convoice/decoder.hpp"
#include "convoice/speaker_encoder.hpp"

namespace convoice {

struct ModelBundle {
  EncoderConfig encoder;
  SpeakerConfig speaker;
  DecoderConfig decoder;
  NormStats norm;
  ParamStore<float> params;  // encoder.*, speaker.*, decoder.*

  // Checks config compatibility, that every weight the configs call for is
  // present with the right shape, and that nothing unexpected is present.
  void Validate() const;
};

// Random weights for the given configs; identity normalization.
ModelBundle InitBundle(const EncoderConfig& encoder, const SpeakerConfig& speaker,
                       const DecoderConfig& decoder, std::uint64_t seed);

// Toy configs with seeded weights. Mel normalization and speaker input
// statistics are measured on a small seeded synthetic corpus.
ModelBundle InitToyBundle(std::uint64_t seed);

std::size_t TotalParamCount(const EncoderConfig& encoder, const SpeakerConfig& speaker,
                            const DecoderConfig& decoder);

nlohmann::json ConfigToJson(const ModelBundle& bundle);
// Fills the three configs of `bundle` from JSON; missing keys keep defaults
// of the toy configs. Throws FormatError on malformed values.
void ConfigFromJson(const nlohmann::json& j, ModelBundle& bundle);

TensorFile ToTensorFile(const ModelBundle& bundle);
ModelBundle FromTensorFile(const TensorFile& file);

void SaveBundle(const ModelBundle& bundle, const std::filesystem::path& path);
ModelBundle LoadBundle(const std::filesystem::path& path);

// Mel normalization statistics as a standalone CVCK file (no config entry).
void SaveNormStats(const NormStats& stats, const std::filesystem::path& path);
NormStats LoadNormStats(const std::filesystem::path& path);

}  // namespace convoice
