// convoice/bundle.cpp

#include "convoice/bundle.hpp"

#include <set>

#include "convoice/synthetic.hpp"

namespace convoice {
namespace {

using nlohmann::json;

constexpr const char* kNormMean = "frontend.norm_mean";
constexpr const char* kNormStd = "frontend.norm_std";

json BlocksToJson(const std::vector<BlockShape>& blocks) {
  json a = json::array();
  for (const auto& b : blocks) a.push_back({b.channels, b.kernel_width});
  return a;
}

std::vector<BlockShape> BlocksFromJson(const json& a) {
  std::vector<BlockShape> out;
  for (const auto& b : a) {
    if (!b.is_array() || b.size() != 2) throw FormatError("config: block must be [channels, kernel]");
    out.push_back({b[0].get<std::size_t>(), b[1].get<std::size_t>()});
  }
  return out;
}

template <typename V>
void Read(const json& j, const char* key, V& v) {
  if (j.contains(key)) v = j.at(key).get<V>();
}

// Expected weight shapes, obtained by initializing a scratch store.
std::map<std::string, Dims> ExpectedShapes(const ModelBundle& b) {
  ParamStore<float> scratch;
  Rng rng(0);
  InitEncoder(scratch, b.encoder, rng);
  InitSpeakerEncoder(scratch, b.speaker, rng);
  InitDecoder(scratch, b.decoder, rng);
  std::map<std::string, Dims> shapes;
  for (const auto& [name, t] : scratch) shapes.emplace(name, t.dims());
  return shapes;
}

Tensor<float> VectorTensor(const std::vector<float>& v) { return Tensor<float>({v.size()}, v); }

}  // namespace

void ModelBundle::Validate() const {
  encoder.Validate();
  speaker.Validate();
  decoder.Validate();
  if (decoder.content_channels != encoder.TapChannels()) {
    throw ConfigError("bundle: decoder expects " + std::to_string(decoder.content_channels) +
                      " content channels but the encoder tap has " + std::to_string(encoder.TapChannels()));
  }
  if (decoder.speaker_dim != speaker.embedding_dim) {
    throw ConfigError("bundle: decoder speaker_dim " + std::to_string(decoder.speaker_dim) +
                      " differs from the speaker embedding size " + std::to_string(speaker.embedding_dim));
  }
  if (encoder.n_mels != 80) throw ConfigError("bundle: encoder must take 80 mel channels");
  if (speaker.n_mels != 40) throw ConfigError("bundle: speaker encoder must take 40 mel channels");
  if (norm.mean.size() != encoder.n_mels || norm.std.size() != encoder.n_mels) {
    throw ShapeError("bundle: normalization stats must have " + std::to_string(encoder.n_mels) + " channels");
  }
  for (float s : norm.std) {
    if (!(s > 0.0f)) throw DomainError("bundle: normalization std must be positive");
  }
  const auto shapes = ExpectedShapes(*this);
  for (const auto& [name, dims] : shapes) {
    auto it = params.find(name);
    if (it == params.end()) throw InputError("bundle: missing weight '" + name + "'");
    if (it->second.dims() != dims) {
      throw ShapeError("bundle: weight '" + name + "' has shape " + DimsToString(it->second.dims()) +
                       ", expected " + DimsToString(dims));
    }
  }
  for (const auto& [name, t] : params) {
    if (!shapes.contains(name)) throw InputError("bundle: unexpected weight '" + name + "'");
  }
}

ModelBundle InitBundle(const EncoderConfig& encoder, const SpeakerConfig& speaker, const DecoderConfig& decoder,
                       std::uint64_t seed) {
  ModelBundle b;
  b.encoder = encoder;
  b.speaker = speaker;
  b.decoder = decoder;
  b.norm.mean.assign(encoder.n_mels, 0.0f);
  b.norm.std.assign(encoder.n_mels, 1.0f);
  Rng rng(seed);
  InitEncoder(b.params, encoder, rng);
  InitSpeakerEncoder(b.params, speaker, rng);
  InitDecoder(b.params, decoder, rng);
  b.Validate();
  return b;
}

ModelBundle InitToyBundle(std::uint64_t seed) {
  ModelBundle b = InitBundle(EncoderConfig::Toy(), SpeakerConfig::Toy(), DecoderConfig::Toy(), seed);
  SyntheticSpeakerSet corpus{6, 2, seed ^ 0xC0FFEEull, 0.05};
  std::vector<Tensor<float>> mels, spk_mels;
  for (std::size_t s = 0; s < corpus.n_speakers; ++s)
    for (std::size_t u = 0; u < corpus.utterances_per_speaker; ++u) {
      mels.push_back(LogMel(corpus.Utterance(s, u, 1.0, 22050), FrontendConfig::Encoder()).values);
      spk_mels.push_back(LogMel(corpus.Utterance(s, u, 1.0, 16000), FrontendConfig::Speaker()).values);
    }
  b.norm = ComputeNormStats(mels);
  const NormStats spk = ComputeNormStats(spk_mels);
  b.params["speaker.input_mean"] = VectorTensor(spk.mean);
  b.params["speaker.input_std"] = VectorTensor(spk.std);
  return b;
}

std::size_t TotalParamCount(const EncoderConfig& encoder, const SpeakerConfig& speaker,
                            const DecoderConfig& decoder) {
  return EncoderParamCount(encoder) + SpeakerParamCount(speaker) + DecoderParamCount(decoder);
}

json ConfigToJson(const ModelBundle& b) {
  const FrontendConfig fe = FrontendConfig::Encoder();
  return json{
      {"format", "convoice"},
      {"frontend", {{"sample_rate_hz", fe.sample_rate_hz}, {"n_fft", fe.n_fft}, {"hop_length", fe.hop_length},
                    {"window_length", fe.window_length}, {"n_mels", fe.n_mels}}},
      {"encoder",
       {{"n_mels", b.encoder.n_mels}, {"stem_channels", b.encoder.stem_channels},
        {"stem_kernel", b.encoder.stem_kernel}, {"stem_stride", b.encoder.stem_stride},
        {"blocks", BlocksToJson(b.encoder.blocks)}, {"repeats", b.encoder.repeats},
        {"tap_block", b.encoder.tap_block}, {"vocab_size", b.encoder.vocab_size}}},
      {"speaker",
       {{"n_mels", b.speaker.n_mels}, {"hidden", b.speaker.hidden}, {"layers", b.speaker.layers},
        {"embedding_dim", b.speaker.embedding_dim}, {"window_frames", b.speaker.window_frames},
        {"hop_frames", b.speaker.hop_frames}}},
      {"decoder",
       {{"content_channels", b.decoder.content_channels}, {"speaker_dim", b.decoder.speaker_dim},
        {"blocks", BlocksToJson(b.decoder.blocks)}, {"repeats", b.decoder.repeats},
        {"upsample_factor", b.decoder.upsample_factor}, {"upsample_kernel", b.decoder.upsample_kernel},
        {"out_channels", b.decoder.out_channels}}},
  };
}

void ConfigFromJson(const json& j, ModelBundle& b) {
  try {
    if (!j.is_object()) throw FormatError("config: expected a JSON object");
    b.encoder = EncoderConfig::Toy();
    b.speaker = SpeakerConfig::Toy();
    b.decoder = DecoderConfig::Toy();
    if (j.contains("frontend")) {
      const json& f = j.at("frontend");
      const FrontendConfig fe = FrontendConfig::Encoder();
      if (f.value("sample_rate_hz", fe.sample_rate_hz) != fe.sample_rate_hz ||
          f.value("n_fft", fe.n_fft) != fe.n_fft || f.value("hop_length", fe.hop_length) != fe.hop_length ||
          f.value("window_length", fe.window_length) != fe.window_length ||
          f.value("n_mels", fe.n_mels) != fe.n_mels) {
        throw ConfigError("config: frontend differs from the 22050 Hz / 1024 / 256 / 80-mel frontend");
      }
    }
    if (j.contains("encoder")) {
      const json& e = j.at("encoder");
      Read(e, "n_mels", b.encoder.n_mels);
      Read(e, "stem_channels", b.encoder.stem_channels);
      Read(e, "stem_kernel", b.encoder.stem_kernel);
      Read(e, "stem_stride", b.encoder.stem_stride);
      if (e.contains("blocks")) b.encoder.blocks = BlocksFromJson(e.at("blocks"));
      Read(e, "repeats", b.encoder.repeats);
      Read(e, "tap_block", b.encoder.tap_block);
      Read(e, "vocab_size", b.encoder.vocab_size);
    }
    if (j.contains("speaker")) {
      const json& s = j.at("speaker");
      Read(s, "n_mels", b.speaker.n_mels);
      Read(s, "hidden", b.speaker.hidden);
      Read(s, "layers", b.speaker.layers);
      Read(s, "embedding_dim", b.speaker.embedding_dim);
      Read(s, "window_frames", b.speaker.window_frames);
      Read(s, "hop_frames", b.speaker.hop_frames);
    }
    if (j.contains("decoder")) {
      const json& d = j.at("decoder");
      Read(d, "content_channels", b.decoder.content_channels);
      Read(d, "speaker_dim", b.decoder.speaker_dim);
      if (d.contains("blocks")) b.decoder.blocks = BlocksFromJson(d.at("blocks"));
      Read(d, "repeats", b.decoder.repeats);
      Read(d, "upsample_factor", b.decoder.upsample_factor);
      Read(d, "upsample_kernel", b.decoder.upsample_kernel);
      Read(d, "out_channels", b.decoder.out_channels);
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
}

TensorFile ToTensorFile(const ModelBundle& b) {
  b.Validate();
  TensorFile f;
  f.tensors = b.params;
  f.tensors[kNormMean] = VectorTensor(b.norm.mean);
  f.tensors[kNormStd] = VectorTensor(b.norm.std);
  f.config = ConfigToJson(b).dump();
  return f;
}

ModelBundle FromTensorFile(const TensorFile& file) {
  if (!file.config) throw FormatError("checkpoint: missing __config__ entry");
  ModelBundle b;
  json j;
  try {
    j = json::parse(*file.config);
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: __config__ is not valid JSON: ") + e.what());
  }
  ConfigFromJson(j, b);
  b.params = file.tensors;
  for (const char* name : {kNormMean, kNormStd}) {
    auto it = b.params.find(name);
    if (it == b.params.end()) throw InputError(std::string("bundle: missing weight '") + name + "'");
    auto& dst = std::string(name) == kNormMean ? b.norm.mean : b.norm.std;
    dst.assign(it->second.data().begin(), it->second.data().end());
    b.params.erase(it);
  }
  b.Validate();
  return b;
}

void SaveBundle(const ModelBundle& bundle, const std::filesystem::path& path) {
  WriteTensorFile(ToTensorFile(bundle), path);
}

ModelBundle LoadBundle(const std::filesystem::path& path) { return FromTensorFile(ReadTensorFile(path)); }

void SaveNormStats(const NormStats& stats, const std::filesystem::path& path) {
  if (stats.mean.size() != stats.std.size() || stats.mean.empty()) {
    throw ShapeError("norm stats: mean and std must be non-empty and the same length");
  }
  TensorFile f;
  f.tensors[kNormMean] = VectorTensor(stats.mean);
  f.tensors[kNormStd] = VectorTensor(stats.std);
  WriteTensorFile(f, path);
}

NormStats LoadNormStats(const std::filesystem::path& path) {
  const TensorFile f = ReadTensorFile(path);
  NormStats s;
  const auto& m = GetParam(f.tensors, kNormMean);
  const auto& d = GetParam(f.tensors, kNormStd);
  s.mean.assign(m.data().begin(), m.data().end());
  s.std.assign(d.data().begin(), d.data().end());
  if (s.mean.size() != s.std.size()) throw ShapeError("norm stats: mean and std lengths differ");
  return s;
}

}  // namespace convoice
