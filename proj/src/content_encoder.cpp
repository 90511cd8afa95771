// convoice/content_encoder.cpp

#include "convoice/content_encoder.hpp"

namespace convoice {

EncoderConfig EncoderConfig::Full() {
  EncoderConfig c;
  c.n_mels = 80;
  c.stem_channels = 256;
  c.stem_kernel = 33;
  c.stem_stride = 2;
  c.blocks = {{256, 33}, {256, 39}, {512, 51}, {512, 63}, {512, 75}};
  c.repeats = 5;
  c.tap_block = 4;
  c.vocab_size = 29;
  return c;
}

EncoderConfig EncoderConfig::Toy() {
  EncoderConfig c;
  c.n_mels = 80;
  c.stem_channels = 32;
  c.stem_kernel = 9;
  c.stem_stride = 2;
  c.blocks = {{32, 9}, {32, 11}, {64, 13}, {64, 15}, {64, 17}};
  c.repeats = 2;
  c.tap_block = 4;
  c.vocab_size = 29;
  return c;
}

void EncoderConfig::Validate() const {
  if (n_mels == 0 || stem_channels == 0 || vocab_size < 2 || repeats == 0) {
    throw ConfigError("encoder config: sizes must be positive (vocab >= 2)");
  }
  if (stem_stride != 1 && stem_stride != 2) {
    throw ConfigError("encoder config: stem stride must be 1 or 2");
  }
  if (blocks.empty()) throw ConfigError("encoder config: no blocks");
  if (tap_block < 1 || tap_block > blocks.size()) {
    throw ConfigError("encoder config: tap block " + std::to_string(tap_block) + " not in [1, " +
                      std::to_string(blocks.size()) + "]");
  }
  if (stem_kernel % 2 == 0) throw ConfigError("encoder config: stem kernel must be odd");
  for (const BlockShape& b : blocks) {
    if (b.channels == 0 || b.kernel_width % 2 == 0) {
      throw ConfigError("encoder config: block kernels must be odd and channels positive");
    }
  }
}

std::vector<StackBlock> EncoderConfig::Stack() const {
  std::vector<StackBlock> s;
  s.push_back({"encoder.stem", n_mels, stem_channels, stem_kernel, 1, stem_stride, false, true});
  std::size_t in = stem_channels;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    s.push_back({"encoder.block" + std::to_string(i + 1), in, blocks[i].channels,
                 blocks[i].kernel_width, repeats, 1, true, false});
    in = blocks[i].channels;
  }
  return s;
}

std::size_t ReceptiveField(const EncoderConfig& config, std::size_t tap_block) {
  std::size_t field = 1 + (config.stem_kernel - 1);
  const std::size_t stride = config.stem_stride;
  for (std::size_t i = 0; i < tap_block; ++i) {
    field += config.repeats * (config.blocks[i].kernel_width - 1) * stride;
  }
  return field;
}

std::size_t ReceptiveField(const EncoderConfig& config) {
  return ReceptiveField(config, config.tap_block);
}

std::size_t EncoderParamCount(const EncoderConfig& config) {
  std::size_t n = 0;
  for (const StackBlock& b : config.Stack()) n += BlockParamCount(b);
  n += config.vocab_size * config.blocks.back().channels + config.vocab_size;
  return n;
}

}  // namespace convoice
