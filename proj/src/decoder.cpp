// convoice/decoder.cpp

#include "convoice/decoder.hpp"

namespace convoice {

DecoderConfig DecoderConfig::Full() {
  DecoderConfig c;
  c.content_channels = 512;
  c.blocks = {{512, 17}, {512, 21}, {512, 25}};
  c.repeats = 5;
  c.upsample_factor = 2;
  c.upsample_kernel = 5;
  return c;
}

DecoderConfig DecoderConfig::Toy() {
  DecoderConfig c;
  c.content_channels = 64;
  c.blocks = {{64, 5}, {64, 7}, {64, 9}};
  c.repeats = 2;
  c.upsample_factor = 2;
  c.upsample_kernel = 5;
  return c;
}

void DecoderConfig::Validate() const {
  if (blocks.size() != 3) throw ConfigError("decoder config: exactly three blocks expected");
  if (upsample_factor < 1) throw ConfigError("decoder config: upsample factor must be >= 1");
  if (out_channels != 80) throw ConfigError("decoder config: out_channels must be 80");
  if (content_channels == 0 || speaker_dim == 0 || repeats == 0) {
    throw ConfigError("decoder config: sizes must be positive");
  }
  if (upsample_kernel % 2 == 0) throw ConfigError("decoder config: upsample kernel must be odd");
  for (const BlockShape& b : blocks) {
    if (b.channels == 0 || b.kernel_width % 2 == 0) {
      throw ConfigError("decoder config: block kernels must be odd and channels positive");
    }
  }
}

std::vector<StackBlock> DecoderConfig::Stack() const {
  std::vector<StackBlock> s;
  std::size_t in = InputChannels();
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    s.push_back({"decoder.block" + std::to_string(i + 1), in, blocks[i].channels,
                 blocks[i].kernel_width, repeats, 1, true, false});
    in = blocks[i].channels;
  }
  return s;
}

std::size_t DecoderParamCount(const DecoderConfig& config) {
  std::size_t n = 0;
  for (const StackBlock& b : config.Stack()) n += BlockParamCount(b);
  const std::size_t c = config.HiddenChannels();
  n += c * config.upsample_kernel + c * c + c;
  n += config.out_channels * c + config.out_channels;
  return n;
}

}  // namespace convoice
