// convoice/content_encoder.hpp
//
// Convolutional ASR encoder: a strided separable stem followed by residual
// separable blocks. Content features are tapped after a configurable block
// (the fourth by default); the full stack plus a pointwise head yields CTC
// logits over the character vocabulary.

#pragma once

#include <string>
#include <vector>

#include "convoice/conv_stack.hpp"

namespace convoice {

struct BlockShape {
  std::size_t channels = 0;
  std::size_t kernel_width = 1;
};

struct EncoderConfig {
  std::size_t n_mels = 80;
  std::size_t stem_channels = 256;
  std::size_t stem_kernel = 33;
  std::size_t stem_stride = 2;
  std::vector<BlockShape> blocks;
  std::size_t repeats = 5;
  std::size_t tap_block = 4;  // 1-based
  std::size_t vocab_size = 29;

  // Published QuartzNet-5x5 widths.
  static EncoderConfig Full();
  // Desk-scale variant used by tests and toy training.
  static EncoderConfig Toy();

  void Validate() const;
  std::size_t TapChannels() const { return blocks.at(tap_block - 1).channels; }
  std::size_t OutputLength(std::size_t frames) const {
    return (frames + stem_stride - 1) / stem_stride;
  }
  // Stem followed by every block (not only up to the tap).
  std::vector<StackBlock> Stack() const;
};

// Span of input frames that can influence one tap output frame:
// 1 + sum over layers of (K_i - 1) * (product of strides before layer i).
std::size_t ReceptiveField(const EncoderConfig& config);
std::size_t ReceptiveField(const EncoderConfig& config, std::size_t tap_block);

// Trainable parameters of stem, all blocks and the ASR head.
std::size_t EncoderParamCount(const EncoderConfig& config);

template <typename T>
struct ContentFeatures {
  Tensor<T> values;  // [D_feat x T_enc]
  std::size_t time_stride = 1;
};

template <typename T>
void InitEncoder(ParamStore<T>& p, const EncoderConfig& cfg, Rng& rng) {
  cfg.Validate();
  for (const StackBlock& b : cfg.Stack()) InitBlock(p, b, rng);
  const std::size_t last = cfg.blocks.back().channels;
  p["encoder.head.w"] = rng.NormalTensor<T>({cfg.vocab_size, last}, std::sqrt(1.0 / last));
  p["encoder.head.b"] = Tensor<T>({cfg.vocab_size}, T(0));
}

namespace detail {
inline void CheckMelInput(std::size_t channels, std::size_t expected) {
  if (channels != expected) {
    throw ShapeError("encoder input: axis 0 (mel channels) is " + std::to_string(channels) +
                     ", expected " + std::to_string(expected));
  }
}
}  // namespace detail

// Inference-time encoder with batchnorm folded into the convolution weights.
// Immutable after construction; Encode and AsrLogits are safe to call from
// several threads at once.
template <typename T>
class ContentEncoder {
 public:
  ContentEncoder(EncoderConfig config, const ParamStore<T>& params) : config_(std::move(config)) {
    config_.Validate();
    for (const StackBlock& b : config_.Stack()) blocks_.push_back(FoldBlock(params, b));
    head_w_ = GetParam(params, "encoder.head.w");
    head_b_ = GetParam(params, "encoder.head.b");
    CheckDims(head_w_, {config_.vocab_size, config_.blocks.back().channels}, "encoder.head.w");
    CheckDims(head_b_, {config_.vocab_size}, "encoder.head.b");
  }

  const EncoderConfig& config() const { return config_; }

  ContentFeatures<T> Encode(const Tensor<T>& mel) const { return EncodeAt(mel, config_.tap_block); }

  ContentFeatures<T> EncodeAt(const Tensor<T>& mel, std::size_t tap_block) const {
    CheckRank(mel, 2, "encoder input");
    detail::CheckMelInput(mel.dim(0), config_.n_mels);
    if (tap_block < 1 || tap_block > config_.blocks.size()) {
      throw ConfigError("tap block " + std::to_string(tap_block) + " out of range");
    }
    Tensor<T> h = blocks_[0].Forward(mel);
    for (std::size_t i = 1; i <= tap_block; ++i) h = blocks_[i].Forward(h);
    return {std::move(h), config_.stem_stride};
  }

  // `segments` equal-length mels laid end to end along time ([n_mels x B*T]);
  // returns tap features laid out the same way ([D x B*ceil(T/stride)]).
  Tensor<T> EncodeSegments(const Tensor<T>& mels, std::size_t segments) const {
    CheckRank(mels, 2, "encoder input");
    detail::CheckMelInput(mels.dim(0), config_.n_mels);
    Tensor<T> h = blocks_[0].Forward(mels, segments);
    for (std::size_t i = 1; i <= config_.tap_block; ++i) h = blocks_[i].Forward(h, segments);
    return h;
  }

  Tensor<T> AsrLogits(const Tensor<T>& mel) const {
    ContentFeatures<T> f = EncodeAt(mel, config_.blocks.size());
    return PointwiseConv1d(f.values, head_w_, &head_b_);
  }

 private:
  EncoderConfig config_;
  std::vector<FoldedBlock<T>> blocks_;
  Tensor<T> head_w_;
  Tensor<T> head_b_;
};

// Reference evaluation straight from the unfolded parameters.
template <typename T>
ContentFeatures<T> EncodeUnfolded(const EncoderConfig& cfg, const ParamStore<T>& p,
                                  const Tensor<T>& mel) {
  CheckRank(mel, 2, "encoder input");
  detail::CheckMelInput(mel.dim(0), cfg.n_mels);
  const std::vector<StackBlock> stack = cfg.Stack();
  Tensor<T> h = mel;
  for (std::size_t i = 0; i <= cfg.tap_block; ++i) h = BlockForward(p, stack[i], h, NormMode::kInference);
  return {std::move(h), cfg.stem_stride};
}

template <typename T>
struct EncoderTrainCache {
  std::vector<BlockCache<T>> blocks;
  Tensor<T> top;  // last block output, input to the head
};

// Full forward to CTC logits [V x T_enc], keeping everything needed by
// EncoderTrainBackward.
template <typename T>
Tensor<T> EncoderTrainForward(const EncoderConfig& cfg, const ParamStore<T>& p,
                              const Tensor<T>& mel, NormMode mode, EncoderTrainCache<T>& cache) {
  CheckRank(mel, 2, "encoder input");
  detail::CheckMelInput(mel.dim(0), cfg.n_mels);
  const std::vector<StackBlock> stack = cfg.Stack();
  cache.blocks.assign(stack.size(), {});
  Tensor<T> h = mel;
  for (std::size_t i = 0; i < stack.size(); ++i) h = BlockForward(p, stack[i], h, mode, &cache.blocks[i]);
  cache.top = h;
  const Tensor<T>& hb = GetParam(p, "encoder.head.b");
  return PointwiseConv1d(h, GetParam(p, "encoder.head.w"), &hb);
}

template <typename T>
void EncoderTrainBackward(const EncoderConfig& cfg, const ParamStore<T>& p,
                          const EncoderTrainCache<T>& cache, NormMode mode,
                          const Tensor<T>& grad_logits, ParamStore<T>& grads) {
  ConvGrads<T> gh = PointwiseConv1dBackward(cache.top, GetParam(p, "encoder.head.w"), grad_logits, true);
  Accumulate(grads, "encoder.head.w", gh.weight);
  Accumulate(grads, "encoder.head.b", gh.bias);
  const std::vector<StackBlock> stack = cfg.Stack();
  Tensor<T> dy = std::move(gh.input);
  for (std::size_t i = stack.size(); i-- > 0;) {
    dy = BlockBackward(p, stack[i], cache.blocks[i], mode, dy, grads);
  }
}

}  // namespace convoice
