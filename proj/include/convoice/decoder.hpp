// convoice/decoder.hpp
//
// Mel decoder: content features with the speaker embedding appended to every
// frame pass through three residual separable blocks, are repeated back to
// the mel frame rate, smoothed by one separable convolution and projected
// linearly to 80 log-mel channels. The output always has exactly as many
// frames as the source mel.

#pragma once

#include <vector>

#include "convoice/content_encoder.hpp"

namespace convoice {

inline constexpr std::size_t kSpeakerDim = 256;

struct DecoderConfig {
  std::size_t content_channels = 512;  // encoder tap width
  std::size_t speaker_dim = kSpeakerDim;
  std::vector<BlockShape> blocks;
  std::size_t repeats = 5;
  std::size_t upsample_factor = 2;
  std::size_t upsample_kernel = 5;
  std::size_t out_channels = 80;

  static DecoderConfig Full();
  static DecoderConfig Toy();

  void Validate() const;
  std::size_t InputChannels() const { return content_channels + speaker_dim; }
  std::size_t HiddenChannels() const { return blocks.back().channels; }
  std::vector<StackBlock> Stack() const;
};

std::size_t DecoderParamCount(const DecoderConfig& config);

// Stacks the speaker vector under the feature channels at every time step.
template <typename T>
Tensor<T> Condition(const Tensor<T>& features, std::span<const T> speaker) {
  CheckRank(features, 2, "condition features");
  const std::size_t d = features.dim(0);
  const std::size_t len = features.dim(1);
  Tensor<T> out({d + speaker.size(), len});
  std::copy(features.data().begin(), features.data().end(), out.data().begin());
  for (std::size_t s = 0; s < speaker.size(); ++s) std::fill(out.row(d + s), out.row(d + s) + len, speaker[s]);
  return out;
}

// Nearest-neighbour repetition along time.
template <typename T>
Tensor<T> RepeatFrames(const Tensor<T>& x, std::size_t factor) {
  const std::size_t len = x.dim(1);
  Tensor<T> out({x.dim(0), len * factor});
  for (std::size_t c = 0; c < x.dim(0); ++c) {
    const T* src = x.row(c);
    T* dst = out.row(c);
    for (std::size_t t = 0; t < len * factor; ++t) dst[t] = src[t / factor];
  }
  return out;
}

template <typename T>
Tensor<T> RepeatFramesBackward(const Tensor<T>& grad, std::size_t factor) {
  const std::size_t len = grad.dim(1) / factor;
  Tensor<T> out({grad.dim(0), len});
  for (std::size_t c = 0; c < grad.dim(0); ++c)
    for (std::size_t t = 0; t < len * factor; ++t) out.at(c, t / factor) += grad.at(c, t);
  return out;
}

template <typename T>
Tensor<T> CropFrames(const Tensor<T>& x, std::size_t frames) {
  Tensor<T> out({x.dim(0), frames});
  const std::size_t keep = std::min(frames, x.dim(1));
  for (std::size_t c = 0; c < x.dim(0); ++c) std::copy(x.row(c), x.row(c) + keep, out.row(c));
  return out;
}

template <typename T>
void InitDecoder(ParamStore<T>& p, const DecoderConfig& cfg, Rng& rng) {
  cfg.Validate();
  for (const StackBlock& b : cfg.Stack()) InitBlock(p, b, rng);
  const std::size_t c = cfg.HiddenChannels();
  p["decoder.upsample.dw"] = rng.NormalTensor<T>({c, cfg.upsample_kernel}, std::sqrt(1.0 / cfg.upsample_kernel));
  p["decoder.upsample.pw"] = rng.NormalTensor<T>({c, c}, std::sqrt(2.0 / c));
  p["decoder.upsample.b"] = Tensor<T>({c}, T(0));
  p["decoder.head.w"] = rng.NormalTensor<T>({cfg.out_channels, c}, std::sqrt(1.0 / c));
  p["decoder.head.b"] = Tensor<T>({cfg.out_channels}, T(0));
}

namespace detail {
inline void CheckDecodeLengths(const DecoderConfig& cfg, std::size_t channels, std::size_t t_enc,
                               std::size_t frames) {
  if (channels != cfg.InputChannels()) {
    throw ShapeError("decoder input: axis 0 (channels) is " + std::to_string(channels) +
                     ", expected " + std::to_string(cfg.InputChannels()));
  }
  if (frames == 0 || (frames + cfg.upsample_factor - 1) / cfg.upsample_factor != t_enc) {
    throw ShapeError("decoder input: axis 1 (time) is " + std::to_string(t_enc) +
                     ", inconsistent with " + std::to_string(frames) + " source frames at upsample " +
                     std::to_string(cfg.upsample_factor));
  }
}
}  // namespace detail

// Inference decoder with folded batchnorm. Immutable and thread-safe.
template <typename T>
class Decoder {
 public:
  Decoder(DecoderConfig config, const ParamStore<T>& params) : config_(std::move(config)) {
    config_.Validate();
    for (const StackBlock& b : config_.Stack()) blocks_.push_back(FoldBlock(params, b));
    const std::size_t c = config_.HiddenChannels();
    up_dw_ = GetParam(params, "decoder.upsample.dw");
    up_pw_ = GetParam(params, "decoder.upsample.pw");
    up_b_ = GetParam(params, "decoder.upsample.b");
    head_w_ = GetParam(params, "decoder.head.w");
    head_b_ = GetParam(params, "decoder.head.b");
    CheckDims(up_dw_, {c, config_.upsample_kernel}, "decoder.upsample.dw");
    CheckDims(up_pw_, {c, c}, "decoder.upsample.pw");
    CheckDims(head_w_, {config_.out_channels, c}, "decoder.head.w");
  }

  const DecoderConfig& config() const { return config_; }

  Tensor<T> Decode(const Tensor<T>& conditioned, std::size_t source_frames) const {
    CheckRank(conditioned, 2, "decoder input");
    detail::CheckDecodeLengths(config_, conditioned.dim(0), conditioned.dim(1), source_frames);
    Tensor<T> h = conditioned;
    for (const auto& b : blocks_) h = b.Forward(h);
    h = PointwiseConv1d(DepthwiseConv1d(RepeatFrames(h, config_.upsample_factor), up_dw_), up_pw_, &up_b_);
    for (auto& v : h.data()) v = v > T(0) ? v : T(0);
    return PointwiseConv1d(CropFrames(h, source_frames), head_w_, &head_b_);
  }

  // `segments` conditioned items of equal length laid end to end; each item
  // decodes to `frames` frames. Output: [80 x segments * frames].
  Tensor<T> DecodeSegments(const Tensor<T>& conditioned, std::size_t segments, std::size_t frames) const {
    CheckRank(conditioned, 2, "decoder input");
    if (segments == 0 || conditioned.dim(1) % segments != 0) {
      throw ShapeError("decoder input: time axis not divisible by segments");
    }
    const std::size_t t_enc = conditioned.dim(1) / segments;
    detail::CheckDecodeLengths(config_, conditioned.dim(0), t_enc, frames);
    Tensor<T> h = conditioned;
    for (const auto& b : blocks_) h = b.Forward(h, segments);
    h = PointwiseConv1d(DepthwiseConv1dSegments(RepeatFrames(h, config_.upsample_factor), up_dw_, 1, segments),
                        up_pw_, &up_b_);
    const std::size_t up_len = t_enc * config_.upsample_factor;
    Tensor<T> cropped({h.dim(0), segments * frames});
    for (std::size_t c = 0; c < h.dim(0); ++c)
      for (std::size_t s = 0; s < segments; ++s) {
        const T* src = h.row(c) + s * up_len;
        T* dst = cropped.row(c) + s * frames;
        for (std::size_t t = 0; t < frames; ++t) dst[t] = src[t] > T(0) ? src[t] : T(0);
      }
    return PointwiseConv1d(cropped, head_w_, &head_b_);
  }

 private:
  DecoderConfig config_;
  std::vector<FoldedBlock<T>> blocks_;
  Tensor<T> up_dw_, up_pw_, up_b_, head_w_, head_b_;
};

template <typename T>
struct DecoderTrainCache {
  std::vector<BlockCache<T>> blocks;
  Tensor<T> repeated;
  Tensor<T> up_dw_out;
  Tensor<T> up_pre;
  Tensor<T> cropped;
};

template <typename T>
Tensor<T> DecoderTrainForward(const DecoderConfig& cfg, const ParamStore<T>& p,
                              const Tensor<T>& conditioned, std::size_t source_frames,
                              NormMode mode, DecoderTrainCache<T>& cache) {
  CheckRank(conditioned, 2, "decoder input");
  detail::CheckDecodeLengths(cfg, conditioned.dim(0), conditioned.dim(1), source_frames);
  const std::vector<StackBlock> stack = cfg.Stack();
  cache.blocks.assign(stack.size(), {});
  Tensor<T> h = conditioned;
  for (std::size_t i = 0; i < stack.size(); ++i) h = BlockForward(p, stack[i], h, mode, &cache.blocks[i]);
  cache.repeated = RepeatFrames(h, cfg.upsample_factor);
  cache.up_dw_out = DepthwiseConv1d(cache.repeated, GetParam(p, "decoder.upsample.dw"));
  const Tensor<T>& ub = GetParam(p, "decoder.upsample.b");
  cache.up_pre = PointwiseConv1d(cache.up_dw_out, GetParam(p, "decoder.upsample.pw"), &ub);
  cache.cropped = CropFrames(Relu(cache.up_pre), source_frames);
  const Tensor<T>& hb = GetParam(p, "decoder.head.b");
  return PointwiseConv1d(cache.cropped, GetParam(p, "decoder.head.w"), &hb);
}

// Accumulates decoder parameter gradients; returns dL/d(conditioned input).
template <typename T>
Tensor<T> DecoderTrainBackward(const DecoderConfig& cfg, const ParamStore<T>& p,
                               const DecoderTrainCache<T>& cache, NormMode mode,
                               const Tensor<T>& grad_out, ParamStore<T>& grads) {
  ConvGrads<T> gh = PointwiseConv1dBackward(cache.cropped, GetParam(p, "decoder.head.w"), grad_out, true);
  Accumulate(grads, "decoder.head.w", gh.weight);
  Accumulate(grads, "decoder.head.b", gh.bias);
  Tensor<T> d_relu(cache.up_pre.dims());
  for (std::size_t c = 0; c < d_relu.dim(0); ++c)
    for (std::size_t t = 0; t < gh.input.dim(1); ++t) d_relu.at(c, t) = gh.input.at(c, t);
  Tensor<T> d_pre = ReluBackward(cache.up_pre, d_relu);
  ConvGrads<T> gpw = PointwiseConv1dBackward(cache.up_dw_out, GetParam(p, "decoder.upsample.pw"), d_pre, true);
  Accumulate(grads, "decoder.upsample.pw", gpw.weight);
  Accumulate(grads, "decoder.upsample.b", gpw.bias);
  ConvGrads<T> gdw = DepthwiseConv1dBackward(cache.repeated, GetParam(p, "decoder.upsample.dw"), gpw.input);
  Accumulate(grads, "decoder.upsample.dw", gdw.weight);
  Tensor<T> dy = RepeatFramesBackward(gdw.input, cfg.upsample_factor);
  const std::vector<StackBlock> stack = cfg.Stack();
  for (std::size_t i = stack.size(); i-- > 0;) dy = BlockBackward(p, stack[i], cache.blocks[i], mode, dy, grads);
  return dy;
}

}  // namespace convoice
