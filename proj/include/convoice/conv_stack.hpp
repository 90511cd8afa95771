// convoice/conv_stack.hpp
//
// QuartzNet-style blocks shared by the content encoder and the decoder. A
// block is `repeats` units of (separable conv, batchnorm, ReLU); when the
// block is residual, the skip path (identity, or a 1x1 projection when the
// channel count changes) is added after the last batchnorm and before the
// last ReLU.
//
// Weight names for block prefix P:
//   P.rep{j}.{dw,pw,bn_gamma,bn_beta,bn_mean,bn_var}   (j = 1..repeats)
//   P.res.{w,b}                                        (projection, if any)
// A `flat` block (the encoder stem) drops the rep{j} level: P.{dw,pw,...}.

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "convoice/kernels.hpp"
#include "convoice/params.hpp"

namespace convoice {

struct StackBlock {
  std::string prefix;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel_width = 1;
  std::size_t repeats = 1;
  std::size_t stride = 1;  // applied by the first unit only
  bool residual = false;
  bool flat = false;

  std::string UnitPrefix(std::size_t rep) const {
    return flat ? prefix : prefix + ".rep" + std::to_string(rep + 1);
  }
  bool HasProjection() const { return residual && in_channels != out_channels; }
  std::size_t UnitIn(std::size_t rep) const { return rep == 0 ? in_channels : out_channels; }
  std::size_t UnitStride(std::size_t rep) const { return rep == 0 ? stride : 1; }
};

enum class NormMode { kInference, kTrain };

inline constexpr double kBatchNormEps = 1e-5;

template <typename T>
struct UnitCache {
  Tensor<T> input;
  Tensor<T> dw_out;
  Tensor<T> bn_in;  // pointwise output
  BatchNormTrainResult<T> bn;
  Tensor<T> pre_act;
};

template <typename T>
struct BlockCache {
  Tensor<T> input;
  std::vector<UnitCache<T>> units;
};

template <typename T>
BatchNormParams<T> LoadBatchNorm(const ParamStore<T>& p, const std::string& unit) {
  return {GetParam(p, unit + ".bn_gamma"), GetParam(p, unit + ".bn_beta"),
          GetParam(p, unit + ".bn_mean"), GetParam(p, unit + ".bn_var"), T(kBatchNormEps)};
}

template <typename T>
void InitBlock(ParamStore<T>& p, const StackBlock& b, Rng& rng) {
  for (std::size_t r = 0; r < b.repeats; ++r) {
    const std::string u = b.UnitPrefix(r);
    const std::size_t cin = b.UnitIn(r);
    p[u + ".dw"] = rng.NormalTensor<T>({cin, b.kernel_width}, std::sqrt(1.0 / b.kernel_width));
    p[u + ".pw"] = rng.NormalTensor<T>({b.out_channels, cin}, std::sqrt(2.0 / cin));
    p[u + ".bn_gamma"] = Tensor<T>({b.out_channels}, T(1));
    p[u + ".bn_beta"] = Tensor<T>({b.out_channels}, T(0));
    p[u + ".bn_mean"] = Tensor<T>({b.out_channels}, T(0));
    p[u + ".bn_var"] = Tensor<T>({b.out_channels}, T(1));
  }
  if (b.HasProjection()) {
    p[b.prefix + ".res.w"] =
        rng.NormalTensor<T>({b.out_channels, b.in_channels}, std::sqrt(1.0 / b.in_channels));
    p[b.prefix + ".res.b"] = Tensor<T>({b.out_channels}, T(0));
  }
}

// Trainable parameter count: dw, pw, gamma, beta and the projection.
inline std::size_t BlockParamCount(const StackBlock& b) {
  std::size_t n = 0;
  for (std::size_t r = 0; r < b.repeats; ++r) {
    const std::size_t cin = b.UnitIn(r);
    n += cin * b.kernel_width + b.out_channels * cin + 2 * b.out_channels;
  }
  if (b.HasProjection()) n += b.out_channels * b.in_channels + b.out_channels;
  return n;
}

template <typename T>
Tensor<T> BlockForward(const ParamStore<T>& p, const StackBlock& b, const Tensor<T>& x,
                       NormMode mode, BlockCache<T>* cache = nullptr) {
  if (x.rank() != 2 || x.dim(0) != b.in_channels) {
    throw ShapeError(b.prefix + " input: axis 0 (channels) is " +
                     (x.rank() == 2 ? std::to_string(x.dim(0)) : DimsToString(x.dims())) +
                     ", expected " + std::to_string(b.in_channels));
  }
  if (cache) {
    cache->input = x;
    cache->units.clear();
  }
  Tensor<T> h = x;
  for (std::size_t r = 0; r < b.repeats; ++r) {
    const std::string u = b.UnitPrefix(r);
    UnitCache<T> uc;
    Tensor<T> dw_out = DepthwiseConv1d(h, GetParam(p, u + ".dw"), b.UnitStride(r));
    Tensor<T> pw_out = PointwiseConv1d(dw_out, GetParam(p, u + ".pw"));
    const BatchNormParams<T> bn = LoadBatchNorm(p, u);
    Tensor<T> pre;
    if (mode == NormMode::kTrain) {
      uc.bn = BatchNorm1dTrain(pw_out, bn);
      pre = uc.bn.output;
    } else {
      pre = BatchNorm1d(pw_out, bn);
    }
    if (b.residual && r + 1 == b.repeats) {
      if (b.HasProjection()) {
        const Tensor<T>& rb = GetParam(p, b.prefix + ".res.b");
        Tensor<T> skip = PointwiseConv1d(x, GetParam(p, b.prefix + ".res.w"), &rb);
        AddInPlace(pre, skip);
      } else {
        AddInPlace(pre, x);
      }
    }
    Tensor<T> out = Relu(pre);
    if (cache) {
      uc.input = std::move(h);
      uc.dw_out = std::move(dw_out);
      uc.bn_in = std::move(pw_out);
      uc.pre_act = std::move(pre);
      cache->units.push_back(std::move(uc));
    }
    h = std::move(out);
  }
  return h;
}

// Returns dL/d(block input); parameter gradients are accumulated into `grads`.
template <typename T>
Tensor<T> BlockBackward(const ParamStore<T>& p, const StackBlock& b, const BlockCache<T>& cache,
                        NormMode mode, const Tensor<T>& grad_out, ParamStore<T>& grads) {
  Tensor<T> dy = grad_out;
  Tensor<T> d_skip;
  for (std::size_t r = b.repeats; r-- > 0;) {
    const std::string u = b.UnitPrefix(r);
    const UnitCache<T>& uc = cache.units[r];
    Tensor<T> d_pre = ReluBackward(uc.pre_act, dy);
    if (b.residual && r + 1 == b.repeats) d_skip = d_pre;
    const BatchNormParams<T> bn = LoadBatchNorm(p, u);
    BatchNormGrads<T> gbn = mode == NormMode::kTrain ? BatchNorm1dTrainBackward(uc.bn, bn, d_pre)
                                                     : BatchNorm1dBackward(uc.bn_in, bn, d_pre);
    Accumulate(grads, u + ".bn_gamma", gbn.gamma);
    Accumulate(grads, u + ".bn_beta", gbn.beta);
    const ConvSpec spec{b.UnitIn(r), b.out_channels, b.kernel_width, b.UnitStride(r), 1};
    SeparableGrads<T> gs = SeparableConv1dBackward(uc.input, GetParam(p, u + ".dw"),
                                                   GetParam(p, u + ".pw"), spec, gbn.input, false,
                                                   &uc.dw_out);
    Accumulate(grads, u + ".dw", gs.depthwise);
    Accumulate(grads, u + ".pw", gs.pointwise);
    dy = std::move(gs.input);
  }
  if (b.residual) {
    if (b.HasProjection()) {
      ConvGrads<T> gp =
          PointwiseConv1dBackward(cache.input, GetParam(p, b.prefix + ".res.w"), d_skip, true);
      Accumulate(grads, b.prefix + ".res.w", gp.weight);
      Accumulate(grads, b.prefix + ".res.b", gp.bias);
      AddInPlace(dy, gp.input);
    } else {
      AddInPlace(dy, d_skip);
    }
  }
  return dy;
}

// Batch statistics observed by each unit in a training-mode forward pass.
template <typename T>
void CollectBatchStats(const StackBlock& b, const BlockCache<T>& cache,
                       ParamStore<T>& sums) {
  for (std::size_t r = 0; r < b.repeats; ++r) {
    const std::string u = b.UnitPrefix(r);
    Accumulate(sums, u + ".bn_mean", cache.units[r].bn.batch_mean);
    Accumulate(sums, u + ".bn_var", cache.units[r].bn.batch_var);
  }
}

// ---------------------------------------------------------------------------
// Inference form with batchnorm folded into the pointwise weights:
//   pw'[o, c] = pw[o, c] * gamma[o] / sqrt(var[o] + eps)
//   bias'[o]  = beta[o] - mean[o] * gamma[o] / sqrt(var[o] + eps)

template <typename T>
struct FoldedUnit {
  Tensor<T> dw;
  Tensor<T> pw;
  Tensor<T> bias;
  std::size_t stride = 1;
};

template <typename T>
struct FoldedBlock {
  std::vector<FoldedUnit<T>> units;
  bool residual = false;
  Tensor<T> proj_w;  // empty unless projecting
  Tensor<T> proj_b;

  // `segments` equal-length items may be laid end to end along time.
  Tensor<T> Forward(const Tensor<T>& x, std::size_t segments = 1) const {
    Tensor<T> h = x;
    for (std::size_t r = 0; r < units.size(); ++r) {
      const FoldedUnit<T>& u = units[r];
      Tensor<T> pre = PointwiseConv1d(DepthwiseConv1dSegments(h, u.dw, u.stride, segments), u.pw, &u.bias);
      if (residual && r + 1 == units.size()) {
        if (!proj_w.empty()) {
          AddInPlace(pre, PointwiseConv1d(x, proj_w, &proj_b));
        } else {
          AddInPlace(pre, x);
        }
      }
      for (auto& v : pre.data()) v = v > T(0) ? v : T(0);
      h = std::move(pre);
    }
    return h;
  }
};

template <typename T>
FoldedBlock<T> FoldBlock(const ParamStore<T>& p, const StackBlock& b) {
  FoldedBlock<T> f;
  f.residual = b.residual;
  for (std::size_t r = 0; r < b.repeats; ++r) {
    const std::string u = b.UnitPrefix(r);
    const BatchNormParams<T> bn = LoadBatchNorm(p, u);
    if (bn.running_var.size() != b.out_channels) {
      throw ShapeError(u + ".bn_var: axis 0 mismatch");
    }
    FoldedUnit<T> fu;
    fu.dw = GetParam(p, u + ".dw");
    fu.pw = GetParam(p, u + ".pw");
    CheckDims(fu.dw, {b.UnitIn(r), b.kernel_width}, u + ".dw");
    CheckDims(fu.pw, {b.out_channels, b.UnitIn(r)}, u + ".pw");
    fu.bias = Tensor<T>({b.out_channels});
    fu.stride = b.UnitStride(r);
    for (std::size_t o = 0; o < b.out_channels; ++o) {
      if (bn.running_var[o] < T(0)) throw DomainError(u + ".bn_var is negative");
      const double scale = static_cast<double>(bn.gamma[o]) /
                           std::sqrt(static_cast<double>(bn.running_var[o]) + kBatchNormEps);
      T* row = fu.pw.row(o);
      for (std::size_t c = 0; c < fu.pw.dim(1); ++c) row[c] = static_cast<T>(row[c] * scale);
      fu.bias[o] = static_cast<T>(bn.beta[o] - bn.running_mean[o] * scale);
    }
    f.units.push_back(std::move(fu));
  }
  if (b.HasProjection()) {
    f.proj_w = GetParam(p, b.prefix + ".res.w");
    f.proj_b = GetParam(p, b.prefix + ".res.b");
  }
  return f;
}

}  // namespace convoice
