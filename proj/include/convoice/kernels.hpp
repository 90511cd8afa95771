// convoice/kernels.hpp
//
// Forward and hand-derived backward passes for every layer type used by the
// content encoder, speaker encoder and decoder. All functions are pure; they
// are templated on the scalar type so the same code runs in 32-bit for
// inference and 64-bit for gradient checking.

#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "convoice/tensor.hpp"

namespace convoice {

// 1-D convolution geometry. Only same-zero padding exists: each side is
// padded with (kernel_width - 1) * dilation / 2 zeros, so odd widths are
// required and stride 1 preserves length exactly.
struct ConvSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_width = 1;
  std::size_t stride = 1;
  std::size_t dilation = 1;

  std::size_t Padding() const { return (kernel_width - 1) * dilation / 2; }
  std::size_t OutputLength(std::size_t t) const { return (t + stride - 1) / stride; }
  std::size_t ParamCount(bool bias) const {
    return out_channels * in_channels * kernel_width + (bias ? out_channels : 0);
  }
  void Validate() const;
};

inline void ConvSpec::Validate() const {
  if (in_channels == 0 || out_channels == 0 || kernel_width == 0 || stride == 0 ||
      dilation == 0) {
    throw ConfigError("conv spec fields must be positive");
  }
  if (kernel_width % 2 == 0) {
    throw ConfigError("same-zero padding requires an odd kernel width, got " +
                      std::to_string(kernel_width));
  }
}

template <typename T>
struct ConvGrads {
  Tensor<T> input;
  Tensor<T> weight;
  Tensor<T> bias;  // empty when the forward pass had no bias
};

namespace detail {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Views a rank-2 tensor as a row-major matrix.
template <typename T>
Eigen::Map<const RowMatrix<T>> AsMatrix(const Tensor<T>& t) {
  return {t.data().data(), static_cast<Eigen::Index>(t.dim(0)), static_cast<Eigen::Index>(t.dim(1))};
}
template <typename T>
Eigen::Map<RowMatrix<T>> AsMatrix(Tensor<T>& t) {
  return {t.data().data(), static_cast<Eigen::Index>(t.dim(0)), static_cast<Eigen::Index>(t.dim(1))};
}

// Calls fn(t_out, t_in) for every output step whose input tap lands inside
// [0, length) for a tap offset `offset` (which may be negative).
template <typename Fn>
inline void ForValidTaps(std::size_t t_out_len, std::size_t length, std::size_t stride,
                         long offset, Fn&& fn) {
  const long len = static_cast<long>(length);
  const long s = static_cast<long>(stride);
  long t0 = 0;
  if (offset < 0) t0 = (-offset + s - 1) / s;
  long t1 = static_cast<long>(t_out_len);  // exclusive
  // need t*s + offset < len  =>  t < (len - offset) / s
  const long limit = len - offset;
  if (limit <= 0) return;
  const long tmax = (limit + s - 1) / s;
  if (tmax < t1) t1 = tmax;
  for (long t = t0; t < t1; ++t) fn(static_cast<std::size_t>(t), static_cast<std::size_t>(t * s + offset));
}

}  // namespace detail

// Full 1-D convolution: out[o, t] = bias[o] + sum_{c,k} w[o, c, k] * x[c, t*stride + k*dilation - pad].
template <typename T>
Tensor<T> Conv1d(const Tensor<T>& input, const Tensor<T>& weight, const ConvSpec& spec,
                 const Tensor<T>* bias = nullptr) {
  spec.Validate();
  CheckRank(input, 2, "conv1d input");
  if (input.dim(0) != spec.in_channels) {
    throw ShapeError("conv1d input: axis 0 (channels) is " + std::to_string(input.dim(0)) +
                     ", expected " + std::to_string(spec.in_channels));
  }
  CheckDims(weight, {spec.out_channels, spec.in_channels, spec.kernel_width}, "conv1d weight");
  if (bias) CheckDims(*bias, {spec.out_channels}, "conv1d bias");
  const std::size_t len = input.dim(1);
  const std::size_t out_len = spec.OutputLength(len);
  const long pad = static_cast<long>(spec.Padding());
  Tensor<T> out({spec.out_channels, out_len});
  for (std::size_t o = 0; o < spec.out_channels; ++o) {
    T* y = out.row(o);
    if (bias) std::fill(y, y + out_len, (*bias)[o]);
    for (std::size_t c = 0; c < spec.in_channels; ++c) {
      const T* x = input.row(c);
      for (std::size_t k = 0; k < spec.kernel_width; ++k) {
        const T w = weight.at(o, c, k);
        const long offset = static_cast<long>(k * spec.dilation) - pad;
        detail::ForValidTaps(out_len, len, spec.stride, offset,
                             [&](std::size_t t, std::size_t ti) { y[t] += w * x[ti]; });
      }
    }
  }
  return out;
}

template <typename T>
ConvGrads<T> Conv1dBackward(const Tensor<T>& input, const Tensor<T>& weight, const ConvSpec& spec,
                            const Tensor<T>& grad_out, bool has_bias) {
  const std::size_t len = input.dim(1);
  const std::size_t out_len = spec.OutputLength(len);
  CheckDims(grad_out, {spec.out_channels, out_len}, "conv1d grad_out");
  const long pad = static_cast<long>(spec.Padding());
  ConvGrads<T> g{Tensor<T>(input.dims()), Tensor<T>(weight.dims()), {}};
  for (std::size_t o = 0; o < spec.out_channels; ++o) {
    const T* dy = grad_out.row(o);
    for (std::size_t c = 0; c < spec.in_channels; ++c) {
      const T* x = input.row(c);
      T* dx = g.input.row(c);
      for (std::size_t k = 0; k < spec.kernel_width; ++k) {
        const T w = weight.at(o, c, k);
        const long offset = static_cast<long>(k * spec.dilation) - pad;
        T acc = 0;
        detail::ForValidTaps(out_len, len, spec.stride, offset, [&](std::size_t t, std::size_t ti) {
          acc += dy[t] * x[ti];
          dx[ti] += w * dy[t];
        });
        g.weight.at(o, c, k) += acc;
      }
    }
  }
  if (has_bias) {
    g.bias = Tensor<T>({spec.out_channels});
    for (std::size_t o = 0; o < spec.out_channels; ++o) {
      T acc = 0;
      for (std::size_t t = 0; t < out_len; ++t) acc += grad_out.at(o, t);
      g.bias[o] = acc;
    }
  }
  return g;
}

// Per-channel temporal convolution: out[c, t] = sum_k w[c, k] * x[c, t*stride + k*dilation - pad].
template <typename T>
Tensor<T> DepthwiseConv1d(const Tensor<T>& input, const Tensor<T>& weight, std::size_t stride = 1,
                          std::size_t dilation = 1) {
  CheckRank(input, 2, "depthwise input");
  CheckRank(weight, 2, "depthwise weight");
  if (weight.dim(0) != input.dim(0)) {
    throw ShapeError("depthwise weight: axis 0 (channels) is " + std::to_string(weight.dim(0)) +
                     ", expected " + std::to_string(input.dim(0)));
  }
  ConvSpec spec{input.dim(0), input.dim(0), weight.dim(1), stride, dilation};
  spec.Validate();
  const std::size_t len = input.dim(1);
  const std::size_t out_len = spec.OutputLength(len);
  const long pad = static_cast<long>(spec.Padding());
  Tensor<T> out({input.dim(0), out_len});
  for (std::size_t c = 0; c < input.dim(0); ++c) {
    const T* x = input.row(c);
    T* y = out.row(c);
    for (std::size_t k = 0; k < spec.kernel_width; ++k) {
      const T w = weight.at(c, k);
      const long offset = static_cast<long>(k * dilation) - pad;
      detail::ForValidTaps(out_len, len, stride, offset,
                           [&](std::size_t t, std::size_t ti) { y[t] += w * x[ti]; });
    }
  }
  return out;
}

// Depthwise convolution over `segments` equal-length items laid end to end
// along time; zero padding applies at every item boundary, so each item is
// convolved exactly as if alone. Output: [C x segments * ceil(len / stride)].
template <typename T>
Tensor<T> DepthwiseConv1dSegments(const Tensor<T>& input, const Tensor<T>& weight, std::size_t stride,
                                  std::size_t segments) {
  if (segments <= 1) return DepthwiseConv1d(input, weight, stride);
  CheckRank(input, 2, "depthwise input");
  if (weight.dim(0) != input.dim(0)) {
    throw ShapeError("depthwise weight: axis 0 (channels) is " + std::to_string(weight.dim(0)) +
                     ", expected " + std::to_string(input.dim(0)));
  }
  if (input.dim(1) % segments != 0) throw ShapeError("depthwise input: time axis not divisible by segments");
  ConvSpec spec{input.dim(0), input.dim(0), weight.dim(1), stride, 1};
  spec.Validate();
  const std::size_t len = input.dim(1) / segments;
  const std::size_t out_len = spec.OutputLength(len);
  const long pad = static_cast<long>(spec.Padding());
  Tensor<T> out({input.dim(0), out_len * segments});
  for (std::size_t c = 0; c < input.dim(0); ++c) {
    for (std::size_t s = 0; s < segments; ++s) {
      const T* x = input.row(c) + s * len;
      T* y = out.row(c) + s * out_len;
      for (std::size_t k = 0; k < spec.kernel_width; ++k) {
        const T w = weight.at(c, k);
        detail::ForValidTaps(out_len, len, stride, static_cast<long>(k) - pad,
                             [&](std::size_t t, std::size_t ti) { y[t] += w * x[ti]; });
      }
    }
  }
  return out;
}

template <typename T>
ConvGrads<T> DepthwiseConv1dBackward(const Tensor<T>& input, const Tensor<T>& weight,
                                     const Tensor<T>& grad_out, std::size_t stride = 1,
                                     std::size_t dilation = 1) {
  const std::size_t len = input.dim(1);
  const std::size_t out_len = (len + stride - 1) / stride;
  CheckDims(grad_out, {input.dim(0), out_len}, "depthwise grad_out");
  const long pad = static_cast<long>((weight.dim(1) - 1) * dilation / 2);
  ConvGrads<T> g{Tensor<T>(input.dims()), Tensor<T>(weight.dims()), {}};
  for (std::size_t c = 0; c < input.dim(0); ++c) {
    const T* x = input.row(c);
    const T* dy = grad_out.row(c);
    T* dx = g.input.row(c);
    for (std::size_t k = 0; k < weight.dim(1); ++k) {
      const T w = weight.at(c, k);
      const long offset = static_cast<long>(k * dilation) - pad;
      T acc = 0;
      detail::ForValidTaps(out_len, len, stride, offset, [&](std::size_t t, std::size_t ti) {
        acc += dy[t] * x[ti];
        dx[ti] += w * dy[t];
      });
      g.weight.at(c, k) = acc;
    }
  }
  return g;
}

// 1x1 convolution (channel mixing): out[o, t] = bias[o] + sum_c w[o, c] * x[c, t].
template <typename T>
Tensor<T> PointwiseConv1d(const Tensor<T>& input, const Tensor<T>& weight,
                          const Tensor<T>* bias = nullptr) {
  CheckRank(input, 2, "pointwise input");
  CheckRank(weight, 2, "pointwise weight");
  if (weight.dim(1) != input.dim(0)) {
    throw ShapeError("pointwise weight: axis 1 (in channels) is " + std::to_string(weight.dim(1)) +
                     ", expected " + std::to_string(input.dim(0)));
  }
  if (bias) CheckDims(*bias, {weight.dim(0)}, "pointwise bias");
  Tensor<T> out({weight.dim(0), input.dim(1)});
  const auto x = detail::AsMatrix(input);
  auto y = detail::AsMatrix(out);
  y.noalias() = detail::AsMatrix(weight) * x;
  if (bias) y.colwise() += Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(bias->data().data(), bias->size());
  return out;
}

template <typename T>
ConvGrads<T> PointwiseConv1dBackward(const Tensor<T>& input, const Tensor<T>& weight,
                                     const Tensor<T>& grad_out, bool has_bias) {
  const std::size_t len = input.dim(1);
  CheckDims(grad_out, {weight.dim(0), len}, "pointwise grad_out");
  ConvGrads<T> g{Tensor<T>(input.dims()), Tensor<T>(weight.dims()), {}};
  const auto dy = detail::AsMatrix(grad_out);
  detail::AsMatrix(g.weight).noalias() = dy * detail::AsMatrix(input).transpose();
  detail::AsMatrix(g.input).noalias() = detail::AsMatrix(weight).transpose() * dy;
  if (has_bias) {
    g.bias = Tensor<T>({weight.dim(0)});
    for (std::size_t o = 0; o < weight.dim(0); ++o) {
      T acc = 0;
      const T* row = grad_out.row(o);
      for (std::size_t t = 0; t < len; ++t) acc += row[t];
      g.bias[o] = acc;
    }
  }
  return g;
}

// Time-channel separable convolution: depthwise temporal conv then pointwise mix.
template <typename T>
Tensor<T> SeparableConv1d(const Tensor<T>& input, const Tensor<T>& depthwise,
                          const Tensor<T>& pointwise, const ConvSpec& spec,
                          const Tensor<T>* bias = nullptr) {
  spec.Validate();
  if (input.rank() == 2 && input.dim(0) != spec.in_channels) {
    throw ShapeError("separable input: axis 0 (channels) is " + std::to_string(input.dim(0)) +
                     ", expected " + std::to_string(spec.in_channels));
  }
  CheckDims(depthwise, {spec.in_channels, spec.kernel_width}, "separable depthwise");
  CheckDims(pointwise, {spec.out_channels, spec.in_channels}, "separable pointwise");
  return PointwiseConv1d(DepthwiseConv1d(input, depthwise, spec.stride, spec.dilation), pointwise,
                         bias);
}

template <typename T>
struct SeparableGrads {
  Tensor<T> input;
  Tensor<T> depthwise;
  Tensor<T> pointwise;
  Tensor<T> bias;
};

template <typename T>
SeparableGrads<T> SeparableConv1dBackward(const Tensor<T>& input, const Tensor<T>& depthwise,
                                          const Tensor<T>& pointwise, const ConvSpec& spec,
                                          const Tensor<T>& grad_out, bool has_bias,
                                          const Tensor<T>* depthwise_out = nullptr) {
  Tensor<T> mid_local;
  if (!depthwise_out) {
    mid_local = DepthwiseConv1d(input, depthwise, spec.stride, spec.dilation);
    depthwise_out = &mid_local;
  }
  ConvGrads<T> pw = PointwiseConv1dBackward(*depthwise_out, pointwise, grad_out, has_bias);
  ConvGrads<T> dw = DepthwiseConv1dBackward(input, depthwise, pw.input, spec.stride, spec.dilation);
  return {std::move(dw.input), std::move(dw.weight), std::move(pw.weight), std::move(pw.bias)};
}

// ---------------------------------------------------------------------------
// Batch normalization over the time axis of a [C x T] feature map.

template <typename T>
struct BatchNormParams {
  Tensor<T> gamma;
  Tensor<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;
  T eps = T(1e-5);
};

template <typename T>
void CheckBatchNorm(const Tensor<T>& input, const BatchNormParams<T>& p) {
  CheckRank(input, 2, "batchnorm input");
  const std::size_t c = input.dim(0);
  CheckDims(p.gamma, {c}, "batchnorm gamma");
  CheckDims(p.beta, {c}, "batchnorm beta");
  CheckDims(p.running_mean, {c}, "batchnorm running_mean");
  CheckDims(p.running_var, {c}, "batchnorm running_var");
  for (std::size_t i = 0; i < c; ++i) {
    if (p.running_var[i] < T(0)) {
      throw DomainError("batchnorm running_var[" + std::to_string(i) + "] is negative");
    }
  }
}

// Inference mode: normalize with the running statistics.
template <typename T>
Tensor<T> BatchNorm1d(const Tensor<T>& input, const BatchNormParams<T>& p) {
  CheckBatchNorm(input, p);
  Tensor<T> out(input.dims());
  for (std::size_t c = 0; c < input.dim(0); ++c) {
    const T scale = p.gamma[c] / std::sqrt(p.running_var[c] + p.eps);
    const T shift = p.beta[c] - p.running_mean[c] * scale;
    const T* x = input.row(c);
    T* y = out.row(c);
    for (std::size_t t = 0; t < input.dim(1); ++t) y[t] = x[t] * scale + shift;
  }
  return out;
}

template <typename T>
struct BatchNormGrads {
  Tensor<T> input;
  Tensor<T> gamma;
  Tensor<T> beta;
};

template <typename T>
BatchNormGrads<T> BatchNorm1dBackward(const Tensor<T>& input, const BatchNormParams<T>& p,
                                      const Tensor<T>& grad_out) {
  BatchNormGrads<T> g{Tensor<T>(input.dims()), Tensor<T>(p.gamma.dims()), Tensor<T>(p.beta.dims())};
  for (std::size_t c = 0; c < input.dim(0); ++c) {
    const T inv_std = T(1) / std::sqrt(p.running_var[c] + p.eps);
    const T scale = p.gamma[c] * inv_std;
    T dgamma = 0, dbeta = 0;
    for (std::size_t t = 0; t < input.dim(1); ++t) {
      const T dy = grad_out.at(c, t);
      g.input.at(c, t) = dy * scale;
      dgamma += dy * (input.at(c, t) - p.running_mean[c]) * inv_std;
      dbeta += dy;
    }
    g.gamma[c] = dgamma;
    g.beta[c] = dbeta;
  }
  return g;
}

// Training mode output: normalized with the batch's own (biased) statistics.
template <typename T>
struct BatchNormTrainResult {
  Tensor<T> output;
  Tensor<T> batch_mean;
  Tensor<T> batch_var;
  Tensor<T> normalized;  // x-hat, kept for the backward pass
  Tensor<T> inv_std;
};

template <typename T>
BatchNormTrainResult<T> BatchNorm1dTrain(const Tensor<T>& input, const BatchNormParams<T>& p) {
  CheckBatchNorm(input, p);
  const std::size_t channels = input.dim(0);
  const std::size_t len = input.dim(1);
  BatchNormTrainResult<T> r{Tensor<T>(input.dims()), Tensor<T>({channels}), Tensor<T>({channels}),
                            Tensor<T>(input.dims()), Tensor<T>({channels})};
  for (std::size_t c = 0; c < channels; ++c) {
    const T* x = input.row(c);
    T mean = 0;
    for (std::size_t t = 0; t < len; ++t) mean += x[t];
    mean /= static_cast<T>(len);
    T var = 0;
    for (std::size_t t = 0; t < len; ++t) var += (x[t] - mean) * (x[t] - mean);
    var /= static_cast<T>(len);
    const T inv_std = T(1) / std::sqrt(var + p.eps);
    r.batch_mean[c] = mean;
    r.batch_var[c] = var;
    r.inv_std[c] = inv_std;
    for (std::size_t t = 0; t < len; ++t) {
      const T xhat = (x[t] - mean) * inv_std;
      r.normalized.at(c, t) = xhat;
      r.output.at(c, t) = p.gamma[c] * xhat + p.beta[c];
    }
  }
  return r;
}

template <typename T>
BatchNormGrads<T> BatchNorm1dTrainBackward(const BatchNormTrainResult<T>& fwd,
                                           const BatchNormParams<T>& p, const Tensor<T>& grad_out) {
  const std::size_t channels = fwd.normalized.dim(0);
  const std::size_t len = fwd.normalized.dim(1);
  const T n = static_cast<T>(len);
  BatchNormGrads<T> g{Tensor<T>(fwd.normalized.dims()), Tensor<T>({channels}),
                      Tensor<T>({channels})};
  for (std::size_t c = 0; c < channels; ++c) {
    T sum_dxhat = 0, sum_dxhat_xhat = 0, dgamma = 0, dbeta = 0;
    for (std::size_t t = 0; t < len; ++t) {
      const T dy = grad_out.at(c, t);
      const T xhat = fwd.normalized.at(c, t);
      dgamma += dy * xhat;
      dbeta += dy;
      const T dxhat = dy * p.gamma[c];
      sum_dxhat += dxhat;
      sum_dxhat_xhat += dxhat * xhat;
    }
    g.gamma[c] = dgamma;
    g.beta[c] = dbeta;
    const T k = fwd.inv_std[c] / n;
    for (std::size_t t = 0; t < len; ++t) {
      const T dxhat = grad_out.at(c, t) * p.gamma[c];
      g.input.at(c, t) = k * (n * dxhat - sum_dxhat - fwd.normalized.at(c, t) * sum_dxhat_xhat);
    }
  }
  return g;
}

// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> Relu(const Tensor<T>& input) {
  Tensor<T> out(input.dims());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > T(0) ? input[i] : T(0);
  return out;
}

// Uses the subgradient 0 at x == 0.
template <typename T>
Tensor<T> ReluBackward(const Tensor<T>& input, const Tensor<T>& grad_out) {
  Tensor<T> g(input.dims());
  for (std::size_t i = 0; i < input.size(); ++i) g[i] = input[i] > T(0) ? grad_out[i] : T(0);
  return g;
}

// Affine map along the trailing axis. Input is [D_in] or [N x D_in].
template <typename T>
Tensor<T> Linear(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
  CheckRank(weight, 2, "linear weight");
  const std::size_t d_out = weight.dim(0);
  const std::size_t d_in = weight.dim(1);
  CheckDims(bias, {d_out}, "linear bias");
  if (input.rank() < 1 || input.dims().back() != d_in) {
    throw ShapeError("linear input: trailing axis is " +
                     (input.rank() ? std::to_string(input.dims().back()) : std::string("absent")) +
                     ", expected " + std::to_string(d_in));
  }
  const std::size_t rows = input.size() / d_in;
  Dims out_dims = input.dims();
  out_dims.back() = d_out;
  Tensor<T> out(out_dims);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = input.data().data() + r * d_in;
    T* y = out.data().data() + r * d_out;
    for (std::size_t o = 0; o < d_out; ++o) {
      const T* w = weight.row(o);
      T acc = bias[o];
      for (std::size_t i = 0; i < d_in; ++i) acc += w[i] * x[i];
      y[o] = acc;
    }
  }
  return out;
}

template <typename T>
struct LinearGrads {
  Tensor<T> input;
  Tensor<T> weight;
  Tensor<T> bias;
};

template <typename T>
LinearGrads<T> LinearBackward(const Tensor<T>& input, const Tensor<T>& weight,
                              const Tensor<T>& grad_out) {
  const std::size_t d_out = weight.dim(0);
  const std::size_t d_in = weight.dim(1);
  const std::size_t rows = input.size() / d_in;
  if (grad_out.size() != rows * d_out) throw ShapeError("linear grad_out: size mismatch");
  LinearGrads<T> g{Tensor<T>(input.dims()), Tensor<T>(weight.dims()), Tensor<T>({d_out})};
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = input.data().data() + r * d_in;
    const T* dy = grad_out.data().data() + r * d_out;
    T* dx = g.input.data().data() + r * d_in;
    for (std::size_t o = 0; o < d_out; ++o) {
      const T* w = weight.row(o);
      T* dw = g.weight.row(o);
      for (std::size_t i = 0; i < d_in; ++i) {
        dx[i] += w[i] * dy[o];
        dw[i] += dy[o] * x[i];
      }
      g.bias[o] += dy[o];
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// LSTM. Gates are stacked in the order (input, forget, candidate, output):
// rows [0,H) input gate, [H,2H) forget, [2H,3H) candidate, [3H,4H) output.

template <typename T>
struct LstmLayerWeights {
  Tensor<T> w_ih;  // [4H x D_in]
  Tensor<T> w_hh;  // [4H x H]
  Tensor<T> bias;  // [4H]

  std::size_t hidden() const { return w_hh.dim(1); }
  std::size_t input_size() const { return w_ih.dim(1); }
};

template <typename T>
struct LstmLayerCache {
  Tensor<T> input;   // [T x D_in]
  Tensor<T> gates;   // [T x 4H], post-activation
  Tensor<T> cell;    // [T x H]
  Tensor<T> hidden;  // [T x H]
};

template <typename T>
struct LstmResult {
  Tensor<T> outputs;                         // [T x H] top-layer hidden states
  std::vector<Tensor<T>> final_hidden;       // per layer, [H]
  std::vector<Tensor<T>> final_cell;         // per layer, [H]
  std::vector<LstmLayerCache<T>> cache;
};

namespace detail {
template <typename T>
inline T Sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}
}  // namespace detail

template <typename T>
LstmResult<T> LstmForward(const Tensor<T>& input, const std::vector<LstmLayerWeights<T>>& layers) {
  CheckRank(input, 2, "lstm input");
  if (layers.empty()) throw ConfigError("lstm needs at least one layer");
  const std::size_t steps = input.dim(0);
  LstmResult<T> result;
  Tensor<T> x = input;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& w = layers[l];
    const std::size_t h_size = w.w_hh.dim(1);
    const std::string name = "lstm layer " + std::to_string(l);
    CheckDims(w.w_ih, {4 * h_size, x.dim(1)}, name + " w_ih");
    CheckDims(w.w_hh, {4 * h_size, h_size}, name + " w_hh");
    CheckDims(w.bias, {4 * h_size}, name + " bias");
    const std::size_t d_in = x.dim(1);
    LstmLayerCache<T> cache{x, Tensor<T>({steps, 4 * h_size}), Tensor<T>({steps, h_size}),
                            Tensor<T>({steps, h_size})};
    std::vector<T> h(h_size, T(0)), c(h_size, T(0)), z(4 * h_size);
    for (std::size_t t = 0; t < steps; ++t) {
      const T* xt = x.row(t);
      for (std::size_t r = 0; r < 4 * h_size; ++r) {
        T acc = w.bias[r];
        const T* wi = w.w_ih.row(r);
        for (std::size_t i = 0; i < d_in; ++i) acc += wi[i] * xt[i];
        const T* wh = w.w_hh.row(r);
        for (std::size_t i = 0; i < h_size; ++i) acc += wh[i] * h[i];
        z[r] = acc;
      }
      T* gates = cache.gates.row(t);
      for (std::size_t j = 0; j < h_size; ++j) {
        const T ig = detail::Sigmoid(z[j]);
        const T fg = detail::Sigmoid(z[h_size + j]);
        const T gg = std::tanh(z[2 * h_size + j]);
        const T og = detail::Sigmoid(z[3 * h_size + j]);
        gates[j] = ig;
        gates[h_size + j] = fg;
        gates[2 * h_size + j] = gg;
        gates[3 * h_size + j] = og;
        c[j] = fg * c[j] + ig * gg;
        h[j] = og * std::tanh(c[j]);
        cache.cell.at(t, j) = c[j];
        cache.hidden.at(t, j) = h[j];
      }
    }
    result.final_hidden.push_back(Tensor<T>({h_size}, h));
    result.final_cell.push_back(Tensor<T>({h_size}, c));
    x = cache.hidden;
    result.cache.push_back(std::move(cache));
  }
  result.outputs = x;
  return result;
}

template <typename T>
struct LstmGrads {
  Tensor<T> input;
  std::vector<LstmLayerWeights<T>> layers;
};

// Backpropagation through time given dL/d(outputs).
template <typename T>
LstmGrads<T> LstmBackward(const LstmResult<T>& fwd, const std::vector<LstmLayerWeights<T>>& layers,
                          const Tensor<T>& grad_outputs) {
  CheckDims(grad_outputs, fwd.outputs.dims(), "lstm grad_outputs");
  LstmGrads<T> grads;
  grads.layers.resize(layers.size());
  Tensor<T> d_above = grad_outputs;
  for (std::size_t li = layers.size(); li-- > 0;) {
    const auto& w = layers[li];
    const auto& cache = fwd.cache[li];
    const std::size_t steps = cache.input.dim(0);
    const std::size_t d_in = cache.input.dim(1);
    const std::size_t h_size = w.w_hh.dim(1);
    LstmLayerWeights<T> g{Tensor<T>(w.w_ih.dims()), Tensor<T>(w.w_hh.dims()),
                          Tensor<T>(w.bias.dims())};
    Tensor<T> dx({steps, d_in});
    std::vector<T> dh_next(h_size, T(0)), dc_next(h_size, T(0)), dz(4 * h_size);
    for (std::size_t t = steps; t-- > 0;) {
      const T* gates = cache.gates.row(t);
      for (std::size_t j = 0; j < h_size; ++j) {
        const T ig = gates[j], fg = gates[h_size + j], gg = gates[2 * h_size + j],
                og = gates[3 * h_size + j];
        const T c = cache.cell.at(t, j);
        const T c_prev = t > 0 ? cache.cell.at(t - 1, j) : T(0);
        const T tc = std::tanh(c);
        const T dh = d_above.at(t, j) + dh_next[j];
        const T dc = dc_next[j] + dh * og * (T(1) - tc * tc);
        dz[j] = dc * gg * ig * (T(1) - ig);
        dz[h_size + j] = dc * c_prev * fg * (T(1) - fg);
        dz[2 * h_size + j] = dc * ig * (T(1) - gg * gg);
        dz[3 * h_size + j] = dh * tc * og * (T(1) - og);
        dc_next[j] = dc * fg;
      }
      std::fill(dh_next.begin(), dh_next.end(), T(0));
      const T* xt = cache.input.row(t);
      T* dxt = dx.row(t);
      for (std::size_t r = 0; r < 4 * h_size; ++r) {
        const T d = dz[r];
        g.bias[r] += d;
        const T* wi = w.w_ih.row(r);
        T* gwi = g.w_ih.row(r);
        for (std::size_t i = 0; i < d_in; ++i) {
          gwi[i] += d * xt[i];
          dxt[i] += wi[i] * d;
        }
        if (t > 0) {
          const T* hp = cache.hidden.row(t - 1);
          const T* wh = w.w_hh.row(r);
          T* gwh = g.w_hh.row(r);
          for (std::size_t i = 0; i < h_size; ++i) {
            gwh[i] += d * hp[i];
            dh_next[i] += wh[i] * d;
          }
        }
      }
    }
    grads.layers[li] = std::move(g);
    d_above = std::move(dx);
  }
  grads.input = std::move(d_above);
  return grads;
}

}  // namespace convoice
