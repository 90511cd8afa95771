// convoice/tensor.hpp
//
// Dense row-major tensor used for every feature map, weight and gradient.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "convoice/errors.hpp"

namespace convoice {

using Dims = std::vector<std::size_t>;

inline std::size_t NumElements(const Dims& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string DimsToString(const Dims& dims) {
  std::string s = "[";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(dims[i]);
  }
  return s + "]";
}

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Dims dims, T fill = T(0))
      : dims_(std::move(dims)), data_(NumElements(dims_), fill) {
    for (std::size_t d : dims_) {
      if (d == 0) throw ShapeError("tensor dims must be positive: " + DimsToString(dims_));
    }
  }

  Tensor(Dims dims, std::vector<T> data) : dims_(std::move(dims)), data_(std::move(data)) {
    if (NumElements(dims_) != data_.size()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match dims " + DimsToString(dims_));
    }
  }

  static Tensor FromList(Dims dims, std::initializer_list<T> values) {
    return Tensor(std::move(dims), std::vector<T>(values));
  }

  const Dims& dims() const { return dims_; }
  std::size_t dim(std::size_t axis) const { return dims_.at(axis); }
  std::size_t rank() const { return dims_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(std::size_t i, std::size_t j) { return data_[i * dims_[1] + j]; }
  const T& at(std::size_t i, std::size_t j) const { return data_[i * dims_[1] + j]; }
  T& at(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * dims_[1] + j) * dims_[2] + k];
  }
  const T& at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * dims_[1] + j) * dims_[2] + k];
  }

  // Pointer to row `i` of a rank-2 tensor.
  T* row(std::size_t i) { return data_.data() + i * dims_[1]; }
  const T* row(std::size_t i) const { return data_.data() + i * dims_[1]; }

  Tensor Reshaped(Dims dims) const { return Tensor(std::move(dims), data_); }

  template <typename U>
  Tensor<U> Cast() const {
    return Tensor<U>(dims_, std::vector<U>(data_.begin(), data_.end()));
  }

  void Fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool operator==(const Tensor& other) const = default;

 private:
  Dims dims_;
  std::vector<T> data_;
};

// Throws ShapeError naming `what` and `axis` unless tensor has `expected` dims.
template <typename T>
void CheckDims(const Tensor<T>& t, const Dims& expected, const std::string& what) {
  if (t.rank() != expected.size()) {
    throw ShapeError(what + ": expected rank " + std::to_string(expected.size()) +
                     ", got " + DimsToString(t.dims()));
  }
  for (std::size_t a = 0; a < expected.size(); ++a) {
    if (t.dim(a) != expected[a]) {
      throw ShapeError(what + ": axis " + std::to_string(a) + " is " +
                       std::to_string(t.dim(a)) + ", expected " + std::to_string(expected[a]));
    }
  }
}

template <typename T>
void CheckRank(const Tensor<T>& t, std::size_t rank, const std::string& what) {
  if (t.rank() != rank) {
    throw ShapeError(what + ": expected rank " + std::to_string(rank) + ", got " +
                     DimsToString(t.dims()));
  }
}

template <typename T>
bool AllFinite(const Tensor<T>& t) {
  for (T v : t.data()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

// Elementwise a += b.
template <typename T>
void AddInPlace(Tensor<T>& a, const Tensor<T>& b) {
  if (a.dims() != b.dims()) {
    throw ShapeError("add: " + DimsToString(a.dims()) + " vs " + DimsToString(b.dims()));
  }
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

// Rank-2 transpose.
template <typename T>
Tensor<T> Transposed(const Tensor<T>& t) {
  CheckRank(t, 2, "transpose");
  Tensor<T> out({t.dim(1), t.dim(0)});
  for (std::size_t i = 0; i < t.dim(0); ++i)
    for (std::size_t j = 0; j < t.dim(1); ++j) out.at(j, i) = t.at(i, j);
  return out;
}

}  // namespace convoice
