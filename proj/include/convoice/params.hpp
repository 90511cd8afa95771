// convoice/params.hpp
//
// Named-tensor parameter stores and seeded initialization helpers.

#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>

#include "convoice/tensor.hpp"

namespace convoice {

// Ordered so that iteration (and therefore checkpoint layout and optimizer
// update order) is deterministic.
template <typename T>
using ParamStore = std::map<std::string, Tensor<T>>;

template <typename T>
const Tensor<T>& GetParam(const ParamStore<T>& store, const std::string& name) {
  auto it = store.find(name);
  if (it == store.end()) throw InputError("missing weight '" + name + "'");
  return it->second;
}

template <typename T>
void Accumulate(ParamStore<T>& grads, const std::string& name, const Tensor<T>& g) {
  auto it = grads.find(name);
  if (it == grads.end()) {
    grads.emplace(name, g);
  } else {
    AddInPlace(it->second, g);
  }
}

template <typename U, typename T>
ParamStore<U> CastStore(const ParamStore<T>& store) {
  ParamStore<U> out;
  for (const auto& [name, t] : store) out.emplace(name, t.template Cast<U>());
  return out;
}

// Entries of `store` whose name starts with `prefix`.
template <typename T>
ParamStore<T> Subset(const ParamStore<T>& store, const std::string& prefix) {
  ParamStore<T> out;
  for (const auto& [name, t] : store) {
    if (name.rfind(prefix, 0) == 0) out.emplace(name, t);
  }
  return out;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double Normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  double Uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  std::size_t Index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  std::uint64_t Next() { return engine_(); }

  template <typename T>
  Tensor<T> NormalTensor(Dims dims, double stddev) {
    Tensor<T> t(std::move(dims));
    for (auto& v : t.data()) v = static_cast<T>(Normal(0.0, stddev));
    return t;
  }
  template <typename T>
  Tensor<T> UniformTensor(Dims dims, double lo, double hi) {
    Tensor<T> t(std::move(dims));
    for (auto& v : t.data()) v = static_cast<T>(Uniform(lo, hi));
    return t;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace convoice
