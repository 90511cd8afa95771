// convoice/grad_check.hpp
//
// Central finite-difference verification of hand-written backward passes.

#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "convoice/tensor.hpp"

namespace convoice {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_element = 0;
};

using ScalarFn = std::function<double(const std::vector<Tensor<double>>&)>;
using GradFn = std::function<std::vector<Tensor<double>>(const std::vector<Tensor<double>>&)>;
// Returns false for elements that must not be probed (non-differentiable points).
using ProbeFilter = std::function<bool(std::size_t input, std::size_t element)>;

// Compares `grad(inputs)` against central differences of `loss` around `inputs`.
// The error per element is |analytic - numeric| / max(1, |numeric|); the
// maximum over all probed elements is returned. A non-finite loss or gradient
// throws DomainError naming the input and element.
inline GradCheckResult GradCheck(const ScalarFn& loss, const GradFn& grad,
                                 std::vector<Tensor<double>> inputs, double eps = 1e-6,
                                 const ProbeFilter& filter = nullptr) {
  const std::vector<Tensor<double>> analytic = grad(inputs);
  if (analytic.size() != inputs.size()) {
    throw ShapeError("grad_check: gradient count " + std::to_string(analytic.size()) +
                     " does not match input count " + std::to_string(inputs.size()));
  }
  GradCheckResult result;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    CheckDims(analytic[i], inputs[i].dims(), "grad_check gradient " + std::to_string(i));
    for (std::size_t e = 0; e < inputs[i].size(); ++e) {
      if (filter && !filter(i, e)) continue;
      const double saved = inputs[i][e];
      inputs[i][e] = saved + eps;
      const double up = loss(inputs);
      inputs[i][e] = saved - eps;
      const double down = loss(inputs);
      inputs[i][e] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[i][e];
      if (!std::isfinite(up) || !std::isfinite(down) || !std::isfinite(a)) {
        throw DomainError("grad_check: non-finite value at input " + std::to_string(i) +
                          " element " + std::to_string(e));
      }
      const double err = std::abs(a - numeric) / std::max(1.0, std::abs(numeric));
      if (err > result.max_relative_error) {
        result = {err, i, e};
      }
    }
  }
  return result;
}

// Scalar projection <r, y> used to turn a tensor-valued op into a loss.
inline double Project(const Tensor<double>& r, const Tensor<double>& y) {
  if (r.size() != y.size()) throw ShapeError("project: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) acc += r[i] * y[i];
  return acc;
}

}  // namespace convoice
