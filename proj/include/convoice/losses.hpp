// convoice/losses.hpp
//
// Training objectives: CTC (log-space forward-backward), GE2E (softmax
// variant with leave-one-out own-speaker centroids) and mean-squared L2.

#pragma once

#include <span>
#include <vector>

#include "convoice/tensor.hpp"

namespace convoice {

inline constexpr int kBlank = 0;

struct CtcResult {
  double loss = 0.0;
  Tensor<double> grad;  // d loss / d logits, [T x V]
};

// logits: [T x V] unnormalized scores. Targets exclude the blank (0). An
// empty target is legal (the all-blank path). Throws InputError when no
// alignment of length T can produce the target.
CtcResult CtcLoss(const Tensor<double>& logits, std::span<const int> target, int blank = kBlank);

// Exhaustive enumeration of all V^T label paths over per-frame probabilities
// [T x V]; only for T <= 8 and V <= 5.
double CtcBruteForce(const Tensor<double>& probs, std::span<const int> target, int blank = kBlank);

// Row-wise softmax of [T x V] logits.
Tensor<double> Softmax(const Tensor<double>& logits);

// Per-frame argmax, repeats merged, blanks removed. logits: [T x V].
std::vector<int> GreedyCollapse(const Tensor<double>& logits, int blank = kBlank);

struct Ge2eResult {
  double loss = 0.0;
  Tensor<double> grad_embeddings;  // [N x M x D]
  double grad_w = 0.0;
  double grad_b = 0.0;
  Tensor<double> similarity;  // [N x M x N], S[j, i, k]
};

// embeddings: [N speakers x M utterances x D]. S[j,i,k] = w * cos(e_ji, c_k) + b
// where c_k is speaker k's centroid, except that c_j for e_ji's own speaker
// leaves e_ji out. loss = sum_{j,i} (-S[j,i,j] + logsumexp_k S[j,i,k]).
// With `check_unit_norm`, every embedding must have norm 1 within 1e-6.
Ge2eResult Ge2eLoss(const Tensor<double>& embeddings, double w, double b, bool check_unit_norm = true);

template <typename T>
struct L2Result {
  T loss = 0;
  Tensor<T> grad;
};

// Mean of squared differences; grad = 2 (pred - target) / count.
template <typename T>
L2Result<T> L2Loss(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.dims() != target.dims()) {
    throw ShapeError("l2_loss: prediction " + DimsToString(pred.dims()) + " vs target " +
                     DimsToString(target.dims()));
  }
  L2Result<T> r{T(0), Tensor<T>(pred.dims())};
  const T n = static_cast<T>(pred.size());
  long double acc = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const T d = pred[i] - target[i];
    acc += static_cast<long double>(d) * d;
    r.grad[i] = T(2) * d / n;
  }
  r.loss = static_cast<T>(acc / static_cast<long double>(pred.size()));
  return r;
}

}  // namespace convoice
