// convoice/losses.cpp

#include "convoice/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace convoice {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double LogAdd(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  if (a < b) std::swap(a, b);
  return a + std::log1p(std::exp(b - a));
}

void CheckTarget(std::span<const int> target, std::size_t vocab, int blank) {
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i] == blank || target[i] < 0 || static_cast<std::size_t>(target[i]) >= vocab) {
      throw InputError("ctc: target[" + std::to_string(i) + "] = " + std::to_string(target[i]) +
                       " is not a non-blank token below vocab size " + std::to_string(vocab));
    }
  }
}

}  // namespace

Tensor<double> Softmax(const Tensor<double>& logits) {
  CheckRank(logits, 2, "softmax input");
  Tensor<double> out(logits.dims());
  for (std::size_t t = 0; t < logits.dim(0); ++t) {
    const double* x = logits.row(t);
    const double mx = *std::max_element(x, x + logits.dim(1));
    double z = 0.0;
    for (std::size_t k = 0; k < logits.dim(1); ++k) z += std::exp(x[k] - mx);
    for (std::size_t k = 0; k < logits.dim(1); ++k) out.at(t, k) = std::exp(x[k] - mx) / z;
  }
  return out;
}

CtcResult CtcLoss(const Tensor<double>& logits, std::span<const int> target, int blank) {
  CheckRank(logits, 2, "ctc logits");
  const std::size_t steps = logits.dim(0);
  const std::size_t vocab = logits.dim(1);
  if (blank < 0 || static_cast<std::size_t>(blank) >= vocab) throw InputError("ctc: blank outside vocab");
  CheckTarget(target, vocab, blank);

  // Blank-interleaved extended label sequence.
  const std::size_t states = 2 * target.size() + 1;
  std::vector<int> ext(states, blank);
  for (std::size_t i = 0; i < target.size(); ++i) ext[2 * i + 1] = target[i];
  auto can_skip = [&](std::size_t s) {  // transition s-2 -> s allowed
    return s >= 2 && ext[s] != blank && ext[s] != ext[s - 2];
  };

  Tensor<double> logp(logits.dims());
  for (std::size_t t = 0; t < steps; ++t) {
    const double* x = logits.row(t);
    const double mx = *std::max_element(x, x + vocab);
    double z = 0.0;
    for (std::size_t k = 0; k < vocab; ++k) z += std::exp(x[k] - mx);
    const double lz = mx + std::log(z);
    for (std::size_t k = 0; k < vocab; ++k) logp.at(t, k) = x[k] - lz;
  }

  // alpha includes the emission at t; beta covers emissions after t only.
  std::vector<double> alpha(steps * states, kNegInf), beta(steps * states, kNegInf);
  auto A = [&](std::size_t t, std::size_t s) -> double& { return alpha[t * states + s]; };
  auto B = [&](std::size_t t, std::size_t s) -> double& { return beta[t * states + s]; };

  A(0, 0) = logp.at(0, static_cast<std::size_t>(ext[0]));
  if (states > 1) A(0, 1) = logp.at(0, static_cast<std::size_t>(ext[1]));
  for (std::size_t t = 1; t < steps; ++t) {
    for (std::size_t s = 0; s < states; ++s) {
      double acc = A(t - 1, s);
      if (s >= 1) acc = LogAdd(acc, A(t - 1, s - 1));
      if (can_skip(s)) acc = LogAdd(acc, A(t - 1, s - 2));
      if (acc != kNegInf) A(t, s) = acc + logp.at(t, static_cast<std::size_t>(ext[s]));
    }
  }
  double log_prob = A(steps - 1, states - 1);
  if (states > 1) log_prob = LogAdd(log_prob, A(steps - 1, states - 2));
  if (log_prob == kNegInf) {
    throw InputError("ctc: target of length " + std::to_string(target.size()) +
                     " is infeasible for " + std::to_string(steps) + " frames");
  }

  B(steps - 1, states - 1) = 0.0;
  if (states > 1) B(steps - 1, states - 2) = 0.0;
  for (std::size_t t = steps - 1; t-- > 0;) {
    for (std::size_t s = 0; s < states; ++s) {
      double acc = B(t + 1, s) == kNegInf ? kNegInf
                                          : B(t + 1, s) + logp.at(t + 1, static_cast<std::size_t>(ext[s]));
      if (s + 1 < states && B(t + 1, s + 1) != kNegInf) {
        acc = LogAdd(acc, B(t + 1, s + 1) + logp.at(t + 1, static_cast<std::size_t>(ext[s + 1])));
      }
      if (s + 2 < states && can_skip(s + 2) && B(t + 1, s + 2) != kNegInf) {
        acc = LogAdd(acc, B(t + 1, s + 2) + logp.at(t + 1, static_cast<std::size_t>(ext[s + 2])));
      }
      B(t, s) = acc;
    }
  }

  CtcResult r{-log_prob, Tensor<double>(logits.dims())};
  std::vector<double> occupancy(vocab);
  for (std::size_t t = 0; t < steps; ++t) {
    std::fill(occupancy.begin(), occupancy.end(), kNegInf);
    for (std::size_t s = 0; s < states; ++s) {
      const double v = A(t, s) + B(t, s);
      if (A(t, s) == kNegInf || B(t, s) == kNegInf) continue;
      auto& o = occupancy[static_cast<std::size_t>(ext[s])];
      o = LogAdd(o, v);
    }
    for (std::size_t k = 0; k < vocab; ++k) {
      const double posterior = occupancy[k] == kNegInf ? 0.0 : std::exp(occupancy[k] - log_prob);
      r.grad.at(t, k) = std::exp(logp.at(t, k)) - posterior;
    }
  }
  return r;
}

double CtcBruteForce(const Tensor<double>& probs, std::span<const int> target, int blank) {
  CheckRank(probs, 2, "ctc brute force probs");
  const std::size_t steps = probs.dim(0);
  const std::size_t vocab = probs.dim(1);
  if (steps > 8 || vocab > 5) {
    throw ShapeError("ctc brute force: T=" + std::to_string(steps) + ", V=" + std::to_string(vocab) +
                     " exceeds the enumeration bound (T <= 8, V <= 5)");
  }
  CheckTarget(target, vocab, blank);
  std::size_t paths = 1;
  for (std::size_t t = 0; t < steps; ++t) paths *= vocab;
  std::vector<std::size_t> label(steps);
  std::vector<int> collapsed;
  double total = 0.0;
  for (std::size_t code = 0; code < paths; ++code) {
    std::size_t c = code;
    for (std::size_t t = 0; t < steps; ++t) {
      label[t] = c % vocab;
      c /= vocab;
    }
    collapsed.clear();
    for (std::size_t t = 0; t < steps; ++t) {
      const int l = static_cast<int>(label[t]);
      if (l == blank) continue;
      if (t > 0 && label[t - 1] == label[t]) continue;
      collapsed.push_back(l);
    }
    if (!std::equal(collapsed.begin(), collapsed.end(), target.begin(), target.end())) continue;
    double p = 1.0;
    for (std::size_t t = 0; t < steps; ++t) p *= probs.at(t, label[t]);
    total += p;
  }
  if (!(total > 0.0)) throw InputError("ctc brute force: no path collapses to the target");
  return -std::log(total);
}

std::vector<int> GreedyCollapse(const Tensor<double>& logits, int blank) {
  CheckRank(logits, 2, "greedy collapse logits");
  std::vector<int> out;
  int prev = -1;
  for (std::size_t t = 0; t < logits.dim(0); ++t) {
    const double* x = logits.row(t);
    const int best = static_cast<int>(std::max_element(x, x + logits.dim(1)) - x);
    if (best != blank && best != prev) out.push_back(best);
    prev = best;
  }
  return out;
}

Ge2eResult Ge2eLoss(const Tensor<double>& embeddings, double w, double b, bool check_unit_norm) {
  CheckRank(embeddings, 3, "ge2e embeddings");
  const std::size_t n = embeddings.dim(0);
  const std::size_t m = embeddings.dim(1);
  const std::size_t d = embeddings.dim(2);
  if (n < 2 || m < 2) throw InputError("ge2e: need at least 2 speakers and 2 utterances each");
  if (!(w > 0.0)) throw InputError("ge2e: scale w must be positive");
  auto emb = [&](std::size_t j, std::size_t i) { return embeddings.data().data() + (j * m + i) * d; };
  auto norm_of = [d](const double* v) {
    double s = 0.0;
    for (std::size_t q = 0; q < d; ++q) s += v[q] * v[q];
    return std::sqrt(s);
  };
  if (check_unit_norm) {
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = 0; i < m; ++i)
        if (std::abs(norm_of(emb(j, i)) - 1.0) > 1e-6) {
          throw InputError("ge2e: embedding (" + std::to_string(j) + ", " + std::to_string(i) +
                           ") is not unit norm");
        }
  }

  Tensor<double> sums({n, d});
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t q = 0; q < d; ++q) sums.at(j, q) += emb(j, i)[q];

  Ge2eResult r{0.0, Tensor<double>(embeddings.dims()), 0.0, 0.0, Tensor<double>({n, m, n})};
  std::vector<double> centroid(d), d_centroid(d), s_row(n), cos_row(n);
  std::vector<std::vector<double>> centroids(n, std::vector<double>(d));
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t q = 0; q < d; ++q) centroids[k][q] = sums.at(k, q) / static_cast<double>(m);
  // Gradient w.r.t. full centroids is accumulated, then spread to members.
  Tensor<double> d_full({n, d});

  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < m; ++i) {
      const double* e = emb(j, i);
      const double e_norm = norm_of(e);
      // Own-speaker centroid without e_ji.
      std::vector<double> own(d);
      for (std::size_t q = 0; q < d; ++q) own[q] = (sums.at(j, q) - e[q]) / static_cast<double>(m - 1);
      for (std::size_t k = 0; k < n; ++k) {
        const std::vector<double>& c = k == j ? own : centroids[k];
        const double c_norm = norm_of(c.data());
        double dot = 0.0;
        for (std::size_t q = 0; q < d; ++q) dot += e[q] * c[q];
        cos_row[k] = dot / (e_norm * c_norm);
        s_row[k] = w * cos_row[k] + b;
        r.similarity.at(j, i, k) = s_row[k];
      }
      const double mx = *std::max_element(s_row.begin(), s_row.end());
      double z = 0.0;
      for (std::size_t k = 0; k < n; ++k) z += std::exp(s_row[k] - mx);
      r.loss += -s_row[j] + mx + std::log(z);

      double* ge = r.grad_embeddings.data().data() + (j * m + i) * d;
      for (std::size_t k = 0; k < n; ++k) {
        const double d_s = std::exp(s_row[k] - mx) / z - (k == j ? 1.0 : 0.0);
        r.grad_w += d_s * cos_row[k];
        r.grad_b += d_s;
        const double d_cos = d_s * w;
        const std::vector<double>& c = k == j ? own : centroids[k];
        const double c_norm = norm_of(c.data());
        for (std::size_t q = 0; q < d; ++q) {
          ge[q] += d_cos * (c[q] / (c_norm * e_norm) - cos_row[k] * e[q] / (e_norm * e_norm));
          d_centroid[q] = d_cos * (e[q] / (e_norm * c_norm) - cos_row[k] * c[q] / (c_norm * c_norm));
        }
        if (k == j) {
          // own = (sum_j - e_ji) / (M - 1): every other member of speaker j.
          for (std::size_t i2 = 0; i2 < m; ++i2) {
            if (i2 == i) continue;
            double* g2 = r.grad_embeddings.data().data() + (j * m + i2) * d;
            for (std::size_t q = 0; q < d; ++q) g2[q] += d_centroid[q] / static_cast<double>(m - 1);
          }
        } else {
          for (std::size_t q = 0; q < d; ++q) d_full.at(k, q) += d_centroid[q];
        }
      }
    }
  }
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < m; ++i) {
      double* g = r.grad_embeddings.data().data() + (k * m + i) * d;
      for (std::size_t q = 0; q < d; ++q) g[q] += d_full.at(k, q) / static_cast<double>(m);
    }
  return r;
}

}  // namespace convoice
