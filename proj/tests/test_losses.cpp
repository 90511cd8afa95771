#include "doctest.h"

#include <cmath>

#include "ctc_grid.hpp"
#include "convoice/losses.hpp"
#include "convoice/params.hpp"

using namespace convoice;

TEST_CASE("ctc single frame single path") {
  const std::vector<int> target{2};
  CHECK(CtcLoss(Tensor<double>({1, 3}, 0.0), target).loss == doctest::Approx(-std::log(1.0 / 3.0)).epsilon(1e-14));
}

TEST_CASE("ctc two frames enumerated by hand") {
  const double p1[2] = {0.3, 0.7}, p2[2] = {0.6, 0.4};  // (blank, token)
  Tensor<double> probs = Tensor<double>::FromList({2, 2}, {p1[0], p1[1], p2[0], p2[1]});
  Tensor<double> logits({2, 2});
  for (std::size_t i = 0; i < 4; ++i) logits[i] = std::log(probs[i]);
  const double expected = -std::log(p1[1] * p2[1] + p1[1] * p2[0] + p1[0] * p2[1]);
  const std::vector<int> target{1};
  CHECK(std::abs(CtcLoss(logits, target).loss - expected) < 1e-12);
  CHECK(std::abs(CtcBruteForce(probs, target) - expected) < 1e-12);
}

TEST_CASE("ctc matches brute force on a random instance") {
  Rng rng(3);
  Tensor<double> logits = rng.NormalTensor<double>({5, 4}, 1.0);
  const Tensor<double> probs = Softmax(logits);
  const std::vector<int> target{3, 1};
  CHECK(std::abs(CtcLoss(logits, target).loss - CtcBruteForce(probs, target)) < 1e-10);
}

TEST_CASE("ctc matches brute force over the full grid") {
  const testing::CtcGridResult r = testing::RunCtcGrid();
  CHECK(r.disagreements == 0);
  CHECK(r.compared > 1000);
  CHECK(r.max_abs_error < 1e-10);
}

TEST_CASE("ctc infeasibility and bounds") {
  const std::vector<int> long_target{1, 2, 1};
  CHECK_THROWS_AS(CtcLoss(Tensor<double>({2, 3}), long_target), InputError);
  CHECK_THROWS_AS(CtcBruteForce(Softmax(Tensor<double>({2, 3})), long_target), InputError);
  const std::vector<int> repeat{1, 1};
  CHECK_THROWS_AS(CtcLoss(Tensor<double>({2, 3}), repeat), InputError);
  CHECK_NOTHROW(CtcLoss(Tensor<double>({3, 3}), repeat));
  CHECK_THROWS_AS(CtcBruteForce(Softmax(Tensor<double>({9, 3})), std::vector<int>{}), ShapeError);
  const std::vector<int> blank_token{0};
  CHECK_THROWS_AS(CtcLoss(Tensor<double>({3, 3}), blank_token), InputError);
}

TEST_CASE("ctc empty target with certain blanks costs nothing") {
  Tensor<double> probs({4, 3});
  for (std::size_t t = 0; t < 4; ++t) probs.at(t, 0) = 1.0;
  CHECK(CtcBruteForce(probs, std::vector<int>{}) == doctest::Approx(0.0));
  Tensor<double> logits({4, 3}, -1e3);
  for (std::size_t t = 0; t < 4; ++t) logits.at(t, 0) = 0.0;
  CHECK(CtcLoss(logits, std::vector<int>{}).loss == doctest::Approx(0.0));
}

TEST_CASE("ctc is invariant to per-frame logit shifts") {
  Rng rng(4);
  Tensor<double> logits = rng.NormalTensor<double>({6, 4}, 1.0);
  const std::vector<int> target{2, 3, 2};
  const double base = CtcLoss(logits, target).loss;
  for (std::size_t t = 0; t < 6; ++t) {
    const double shift = rng.Normal(0.0, 5.0);
    for (std::size_t k = 0; k < 4; ++k) logits.at(t, k) += shift;
  }
  CHECK(std::abs(CtcLoss(logits, target).loss - base) < 1e-10);
}

TEST_CASE("greedy collapse") {
  // argmax path: 1 1 0 2 2 0 0 2 -> [1, 2, 2]
  const int path[] = {1, 1, 0, 2, 2, 0, 0, 2};
  Tensor<double> logits({8, 3});
  for (std::size_t t = 0; t < 8; ++t) logits.at(t, path[t]) = 1.0;
  CHECK(GreedyCollapse(logits) == std::vector<int>{1, 2, 2});
}

TEST_CASE("ge2e closed form for orthogonal speakers") {
  Tensor<double> e({2, 2, 2});
  e.at(0, 0, 0) = e.at(0, 1, 0) = 1.0;
  e.at(1, 0, 1) = e.at(1, 1, 1) = 1.0;
  const Ge2eResult r = Ge2eLoss(e, 1.0, 0.0);
  CHECK(r.loss == doctest::Approx(4.0 * std::log(1.0 + std::exp(-1.0))).epsilon(1e-14));
  CHECK(r.similarity.at(0, 0, 0) == doctest::Approx(1.0));
  CHECK(r.similarity.at(0, 0, 1) == doctest::Approx(0.0));
}

TEST_CASE("ge2e with identical embeddings is N M ln N") {
  Tensor<double> e({3, 2, 4});
  for (std::size_t j = 0; j < 3; ++j)
    for (std::size_t i = 0; i < 2; ++i) e.at(j, i, 1) = 1.0;
  CHECK(Ge2eLoss(e, 10.0, -5.0).loss == doctest::Approx(3 * 2 * std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("ge2e matches an independent oracle and b has no gradient") {
  Rng rng(5);
  const std::size_t n = 3, m = 3, d = 4;
  Tensor<double> e = rng.NormalTensor<double>({n, m, d}, 1.0);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < m; ++i) {
      double s = 0;
      for (std::size_t k = 0; k < d; ++k) s += e.at(j, i, k) * e.at(j, i, k);
      for (std::size_t k = 0; k < d; ++k) e.at(j, i, k) /= std::sqrt(s);
    }
  const double w = 3.0, b = -1.0;
  auto cosine = [&](const std::vector<double>& a, const std::vector<double>& c) {
    double ab = 0, aa = 0, cc = 0;
    for (std::size_t k = 0; k < d; ++k) ab += a[k] * c[k], aa += a[k] * a[k], cc += c[k] * c[k];
    return ab / std::sqrt(aa * cc);
  };
  double loss = 0;
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < m; ++i) {
      std::vector<double> eji(d);
      for (std::size_t k = 0; k < d; ++k) eji[k] = e.at(j, i, k);
      std::vector<double> s(n);
      for (std::size_t c = 0; c < n; ++c) {
        std::vector<double> centroid(d, 0.0);
        std::size_t count = 0;
        for (std::size_t u = 0; u < m; ++u) {
          if (c == j && u == i) continue;
          for (std::size_t k = 0; k < d; ++k) centroid[k] += e.at(c, u, k);
          ++count;
        }
        for (auto& x : centroid) x /= static_cast<double>(count);
        s[c] = w * cosine(eji, centroid) + b;
      }
      double z = 0;
      for (double x : s) z += std::exp(x);
      loss += -s[j] + std::log(z);
    }
  const Ge2eResult r = Ge2eLoss(e, w, b);
  CHECK(std::abs(r.loss - loss) < 1e-12);
  CHECK(r.grad_b == doctest::Approx(0.0));
}

TEST_CASE("ge2e loss falls when own-speaker similarity rises") {
  Rng rng(6);
  Tensor<double> e = rng.NormalTensor<double>({2, 3, 3}, 1.0);
  auto normalize = [](Tensor<double>& t) {
    for (std::size_t j = 0; j < t.dim(0); ++j)
      for (std::size_t i = 0; i < t.dim(1); ++i) {
        double s = 0;
        for (std::size_t k = 0; k < t.dim(2); ++k) s += t.at(j, i, k) * t.at(j, i, k);
        for (std::size_t k = 0; k < t.dim(2); ++k) t.at(j, i, k) /= std::sqrt(s);
      }
  };
  normalize(e);
  const double before = Ge2eLoss(e, 5.0, -2.0).loss;
  // Pull speaker 0's utterances toward their common mean.
  Tensor<double> pulled = e;
  for (std::size_t k = 0; k < 3; ++k) {
    const double mean = (e.at(0, 0, k) + e.at(0, 1, k) + e.at(0, 2, k)) / 3.0;
    for (std::size_t i = 0; i < 3; ++i) pulled.at(0, i, k) = 0.5 * (e.at(0, i, k) + mean);
  }
  normalize(pulled);
  const Ge2eResult after = Ge2eLoss(pulled, 5.0, -2.0);
  double own_before = 0, own_after = 0;
  const Ge2eResult rb = Ge2eLoss(e, 5.0, -2.0);
  for (std::size_t i = 0; i < 3; ++i) own_before += rb.similarity.at(0, i, 0), own_after += after.similarity.at(0, i, 0);
  REQUIRE(own_after > own_before);
  CHECK(after.loss < before);
}

TEST_CASE("ge2e input errors") {
  Tensor<double> e({1, 2, 3}, 0.5);
  CHECK_THROWS_AS(Ge2eLoss(e, 1.0, 0.0, false), InputError);
  Tensor<double> bad_norm({2, 2, 3}, 0.5);
  CHECK_THROWS_AS(Ge2eLoss(bad_norm, 1.0, 0.0), InputError);
  CHECK_THROWS_AS(Ge2eLoss(bad_norm, -1.0, 0.0, false), InputError);
}

TEST_CASE("l2 loss") {
  Rng rng(7);
  const auto a = rng.NormalTensor<double>({3, 4}, 1.0), b = rng.NormalTensor<double>({3, 4}, 1.0);
  CHECK(L2Loss(a, a).loss == 0.0);
  Tensor<double> shifted = a;
  for (auto& v : shifted.data()) v += 1.0;
  CHECK(L2Loss(shifted, a).loss == doctest::Approx(1.0).epsilon(1e-15));
  double s = 0;
  for (std::size_t i = 0; i < 12; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  CHECK(L2Loss(a, b).loss == doctest::Approx(s / 12.0).epsilon(1e-15));
  CHECK_THROWS_AS(L2Loss(a, Tensor<double>({4, 3})), ShapeError);
}
