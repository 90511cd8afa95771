// Exhaustive comparison of the forward-backward CTC loss against path
// enumeration, shared by the unit tests and the acceptance runner.

#pragma once

#include <cmath>
#include <vector>

#include "convoice/losses.hpp"
#include "convoice/params.hpp"

namespace convoice::testing {

struct CtcGridResult {
  double max_abs_error = 0.0;
  std::size_t compared = 0;    // feasible instances
  std::size_t infeasible = 0;  // both sides rejected the target
  std::size_t disagreements = 0;  // one side rejected, the other did not
};

inline CtcGridResult RunCtcGrid(std::size_t tables_per_cell = 20, std::uint64_t seed = 2024) {
  CtcGridResult r;
  Rng rng(seed);
  for (std::size_t t = 1; t <= 6; ++t)
    for (std::size_t v = 2; v <= 4; ++v)
      for (std::size_t len = 0; len <= 3; ++len)
        for (std::size_t n = 0; n < tables_per_cell; ++n) {
          std::vector<int> target;
          for (std::size_t i = 0; i < len; ++i) target.push_back(1 + static_cast<int>(rng.Index(v - 1)));
          Tensor<double> probs({t, v}), logits({t, v});
          for (std::size_t s = 0; s < t; ++s) {
            double sum = 0;
            for (std::size_t k = 0; k < v; ++k) sum += probs.at(s, k) = rng.Uniform(0.05, 1.0);
            for (std::size_t k = 0; k < v; ++k) {
              probs.at(s, k) /= sum;
              logits.at(s, k) = std::log(probs.at(s, k));
            }
          }
          bool fb_ok = true, bf_ok = true;
          double fb = 0, bf = 0;
          try {
            fb = CtcLoss(logits, target).loss;
          } catch (const InputError&) {
            fb_ok = false;
          }
          try {
            bf = CtcBruteForce(probs, target);
          } catch (const InputError&) {
            bf_ok = false;
          }
          if (fb_ok != bf_ok) {
            ++r.disagreements;
          } else if (!fb_ok) {
            ++r.infeasible;
          } else {
            ++r.compared;
            r.max_abs_error = std::max(r.max_abs_error, std::abs(fb - bf));
          }
        }
  return r;
}

}  // namespace convoice::testing
