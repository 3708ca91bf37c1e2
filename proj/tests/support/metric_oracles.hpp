#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <vector>

#include "xel/metrics.hpp"
#include "xel/rng.hpp"

// Exhaustive reference implementations: build the inclusive k-NN / top-k set
// by full sorting and test membership.

namespace xel::testing {

inline double oracle_failure_at_k(const RegressionEvalSet& e, std::size_t k) {
  const std::size_t n = e.size(), dim = e.dim;
  std::size_t fails = 0;
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<double> dist(n);
    for (std::size_t y = 0; y < n; ++y) {
      double acc = 0.0;
      for (std::size_t c = 0; c < dim; ++c)
        acc += std::abs(e.predictions[s * dim + c] - e.targets[y * dim + c]);
      dist[y] = acc;
    }
    std::vector<double> sorted = dist;
    std::sort(sorted.begin(), sorted.end());
    const double kth = sorted[k - 1];
    bool member = false;
    for (std::size_t y = 0; y < n; ++y)
      if (dist[y] <= kth && y == s) member = true;
    if (!member) ++fails;
  }
  return static_cast<double>(fails) / static_cast<double>(n);
}

inline double oracle_failure_at_k(const ClassificationEvalSet& e, std::size_t k) {
  const std::size_t n = e.size(), kc = e.k_classes;
  std::size_t fails = 0;
  for (std::size_t s = 0; s < n; ++s) {
    bool ok = true;
    for (std::size_t p = 0; p < e.positions; ++p) {
      const std::size_t row = s * e.positions + p;
      std::vector<double> probs(e.probabilities.begin() + static_cast<std::ptrdiff_t>(row * kc),
                                e.probabilities.begin() + static_cast<std::ptrdiff_t>((row + 1) * kc));
      std::vector<double> sorted = probs;
      std::sort(sorted.rbegin(), sorted.rend());
      if (probs[e.targets[row]] < sorted[k - 1]) ok = false;
    }
    if (!ok) ++fails;
  }
  return static_cast<double>(fails) / static_cast<double>(n);
}

/// Small integer-grid regression set; values collide often, exercising ties.
inline RegressionEvalSet random_regression_set(Rng& rng) {
  RegressionEvalSet e;
  const std::size_t n = 1 + rng.below(8);
  e.dim = 1 + rng.below(3);
  for (std::size_t i = 0; i < n * e.dim; ++i) {
    e.targets.push_back(static_cast<double>(rng.below(5)));
    e.predictions.push_back(static_cast<double>(rng.below(5)));
  }
  return e;
}

inline ClassificationEvalSet random_classification_set(Rng& rng) {
  ClassificationEvalSet e;
  const std::size_t n = 1 + rng.below(8);
  e.k_classes = 2 + rng.below(5);
  e.positions = 1 + rng.below(3);
  for (std::size_t i = 0; i < n * e.positions; ++i) {
    e.targets.push_back(rng.below(e.k_classes));
    for (std::size_t c = 0; c < e.k_classes; ++c) e.probabilities.push_back(static_cast<double>(rng.below(4)));
  }
  return e;
}

}  // namespace xel::testing
