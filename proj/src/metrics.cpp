#include "xel/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "xel/errors.hpp"

namespace xel {

double l1_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s;
}

namespace {

void check(const RegressionEvalSet& e) {
  if (e.dim == 0 || e.targets.empty()) throw DomainError("empty evaluation set");
  if (e.targets.size() % e.dim != 0 || e.predictions.size() != e.targets.size())
    throw DimensionError("evaluation set: predictions and targets disagree in count");
}

void check(const ClassificationEvalSet& e) {
  if (e.k_classes == 0 || e.positions == 0 || e.targets.empty()) throw DomainError("empty evaluation set");
  if (e.targets.size() % e.positions != 0 || e.probabilities.size() != e.targets.size() * e.k_classes)
    throw DimensionError("evaluation set: predictions and targets disagree in count");
  for (std::size_t t : e.targets)
    if (t >= e.k_classes) throw DomainError("class index " + std::to_string(t) + " out of range");
}

void check_k(std::size_t k, std::size_t limit) {
  if (k < 1 || k > limit)
    throw DomainError("k = " + std::to_string(k) + " outside [1, " + std::to_string(limit) + "]");
}

}  // namespace

std::vector<std::size_t> closer_counts(const RegressionEvalSet& e) {
  check(e);
  const std::size_t n = e.size(), dim = e.dim;
  std::span<const double> pool(e.targets);
  std::vector<std::size_t> counts(n, 0);
  for (std::size_t s = 0; s < n; ++s) {
    auto pred = std::span<const double>(e.predictions).subspan(s * dim, dim);
    const double own = l1_distance(pred, pool.subspan(s * dim, dim));
    std::size_t c = 0;
    for (std::size_t y = 0; y < n; ++y)
      if (l1_distance(pred, pool.subspan(y * dim, dim)) < own) ++c;
    counts[s] = c;
  }
  return counts;
}

std::vector<std::size_t> outranking_counts(const ClassificationEvalSet& e) {
  check(e);
  const std::size_t n = e.size(), k = e.k_classes;
  std::vector<std::size_t> counts(n, 0);
  for (std::size_t s = 0; s < n; ++s) {
    std::size_t worst = 0;
    for (std::size_t p = 0; p < e.positions; ++p) {
      const std::size_t row = s * e.positions + p;
      const double* probs = e.probabilities.data() + row * k;
      const double own = probs[e.targets[row]];
      worst = std::max(worst, static_cast<std::size_t>(std::count_if(probs, probs + k, [&](double v) {
                                return v > own;
                              })));
    }
    counts[s] = worst;
  }
  return counts;
}

double failure_rate_from_counts(std::span<const std::size_t> counts, std::size_t k) {
  if (counts.empty()) throw DomainError("empty evaluation set");
  const auto fails = std::count_if(counts.begin(), counts.end(), [&](std::size_t c) { return c >= k; });
  return static_cast<double>(fails) / static_cast<double>(counts.size());
}

double failure_rate(const RegressionEvalSet& e) { return failure_rate_at_k(e, 1); }
double failure_rate(const ClassificationEvalSet& e) { return failure_rate_at_k(e, 1); }

double failure_rate_at_k(const RegressionEvalSet& e, std::size_t k) {
  check(e);
  check_k(k, e.size());
  return failure_rate_from_counts(closer_counts(e), k);
}

double failure_rate_at_k(const ClassificationEvalSet& e, std::size_t k) {
  check(e);
  check_k(k, e.k_classes);
  return failure_rate_from_counts(outranking_counts(e), k);
}

std::vector<std::size_t> nn_query(std::span<const double> pool, std::size_t dim, std::span<const double> point,
                                  std::size_t k) {
  if (dim == 0 || pool.empty()) throw DomainError("nn_query: empty pool");
  if (pool.size() % dim != 0 || point.size() != dim) throw DimensionError("nn_query: dimension mismatch");
  const std::size_t n = pool.size() / dim;
  check_k(k, n);
  std::vector<double> dist(n);
  for (std::size_t i = 0; i < n; ++i) dist[i] = l1_distance(point, pool.subspan(i * dim, dim));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) { return dist[a] < dist[b] || (dist[a] == dist[b] && a < b); });
  idx.resize(k);
  return idx;
}

}  // namespace xel
