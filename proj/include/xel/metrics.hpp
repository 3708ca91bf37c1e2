#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace xel {

/// Expt-I evaluation: one output vector per sample in the concatenated
/// output space. The neighbor pool is the set of all targets.
struct RegressionEvalSet {
  std::size_t dim = 0;
  std::vector<double> predictions;  // count x dim, row-major
  std::vector<double> targets;      // count x dim, row-major

  std::size_t size() const { return dim == 0 ? 0 : targets.size() / dim; }
};

/// Expt-II evaluation: per sample, `positions` class-probability vectors.
struct ClassificationEvalSet {
  std::size_t k_classes = 0;
  std::size_t positions = 1;
  std::vector<double> probabilities;  // count x positions x k_classes
  std::vector<std::size_t> targets;   // count x positions

  std::size_t size() const { return positions == 0 ? 0 : targets.size() / positions; }
};

double l1_distance(std::span<const double> a, std::span<const double> b);

/// Per sample, the number of pool targets strictly d1-closer to the
/// prediction than the sample's own target.
std::vector<std::size_t> closer_counts(const RegressionEvalSet& e);

/// Per sample, the largest (over positions) number of classes with
/// probability strictly above the target class.
std::vector<std::size_t> outranking_counts(const ClassificationEvalSet& e);

double failure_rate(const RegressionEvalSet& e);
double failure_rate(const ClassificationEvalSet& e);

/// Ties at the k-th distance (or probability) are admitted as neighbors.
double failure_rate_at_k(const RegressionEvalSet& e, std::size_t k);
double failure_rate_at_k(const ClassificationEvalSet& e, std::size_t k);

/// Failure rate at each k from precomputed counts; k is not range-checked.
double failure_rate_from_counts(std::span<const std::size_t> counts, std::size_t k);

/// Indices of the k nearest pool points (pool is count x dim) under d1,
/// ordered by distance then index.
std::vector<std::size_t> nn_query(std::span<const double> pool, std::size_t dim, std::span<const double> point,
                                  std::size_t k);

}  // namespace xel
