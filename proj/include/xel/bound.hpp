#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "xel/functions.hpp"

namespace xel {

using BigInt = boost::multiprecision::cpp_int;

/// Half-open cells of width delta anchored at the support's lower corner.
///
/// The last cell on an axis may overhang the support; it carries the
/// fraction of its width that lies inside as a weight.
class Covering {
 public:
  Covering(Box support, double delta);
  /// K cells along the widest axis.
  static Covering with_points(const Box& support, std::size_t k);

  const Box& support() const { return support_; }
  double delta() const { return delta_; }
  std::size_t dims() const { return counts_.size(); }
  const std::vector<std::size_t>& counts() const { return counts_; }
  /// Total number of cells, saturating at SIZE_MAX.
  std::size_t cell_count() const { return cell_count_; }
  bool overflows() const { return overflow_; }

  /// Cell index along each axis of point x (clamped into range).
  void locate(std::span<const double> x, std::span<std::size_t> index) const;
  void center(std::span<const std::size_t> index, std::span<double> out) const;
  double weight(std::span<const std::size_t> index) const;
  /// Box spanned by all cells (support plus overhang).
  Box extent() const;

  /// Visits every cell: index, center, weight. Cells are enumerated in
  /// row-major order of their axis indices.
  void for_each_cell(const std::function<void(std::span<const std::size_t>, std::span<const double>, double)>& fn) const;

 private:
  Box support_;
  double delta_;
  std::vector<std::size_t> counts_;
  std::vector<double> last_weight_;
  std::size_t cell_count_ = 1;
  bool overflow_ = false;
};

/// f-bar: f sampled at each cell center, constant within the cell.
class PiecewiseConstantFunction {
 public:
  PiecewiseConstantFunction(const SmoothFunction& f, Covering covering);

  const Covering& covering() const { return covering_; }
  const SmoothFunction& source() const { return *f_; }
  /// Definition-level resolution factor: the smallest piece, i.e. delta.
  double resolution_factor() const { return covering_.delta(); }

  /// Value of the cell containing x; zero outside the support.
  void eval(std::span<const double> x, std::span<double> y) const;
  /// Value attached to a cell.
  void cell_value(std::span<const std::size_t> index, std::span<double> y) const;
  bool materialized() const { return !values_.empty(); }

 private:
  const SmoothFunction* f_;
  Covering covering_;
  std::vector<double> values_;  // cell-major, empty when too many cells
};

PiecewiseConstantFunction build_pc_approx(const SmoothFunction& f, double delta);

/// Smallest piece length of a 1-D step function with the given interior
/// breakpoints on [lo, hi].
double resolution_factor(std::span<const double> breakpoints, double lo, double hi);

using Field = std::function<void(std::span<const double> x, std::span<double> y)>;

struct QuadratureOptions {
  double rel_tol = 1e-4;
  int max_levels = 12;
  std::size_t qmc_points = 1u << 16;
  std::uint64_t qmc_seed = 0x51AB;
  std::size_t grid_budget = std::size_t{1} << 25;  // evaluations per level
};

struct Integral {
  double value = 0.0;
  int levels = 0;
  bool quasi_random = false;
};

/// Integral of g over the box: composite midpoint with dyadic refinement
/// for up to 3 axes, quasi-random sampling beyond.
Integral integrate(const std::function<double(std::span<const double>)>& g, const Box& box,
                   const QuadratureOptions& opt = {});

/// d_p(f, g) over the support.
double dp_distance(const Field& f, const Field& g, std::size_t out_size, double p, const Box& support,
                   const QuadratureOptions& opt = {});
double dp_distance(const SmoothFunction& f, const SmoothFunction& g, double p, const QuadratureOptions& opt = {});

/// d_p(f, f-bar) integrated cell by cell over the covering with cell weights.
Integral approximation_error_integral(const SmoothFunction& f, const PiecewiseConstantFunction& fbar, double p,
                                      const QuadratureOptions& opt = {});
double dp_distance(const SmoothFunction& f, const PiecewiseConstantFunction& fbar, double p,
                   const QuadratureOptions& opt = {});

/// Sum over cells of w * sum_{i,j} |sum_{k,l} df^j_i/dX^k_l|^p at the
/// center. Cells within `singular_radius` of the singular set are skipped.
struct DerivativeMass {
  double value = 0.0;
  bool estimated = false;  // quasi-random estimate instead of enumeration
  std::size_t skipped = 0;
};
DerivativeMass derivative_mass(const SmoothFunction& f, const Covering& covering, double p,
                               double singular_radius = 1e-6, const QuadratureOptions& opt = {});

struct Bound1D {
  double delta = 0.0;
  double derivative_mass = 0.0;
  bool unconstrained = false;
};

/// sqrt(4 eps / sum |f'|) on the given covering; 1-D, p = 1.
Bound1D delta_bound_1d(const SmoothFunction& f, double epsilon, const Covering& covering);

/// One evaluation of the general right-hand side on a fixed covering.
Bound1D delta_bound_step(const SmoothFunction& f, double epsilon, double p, const Covering& covering);

struct LayerEstimate {
  BigInt count;
  bool floored = false;  // delta > 1, count is the floor m
};

/// m * ceil((1/delta)^(d*m)), exact.
LayerEstimate layer_count_estimate(double delta, std::size_t d, std::size_t m);

struct BoundReport {
  std::string function_id;
  double epsilon = 0.0;
  double p = 1.0;
  std::size_t m = 1, n = 1, d = 1;
  double delta_max = 0.0;
  double derivative_mass = 0.0;
  LayerEstimate layer_estimate;
  int iterations = 0;
  bool converged = false;
  bool diverged = false;
  bool unconstrained = false;
  bool mass_estimated = false;
  std::vector<double> history;  // delta iterates, starting point first
};

struct FixedPointOptions {
  double rel_change = 0.01;
  int max_iterations = 50;
  std::size_t start_cells_per_axis = 16;
  std::size_t start_cell_cap = std::size_t{1} << 16;
  double singular_radius = 1e-6;
  QuadratureOptions quadrature;
};

/// Fixed point of delta = RHS(covering(delta)).
BoundReport delta_bound_general(const SmoothFunction& f, double epsilon, double p, const FixedPointOptions& opt = {});

struct EmpiricalOptions {
  double rel_tol = 1e-4;           // bracket width relative to delta
  double monotone_tol_grid = 1e-3;  // relative slack for the monotonicity premise
  double monotone_tol_qmc = 5e-2;
  QuadratureOptions quadrature;
};

struct EmpiricalResult {
  double delta_star = 0.0;
  bool unconstrained = false;  // error at full width already within epsilon
  std::vector<std::pair<double, double>> probes;  // (delta, d_p error)
};

/// Largest delta with d_p(f, f-bar_delta) <= epsilon, by bisection.
EmpiricalResult empirical_delta_star(const SmoothFunction& f, double epsilon, double p,
                                     const EmpiricalOptions& opt = {});

}  // namespace xel
