#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace xel {

/// Axis-aligned box, one interval per flattened input coordinate.
struct Box {
  std::vector<double> lo, hi;

  std::size_t dims() const { return lo.size(); }
  double width() const;  // largest edge length
  double volume() const;
  bool contains(std::span<const double> x) const;
};

/// f: R^{d x m} -> R^{d x n} with analytic partials on a compact box.
///
/// Inputs are flattened row-major from d x m (coordinate k of token l at
/// k*m + l); outputs likewise from d x n.
class SmoothFunction {
 public:
  using EvalFn = std::function<void(std::span<const double> x, std::span<double> y)>;
  /// Jacobian (d*n) x (d*m), row-major, in the flattened layouts above.
  using JacobianFn = std::function<void(std::span<const double> x, std::span<double> jac)>;
  /// Distance from x to the set where partials are undefined.
  using SingularDistanceFn = std::function<double(std::span<const double> x)>;

  SmoothFunction(std::string id, std::size_t m, std::size_t n, std::size_t d, Box support, EvalFn eval,
                 JacobianFn jacobian, SingularDistanceFn singular = nullptr);

  const std::string& id() const { return id_; }
  std::size_t m() const { return m_; }
  std::size_t n() const { return n_; }
  std::size_t d() const { return d_; }
  std::size_t input_size() const { return m_ * d_; }
  std::size_t output_size() const { return n_ * d_; }
  const Box& support() const { return support_; }

  void eval(std::span<const double> x, std::span<double> y) const;
  std::vector<double> eval(std::span<const double> x) const;

  /// Full Jacobian; throws SingularityError on the singular set.
  void jacobian(std::span<const double> x, std::span<double> jac) const;

  /// d f(X)^j_i / d X^k_l: output token i, output coordinate j, input
  /// coordinate k, input token l.
  double partial(std::span<const double> x, std::size_t i, std::size_t j, std::size_t k, std::size_t l) const;

  double singular_distance(std::span<const double> x) const;

 private:
  std::string id_;
  std::size_t m_, n_, d_;
  Box support_;
  EvalFn eval_;
  JacobianFn jacobian_;
  SingularDistanceFn singular_;
};

// Registry. Built-ins: m4n3, m2n3, m3n3, m4n1, m4n2 (token-wise free
// variables), and the 1-D test functions linear1d, const1d, twox1d,
// square1d, sin3x1d on [0, 1].
const SmoothFunction& find_function(const std::string& id);
void register_function(SmoothFunction f);
std::vector<std::string> function_ids();

/// sign(x) * sqrt(|x|).
double signed_root(double x);

// Generator suite, driven by X1 alone.
std::vector<std::string> suite_variants();
bool is_suite_variant(const std::string& id);
std::size_t suite_inputs(const std::string& variant);
std::size_t suite_outputs(const std::string& variant);

struct SuitePoint {
  std::vector<double> x;  // X1..Xm
  std::vector<double> y;  // Y1..Yn
};

/// Derived inputs and outputs for X1 in (-1, 1).
SuitePoint eval_suite(const std::string& variant, double x1);

/// dY_j/dX1 through the chain X1 -> X2..X4. Singular at X1 = 0.
std::vector<double> partials(const std::string& variant, double x1);

/// Equal-frequency binning of each output variable.
class QuantizedFunction {
 public:
  QuantizedFunction(std::string base, std::size_t k_classes, std::vector<std::vector<double>> edges);

  const std::string& base() const { return base_; }
  std::size_t k_classes() const { return k_; }
  std::size_t outputs() const { return edges_.size(); }
  const std::vector<std::vector<double>>& bin_edges() const { return edges_; }

  /// Number of edges <= y for output variable `output`.
  std::size_t class_of(std::size_t output, double y) const;
  std::vector<std::size_t> classes(std::span<const double> y) const;

 private:
  std::string base_;
  std::size_t k_;
  std::vector<std::vector<double>> edges_;
};

/// calibration: samples x n output values, row-major.
QuantizedFunction fit_quantizer(const std::string& base, std::size_t k_classes, std::size_t n_outputs,
                                std::span<const double> calibration);

}  // namespace xel
