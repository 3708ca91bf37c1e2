#include "xel/functions.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>

#include "xel/errors.hpp"

namespace xel {

double Box::width() const {
  double w = 0.0;
  for (std::size_t i = 0; i < lo.size(); ++i) w = std::max(w, hi[i] - lo[i]);
  return w;
}

double Box::volume() const {
  double v = 1.0;
  for (std::size_t i = 0; i < lo.size(); ++i) v *= hi[i] - lo[i];
  return v;
}

bool Box::contains(std::span<const double> x) const {
  if (x.size() != lo.size()) return false;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!(x[i] >= lo[i] && x[i] <= hi[i])) return false;
  return true;
}

SmoothFunction::SmoothFunction(std::string id, std::size_t m, std::size_t n, std::size_t d, Box support,
                               EvalFn eval, JacobianFn jacobian, SingularDistanceFn singular)
    : id_(std::move(id)),
      m_(m),
      n_(n),
      d_(d),
      support_(std::move(support)),
      eval_(std::move(eval)),
      jacobian_(std::move(jacobian)),
      singular_(std::move(singular)) {
  if (m_ == 0 || n_ == 0 || d_ == 0) throw DomainError("function " + id_ + ": arities must be >= 1");
  if (support_.dims() != m_ * d_ || support_.hi.size() != m_ * d_) {
    throw DimensionError("function " + id_ + ": support has " + std::to_string(support_.dims()) +
                         " axes, expected " + std::to_string(m_ * d_));
  }
  for (std::size_t i = 0; i < support_.dims(); ++i) {
    if (!(support_.hi[i] > support_.lo[i])) throw DomainError("function " + id_ + ": empty support axis");
  }
}

void SmoothFunction::eval(std::span<const double> x, std::span<double> y) const {
  if (x.size() != input_size() || y.size() != output_size()) {
    throw DimensionError("function " + id_ + ": wrong input or output size");
  }
  eval_(x, y);
}

std::vector<double> SmoothFunction::eval(std::span<const double> x) const {
  std::vector<double> y(output_size());
  eval(x, y);
  return y;
}

double SmoothFunction::singular_distance(std::span<const double> x) const {
  return singular_ ? singular_(x) : std::numeric_limits<double>::infinity();
}

void SmoothFunction::jacobian(std::span<const double> x, std::span<double> jac) const {
  if (x.size() != input_size() || jac.size() != input_size() * output_size()) {
    throw DimensionError("function " + id_ + ": wrong jacobian buffer size");
  }
  if (singular_distance(x) <= 0.0) throw SingularityError("function " + id_ + ": partials undefined at this point");
  jacobian_(x, jac);
}

double SmoothFunction::partial(std::span<const double> x, std::size_t i, std::size_t j, std::size_t k,
                               std::size_t l) const {
  if (i >= n_ || j >= d_ || k >= d_ || l >= m_) throw DimensionError("function " + id_ + ": partial index out of range");
  std::vector<double> jac(input_size() * output_size());
  jacobian(x, jac);
  return jac[(j * n_ + i) * input_size() + k * m_ + l];
}

double signed_root(double x) { return x < 0.0 ? -std::sqrt(-x) : std::sqrt(x); }

namespace {

struct VariantShape {
  std::size_t m, n;
};

const std::map<std::string, VariantShape>& variant_table() {
  static const std::map<std::string, VariantShape> table{
      {"m4n3", {4, 3}}, {"m2n3", {2, 3}}, {"m3n3", {3, 3}}, {"m4n1", {4, 1}}, {"m4n2", {4, 2}}};
  return table;
}

const VariantShape& variant_shape(const std::string& variant) {
  auto it = variant_table().find(variant);
  if (it == variant_table().end()) throw UnknownIdError("unknown suite variant '" + variant + "'");
  return it->second;
}

// Outputs from free inputs x[0..m). Y1 = (sum of inputs) / 5 in every
// variant; Y2 adds the terms present for that input count.
void suite_outputs_free(std::size_t m, std::size_t n, std::span<const double> x, std::span<double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < m; ++i) s += x[i];
  const double y1 = s / 5.0;
  y[0] = y1;
  if (n < 2) return;
  double y2 = x[0] * y1 + std::exp(x[1]);
  if (m >= 3) y2 += x[2];
  if (m >= 4) y2 += std::log(x[3]);
  y[1] = y2;
  if (n < 3) return;
  double y3 = x[0] + y2 + y1 + signed_root(x[1]);
  if (m >= 4) y3 += x[2] * x[3];
  y[2] = y3 / 5.0;
}

// Jacobian n x m of suite_outputs_free.
void suite_jacobian_free(std::size_t m, std::size_t n, std::span<const double> x, std::span<double> jac) {
  std::fill(jac.begin(), jac.end(), 0.0);
  std::vector<double> y(n);
  suite_outputs_free(m, n, x, y);
  std::vector<double> dy1(m, 0.2), dy2(m, 0.0);
  for (std::size_t l = 0; l < m; ++l) jac[l] = dy1[l];
  if (n < 2) return;
  for (std::size_t l = 0; l < m; ++l) dy2[l] = x[0] * dy1[l];
  dy2[0] += y[0];
  dy2[1] += std::exp(x[1]);
  if (m >= 3) dy2[2] += 1.0;
  if (m >= 4) dy2[3] += 1.0 / x[3];
  for (std::size_t l = 0; l < m; ++l) jac[m + l] = dy2[l];
  if (n < 3) return;
  for (std::size_t l = 0; l < m; ++l) {
    double g = dy2[l] + dy1[l];
    if (l == 0) g += 1.0;
    if (l == 1) g += 0.5 / std::sqrt(std::abs(x[1]));
    if (m >= 4 && l == 2) g += x[3];
    if (m >= 4 && l == 3) g += x[2];
    jac[2 * m + l] = g / 5.0;
  }
}

SmoothFunction make_suite_function(const std::string& id, std::size_t m, std::size_t n) {
  const double ln3 = std::log(3.0);
  const std::vector<double> lo_all{-1.0, -1.0, -0.1, std::exp(-1.0) - 0.1};
  const std::vector<double> hi_all{1.0, 1.0, 2.0 * ln3 + 0.1, std::exp(1.0) + 2.0 * ln3 + 0.1};
  Box box{{lo_all.begin(), lo_all.begin() + static_cast<std::ptrdiff_t>(m)},
          {hi_all.begin(), hi_all.begin() + static_cast<std::ptrdiff_t>(m)}};
  SmoothFunction::SingularDistanceFn singular = nullptr;
  if (n >= 3) singular = [](std::span<const double> x) { return std::abs(x[1]); };
  return SmoothFunction(
      id, m, n, 1, box, [m, n](std::span<const double> x, std::span<double> y) { suite_outputs_free(m, n, x, y); },
      [m, n](std::span<const double> x, std::span<double> j) { suite_jacobian_free(m, n, x, j); }, singular);
}

SmoothFunction make_1d(const std::string& id, std::function<double(double)> f, std::function<double(double)> df) {
  return SmoothFunction(
      id, 1, 1, 1, Box{{0.0}, {1.0}}, [f](std::span<const double> x, std::span<double> y) { y[0] = f(x[0]); },
      [df](std::span<const double> x, std::span<double> j) { j[0] = df(x[0]); });
}

struct Registry {
  std::mutex mu;
  std::map<std::string, std::unique_ptr<SmoothFunction>> functions;

  Registry() {
    for (const auto& [id, shape] : variant_table()) add(make_suite_function(id, shape.m, shape.n));
    add(make_1d("linear1d", [](double x) { return x; }, [](double) { return 1.0; }));
    add(make_1d("twox1d", [](double x) { return 2.0 * x; }, [](double) { return 2.0; }));
    add(make_1d("const1d", [](double) { return 0.5; }, [](double) { return 0.0; }));
    add(make_1d("square1d", [](double x) { return x * x; }, [](double x) { return 2.0 * x; }));
    add(make_1d("sin3x1d", [](double x) { return std::sin(3.0 * x); }, [](double x) { return 3.0 * std::cos(3.0 * x); }));
  }
  void add(SmoothFunction f) {
    auto id = f.id();
    functions[id] = std::make_unique<SmoothFunction>(std::move(f));
  }
};

Registry& registry() {
  static Registry r;
  return r;
}

}  // namespace

const SmoothFunction& find_function(const std::string& id) {
  auto& r = registry();
  std::lock_guard lock(r.mu);
  auto it = r.functions.find(id);
  if (it == r.functions.end()) throw UnknownIdError("unknown function id '" + id + "'");
  return *it->second;
}

void register_function(SmoothFunction f) {
  auto& r = registry();
  std::lock_guard lock(r.mu);
  if (r.functions.count(f.id())) throw DomainError("function id '" + f.id() + "' already registered");
  r.add(std::move(f));
}

std::vector<std::string> function_ids() {
  auto& r = registry();
  std::lock_guard lock(r.mu);
  std::vector<std::string> ids;
  for (const auto& [id, f] : r.functions) ids.push_back(id);
  return ids;
}

std::vector<std::string> suite_variants() { return {"m4n3", "m2n3", "m3n3", "m4n1", "m4n2"}; }
bool is_suite_variant(const std::string& id) { return variant_table().count(id) > 0; }
std::size_t suite_inputs(const std::string& variant) { return variant_shape(variant).m; }
std::size_t suite_outputs(const std::string& variant) { return variant_shape(variant).n; }

SuitePoint eval_suite(const std::string& variant, double x1) {
  const auto& shape = variant_shape(variant);
  if (!(x1 > -1.0 && x1 < 1.0)) throw DomainError("X1 must lie in (-1, 1)");
  const double x2 = std::cbrt(x1);
  const double x3 = 2.0 * std::log(2.0 + x1) + x2 / 10.0;
  const double x4 = std::exp(x2) + x3;
  const double all[4] = {x1, x2, x3, x4};
  SuitePoint p;
  p.x.assign(all, all + shape.m);
  p.y.resize(shape.n);
  suite_outputs_free(shape.m, shape.n, p.x, p.y);
  return p;
}

std::vector<double> partials(const std::string& variant, double x1) {
  const auto& shape = variant_shape(variant);
  if (!(x1 > -1.0 && x1 < 1.0)) throw DomainError("X1 must lie in (-1, 1)");
  if (x1 == 0.0) throw SingularityError("dX2/dX1 is unbounded at X1 = 0");
  const auto p = eval_suite(variant, x1);
  const double x2 = p.x[1];
  const double dx2 = 1.0 / (3.0 * x2 * x2);
  const double dx3 = 2.0 / (2.0 + x1) + dx2 / 10.0;
  const double dx4 = std::exp(x2) * dx2 + dx3;
  const double dall[4] = {1.0, dx2, dx3, dx4};
  std::vector<double> jac(shape.n * shape.m);
  suite_jacobian_free(shape.m, shape.n, p.x, jac);
  std::vector<double> out(shape.n, 0.0);
  for (std::size_t i = 0; i < shape.n; ++i)
    for (std::size_t l = 0; l < shape.m; ++l) out[i] += jac[i * shape.m + l] * dall[l];
  return out;
}

QuantizedFunction::QuantizedFunction(std::string base, std::size_t k_classes, std::vector<std::vector<double>> edges)
    : base_(std::move(base)), k_(k_classes), edges_(std::move(edges)) {
  if (k_ < 2) throw DomainError("quantizer needs k >= 2 classes");
  for (const auto& e : edges_) {
    if (e.size() != k_ - 1) throw DimensionError("quantizer needs k - 1 edges per output");
    for (std::size_t i = 1; i < e.size(); ++i)
      if (!(e[i] > e[i - 1])) throw DegenerateBinsError("quantizer edges must be strictly ascending");
  }
}

std::size_t QuantizedFunction::class_of(std::size_t output, double y) const {
  const auto& e = edges_.at(output);
  return static_cast<std::size_t>(std::upper_bound(e.begin(), e.end(), y) - e.begin());
}

std::vector<std::size_t> QuantizedFunction::classes(std::span<const double> y) const {
  if (y.size() != edges_.size()) throw DimensionError("quantizer: wrong number of outputs");
  std::vector<std::size_t> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = class_of(i, y[i]);
  return out;
}

QuantizedFunction fit_quantizer(const std::string& base, std::size_t k_classes, std::size_t n_outputs,
                                std::span<const double> calibration) {
  if (k_classes < 2) throw DomainError("quantizer needs k >= 2 classes");
  if (n_outputs == 0 || calibration.empty() || calibration.size() % n_outputs != 0) {
    throw DomainError("quantizer calibration set is empty or ragged");
  }
  const std::size_t count = calibration.size() / n_outputs;
  std::vector<std::vector<double>> edges(n_outputs);
  for (std::size_t o = 0; o < n_outputs; ++o) {
    std::vector<double> v(count);
    for (std::size_t s = 0; s < count; ++s) v[s] = calibration[s * n_outputs + o];
    std::sort(v.begin(), v.end());
    std::vector<double> uniq(v);
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    if (uniq.size() < k_classes) {
      throw DegenerateBinsError("output " + std::to_string(o) + " has " + std::to_string(uniq.size()) +
                                " distinct calibration values for " + std::to_string(k_classes) + " classes");
    }
    for (std::size_t q = 1; q < k_classes; ++q) {
      // split between the (idx-1)-th and idx-th smallest values; slide off ties
      std::size_t idx = q * count / k_classes;
      idx = std::clamp<std::size_t>(idx, 1, count - 1);
      std::size_t up = idx, down = idx;
      while (up < count && v[up - 1] == v[up]) ++up;
      while (down > 0 && v[down - 1] == v[down]) --down;
      std::size_t pick;
      if (up < count && (down == 0 || up - idx <= idx - down)) {
        pick = up;
      } else if (down > 0) {
        pick = down;
      } else {
        throw DegenerateBinsError("output " + std::to_string(o) + ": no split point for quantile " + std::to_string(q));
      }
      edges[o].push_back(0.5 * (v[pick - 1] + v[pick]));
    }
    for (std::size_t i = 1; i < edges[o].size(); ++i) {
      if (!(edges[o][i] > edges[o][i - 1])) {
        throw DegenerateBinsError("output " + std::to_string(o) + ": calibration too concentrated for " +
                                  std::to_string(k_classes) + " classes");
      }
    }
  }
  return QuantizedFunction(base, k_classes, std::move(edges));
}

}  // namespace xel
