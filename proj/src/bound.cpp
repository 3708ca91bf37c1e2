#include "xel/bound.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>

#include "xel/errors.hpp"
#include "xel/rng.hpp"

namespace xel {

namespace {

// Neumaier compensated sum; order of additions is fixed by the caller.
class Accumulator {
 public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) {
      comp_ += (sum_ - t) + v;
    } else {
      comp_ += (v - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

// Additive recurrence with the generalized golden ratio (Kronecker
// sequence). Deterministic for a given seed.
class Kronecker {
 public:
  Kronecker(std::size_t dims, std::uint64_t seed) : alpha_(dims), offset_(dims) {
    double phi = 2.0;
    for (int i = 0; i < 64; ++i) phi = std::pow(1.0 + phi, 1.0 / static_cast<double>(dims + 1));
    for (std::size_t k = 0; k < dims; ++k) {
      alpha_[k] = std::fmod(std::pow(1.0 / phi, static_cast<double>(k + 1)), 1.0);
      offset_[k] = open_unit(stream_at(seed, k));
    }
  }
  void point(std::size_t n, std::span<double> u) const {
    for (std::size_t k = 0; k < alpha_.size(); ++k) {
      const double v = offset_[k] + static_cast<double>(n + 1) * alpha_[k];
      u[k] = v - std::floor(v);
    }
  }

 private:
  std::vector<double> alpha_, offset_;
};

bool converged(double prev, double cur, double rel_tol) {
  const double diff = std::abs(cur - prev);
  return diff <= rel_tol * std::abs(cur) || diff <= 1e-300;
}

std::size_t saturating_pow(std::size_t base, std::size_t exp) {
  std::size_t out = 1;
  for (std::size_t i = 0; i < exp; ++i) {
    if (base != 0 && out > std::numeric_limits<std::size_t>::max() / base) return std::numeric_limits<std::size_t>::max();
    out *= base;
  }
  return out;
}

// Visits the S^D sub-cell midpoints of [lo, lo + width)^D as offsets.
template <class F>
void for_each_midpoint(std::size_t dims, std::size_t per_axis, F&& fn) {
  std::vector<std::size_t> idx(dims, 0);
  std::vector<double> frac(dims);
  const double step = 1.0 / static_cast<double>(per_axis);
  while (true) {
    for (std::size_t k = 0; k < dims; ++k) frac[k] = (static_cast<double>(idx[k]) + 0.5) * step;
    fn(std::span<const double>(frac));
    std::size_t k = dims;
    while (k > 0) {
      --k;
      if (++idx[k] < per_axis) break;
      idx[k] = 0;
      if (k == 0) return;
    }
    if (dims == 0) return;
  }
}

double pow_p(double v, double p) { return p == 1.0 ? v : std::pow(v, p); }

}  // namespace

Covering::Covering(Box support, double delta) : support_(std::move(support)), delta_(delta) {
  if (!(delta > 0.0) || !std::isfinite(delta)) throw DomainError("covering width must be positive");
  for (std::size_t a = 0; a < support_.dims(); ++a) {
    const double w = support_.hi[a] - support_.lo[a];
    auto k = static_cast<std::size_t>(std::ceil(w / delta * (1.0 - 1e-12)));
    k = std::max<std::size_t>(k, 1);
    counts_.push_back(k);
    last_weight_.push_back(std::clamp((w - static_cast<double>(k - 1) * delta) / delta, 0.0, 1.0));
    if (cell_count_ > std::numeric_limits<std::size_t>::max() / k) {
      overflow_ = true;
      cell_count_ = std::numeric_limits<std::size_t>::max();
    } else if (!overflow_) {
      cell_count_ *= k;
    }
  }
}

Covering Covering::with_points(const Box& support, std::size_t k) {
  if (k == 0) throw DomainError("covering needs at least one point");
  return Covering(support, support.width() / static_cast<double>(k));
}

void Covering::locate(std::span<const double> x, std::span<std::size_t> index) const {
  for (std::size_t a = 0; a < counts_.size(); ++a) {
    const double t = std::floor((x[a] - support_.lo[a]) / delta_);
    index[a] = t < 0 ? 0 : std::min(static_cast<std::size_t>(t), counts_[a] - 1);
  }
}

void Covering::center(std::span<const std::size_t> index, std::span<double> out) const {
  for (std::size_t a = 0; a < counts_.size(); ++a) {
    out[a] = support_.lo[a] + (static_cast<double>(index[a]) + 0.5) * delta_;
  }
}

double Covering::weight(std::span<const std::size_t> index) const {
  double w = 1.0;
  for (std::size_t a = 0; a < counts_.size(); ++a)
    if (index[a] + 1 == counts_[a]) w *= last_weight_[a];
  return w;
}

Box Covering::extent() const {
  Box b = support_;
  for (std::size_t a = 0; a < counts_.size(); ++a) b.hi[a] = b.lo[a] + static_cast<double>(counts_[a]) * delta_;
  return b;
}

void Covering::for_each_cell(
    const std::function<void(std::span<const std::size_t>, std::span<const double>, double)>& fn) const {
  if (overflow_) throw DomainError("covering has too many cells to enumerate");
  const std::size_t dims = counts_.size();
  std::vector<std::size_t> idx(dims, 0);
  std::vector<double> c(dims);
  for (std::size_t cell = 0; cell < cell_count_; ++cell) {
    center(idx, c);
    fn(idx, c, weight(idx));
    for (std::size_t k = dims; k > 0; --k) {
      if (++idx[k - 1] < counts_[k - 1]) break;
      idx[k - 1] = 0;
    }
  }
}

PiecewiseConstantFunction::PiecewiseConstantFunction(const SmoothFunction& f, Covering covering)
    : f_(&f), covering_(std::move(covering)) {
  constexpr std::size_t kMaterializeLimit = std::size_t{1} << 22;
  if (covering_.overflows() || covering_.cell_count() > kMaterializeLimit) return;
  const std::size_t out = f.output_size();
  values_.resize(covering_.cell_count() * out);
  std::size_t cell = 0;
  covering_.for_each_cell([&](std::span<const std::size_t>, std::span<const double> c, double) {
    f_->eval(c, std::span<double>(values_).subspan(cell * out, out));
    ++cell;
  });
}

void PiecewiseConstantFunction::cell_value(std::span<const std::size_t> index, std::span<double> y) const {
  if (values_.empty()) {
    std::vector<double> c(covering_.dims());
    covering_.center(index, c);
    f_->eval(c, y);
    return;
  }
  std::size_t linear = 0;
  for (std::size_t a = 0; a < index.size(); ++a) linear = linear * covering_.counts()[a] + index[a];
  const std::size_t out = f_->output_size();
  std::copy_n(values_.begin() + static_cast<std::ptrdiff_t>(linear * out), out, y.begin());
}

void PiecewiseConstantFunction::eval(std::span<const double> x, std::span<double> y) const {
  if (!covering_.support().contains(x)) {
    std::fill(y.begin(), y.end(), 0.0);
    return;
  }
  std::vector<std::size_t> idx(covering_.dims());
  covering_.locate(x, idx);
  cell_value(idx, y);
}

PiecewiseConstantFunction build_pc_approx(const SmoothFunction& f, double delta) {
  if (!(delta > 0.0)) throw DomainError("resolution factor must be positive");
  if (delta > f.support().width() * (1.0 + 1e-12)) throw DomainError("resolution factor exceeds the support width");
  return PiecewiseConstantFunction(f, Covering(f.support(), delta));
}

double resolution_factor(std::span<const double> breakpoints, double lo, double hi) {
  if (!(hi > lo)) throw DomainError("empty interval");
  double prev = lo, smallest = hi - lo;
  for (double b : breakpoints) {
    if (!(b > prev) || !(b < hi)) throw DomainError("breakpoints must be ascending and interior");
    smallest = std::min(smallest, b - prev);
    prev = b;
  }
  return std::min(smallest, hi - prev);
}

Integral integrate(const std::function<double(std::span<const double>)>& g, const Box& box,
                   const QuadratureOptions& opt) {
  const std::size_t dims = box.dims();
  std::vector<double> x(dims);
  if (dims > 3) {
    Kronecker seq(dims, opt.qmc_seed);
    std::vector<double> u(dims);
    Accumulator acc;
    for (std::size_t i = 0; i < opt.qmc_points; ++i) {
      seq.point(i, u);
      for (std::size_t a = 0; a < dims; ++a) x[a] = box.lo[a] + u[a] * (box.hi[a] - box.lo[a]);
      acc.add(g(x));
    }
    return {box.volume() * acc.value() / static_cast<double>(opt.qmc_points), 0, true};
  }
  double prev = 0.0;
  for (int level = 1; level <= opt.max_levels; ++level) {
    const std::size_t per_axis = std::size_t{1} << level;
    if (saturating_pow(per_axis, dims) > opt.grid_budget) break;
    Accumulator acc;
    for_each_midpoint(dims, per_axis, [&](std::span<const double> frac) {
      for (std::size_t a = 0; a < dims; ++a) x[a] = box.lo[a] + frac[a] * (box.hi[a] - box.lo[a]);
      acc.add(g(x));
    });
    const double value = box.volume() * acc.value() / static_cast<double>(saturating_pow(per_axis, dims));
    if (level > 1 && converged(prev, value, opt.rel_tol)) return {value, level, false};
    prev = value;
  }
  throw QuadratureError("midpoint refinement did not reach relative tolerance " + std::to_string(opt.rel_tol));
}

double dp_distance(const Field& f, const Field& g, std::size_t out_size, double p, const Box& support,
                   const QuadratureOptions& opt) {
  if (!(p >= 1.0) || !std::isfinite(p)) throw DomainError("p must lie in [1, inf)");
  std::vector<double> yf(out_size), yg(out_size);
  auto integrand = [&](std::span<const double> x) {
    f(x, yf);
    g(x, yg);
    double s = 0.0;
    for (std::size_t j = 0; j < out_size; ++j) s += pow_p(std::abs(yf[j] - yg[j]), p);
    return s;
  };
  return std::pow(integrate(integrand, support, opt).value, 1.0 / p);
}

double dp_distance(const SmoothFunction& f, const SmoothFunction& g, double p, const QuadratureOptions& opt) {
  if (f.input_size() != g.input_size() || f.output_size() != g.output_size()) {
    throw DimensionError("dp_distance: functions have different shapes");
  }
  return dp_distance([&](std::span<const double> x, std::span<double> y) { f.eval(x, y); },
                     [&](std::span<const double> x, std::span<double> y) { g.eval(x, y); }, f.output_size(), p,
                     f.support(), opt);
}

Integral approximation_error_integral(const SmoothFunction& f, const PiecewiseConstantFunction& fbar, double p,
                                      const QuadratureOptions& opt) {
  if (!(p >= 1.0) || !std::isfinite(p)) throw DomainError("p must lie in [1, inf)");
  const auto& cov = fbar.covering();
  const std::size_t dims = cov.dims(), out = f.output_size();
  const double delta = cov.delta();
  std::vector<double> x(dims), y(out), v(out);
  auto error_at = [&](std::span<const double> point, std::span<const double> value) {
    f.eval(point, y);
    double s = 0.0;
    for (std::size_t j = 0; j < out; ++j) s += pow_p(std::abs(y[j] - value[j]), p);
    return s;
  };

  const bool grid_ok = dims <= 3 && !cov.overflows() &&
                       cov.cell_count() <= opt.grid_budget / saturating_pow(4, dims);
  if (grid_ok) {
    std::vector<double> cell_values(fbar.materialized() ? 0 : cov.cell_count() * out);
    double prev = 0.0;
    for (int level = 1; level <= opt.max_levels; ++level) {
      const std::size_t per_axis = std::size_t{1} << level;
      const std::size_t subs = saturating_pow(per_axis, dims);
      if (level > 1 && subs > opt.grid_budget / cov.cell_count()) break;
      Accumulator acc;
      cov.for_each_cell([&](std::span<const std::size_t> idx, std::span<const double> c, double w) {
        fbar.cell_value(idx, v);
        Accumulator cell;
        for_each_midpoint(dims, per_axis, [&](std::span<const double> frac) {
          for (std::size_t a = 0; a < dims; ++a) x[a] = c[a] + (frac[a] - 0.5) * delta;
          cell.add(error_at(x, v));
        });
        acc.add(w * cell.value());
      });
      const double value = acc.value() * std::pow(delta, static_cast<double>(dims)) / static_cast<double>(subs);
      if (level > 1 && converged(prev, value, opt.rel_tol)) return {value, level, false};
      prev = value;
    }
    throw QuadratureError("cell-wise midpoint refinement did not reach relative tolerance " +
                          std::to_string(opt.rel_tol));
  }

  const Box ext = cov.extent();
  Kronecker seq(dims, opt.qmc_seed);
  std::vector<double> u(dims);
  std::vector<std::size_t> idx(dims);
  Accumulator acc;
  for (std::size_t i = 0; i < opt.qmc_points; ++i) {
    seq.point(i, u);
    for (std::size_t a = 0; a < dims; ++a) x[a] = ext.lo[a] + u[a] * (ext.hi[a] - ext.lo[a]);
    cov.locate(x, idx);
    fbar.cell_value(idx, v);
    acc.add(cov.weight(idx) * error_at(x, v));
  }
  return {ext.volume() * acc.value() / static_cast<double>(opt.qmc_points), 0, true};
}

double dp_distance(const SmoothFunction& f, const PiecewiseConstantFunction& fbar, double p,
                   const QuadratureOptions& opt) {
  return std::pow(approximation_error_integral(f, fbar, p, opt).value, 1.0 / p);
}

DerivativeMass derivative_mass(const SmoothFunction& f, const Covering& covering, double p, double singular_radius,
                               const QuadratureOptions& opt) {
  const std::size_t in = f.input_size(), out = f.output_size();
  std::vector<double> jac(in * out);
  DerivativeMass mass;
  auto cell_term = [&](std::span<const double> c) {
    if (f.singular_distance(c) <= singular_radius) {
      ++mass.skipped;
      return 0.0;
    }
    f.jacobian(c, jac);
    double s = 0.0;
    for (std::size_t row = 0; row < out; ++row) {
      double inner = 0.0;
      for (std::size_t col = 0; col < in; ++col) inner += jac[row * in + col];
      s += pow_p(std::abs(inner), p);
    }
    return s;
  };

  constexpr std::size_t kEnumerateLimit = std::size_t{1} << 20;
  if (!covering.overflows() && covering.cell_count() <= kEnumerateLimit) {
    Accumulator acc;
    covering.for_each_cell(
        [&](std::span<const std::size_t>, std::span<const double> c, double w) { acc.add(w * cell_term(c)); });
    mass.value = acc.value();
    return mass;
  }

  // Uniform draw over cells: sum = cell count * mean of w * term.
  const std::size_t dims = covering.dims();
  const Box ext = covering.extent();
  Kronecker seq(dims, opt.qmc_seed);
  std::vector<double> u(dims), x(dims), c(dims);
  std::vector<std::size_t> idx(dims);
  double cells = 1.0;
  for (auto k : covering.counts()) cells *= static_cast<double>(k);
  Accumulator acc;
  for (std::size_t i = 0; i < opt.qmc_points; ++i) {
    seq.point(i, u);
    for (std::size_t a = 0; a < dims; ++a) x[a] = ext.lo[a] + u[a] * (ext.hi[a] - ext.lo[a]);
    covering.locate(x, idx);
    covering.center(idx, c);
    acc.add(covering.weight(idx) * cell_term(c));
  }
  mass.value = cells * acc.value() / static_cast<double>(opt.qmc_points);
  mass.estimated = true;
  return mass;
}

Bound1D delta_bound_1d(const SmoothFunction& f, double epsilon, const Covering& covering) {
  if (f.m() != 1 || f.n() != 1 || f.d() != 1) throw DomainError("delta_bound_1d needs m = n = d = 1");
  if (!(epsilon > 0.0)) throw DomainError("epsilon must be positive");
  Bound1D b;
  b.derivative_mass = derivative_mass(f, covering, 1.0).value;
  const double width = f.support().width();
  if (b.derivative_mass <= 0.0) {
    b.delta = width;
    b.unconstrained = true;
    return b;
  }
  b.delta = std::sqrt(4.0 * epsilon / b.derivative_mass);
  if (b.delta > width) {
    b.delta = width;
    b.unconstrained = true;
  }
  return b;
}

Bound1D delta_bound_step(const SmoothFunction& f, double epsilon, double p, const Covering& covering) {
  if (!(epsilon > 0.0)) throw DomainError("epsilon must be positive");
  if (!(p >= 1.0) || !std::isfinite(p)) throw DomainError("p must lie in [1, inf)");
  Bound1D b;
  b.derivative_mass = derivative_mass(f, covering, p).value;
  const double width = f.support().width();
  if (b.derivative_mass <= 0.0) {
    b.delta = width;
    b.unconstrained = true;
    return b;
  }
  const double md = static_cast<double>(f.m() * f.d());
  b.delta = std::pow(std::pow(2.0, p) * (p + 1.0) * std::pow(epsilon, p) / b.derivative_mass, 1.0 / (p + md));
  if (b.delta > width) {
    b.delta = width;
    b.unconstrained = true;
  }
  return b;
}

LayerEstimate layer_count_estimate(double delta, std::size_t d, std::size_t m) {
  if (!(delta > 0.0) || !std::isfinite(delta)) throw DomainError("layer_count_estimate: delta must be positive");
  if (d == 0 || m == 0) throw DomainError("layer_count_estimate: d and m must be >= 1");
  LayerEstimate est;
  if (delta >= 1.0) {
    est.count = m;
    est.floored = delta > 1.0;
    return est;
  }
  // Read delta as the shortest decimal that round-trips, so 0.2 means 1/5
  // rather than its binary neighbour: delta = digits * 10^exp10.
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), delta);
  std::string text(buf, res.ptr);
  int exp10 = 0;
  if (const auto epos = text.find('e'); epos != std::string::npos) {
    exp10 = std::stoi(text.substr(epos + 1));
    text.resize(epos);
  }
  if (const auto dot = text.find('.'); dot != std::string::npos) {
    exp10 -= static_cast<int>(text.size() - dot - 1);
    text.erase(dot, 1);
  }
  text.erase(0, std::min(text.find_first_not_of('0'), text.size() - 1));  // no octal prefix
  const BigInt digits(text);
  BigInt num = 1, den = digits;
  if (exp10 < 0) {
    num = boost::multiprecision::pow(BigInt(10), static_cast<unsigned>(-exp10));
  } else {
    den *= boost::multiprecision::pow(BigInt(10), static_cast<unsigned>(exp10));
  }
  const auto e = static_cast<unsigned>(d * m);
  num = boost::multiprecision::pow(num, e);
  den = boost::multiprecision::pow(den, e);
  const BigInt q = (num + den - 1) / den;
  est.count = q * m;
  return est;
}

BoundReport delta_bound_general(const SmoothFunction& f, double epsilon, double p, const FixedPointOptions& opt) {
  if (!(epsilon > 0.0)) throw DomainError("epsilon must be positive");
  if (!(p >= 1.0) || !std::isfinite(p)) throw DomainError("p must lie in [1, inf)");
  BoundReport rep;
  rep.function_id = f.id();
  rep.epsilon = epsilon;
  rep.p = p;
  rep.m = f.m();
  rep.n = f.n();
  rep.d = f.d();
  const std::size_t dims = f.input_size();
  const double width = f.support().width();

  std::size_t per_axis = opt.start_cells_per_axis;
  while (per_axis > 1 && saturating_pow(per_axis, dims) > opt.start_cell_cap) --per_axis;
  double delta = width / static_cast<double>(per_axis);
  rep.history.push_back(delta);

  const double md = static_cast<double>(dims);
  const double numerator = std::pow(2.0, p) * (p + 1.0) * std::pow(epsilon, p);
  for (int it = 1; it <= opt.max_iterations; ++it) {
    const auto mass = derivative_mass(f, Covering(f.support(), delta), p, opt.singular_radius, opt.quadrature);
    rep.derivative_mass = mass.value;
    rep.mass_estimated = mass.estimated;
    rep.iterations = it;
    if (mass.value <= 0.0) {
      rep.unconstrained = true;
      rep.converged = true;
      delta = width;
      rep.history.push_back(delta);
      break;
    }
    double next = std::pow(numerator / mass.value, 1.0 / (p + md));
    rep.unconstrained = next >= width;
    next = std::min(next, width);
    rep.history.push_back(next);
    const bool done = std::abs(next - delta) < opt.rel_change * delta;
    delta = next;
    if (done) {
      rep.converged = true;
      break;
    }
  }
  rep.diverged = !rep.converged;
  rep.delta_max = delta;
  rep.layer_estimate = layer_count_estimate(delta, rep.d, rep.m);
  return rep;
}

EmpiricalResult empirical_delta_star(const SmoothFunction& f, double epsilon, double p, const EmpiricalOptions& opt) {
  if (!(epsilon > 0.0)) throw DomainError("epsilon must be positive");
  const double width = f.support().width();
  EmpiricalResult res;
  bool any_qmc = false;
  auto error_at = [&](double delta) {
    auto fbar = build_pc_approx(f, delta);
    const auto integral = approximation_error_integral(f, fbar, p, opt.quadrature);
    any_qmc = any_qmc || integral.quasi_random;
    const double e = std::pow(integral.value, 1.0 / p);
    res.probes.emplace_back(delta, e);
    return e;
  };

  if (error_at(width) <= epsilon) {
    res.delta_star = width;
    res.unconstrained = true;
    return res;
  }
  double lo = 0.0, hi = width;
  for (int it = 0; it < 80 && hi - lo > opt.rel_tol * hi; ++it) {
    if (hi < width * 1e-6) throw DomainError("epsilon too small to resolve with the empirical oracle");
    const double mid = 0.5 * (lo + hi);
    if (error_at(mid) <= epsilon) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  res.delta_star = lo;

  auto sorted = res.probes;
  std::sort(sorted.begin(), sorted.end());
  const double tol = any_qmc ? opt.monotone_tol_qmc : opt.monotone_tol_grid;
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i - 1].second > sorted[i].second * (1.0 + tol) + 1e-12) {
      throw OracleAssumptionError("approximation error decreases from " + std::to_string(sorted[i - 1].second) +
                                  " at delta " + std::to_string(sorted[i - 1].first) + " to " +
                                  std::to_string(sorted[i].second) + " at delta " + std::to_string(sorted[i].first));
    }
  }
  return res;
}

}  // namespace xel
