#include <doctest.h>

#include <cmath>
#include <vector>

#include "xel/bound.hpp"
#include "xel/errors.hpp"
#include "xel/rng.hpp"

using namespace xel;

namespace {

const SmoothFunction& fn(const char* id) { return find_function(id); }

double pc_value(const PiecewiseConstantFunction& pc, double x) {
  std::vector<double> in{x}, out(1);
  pc.eval(in, out);
  return out[0];
}

}  // namespace

TEST_CASE("covering geometry") {
  Covering c(Box{{0.0}, {1.0}}, 0.3);
  CHECK(c.counts()[0] == 4);
  std::vector<std::size_t> last{3};
  CHECK(c.weight(last) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  auto ten = Covering::with_points(Box{{0.0}, {1.0}}, 10);
  CHECK(ten.cell_count() == 10);
  std::vector<std::size_t> idx{9};
  CHECK(ten.weight(idx) == doctest::Approx(1.0));
  CHECK_THROWS_AS(Covering(Box{{0.0}, {1.0}}, 0.0), DomainError);
}

TEST_CASE("build_pc_approx examples") {
  auto pc = build_pc_approx(fn("linear1d"), 0.5);
  CHECK(pc_value(pc, 0.1) == 0.25);
  CHECK(pc_value(pc, 0.6) == 0.75);
  CHECK(pc_value(pc, 1.5) == 0.0);  // zero outside the support
  CHECK(pc.resolution_factor() == 0.5);

  for (double delta : {0.07, 0.3, 1.0}) {
    auto cpc = build_pc_approx(fn("const1d"), delta);
    for (double x = 0.0; x < 1.0; x += 0.01) CHECK(pc_value(cpc, x) == 0.5);
  }
  CHECK_THROWS_AS(build_pc_approx(fn("linear1d"), 0.0), DomainError);
  CHECK_THROWS_AS(build_pc_approx(fn("linear1d"), -0.1), DomainError);

  // step function 0.5 on [0, 0.75), 1 on [0.75, 1]
  std::vector<double> breaks{0.75};
  CHECK(resolution_factor(breaks, 0.0, 1.0) == 0.25);
}

TEST_CASE("dp_distance examples and metric properties") {
  const Box unit{{0.0}, {1.0}};
  auto x = [](std::span<const double> in, std::span<double> out) { out[0] = in[0]; };
  auto zero = [](std::span<const double>, std::span<double> out) { out[0] = 0.0; };
  CHECK(dp_distance(x, x, 1, 1.0, unit) == 0.0);
  CHECK(dp_distance(x, zero, 1, 1.0, unit) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(dp_distance(fn("linear1d"), build_pc_approx(fn("linear1d"), 0.5), 1.0) ==
        doctest::Approx(0.125).epsilon(1e-12));
  // closed form delta/4 per unit length
  CHECK(dp_distance(fn("linear1d"), build_pc_approx(fn("linear1d"), 0.25), 1.0) ==
        doctest::Approx(0.0625).epsilon(1e-12));
  CHECK_THROWS_AS(dp_distance(x, zero, 1, 0.5, unit), DomainError);

  Rng rng(41);
  for (int t = 0; t < 20; ++t) {
    double a[3], b[3];
    for (int i = 0; i < 3; ++i) {
      a[i] = rng.uniform(-2, 2);
      b[i] = rng.uniform(0.5, 4);
    }
    auto make = [&](int i) {
      return [ai = a[i], bi = b[i]](std::span<const double> in, std::span<double> out) {
        out[0] = ai * std::sin(bi * in[0]);
      };
    };
    for (double p : {1.0, 2.0}) {
      const double ab = dp_distance(make(0), make(1), 1, p, unit);
      const double ba = dp_distance(make(1), make(0), 1, p, unit);
      const double bc = dp_distance(make(1), make(2), 1, p, unit);
      const double ac = dp_distance(make(0), make(2), 1, p, unit);
      CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
      CHECK(ac <= (ab + bc) * (1 + 1e-4));
    }
  }
}

TEST_CASE("quadrature failure is reported") {
  QuadratureOptions tight;
  tight.max_levels = 3;
  tight.rel_tol = 1e-12;
  auto wiggle = [](std::span<const double> x) { return std::sin(200.0 * x[0]) + 1.0; };
  CHECK_THROWS_AS(integrate(wiggle, Box{{0.0}, {1.0}}, tight), QuadratureError);
}

TEST_CASE("quasi-random integration in four dimensions") {
  Box b{{0, 0, 0, 0}, {1, 2, 1, 1}};
  auto g = [](std::span<const double> x) { return x[0] + x[1] * x[2] + x[3] * x[3]; };
  // exact: 2 * (1/2) + (2 * 1 * 1/2) + 2 * (1/3)
  const auto r = integrate(g, b);
  CHECK(r.quasi_random);
  CHECK(r.value == doctest::Approx(1.0 + 1.0 + 2.0 / 3.0).epsilon(1e-3));
}

TEST_CASE("delta_bound_1d worked example and homogeneity") {
  const auto cov = Covering::with_points(Box{{0.0}, {1.0}}, 10);
  const auto b = delta_bound_1d(fn("linear1d"), 0.1, cov);
  CHECK(std::abs(b.delta - 0.2) <= 1e-12);
  CHECK(b.derivative_mass == doctest::Approx(10.0).epsilon(1e-15));
  CHECK_FALSE(b.unconstrained);

  const auto c = delta_bound_1d(fn("const1d"), 0.1, cov);
  CHECK(c.unconstrained);
  CHECK(c.delta == 1.0);

  const auto two = delta_bound_1d(fn("twox1d"), 0.1, cov);
  CHECK(two.delta == doctest::Approx(b.delta / std::sqrt(2.0)).epsilon(1e-14));

  CHECK_THROWS_AS(delta_bound_1d(find_function("m4n3"), 0.1, Covering(find_function("m4n3").support(), 0.5)),
                  DomainError);
}

TEST_CASE("general bound specializes to the 1-D bound") {
  for (const char* id : {"linear1d", "square1d", "sin3x1d", "twox1d"}) {
    for (std::size_t k : {3, 10, 37}) {
      const auto cov = Covering::with_points(fn(id).support(), k);
      for (double eps : {0.01, 0.1}) {
        const double a = delta_bound_1d(fn(id), eps, cov).delta;
        const double g = delta_bound_step(fn(id), eps, 1.0, cov).delta;
        CHECK(std::abs(a - g) <= 1e-12);
      }
    }
  }
}

TEST_CASE("fixed point and empirical oracle on linear functions") {
  for (double eps : {0.05, 0.1, 0.2}) {
    const auto emp = empirical_delta_star(fn("linear1d"), eps, 1.0);
    CHECK(std::abs(emp.delta_star - 4 * eps) <= 0.01 * 4 * eps);
    const auto rep = delta_bound_general(fn("linear1d"), eps, 1.0);
    CHECK(rep.converged);
    CHECK(std::abs(rep.delta_max - emp.delta_star) <= 0.05 * emp.delta_star);
  }
  const auto rep = delta_bound_general(fn("linear1d"), 0.1, 1.0);
  CHECK(std::abs(rep.delta_max - 0.4) <= 0.01 * 0.4);
  CHECK(rep.history.size() == static_cast<std::size_t>(rep.iterations) + 1);

  const auto emp2 = empirical_delta_star(fn("twox1d"), 0.1, 1.0);
  CHECK(std::abs(emp2.delta_star - 0.2) <= 0.001);
  const auto emp1 = empirical_delta_star(fn("linear1d"), 0.1, 1.0);
  CHECK(std::abs(emp1.delta_star - 0.4) <= 0.001);
}

TEST_CASE("constant function is unconstrained") {
  const auto emp = empirical_delta_star(fn("const1d"), 0.1, 1.0);
  CHECK(emp.unconstrained);
  CHECK(emp.delta_star == 1.0);
  const auto rep = delta_bound_general(fn("const1d"), 0.1, 1.0);
  CHECK(rep.unconstrained);
  CHECK(rep.delta_max == 1.0);
}

TEST_CASE("curved functions agree within tolerance") {
  for (const char* id : {"square1d", "sin3x1d"}) {
    for (double eps : {0.05, 0.1, 0.2}) {
      const auto emp = empirical_delta_star(fn(id), eps, 1.0);
      const auto rep = delta_bound_general(fn(id), eps, 1.0);
      CHECK_MESSAGE(std::abs(rep.delta_max - emp.delta_star) <= 0.15 * emp.delta_star,
                    id << " eps=" << eps << " analytic=" << rep.delta_max << " empirical=" << emp.delta_star);
    }
  }
}

TEST_CASE("bound is monotone in epsilon and sound for near-linear functions") {
  for (const char* id : {"linear1d", "twox1d", "square1d", "sin3x1d"}) {
    const double a = delta_bound_general(fn(id), 0.1, 1.0).delta_max;
    const double b = delta_bound_general(fn(id), 0.2, 1.0).delta_max;
    CHECK(b > a);
  }
  for (const char* id : {"linear1d", "twox1d"}) {
    for (double eps : {0.05, 0.1, 0.2}) {
      const double bound = delta_bound_general(fn(id), eps, 1.0).delta_max;
      for (double frac : {0.9, 0.5, 0.1}) {
        const double delta = frac * bound;
        CHECK(dp_distance(fn(id), build_pc_approx(fn(id), delta), 1.0) <= eps);
      }
    }
  }
}

TEST_CASE("higher p and multi-dimensional functions") {
  const auto rep = delta_bound_general(fn("linear1d"), 0.1, 2.0);
  CHECK(rep.converged);
  CHECK(rep.delta_max > 0.0);
  const auto emp = empirical_delta_star(fn("linear1d"), 0.1, 2.0);
  // d_2 error of f(x) = x is delta / sqrt(12)
  CHECK(emp.delta_star == doctest::Approx(0.1 * std::sqrt(12.0)).epsilon(1e-3));

  const auto& m2 = fn("m2n3");
  const auto r2 = delta_bound_general(m2, 0.1, 1.0);
  CHECK(r2.delta_max > 0.0);
  CHECK(r2.delta_max <= m2.support().width());
  const auto& m4 = fn("m4n3");
  const auto r4 = delta_bound_general(m4, 0.1, 1.0);
  CHECK(r4.delta_max > 0.0);
  CHECK(r4.derivative_mass > 0.0);
}

TEST_CASE("layer count estimate") {
  CHECK(layer_count_estimate(0.2, 1, 10).count == 97656250);
  CHECK(layer_count_estimate(1.0, 3, 7).count == 7);
  CHECK(layer_count_estimate(0.5, 2, 2).count == 32);
  const auto floored = layer_count_estimate(1.5, 2, 4);
  CHECK(floored.count == 4);
  CHECK(floored.floored);
  CHECK_THROWS_AS(layer_count_estimate(0.0, 1, 1), DomainError);
  // beyond 64 bits
  CHECK(layer_count_estimate(0.1, 4, 8).count == BigInt(8) * boost::multiprecision::pow(BigInt(10), 32));

  BigInt prev = layer_count_estimate(0.05, 1, 3).count;
  for (double delta = 0.06; delta <= 1.0; delta += 0.01) {
    const auto cur = layer_count_estimate(delta, 1, 3).count;
    CHECK(cur <= prev);
    prev = cur;
  }
  CHECK(layer_count_estimate(0.3, 1, 3).count > layer_count_estimate(0.4, 1, 3).count);
  for (std::size_t m = 1; m < 6; ++m) {
    CHECK(layer_count_estimate(0.3, 1, m + 1).count > layer_count_estimate(0.3, 1, m).count);
    CHECK(layer_count_estimate(0.3, m + 1, 2).count > layer_count_estimate(0.3, m, 2).count);
  }
}
