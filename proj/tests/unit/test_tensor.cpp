#include <doctest.h>

#include <cmath>
#include <vector>

#include "../support/finite_diff.hpp"
#include "xel/errors.hpp"
#include "xel/ops.hpp"

using namespace xel;
using xel::testing::central_difference;
using xel::testing::relative_error;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -2.0, double hi = 2.0) {
  auto t = Tensor::zeros(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Loss evaluated without recording, for finite differences.
template <class F>
double untaped(F&& f) {
  Tape tape(false);
  return f(tape).item();
}

template <class F>
void check_gradients(std::vector<Tensor*> params, F&& build, double tol = 1e-4) {
  for (auto* p : params) {
    p->set_requires_grad(true);
    p->clear_grad();
  }
  Tape tape;
  tape.backward(build(tape));
  for (auto* p : params) {
    REQUIRE(p->has_grad());
    std::vector<double> analytic(p->grad().begin(), p->grad().end());
    for (std::size_t i = 0; i < p->size(); ++i) {
      const double numeric = central_difference(*p, i, [&] { return untaped(build); });
      CHECK(relative_error(analytic[i], numeric) < tol);
    }
  }
}

}  // namespace

TEST_CASE("matmul examples") {
  Tape tape;
  auto eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  auto m = Tensor::from({2, 2}, {1, 2, 3, 4});
  auto out = matmul(tape, eye, m);
  CHECK(std::vector<double>(out.data().begin(), out.data().end()) == std::vector<double>{1, 2, 3, 4});

  auto row = Tensor::from({1, 2}, {1, 2});
  auto col = Tensor::from({2, 1}, {3, 4});
  CHECK(matmul(tape, row, col).item() == 11.0);

  CHECK_THROWS_AS(matmul(tape, row, row), DimensionError);
  try {
    matmul(tape, row, row);
  } catch (const DimensionError& e) {
    CHECK(std::string(e.what()).find("[1x2] x [1x2]") != std::string::npos);
  }
}

TEST_CASE("matmul gradient of sum is column sums of b") {
  Rng rng(7);
  auto a = random_tensor({3, 4}, rng);
  auto b = random_tensor({4, 2}, rng);
  a.set_requires_grad(true);
  Tape tape;
  tape.backward(sum(tape, matmul(tape, a, b)));
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 4; ++c) {
      const double expected = b.at(c, 0) + b.at(c, 1);
      CHECK(a.grad()[r * 4 + c] == doctest::Approx(expected).epsilon(1e-12));
      const double numeric = central_difference(a, r * 4 + c, [&] {
        Tape t(false);
        return sum(t, matmul(t, a, b)).item();
      });
      CHECK(relative_error(a.grad()[r * 4 + c], numeric) < 1e-6);
    }
}

TEST_CASE("softmax examples") {
  Tape tape;
  auto s = softmax(tape, Tensor::from({2}, {0, 0}), 0);
  CHECK(s[0] == 0.5);
  CHECK(s[1] == 0.5);
  s = softmax(tape, Tensor::from({2}, {1000, 1000}), 0);
  CHECK(s[0] == 0.5);
  CHECK(s[1] == 0.5);
  s = softmax(tape, Tensor::from({2}, {std::log(1.0), std::log(3.0)}), 0);
  CHECK(s[0] == doctest::Approx(1.0 / (1.0 + 3.0)).epsilon(1e-15));
  CHECK(s[1] == doctest::Approx(3.0 / (1.0 + 3.0)).epsilon(1e-15));
}

TEST_CASE("softmax is a probability vector along either axis") {
  Rng rng(3);
  auto x = random_tensor({4, 5}, rng, -30, 30);
  Tape tape;
  for (int axis : {0, 1}) {
    auto s = softmax(tape, x, axis);
    const std::size_t groups = axis == 0 ? 5 : 4, len = axis == 0 ? 4 : 5;
    for (std::size_t g = 0; g < groups; ++g) {
      double total = 0.0;
      for (std::size_t k = 0; k < len; ++k) {
        const double v = axis == 0 ? s.at(k, g) : s.at(g, k);
        CHECK(v >= 0.0);
        total += v;
      }
      CHECK(std::abs(total - 1.0) <= 1e-12);
    }
  }
  CHECK_THROWS_AS(softmax(tape, Tensor::from({2}, {0, 0}), 1), DimensionError);
}

TEST_CASE("relu examples and mask") {
  Tape tape;
  auto r = relu(tape, Tensor::from({3}, {-1, 0, 2}));
  CHECK(r[0] == 0.0);
  CHECK(r[1] == 0.0);
  CHECK(r[2] == 2.0);

  auto neg = Tensor::from({3}, {-1, -2, -0.5});
  neg.set_requires_grad(true);
  Tape t2;
  auto out = relu(t2, neg);
  for (double v : out.data()) CHECK(v == 0.0);
  t2.backward(sum(t2, out));
  for (double g : neg.grad()) CHECK(g == 0.0);

  // Entries bounded away from the kink so finite differences are valid.
  auto x = Tensor::from({2, 3}, {-1.5, 0.3, 1.2, -0.2, 0.7, -0.9});
  Tensor w = Tensor::from({2, 3}, {0.5, -1, 2, 1.5, 0.25, -0.75});
  check_gradients({&x}, [&](Tape& t) { return sum(t, hadamard(t, relu(t, x), w)); }, 1e-6);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(x.grad()[i] == (x[i] > 0 ? w[i] : 0.0));
  }
}

TEST_CASE("concat_embed examples") {
  Tape tape;
  auto a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  auto b = Tensor::from({2, 3}, {7, 8, 9, 10, 11, 12});
  std::vector<Tensor> one{a};
  auto same = concat_embed(tape, one);
  CHECK(same.shape() == a.shape());
  CHECK(std::equal(same.data().begin(), same.data().end(), a.data().begin()));

  std::vector<Tensor> two{a, b};
  auto c = concat_embed(tape, two);
  CHECK(c.shape() == Shape{4, 3});
  for (std::size_t i = 0; i < 12; ++i) CHECK(c[i] == static_cast<double>(i + 1));

  std::vector<Tensor> bad{a, Tensor::zeros({2, 2})};
  CHECK_THROWS_AS(concat_embed(tape, bad), DimensionError);

  check_gradients({&a, &b}, [&](Tape& t) {
    std::vector<Tensor> parts{a, b};
    return sum(t, concat_embed(t, parts));
  });
  for (double g : a.grad()) CHECK(g == 1.0);
  for (double g : b.grad()) CHECK(g == 1.0);
}

TEST_CASE("backward semantics") {
  Rng rng(11);
  auto x = random_tensor({3, 2}, rng);
  x.set_requires_grad(true);
  {
    Tape tape;
    tape.backward(sum(tape, x));
    for (double g : x.grad()) CHECK(g == 1.0);
  }
  x.clear_grad();
  {
    Tape tape;
    tape.backward(scale(tape, sum(tape, hadamard(tape, x, x)), 0.5));
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(x.grad()[i] == doctest::Approx(x[i]).epsilon(1e-15));
  }
  {
    Tape tape;
    auto y = hadamard(tape, x, x);
    CHECK_THROWS_AS(tape.backward(y), TapeError);
    auto loss = sum(tape, y);
    tape.backward(loss);
    CHECK(tape.consumed());
    CHECK_THROWS_AS(tape.backward(loss), TapeError);
    CHECK_THROWS_AS(sum(tape, x), TapeError);
    tape.reset();
    CHECK_NOTHROW(tape.backward(sum(tape, x)));
  }
  {
    Tape tape;
    auto constant = Tensor::from({2}, {1, 2});
    CHECK_THROWS_AS(tape.backward(sum(tape, constant)), TapeError);
  }
}

TEST_CASE("composite expressions match finite differences") {
  Rng rng(5);
  auto w = random_tensor({3, 4}, rng);
  auto x = random_tensor({4, 5}, rng);
  auto b = random_tensor({3}, rng);
  auto g = random_tensor({3}, rng);
  auto beta = random_tensor({3}, rng);
  auto y = random_tensor({3, 5}, rng);
  check_gradients({&w, &x, &b, &g, &beta}, [&](Tape& t) {
    auto h = add_bias(t, matmul(t, w, x), b);
    auto n = layer_norm(t, h, g, beta);
    auto s = softmax(t, n, 0);
    return mean_squared_error(t, add(t, s, scale(t, n, 0.3)), y);
  });

  std::vector<std::size_t> targets{0, 2, 1, 1, 0};
  std::vector<std::size_t> pick{4, 0, 0, 2};
  check_gradients({&w, &x}, [&](Tape& t) {
    auto logits = matmul(t, w, x);
    auto gathered = select_columns(t, logits, pick);
    std::vector<Tensor> parts{logits, gathered};
    auto wide = concat_columns(t, parts);
    std::vector<std::size_t> tgt(targets);
    tgt.insert(tgt.end(), {1, 0, 2, 2});
    return cross_entropy(t, wide, tgt);
  });
}

TEST_CASE("attention matches finite differences") {
  Rng rng(9);
  const std::size_t heads = 2, e = 3, batch = 2, q_len = 3, k_len = 4;
  auto q = random_tensor({heads * e, batch * q_len}, rng);
  auto k = random_tensor({heads * e, batch * k_len}, rng);
  auto v = random_tensor({heads * e, batch * k_len}, rng);
  auto w = random_tensor({heads * e, batch * q_len}, rng);
  for (double sc : {1.0, 0.5}) {
    check_gradients({&q, &k, &v}, [&](Tape& t) {
      return sum(t, hadamard(t, attention(t, q, k, v, heads, q_len, k_len, sc), w));
    });
  }
}

TEST_CASE("cross entropy of uniform logits is ln k") {
  Tape tape;
  std::vector<std::size_t> targets{3, 0};
  auto loss = cross_entropy(tape, Tensor::zeros({5, 2}), targets);
  CHECK(loss.item() == doctest::Approx(std::log(5.0)).epsilon(1e-15));
  std::vector<std::size_t> bad{5, 0};
  CHECK_THROWS_AS(cross_entropy(tape, Tensor::zeros({5, 2}), bad), DomainError);
}

TEST_CASE("dropout") {
  Rng rng(1);
  auto x = Tensor::filled({10, 10}, 2.0);
  Tape tape;
  CHECK(dropout(tape, x, 0.0, rng).same_storage(x));
  auto y = dropout(tape, x, 0.5, rng);
  for (double v : y.data()) CHECK((v == 0.0 || v == 4.0));
  CHECK_THROWS_AS(dropout(tape, x, 1.0, rng), DomainError);
}

TEST_CASE("tensor construction") {
  CHECK_THROWS_AS(Tensor::zeros({2, 0}), DimensionError);
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1, 2, 3}), DimensionError);
  auto t = Tensor::from({2}, {1, 2});
  CHECK_FALSE(t.has_grad());
  auto c = t.clone();
  c.data()[0] = 5;
  CHECK(t[0] == 1.0);
}
