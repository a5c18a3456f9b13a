#include "qsam/ops.hpp"

#include "doctest.h"

using namespace qsam;

namespace {

Tensor<double> filled(int n, int c, int h, int w, double start, double step) {
  Tensor<double> t(n, c, h, w);
  for (int i = 0; i < t.numel(); ++i) t.data[i] = start + step * i;
  return t;
}

}  // namespace

TEST_SUITE("autodiff") {

TEST_CASE("sum and add forward/backward") {
  Tape<double> t;
  Var<double> x = t.input(filled(1, 2, 2, 2, 1.0, 1.0));  // 1..8
  Var<double> y = t.input(filled(1, 2, 2, 2, 0.5, 0.0));
  Var<double> loss = sum(add(x, y));
  CHECK(t.value(loss).scalar_value() == doctest::Approx(36.0 + 4.0));
  t.backward(loss);
  CHECK((t.grad(x).data == 1.0).all());
  CHECK((t.grad(y).data == 1.0).all());
}

TEST_CASE("mul backward routes the other operand") {
  Tape<double> t;
  Tensor<double> xv = filled(1, 1, 2, 2, 2.0, 1.0);  // 2,3,4,5
  Tensor<double> yv = filled(1, 1, 2, 2, 1.0, 2.0);  // 1,3,5,7
  Var<double> x = t.input(xv);
  Var<double> y = t.input(yv);
  t.backward(sum(mul(x, y)));
  CHECK((t.grad(x).data == yv.data).all());
  CHECK((t.grad(y).data == xv.data).all());
}

TEST_CASE("mse closed form: uniform 0.1 difference gives 0.01") {
  Tape<double> t;
  Tensor<double> a(2, 4, 8, 8);
  Tensor<double> b(2, 4, 8, 8);
  a.data.setConstant(0.6);
  b.data.setConstant(0.5);
  Var<double> loss = mse(t.input(a), t.constant(b));
  CHECK(t.value(loss).scalar_value() == doctest::Approx(0.01).epsilon(1e-12));
}

TEST_CASE("mse matches a naive accumulation within 1e-6") {
  std::mt19937_64 rng(3);
  Tensor<float> a(1, 4, 6, 6), b(1, 4, 6, 6);
  for (int i = 0; i < a.numel(); ++i) {
    a.data[i] = float(uniform_double(rng));
    b.data[i] = float(uniform_double(rng));
  }
  double naive = 0;
  for (int i = 0; i < a.numel(); ++i) {
    const double d = double(a.data[i]) - double(b.data[i]);
    naive += d * d;
  }
  naive /= double(a.numel());
  Tape<float> t;
  Var<float> loss = mse(t.input(a), t.constant(b));
  CHECK(std::abs(double(t.value(loss).scalar_value()) - naive) < 1e-6);
}

TEST_CASE("mse backward is 2/N (x - target)") {
  Tape<double> t;
  Tensor<double> a = filled(1, 1, 2, 2, 0.0, 0.25);
  Tensor<double> b = filled(1, 1, 2, 2, 1.0, 0.0);
  Var<double> x = t.input(a);
  t.backward(mse(x, t.constant(b)));
  for (int i = 0; i < 4; ++i)
    CHECK(t.grad(x).data[i] ==
          doctest::Approx(2.0 / 4.0 * (a.data[i] - b.data[i])).epsilon(1e-15));
}

TEST_CASE("backward requires a scalar loss") {
  Tape<double> t;
  Var<double> x = t.input(filled(1, 1, 2, 2, 1.0, 1.0));
  Var<double> y = add(x, x);
  CHECK_THROWS_AS(t.backward(y), std::invalid_argument);
}

TEST_CASE("backward may run once per tape") {
  Tape<double> t;
  Var<double> x = t.input(filled(1, 1, 1, 2, 1.0, 1.0));
  Var<double> loss = sum(x);
  t.backward(loss);
  CHECK_THROWS_AS(t.backward(loss), std::logic_error);
}

TEST_CASE("constants are not differentiated") {
  Tape<double> t;
  Var<double> c = t.constant(filled(1, 1, 2, 2, 1.0, 1.0));
  Var<double> x = t.input(filled(1, 1, 2, 2, 2.0, 0.5));
  Var<double> loss = sum(mul(c, x));
  t.backward(loss);
  CHECK(!t.wants_grad(c));
  CHECK((t.grad(c).data == 0.0).all());  // never touched
}

TEST_CASE("parameter gradients accumulate across tapes, exactly") {
  Parameter<double> p("p", filled(1, 1, 2, 2, 0.5, 0.25));
  Tensor<double> g1, g2;
  {
    Tape<double> t;
    t.backward(sum(mul(t.leaf(p), t.constant(filled(1, 1, 2, 2, 2.0, 1.0)))));
    g1 = p.grad;
  }
  {
    Tape<double> t;
    t.backward(mse(t.leaf(p), t.constant(filled(1, 1, 2, 2, 0.0, 0.0))));
    g2 = p.grad;
  }
  // second tape added onto the first's gradient, coordinate by coordinate
  for (int i = 0; i < 4; ++i) {
    const double second_alone = 2.0 / 4.0 * p.value.data[i];
    CHECK(g2.data[i] == g1.data[i] + second_alone);
  }
  p.zero_grad();
  CHECK((p.grad.data == 0.0).all());
}

TEST_CASE("identical computations give bit-identical gradients") {
  auto run = [] {
    std::mt19937_64 rng(99);
    Tensor<float> xv(2, 4, 4, 4), tv(2, 4, 4, 4);
    for (int i = 0; i < xv.numel(); ++i) {
      xv.data[i] = float(uniform<double>(rng, -1, 1));
      tv.data[i] = float(uniform<double>(rng, -1, 1));
    }
    Parameter<float> p("w", xv);
    Tape<float> t;
    Var<float> h = leaky_relu_split(t.leaf(p), 0.2f);
    t.backward(mse(h, t.constant(tv)));
    return p.grad;
  };
  const Tensor<float> a = run();
  const Tensor<float> b = run();
  CHECK((a.data == b.data).all());
}

TEST_CASE("leaky_relu_split forward is the split activation") {
  Tape<float> t;
  Tensor<float> xv(1, 1, 1, 4);
  xv.data << -2.0f, -0.5f, 0.0f, 3.0f;
  Var<float> y = leaky_relu_split(t.input(xv), 0.25f);
  CHECK(t.value(y).data[0] == -0.5f);
  CHECK(t.value(y).data[1] == -0.125f);
  CHECK(t.value(y).data[2] == 0.0f);
  CHECK(t.value(y).data[3] == 3.0f);
}

TEST_CASE("sigmoid_split forward hits the closed form at ln 3") {
  Tape<double> t;
  Tensor<double> xv(1, 1, 1, 2);
  xv.data << std::log(3.0), 0.0;
  Var<double> y = sigmoid_split(t.input(xv));
  CHECK(t.value(y).data[0] == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(t.value(y).data[1] == 0.5);
}

TEST_CASE("upsample_nearest2x duplicates pixels") {
  Tape<float> t;
  Tensor<float> xv(1, 1, 2, 2);
  xv.data << 1, 2, 3, 4;
  Var<float> y = upsample_nearest2x(t.input(xv));
  const Tensor<float>& yv = t.value(y);
  REQUIRE(yv.h == 4);
  REQUIRE(yv.w == 4);
  CHECK(yv.at(0, 0, 0, 0) == 1);
  CHECK(yv.at(0, 0, 0, 1) == 1);
  CHECK(yv.at(0, 0, 1, 1) == 1);
  CHECK(yv.at(0, 0, 0, 2) == 2);
  CHECK(yv.at(0, 0, 3, 3) == 4);
  CHECK(yv.at(0, 0, 2, 1) == 3);
}

TEST_CASE("ops reject mixed tapes and shape mismatches") {
  Tape<double> t1, t2;
  Var<double> a = t1.input(filled(1, 1, 2, 2, 0, 1));
  Var<double> b = t2.input(filled(1, 1, 2, 2, 0, 1));
  CHECK_THROWS_AS(add(a, b), std::invalid_argument);
  Var<double> c = t1.input(filled(1, 1, 2, 3, 0, 1));
  CHECK_THROWS_AS(add(a, c), std::invalid_argument);
}

}  // TEST_SUITE
