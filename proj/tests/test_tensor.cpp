#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>
#include <random>

#include "docbin/errors.hpp"
#include "docbin/kernels.hpp"
#include "docbin/ops.hpp"
#include "test_support.hpp"

using namespace docbin;
using docbin::test::grad_check;
using docbin::test::random_tensor;
using V = std::vector<Tensor<double>>;

TEST_CASE("tensor construction checks element count") {
  CHECK_THROWS_AS(Tensor<double>(Shape{2, 3}, std::vector<double>(5)), DimensionError);
  Tensor<double> t(Shape{2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.dim(-1) == 3);
  CHECK_THROWS_AS(t.dim(2), DimensionError);
  CHECK_THROWS_AS(t.item(), ContractError);
  Tensor<double> c = t.clone();
  c.data()[0] = 9.0;
  CHECK(t.data()[0] == 1.5);
  CHECK_FALSE(c.same_storage(t));
}

TEST_CASE("matmul values") {
  const Tensor<double> a(Shape{2, 2}, {1, 2, 3, 4});
  const Tensor<double> ones(Shape{2, 1}, {1, 1});
  const Tensor<double> c = matmul(a, ones);
  CHECK(c.shape() == Shape{2, 1});
  CHECK(c.data()[0] == 3.0);
  CHECK(c.data()[1] == 7.0);

  std::mt19937_64 rng(1);
  const Tensor<double> x = random_tensor({2, 2}, rng);
  const Tensor<double> eye(Shape{2, 2}, {1, 0, 0, 1});
  const Tensor<double> y = matmul(x, eye);
  for (std::size_t i = 0; i < 4; ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("matmul shape errors name both shapes") {
  const Tensor<double> a(Shape{2, 3});
  const Tensor<double> b(Shape{2, 3});
  try {
    matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("(2, 3)") != std::string::npos);
  }
  CHECK_THROWS_AS(matmul(Tensor<double>(Shape{2, 2, 3}), Tensor<double>(Shape{3, 3, 4})),
                  DimensionError);
}

TEST_CASE("matmul gradients") {
  std::mt19937_64 rng(2);
  const auto mm = [](const V& in) { return matmul(in[0], in[1]); };
  CHECK(grad_check(mm, {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)}) <= 1e-6);
  CHECK(grad_check(mm, {random_tensor({2, 3, 4}, rng), random_tensor({2, 4, 5}, rng)}) <= 1e-6);
  CHECK(grad_check(mm, {random_tensor({2, 3, 4}, rng), random_tensor({4, 5}, rng)}) <= 1e-6);
  CHECK(grad_check(mm, {random_tensor({1, 3, 4}, rng), random_tensor({2, 4, 5}, rng)}) <= 1e-6);
  CHECK(grad_check(mm, {random_tensor({3, 4}, rng), random_tensor({2, 4, 5}, rng)}) <= 1e-6);
}

TEST_CASE("softmax values and stability") {
  const Tensor<double> s = softmax(Tensor<double>(Shape{2}, {0.0, 0.0}));
  CHECK(s.data()[0] == doctest::Approx(0.5).epsilon(1e-15));
  const Tensor<double> big = softmax(Tensor<double>(Shape{2}, {1000.0, 0.0}));
  CHECK(std::abs(big.data()[0] - 1.0) <= 1e-12);
  CHECK(std::abs(big.data()[1]) <= 1e-12);
}

TEST_CASE("softmax rows sum to one and ignore a row shift") {
  std::mt19937_64 rng(3);
  const Tensor<double> x = random_tensor({4, 7}, rng, -5, 5);
  Tensor<double> shifted = x.clone();
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 7; ++c) shifted.data()[r * 7 + c] += 3.25 * (r + 1);
  }
  const Tensor<double> a = softmax(x);
  const Tensor<double> b = softmax(shifted);
  for (std::size_t r = 0; r < 4; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < 7; ++c) {
      sum += a.data()[r * 7 + c];
      CHECK(std::abs(a.data()[r * 7 + c] - b.data()[r * 7 + c]) <= 1e-12);
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }
}

TEST_CASE("softmax gradients") {
  std::mt19937_64 rng(4);
  CHECK(grad_check([](const V& in) { return softmax(in[0]); }, {random_tensor({5}, rng)}) <=
        1e-6);
  CHECK(grad_check([](const V& in) { return softmax(in[0], 1); },
                   {random_tensor({2, 3, 4}, rng)}) <= 1e-6);
}

TEST_CASE("layer norm values") {
  const Tensor<double> gamma(Shape{4}, 1.0);
  const Tensor<double> beta0(Shape{4}, 0.0);
  const Tensor<double> constant(Shape{1, 4}, 3.0);
  const Tensor<double> flat = layer_norm(constant, gamma, beta0, 1e-6);
  for (const double v : flat.data()) CHECK(v == 0.0);

  const Tensor<double> beta(Shape{4}, {0.5, -1.0, 2.0, 0.0});
  const Tensor<double> y = layer_norm(Tensor<double>(Shape{1, 4}, 0.0), gamma, beta, 1e-6);
  for (std::size_t i = 0; i < 4; ++i) CHECK(y.data()[i] == beta.data()[i]);

  CHECK_THROWS_AS(layer_norm(constant, gamma, beta0, 0.0), ConfigError);
  CHECK_THROWS_AS(layer_norm(constant, Tensor<double>(Shape{3}, 1.0), beta0, 1e-6),
                  DimensionError);
}

TEST_CASE("layer norm rows are standardized") {
  std::mt19937_64 rng(5);
  const std::size_t cols = 32;
  const Tensor<double> x = random_tensor({6, cols}, rng, -10, 10);
  const Tensor<double> y =
      layer_norm(x, Tensor<double>(Shape{cols}, 1.0), Tensor<double>(Shape{cols}, 0.0), 1e-6);
  for (std::size_t r = 0; r < 6; ++r) {
    double mean = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mean += y.data()[r * cols + c];
    mean /= cols;
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      var += (y.data()[r * cols + c] - mean) * (y.data()[r * cols + c] - mean);
    }
    var /= cols;
    CHECK(std::abs(mean) <= 1e-10);
    CHECK(std::abs(var - 1.0) <= 1e-6);
  }
}

TEST_CASE("layer norm gradients") {
  std::mt19937_64 rng(6);
  const auto ln = [](const V& in) { return layer_norm(in[0], in[1], in[2], 1e-6); };
  CHECK(grad_check(ln, {random_tensor({3, 4}, rng), random_tensor({4}, rng),
                        random_tensor({4}, rng)}) <= 1e-5);
}

TEST_CASE("gelu values and gradient") {
  const Tensor<double> y = gelu(Tensor<double>(Shape{2}, {0.0, 10.0}));
  CHECK(y.data()[0] == 0.0);
  CHECK(std::abs(y.data()[1] - 10.0) <= 1e-6);

  Tensor<double> x(Shape{1}, 0.0);
  {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    x.set_requires_grad(true);
    Tensor<double> out = sum(gelu(x));
    tape.backward(out);
  }
  const double h = 1e-6;
  const double numeric = (gelu(Tensor<double>(Shape{1}, h)).item() -
                          gelu(Tensor<double>(Shape{1}, -h)).item()) / (2 * h);
  CHECK(x.grad()[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(std::abs(numeric - 0.5) <= 1e-9);

  std::mt19937_64 rng(7);
  CHECK(grad_check([](const V& in) { return gelu(in[0]); }, {random_tensor({3, 5}, rng, -3, 3)}) <=
        1e-5);
}

TEST_CASE("sigmoid is stable and differentiable") {
  const Tensor<double> y = sigmoid(Tensor<double>(Shape{3}, {-1000.0, 0.0, 1000.0}));
  CHECK(y.data()[0] == 0.0);
  CHECK(y.data()[1] == 0.5);
  CHECK(y.data()[2] == 1.0);
  std::mt19937_64 rng(8);
  CHECK(grad_check([](const V& in) { return sigmoid(in[0]); }, {random_tensor({4, 3}, rng, -4, 4)}) <=
        1e-5);
}

TEST_CASE("shape ops") {
  std::mt19937_64 rng(9);
  const Tensor<double> x = random_tensor({2, 3, 4}, rng);
  const Tensor<double> back = reshape(reshape(x, Shape{4, 6}), Shape{2, 3, 4});
  CHECK(back.shape() == x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(back.data()[i] == x.data()[i]);
  CHECK_THROWS_AS(reshape(x, Shape{5, 5}), DimensionError);

  const Tensor<double> cat =
      concat<double>({Tensor<double>(Shape{2}, {1, 2}), Tensor<double>(Shape{1}, {3})}, 0);
  CHECK(cat.shape() == Shape{3});
  CHECK(cat.data()[0] == 1.0);
  CHECK(cat.data()[1] == 2.0);
  CHECK(cat.data()[2] == 3.0);

  const Tensor<double> t = transpose(x, 0, 2);
  CHECK(t.shape() == Shape{4, 3, 2});
  CHECK(t.data()[1 * 6 + 2 * 2 + 1] == x.data()[1 * 12 + 2 * 4 + 1]);

  const Tensor<double> s = slice(x, 1, 1, 3);
  CHECK(s.shape() == Shape{2, 2, 4});
  CHECK(s.data()[0] == x.data()[4]);
  CHECK_THROWS_AS(slice(x, 1, 2, 4), DimensionError);
  CHECK_THROWS_AS(add(x, random_tensor({3, 3}, rng)), DimensionError);
}

TEST_CASE("elementwise and shape op gradients") {
  std::mt19937_64 rng(10);
  const auto a = random_tensor({2, 3, 4}, rng);
  const auto b = random_tensor({2, 3, 4}, rng);
  const auto row = random_tensor({4}, rng);
  CHECK(grad_check([](const V& in) { return add(in[0], in[1]); }, {a, b}) <= 1e-5);
  CHECK(grad_check([](const V& in) { return add(in[0], in[1]); }, {a, row}) <= 1e-5);
  CHECK(grad_check([](const V& in) { return sub(in[0], in[1]); }, {a, b}) <= 1e-5);
  CHECK(grad_check([](const V& in) { return sub(in[0], in[1]); }, {a, row}) <= 1e-5);
  CHECK(grad_check([](const V& in) { return scale(in[0], -2.5); }, {a}) <= 1e-5);
  CHECK(grad_check([](const V& in) { return square(in[0]); }, {a}) <= 1e-5);
  CHECK(grad_check([](const V& in) { return sum(in[0]); }, {a}) <= 1e-5);
  CHECK(grad_check([](const V& in) { return mean(in[0]); }, {a}) <= 1e-5);
  CHECK(grad_check([](const V& in) { return reshape(in[0], Shape{6, 4}); }, {a}) <= 1e-5);
  CHECK(grad_check([](const V& in) { return transpose(in[0]); }, {a}) <= 1e-5);
  CHECK(grad_check([](const V& in) { return transpose(in[0], 0, 1); }, {a}) <= 1e-5);
  CHECK(grad_check([](const V& in) { return concat<double>({in[0], in[1]}, 1); }, {a, b}) <=
        1e-5);
  CHECK(grad_check([](const V& in) { return slice(in[0], 2, 1, 3); }, {a}) <= 1e-5);
  auto index = std::make_shared<const std::vector<std::size_t>>(
      std::vector<std::size_t>{0, 5, 5, 23, 7, 0});
  CHECK(grad_check([index](const V& in) { return gather(in[0], index, Shape{2, 3}); }, {a}) <=
        1e-5);
}

TEST_CASE("mean squared difference has gradient 2(x-y)/n") {
  std::mt19937_64 rng(12);
  Tensor<double> x = random_tensor({3, 5}, rng);
  const Tensor<double> y = random_tensor({3, 5}, rng);
  {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    x.set_requires_grad(true);
    Tensor<double> loss = mean(square(sub(x, y)));
    tape.backward(loss);
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double expected = 2.0 * (x.data()[i] - y.data()[i]) / 15.0;
    CHECK(std::abs(x.grad()[i] - expected) <= 1e-15);
  }
  CHECK(grad_check([y](const V& in) { return mean(square(sub(in[0], y))); }, {x}) <= 1e-5);
}

TEST_CASE("backward semantics") {
  Tensor<double> x(Shape{3}, {1, 2, 3});
  Tensor<double> unused(Shape{2}, {4, 5});
  {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    x.set_requires_grad(true);
    unused.set_requires_grad(true);
    unused.zero_grad();
    Tensor<double> loss = sum(x);
    tape.backward(loss);
    Tensor<double> not_scalar = add(x, x);
    CHECK_THROWS_AS(tape.backward(not_scalar), ContractError);
  }
  for (const double g : x.grad()) CHECK(g == 1.0);
  for (const double g : unused.grad()) CHECK(g == 0.0);
}

TEST_CASE("backward is deterministic") {
  std::mt19937_64 rng(13);
  const Tensor<double> a0 = random_tensor({4, 6}, rng);
  const Tensor<double> b0 = random_tensor({6, 3}, rng);
  auto run = [&]() {
    Tensor<double> a = a0.clone();
    Tensor<double> b = b0.clone();
    Tape<double> tape;
    TapeScope<double> scope(tape);
    a.set_requires_grad(true);
    b.set_requires_grad(true);
    Tensor<double> loss = mean(square(gelu(softmax(matmul(a, b)))));
    tape.backward(loss);
    std::vector<double> g(a.grad().begin(), a.grad().end());
    g.insert(g.end(), b.grad().begin(), b.grad().end());
    return g;
  };
  CHECK(run() == run());
}

TEST_CASE("overflow raises instead of propagating") {
  const Tensor<double> big(Shape{2}, {1e200, 1.0});
  CHECK_THROWS_AS(square(big), NumericalError);
  CHECK_THROWS_AS(scale(big, 1e200), NumericalError);
}

TEST_CASE("serial and parallel kernels agree bit for bit") {
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  auto fill = [&](std::size_t n) {
    std::vector<float> v(n);
    for (float& x : v) x = u(rng);
    return v;
  };
  const int before = kernels::thread_count();
  for (const int threads : {1, 3}) {
    kernels::set_thread_count(threads);
    for (const bool ta : {false, true}) {
      for (const bool tb : {false, true}) {
        kernels::GemmShape s{3, 13, 17, 9, 13 * 17, 0, ta, tb};
        const auto a = fill(3 * 13 * 17);
        const auto b = fill(17 * 9);
        std::vector<float> c1(3 * 13 * 9), c2(3 * 13 * 9);
        kernels::serial::gemm(a.data(), b.data(), c1.data(), s);
        kernels::parallel::gemm(a.data(), b.data(), c2.data(), s);
        CHECK(c1 == c2);
      }
    }
    const kernels::AxisShape ax{4, 7, 3};
    const auto x = fill(84);
    const auto dy = fill(84);
    std::vector<float> y1(84), y2(84), d1(84), d2(84);
    kernels::serial::softmax_forward(x.data(), y1.data(), ax);
    kernels::parallel::softmax_forward(x.data(), y2.data(), ax);
    CHECK(y1 == y2);
    kernels::serial::softmax_backward(y1.data(), dy.data(), d1.data(), ax);
    kernels::parallel::softmax_backward(y1.data(), dy.data(), d2.data(), ax);
    CHECK(d1 == d2);

    const std::size_t rows = 11, cols = 10;
    const auto lx = fill(rows * cols);
    const auto ldy = fill(rows * cols);
    const auto gamma = fill(cols);
    const auto beta = fill(cols);
    std::vector<float> ly1(rows * cols), ly2(rows * cols), m1(rows), m2(rows), r1(rows), r2(rows);
    kernels::serial::layer_norm_forward(lx.data(), gamma.data(), beta.data(), ly1.data(),
                                        m1.data(), r1.data(), rows, cols, 1e-6);
    kernels::parallel::layer_norm_forward(lx.data(), gamma.data(), beta.data(), ly2.data(),
                                          m2.data(), r2.data(), rows, cols, 1e-6);
    CHECK(ly1 == ly2);
    std::vector<float> dx1(rows * cols), dx2(rows * cols), dg1(cols, 0.f), dg2(cols, 0.f),
        db1(cols, 0.f), db2(cols, 0.f);
    kernels::serial::layer_norm_backward(lx.data(), gamma.data(), m1.data(), r1.data(),
                                         ldy.data(), dx1.data(), dg1.data(), db1.data(), rows,
                                         cols);
    kernels::parallel::layer_norm_backward(lx.data(), gamma.data(), m2.data(), r2.data(),
                                           ldy.data(), dx2.data(), dg2.data(), db2.data(), rows,
                                           cols);
    CHECK(dx1 == dx2);
    CHECK(dg1 == dg2);
    CHECK(db1 == db2);

    std::vector<float> g1(84), g2(84), gd1(84), gd2(84);
    kernels::serial::gelu_forward(x.data(), g1.data(), 84);
    kernels::parallel::gelu_forward(x.data(), g2.data(), 84);
    CHECK(g1 == g2);
    kernels::serial::gelu_backward(x.data(), dy.data(), gd1.data(), 84);
    kernels::parallel::gelu_backward(x.data(), dy.data(), gd2.data(), 84);
    CHECK(gd1 == gd2);

    auto p1 = fill(50), p2 = p1, mm1 = fill(50), mm2 = mm1;
    std::vector<float> v1(50, 0.01f), v2(50, 0.01f);
    const auto grad = fill(50);
    kernels::AdamWHyper h{1e-3, 0.9, 0.999, 1e-8, 0.05, 0.1, 0.001};
    kernels::serial::adamw_update(p1.data(), grad.data(), mm1.data(), v1.data(), 50, h);
    kernels::parallel::adamw_update(p2.data(), grad.data(), mm2.data(), v2.data(), 50, h);
    CHECK(p1 == p2);
    CHECK(mm1 == mm2);
    CHECK(v1 == v2);
  }
  kernels::set_thread_count(before);
}
