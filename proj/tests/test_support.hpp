#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "docbin/ops.hpp"
#include "docbin/tensor.hpp"

namespace docbin::test {

inline Tensor<double> random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0,
                                    double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<double> t(shape);
  for (double& v : t.data()) v = u(rng);
  return t;
}

using DiffFn = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

/// Scalar probe: sum(f(inputs) * r) with a fixed random r, so that every
/// output element contributes with a distinct weight.
inline Tensor<double> probe(const DiffFn& f, const std::vector<Tensor<double>>& in,
                            const Tensor<double>& r) {
  const Tensor<double> out = f(in);
  const Tensor<double> flat = reshape(out, Shape{1, out.size()});
  return matmul(flat, reshape(r, Shape{r.size(), 1}));
}

/// ||analytic - numeric|| / max(||analytic||, ||numeric||), maximized over
/// the inputs. Numeric gradients use central differences with step h.
inline double grad_check(const DiffFn& f, const std::vector<Tensor<double>>& inputs,
                         double h = 1e-6, std::uint64_t seed = 11) {
  std::mt19937_64 rng(seed);
  const Tensor<double> shape_probe = f(inputs);
  const Tensor<double> r = random_tensor(shape_probe.shape(), rng, 0.5, 1.5);

  std::vector<std::vector<double>> analytic;
  {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    for (auto t : inputs) {
      t.set_requires_grad(true);
      t.zero_grad();
    }
    Tensor<double> loss = probe(f, inputs, r);
    tape.backward(loss);
    for (const auto& t : inputs) {
      const auto g = t.grad();
      analytic.emplace_back(g.begin(), g.end());
    }
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Tensor<double> x = inputs[i];
    double diff = 0.0;
    double na = 0.0;
    double nn = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double keep = x.data()[j];
      x.data()[j] = keep + h;
      const double up = probe(f, inputs, r).item();
      x.data()[j] = keep - h;
      const double down = probe(f, inputs, r).item();
      x.data()[j] = keep;
      const double numeric = (up - down) / (2.0 * h);
      diff += (numeric - analytic[i][j]) * (numeric - analytic[i][j]);
      na += analytic[i][j] * analytic[i][j];
      nn += numeric * numeric;
    }
    const double scale = std::max({std::sqrt(na), std::sqrt(nn), 1e-300});
    worst = std::max(worst, std::sqrt(diff) / scale);
  }
  return worst;
}

}  // namespace docbin::test
