#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "doctest.h"
#include "xinet/rng.hpp"
#include "xinet/tensor.hpp"

namespace xinet::testutil {

inline std::vector<double> random_values(int64_t n, Rng& rng, double lo = -2.0, double hi = 2.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

// Central-difference gradient check. `build` maps fresh copies of the inputs
// to a scalar loss; the analytic gradient of every input is compared against
// (f(x+h) - f(x-h)) / 2h coordinate by coordinate.
inline void check_gradients(
    const std::function<ad::Tensor(const std::vector<ad::Tensor>&)>& build,
    const std::vector<ad::Shape>& shapes, const std::vector<std::vector<double>>& values,
    double h = 1e-5, double tol = 1e-5, double atol = 1e-8) {
  REQUIRE(shapes.size() == values.size());

  std::vector<ad::Tensor> leaves;
  for (size_t i = 0; i < shapes.size(); ++i)
    leaves.push_back(ad::Tensor::from(shapes[i], values[i], true));
  ad::Tensor loss = build(leaves);
  REQUIRE(loss.numel() == 1);
  ad::backward(loss);

  auto eval = [&](const std::vector<std::vector<double>>& vals) {
    ad::NoGradGuard guard;
    std::vector<ad::Tensor> xs;
    for (size_t i = 0; i < shapes.size(); ++i)
      xs.push_back(ad::Tensor::from(shapes[i], vals[i], false));
    return build(xs).values()[0];
  };

  for (size_t i = 0; i < shapes.size(); ++i) {
    REQUIRE(leaves[i].has_grad());
    const std::vector<double>& grad = leaves[i].grad();
    for (size_t j = 0; j < values[i].size(); ++j) {
      auto bumped = values;
      bumped[i][j] = values[i][j] + h;
      const double up = eval(bumped);
      bumped[i][j] = values[i][j] - h;
      const double down = eval(bumped);
      const double fd = (up - down) / (2.0 * h);
      const double g = grad[j];
      // atol absorbs central-difference roundoff on (near-)zero gradients.
      const double err = std::fabs(g - fd);
      const double bound = atol + tol * std::max(std::fabs(g), std::fabs(fd));
      INFO("input ", i, " coord ", j, " analytic ", g, " fd ", fd);
      CHECK(err < bound);
    }
  }
}

inline void check_gradient(const std::function<ad::Tensor(const ad::Tensor&)>& build,
                           const ad::Shape& shape, const std::vector<double>& values,
                           double h = 1e-5, double tol = 1e-5) {
  check_gradients([&](const std::vector<ad::Tensor>& xs) { return build(xs[0]); }, {shape},
                  {values}, h, tol);
}

// sum(x * weights) with constant weights: a scalar loss that gives every
// output coordinate of an op under test a distinct influence.
inline ad::Tensor weighted_sum(const ad::Tensor& x, const std::vector<double>& weights) {
  ad::Tensor w = ad::Tensor::from(x.shape(), weights, false);
  return ad::sum(ad::mul(x, w));
}

}  // namespace xinet::testutil
