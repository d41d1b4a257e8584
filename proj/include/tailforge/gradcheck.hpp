#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "tailforge/graph.hpp"

namespace tailforge {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_entry = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

struct GradCheckOptions {
  double step = 1e-6;
  // Entries where both the analytic and numeric derivative are below this
  // magnitude count as agreeing; relative error is meaningless at zero.
  double zero_floor = 1e-6;
};

using ScalarFunction = std::function<Var<double>(std::span<const Var<double>>)>;

// Compares reverse-mode gradients of a scalar-valued function against central
// differences at `point`. Per entry the error is |a - n| / max(|a|, |n|).
inline GradCheckResult check_gradients(const ScalarFunction& fn,
                                       const std::vector<Matrix<double>>& point,
                                       GradCheckOptions options = {}) {
  std::vector<Var<double>> inputs;
  inputs.reserve(point.size());
  for (const auto& m : point) inputs.push_back(parameter(m));
  auto out = fn(inputs);
  if (out->value().size() != 1) {
    throw DimensionError("check_gradients needs a scalar function, got " + out->value().shape());
  }
  backward(out);

  std::vector<Matrix<double>> analytic;
  for (auto& in : inputs) analytic.push_back(in->grad());

  auto evaluate = [&](const std::vector<Matrix<double>>& at) {
    std::vector<Var<double>> xs;
    for (const auto& m : at) xs.push_back(constant(m));
    return fn(xs)->value()(0, 0);
  };

  GradCheckResult result;
  std::vector<Matrix<double>> probe = point;
  for (std::size_t k = 0; k < probe.size(); ++k) {
    for (std::size_t e = 0; e < probe[k].size(); ++e) {
      const double original = probe[k].data()[e];
      probe[k].data()[e] = original + options.step;
      const double up = evaluate(probe);
      probe[k].data()[e] = original - options.step;
      const double down = evaluate(probe);
      probe[k].data()[e] = original;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[k].data()[e];
      const double scale = std::max(std::abs(a), std::abs(numeric));
      const double err = scale < options.zero_floor ? 0.0 : std::abs(a - numeric) / scale;
      if (err > result.max_relative_error) {
        result = {err, k, e, a, numeric};
      }
    }
  }
  return result;
}

// Central-difference Jacobian of a matrix-valued function with respect to one
// input; rows index outputs, columns index input entries.
inline Matrix<double> numeric_jacobian(
    const std::function<Matrix<double>(const Matrix<double>&)>& fn, const Matrix<double>& at,
    double step = 1e-6) {
  Matrix<double> probe = at;
  const auto base = fn(probe);
  Matrix<double> jac(base.size(), at.size());
  for (std::size_t e = 0; e < at.size(); ++e) {
    const double original = probe.data()[e];
    probe.data()[e] = original + step;
    const auto up = fn(probe);
    probe.data()[e] = original - step;
    const auto down = fn(probe);
    probe.data()[e] = original;
    for (std::size_t o = 0; o < base.size(); ++o)
      jac(o, e) = (up.data()[o] - down.data()[o]) / (2.0 * step);
  }
  return jac;
}

}  // namespace tailforge
