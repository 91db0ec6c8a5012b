// Copyright 2026 The hjparisi Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hjparisi/linalg.hpp"

namespace hjparisi::testing {

inline Mat m1(double v) { return Mat::Constant(1, 1, v); }

inline Mat m2(double a, double b, double c) {
  Mat m(2, 2);
  m << a, b, b, c;
  return m;
}

}  // namespace hjparisi::testing

#include <cmath>
#include <functional>
#include <numbers>

namespace hjparisi::testing {

/// E f(Z) for standard normal Z by the composite trapezoid rule on [-12, 12].
/// Deliberately unrelated to the Gauss-Hermite rules used by the library.
inline double gauss_expect(const std::function<double(double)>& f, int steps = 4000) {
  const double lo = -12.0, hi = 12.0, h = (hi - lo) / steps;
  double total = 0.0;
  for (int i = 0; i <= steps; ++i) {
    const double z = lo + i * h;
    const double w = (i == 0 || i == steps) ? 0.5 : 1.0;
    total += w * f(z) * std::exp(-0.5 * z * z);
  }
  return total * h / std::sqrt(2.0 * std::numbers::pi);
}

}  // namespace hjparisi::testing
