// Copyright 2026 The hjparisi Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <span>

namespace hjparisi {

/// A Monte Carlo scalar together with its sampling error.
struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::int64_t n_samples = 0;
  std::uint64_t seed = 0;
};

/// Mean and standard error of i.i.d. draws, accumulated in index order.
inline McEstimate summarize(std::span<const double> draws, std::uint64_t seed = 0) {
  McEstimate est;
  est.n_samples = static_cast<std::int64_t>(draws.size());
  est.seed = seed;
  if (draws.empty()) return est;
  double sum = 0.0;
  for (double x : draws) sum += x;
  est.mean = sum / static_cast<double>(draws.size());
  if (draws.size() > 1) {
    double ss = 0.0;
    for (double x : draws) ss += (x - est.mean) * (x - est.mean);
    est.std_error = std::sqrt(ss / static_cast<double>(draws.size() - 1) / static_cast<double>(draws.size()));
  }
  return est;
}

/// |a - b| <= k * sqrt(sa^2 + sb^2) + slack.
inline bool within_sigma(double a, double b, double sa, double sb, double k = 3.0, double slack = 0.0) {
  return std::abs(a - b) <= k * std::sqrt(sa * sa + sb * sb) + slack;
}

}  // namespace hjparisi
