// Copyright 2026 The hjparisi Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <vector>

#include "error.hpp"
#include "linalg.hpp"

namespace hjparisi {

/// Gauss-Hermite rule for the standard normal weight (probabilists' Hermite),
/// computed by Golub-Welsch.
struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

inline GaussRule gauss_hermite(int n) {
  require(n >= 1, ErrorCode::InvalidArgument, "need at least one node");
  Mat jacobi = Mat::Zero(n, n);
  for (int k = 1; k < n; ++k) jacobi(k, k - 1) = jacobi(k - 1, k) = std::sqrt(static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<Mat> es(jacobi);
  GaussRule rule;
  for (int i = 0; i < n; ++i) {
    rule.nodes.push_back(es.eigenvalues()(i));
    const double v = es.eigenvectors()(0, i);
    rule.weights.push_back(v * v);
  }
  return rule;
}

/// Memoized rule; the table is shared read-only after first use.
inline const GaussRule& gauss_hermite_cached(int n) {
  static std::mutex mutex;
  static std::map<int, GaussRule> table;
  std::lock_guard lock(mutex);
  auto it = table.find(n);
  if (it == table.end()) it = table.emplace(n, gauss_hermite(n)).first;
  return it->second;
}

struct McFallback {
  std::int64_t samples = 100000;
  std::uint64_t seed = 1;
};

/// When the full grid would exceed `budget`, the node count is lowered
/// uniformly down to `min_nodes_per_dim`; only below that does the MC
/// fallback take over.
struct QuadratureSpec {
  int nodes_per_dim = 32;
  double budget = 1e7;  // max integrand evaluations for the tensor grid
  int min_nodes_per_dim = 6;
  std::optional<McFallback> mc_fallback = McFallback{};
};

}  // namespace hjparisi
