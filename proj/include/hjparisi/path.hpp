// Copyright 2026 The hjparisi Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Right-continuous step paths u -> q(u) in S^D on [0, 1), q = sum_k q_k 1[zeta_k, zeta_{k+1}).

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "error.hpp"
#include "linalg.hpp"

namespace hjparisi {

/// Step path with arbitrary symmetric block values (directions, derivatives).
class SignedPiecewisePath {
 public:
  SignedPiecewisePath() = default;

  SignedPiecewisePath(std::vector<double> zetas, std::vector<Mat> values)
      : zetas_(std::move(zetas)), values_(std::move(values)) {
    require(!zetas_.empty() && zetas_.size() == values_.size(), ErrorCode::InvalidArgument,
            "a path needs as many block values as breakpoints");
    require(zetas_.front() == 0.0, ErrorCode::BadBreakpoints, "first breakpoint must be 0");
    for (std::size_t k = 1; k < zetas_.size(); ++k)
      require(zetas_[k] > zetas_[k - 1], ErrorCode::BadBreakpoints, "breakpoints must be strictly increasing");
    require(zetas_.back() < 1.0, ErrorCode::BadBreakpoints, "breakpoints must lie in [0, 1)");
    const auto dim = values_.front().rows();
    for (const auto& v : values_) {
      require(v.rows() == dim && v.cols() == dim, ErrorCode::InvalidArgument, "block values must be DxD");
      require((v - v.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, v.cwiseAbs().maxCoeff()),
              ErrorCode::InvalidArgument, "block values must be symmetric");
    }
  }

  static SignedPiecewisePath constant(const Mat& value) { return SignedPiecewisePath({0.0}, {value}); }

  [[nodiscard]] int dim() const { return static_cast<int>(values_.front().rows()); }
  /// Number of blocks, K + 1.
  [[nodiscard]] std::size_t blocks() const { return zetas_.size(); }
  [[nodiscard]] const std::vector<double>& zetas() const { return zetas_; }
  [[nodiscard]] const std::vector<Mat>& values() const { return values_; }
  [[nodiscard]] const Mat& value(std::size_t k) const { return values_[k]; }

  [[nodiscard]] double width(std::size_t k) const {
    return (k + 1 < zetas_.size() ? zetas_[k + 1] : 1.0) - zetas_[k];
  }

  /// q(u); q(1) is the last block value.
  [[nodiscard]] const Mat& at(double u) const {
    const auto it = std::upper_bound(zetas_.begin(), zetas_.end(), u);
    return values_[static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, it - zetas_.begin() - 1))];
  }

  [[nodiscard]] const Mat& terminal() const { return values_.back(); }

  /// Pointwise image under f, on the same partition.
  [[nodiscard]] SignedPiecewisePath map(const std::function<Mat(const Mat&)>& f) const {
    std::vector<Mat> out;
    out.reserve(values_.size());
    for (const auto& v : values_) out.push_back(f(v));
    return {zetas_, std::move(out)};
  }

  /// Exact integral of g(q(u)) over [0, 1).
  [[nodiscard]] double integrate(const std::function<double(const Mat&)>& g) const {
    double total = 0.0;
    for (std::size_t k = 0; k < values_.size(); ++k) total += width(k) * g(values_[k]);
    return total;
  }

  /// Splits every block into `parts` equal sub-blocks.
  [[nodiscard]] SignedPiecewisePath refined(int parts) const {
    require(parts >= 1, ErrorCode::InvalidArgument, "refinement factor must be >= 1");
    std::vector<double> z;
    std::vector<Mat> v;
    for (std::size_t k = 0; k < values_.size(); ++k) {
      for (int j = 0; j < parts; ++j) {
        z.push_back(zetas_[k] + width(k) * j / parts);
        v.push_back(values_[k]);
      }
    }
    return {std::move(z), std::move(v)};
  }

  /// Same function written on a finer partition containing this one.
  [[nodiscard]] SignedPiecewisePath on_partition(const std::vector<double>& zetas) const {
    std::vector<Mat> v;
    v.reserve(zetas.size());
    for (double z : zetas) v.push_back(at(z));
    return {zetas, std::move(v)};
  }

 protected:
  std::vector<double> zetas_;
  std::vector<Mat> values_;
};

/// Increasing S^D_+-valued step path: q_k - q_{k-1} is PSD (q_{-1} := 0).
/// Repeated values are allowed.
class PiecewisePath : public SignedPiecewisePath {
 public:
  PiecewisePath() = default;

  PiecewisePath(std::vector<double> zetas, std::vector<Mat> values)
      : SignedPiecewisePath(std::move(zetas), std::move(values)) {
    validate();
  }

  explicit PiecewisePath(const SignedPiecewisePath& path) : SignedPiecewisePath(path) { validate(); }

  static PiecewisePath constant(const Mat& value) { return PiecewisePath({0.0}, {value}); }

  static PiecewisePath zero(int dim) { return constant(Mat::Zero(dim, dim)); }

  [[nodiscard]] Mat increment(std::size_t k) const {
    return k == 0 ? values_[0] : Mat(values_[k] - values_[k - 1]);
  }

  [[nodiscard]] PiecewisePath refined(int parts) const {
    return PiecewisePath(SignedPiecewisePath::refined(parts));
  }

  [[nodiscard]] PiecewisePath on_partition(const std::vector<double>& zetas) const {
    return PiecewisePath(SignedPiecewisePath::on_partition(zetas));
  }

 private:
  void validate() const {
    for (std::size_t k = 0; k < values_.size(); ++k) {
      const double lambda = min_eigenvalue(increment(k));
      require(lambda >= -kPsdTol, ErrorCode::NotIncreasing,
              "increment " + std::to_string(k) + " has eigenvalue " + std::to_string(lambda));
    }
  }
};

inline PiecewisePath path_new(std::vector<double> zetas, std::vector<Mat> values) {
  return {std::move(zetas), std::move(values)};
}

inline std::vector<double> merge_breakpoints(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> out;
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

/// Both paths rewritten on the union of their breakpoints.
template <class Path>
std::pair<Path, Path> common_refinement(const Path& q, const Path& q2) {
  const auto zetas = merge_breakpoints(q.zetas(), q2.zetas());
  return {q.on_partition(zetas), q2.on_partition(zetas)};
}

/// Pointwise linear combination a q + b q2 on the common partition.
inline SignedPiecewisePath combine(double a, const SignedPiecewisePath& q, double b, const SignedPiecewisePath& q2) {
  const auto [x, y] = common_refinement(q, q2);
  std::vector<Mat> v;
  for (std::size_t k = 0; k < x.blocks(); ++k) v.push_back(a * x.value(k) + b * y.value(k));
  return {x.zetas(), std::move(v)};
}

/// Exact L^p([0,1]) distance with the Frobenius norm pointwise; p may be infinity.
inline double lp_distance(const SignedPiecewisePath& q, const SignedPiecewisePath& q2, double p) {
  require(p >= 1.0, ErrorCode::InvalidArgument, "L^p exponent must be >= 1");
  const auto [x, y] = common_refinement(q, q2);
  if (std::isinf(p)) {
    double m = 0.0;
    for (std::size_t k = 0; k < x.blocks(); ++k) m = std::max(m, (x.value(k) - y.value(k)).norm());
    return m;
  }
  double total = 0.0;
  for (std::size_t k = 0; k < x.blocks(); ++k) total += x.width(k) * std::pow((x.value(k) - y.value(k)).norm(), p);
  return std::pow(total, 1.0 / p);
}

/// <q, q2>_{L^2}.
inline double l2_dot(const SignedPiecewisePath& q, const SignedPiecewisePath& q2) {
  const auto [x, y] = common_refinement(q, q2);
  double total = 0.0;
  for (std::size_t k = 0; k < x.blocks(); ++k) total += x.width(k) * frob_dot(x.value(k), y.value(k));
  return total;
}

/// Whether int_t^1 kappa is PSD for every t. Tail integrals are affine in t
/// between breakpoints, so checking t at the breakpoints suffices.
inline bool dual_cone_member(const SignedPiecewisePath& kappa, double tol = kPsdTol) {
  Mat tail = Mat::Zero(kappa.dim(), kappa.dim());
  for (std::size_t k = kappa.blocks(); k-- > 0;) {
    tail += kappa.width(k) * kappa.value(k);
    if (!is_psd(tail, tol)) return false;
  }
  return true;
}

/// Uniform-increase test for the composite r(u) = q(u) + slope * u * Id:
/// r(v) - r(u) >= c (v - u) Id and Ellipt(r(v) - r(u)) <= 1/c for u <= v.
inline bool uniform_increase_check(const PiecewisePath& q, double slope, double c) {
  require(c > 0.0, ErrorCode::InvalidArgument, "c must be positive");
  const int dim = q.dim();
  const Mat id = Mat::Identity(dim, dim);
  // Within a block the increase is slope * (v - u) * Id.
  if (slope < c || 1.0 > 1.0 / c) return false;
  // Evaluation points: every breakpoint together with its left limit, and u = 1.
  struct Point {
    double u;
    Mat value;
  };
  std::vector<Point> points;
  for (std::size_t k = 0; k < q.blocks(); ++k) {
    if (k > 0) points.push_back({q.zetas()[k], q.value(k - 1) + slope * q.zetas()[k] * id});
    points.push_back({q.zetas()[k], q.value(k) + slope * q.zetas()[k] * id});
  }
  points.push_back({1.0, q.terminal() + slope * id});
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      const Mat diff = points[j].value - points[i].value;
      const double gap = points[j].u - points[i].u;
      if (diff.norm() == 0.0 && gap == 0.0) continue;
      Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(diff), Eigen::EigenvaluesOnly);
      const double lo = es.eigenvalues().minCoeff();
      const double hi = es.eigenvalues().maxCoeff();
      if (lo < c * gap - 1e-12) return false;
      if (lo <= 0.0 ? hi > 0.0 : hi / lo > 1.0 / c + 1e-12) return false;
    }
  }
  return true;
}

/// Principal square roots of the increments q_k - q_{k-1}.
inline std::vector<Mat> sqrt_increments(const PiecewisePath& q) {
  std::vector<Mat> out;
  out.reserve(q.blocks());
  for (std::size_t k = 0; k < q.blocks(); ++k) {
    try {
      out.push_back(psd_sqrt(q.increment(k)));
    } catch (const Error&) {
      throw Error(ErrorCode::NotIncreasing, "increment " + std::to_string(k) + " is not PSD");
    }
  }
  return out;
}

/// Directional derivative of the matrix square root at h in direction a:
/// the symmetric X with sqrt(h) X + X sqrt(h) = a.
inline Mat sqrt_directional_derivative(const Mat& h, const Mat& a) {
  require(min_eigenvalue(h) > 1e-12, ErrorCode::Singular, "h must be positive definite");
  return solve_symmetric_sylvester(psd_sqrt(h), symmetrize(a));
}

}  // namespace hjparisi
