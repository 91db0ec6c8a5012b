// Copyright 2026 The hjparisi Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Covariance functions xi(a) = sum_p C^(p) . a^{(x)p} and reference measures.

#include <algorithm>
#include <array>
#include <limits>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "error.hpp"
#include "linalg.hpp"
#include "rng.hpp"

namespace hjparisi {

inline constexpr int kMaxDim = 4;
inline constexpr int kMaxDegree = 4;

struct XiTerm {
  int degree = 0;
  Mat coeff;  // D^p x D^p, symmetric PSD
};

class XiModel {
 public:
  XiModel(int dim, std::vector<XiTerm> terms) : dim_(dim), terms_(std::move(terms)) {
    require(dim_ >= 1 && dim_ <= kMaxDim, ErrorCode::InvalidArgument,
            "spin dimension must lie in [1, " + std::to_string(kMaxDim) + "]");
    for (const auto& term : terms_) {
      require(term.degree >= 1 && term.degree <= kMaxDegree, ErrorCode::InvalidArgument,
              "degree must lie in [1, " + std::to_string(kMaxDegree) + "]");
      const auto side = ipow(dim_, term.degree);
      require(term.coeff.rows() == side && term.coeff.cols() == side, ErrorCode::InvalidArgument,
              "coefficient of degree " + std::to_string(term.degree) + " must be " +
                  std::to_string(side) + "x" + std::to_string(side));
      const double scale = std::max(1.0, term.coeff.cwiseAbs().maxCoeff());
      require((term.coeff - term.coeff.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * scale,
              ErrorCode::InvalidArgument, "coefficient tensor is not symmetric");
      require(min_eigenvalue(term.coeff) >= -kPsdTol, ErrorCode::NotPsd,
              "coefficient tensor is not positive semi-definite");
      compile(term);
    }
  }

  [[nodiscard]] int dim() const { return dim_; }
  [[nodiscard]] const std::vector<XiTerm>& terms() const { return terms_; }

  [[nodiscard]] int max_degree() const {
    int p = 0;
    for (const auto& t : terms_) p = std::max(p, t.degree);
    return p;
  }

  [[nodiscard]] bool is_zero() const {
    return std::all_of(terms_.begin(), terms_.end(),
                       [](const XiTerm& t) { return t.coeff.cwiseAbs().maxCoeff() == 0.0; });
  }

  /// xi(a) by exact contraction of every coefficient tensor with a^{(x)p}.
  [[nodiscard]] double operator()(const Mat& a) const {
    check_shape(a);
    double total = 0.0;
    for (const auto& entry : entries_) {
      double prod = entry.value;
      for (int k = 0; k < entry.degree; ++k) prod *= a(entry.row[k], entry.col[k]);
      total += prod;
    }
    return total;
  }

  /// Unsymmetrized gradient of xi with respect to the D x D entries of a.
  [[nodiscard]] Mat gradient_raw(const Mat& a) const {
    check_shape(a);
    Mat grad = Mat::Zero(dim_, dim_);
    for (const auto& entry : entries_) {
      for (int k = 0; k < entry.degree; ++k) {
        double prod = entry.value;
        for (int m = 0; m < entry.degree; ++m)
          if (m != k) prod *= a(entry.row[m], entry.col[m]);
        grad(entry.row[k], entry.col[k]) += prod;
      }
    }
    return grad;
  }

  /// Hessian as a D^2 x D^2 matrix indexed by (i*D + j, k*D + l).
  [[nodiscard]] Mat hessian(const Mat& a) const {
    check_shape(a);
    const int d2 = dim_ * dim_;
    Mat hess = Mat::Zero(d2, d2);
    for (const auto& entry : entries_) {
      for (int m = 0; m < entry.degree; ++m) {
        for (int n = 0; n < entry.degree; ++n) {
          if (m == n) continue;
          double prod = entry.value;
          for (int r = 0; r < entry.degree; ++r)
            if (r != m && r != n) prod *= a(entry.row[r], entry.col[r]);
          hess(entry.row[m] * dim_ + entry.col[m], entry.row[n] * dim_ + entry.col[n]) += prod;
        }
      }
    }
    return hess;
  }

  /// Named constructors. `beta` is the Gaussian amplitude: the coefficient is beta^2.
  static XiModel sk(double beta = 1.0) { return pure_p(2, beta); }

  static XiModel pure_p(int p, double beta = 1.0) {
    return XiModel(1, {XiTerm{p, Mat::Constant(1, 1, beta * beta)}});
  }

  /// xi(A) = beta^2 A_11 A_22.
  static XiModel bipartite(double beta = 1.0) {
    Mat c = Mat::Zero(4, 4);
    c(1, 1) = beta * beta;  // multi-index (d1, d2) = (1, 2) in row-major order
    return XiModel(2, {XiTerm{2, c}});
  }

  /// xi(A) = beta^2 |A|^2.
  static XiModel frobenius_square(double beta = 1.0, int dim = 2) {
    const int side = dim * dim;
    Vec v = Vec::Zero(side);
    for (int i = 0; i < dim; ++i) v(i * dim + i) = 1.0;
    return XiModel(dim, {XiTerm{2, beta * beta * v * v.transpose()}});
  }

  static XiModel linear(const Mat& c) { return XiModel(static_cast<int>(c.rows()), {XiTerm{1, c}}); }

 private:
  struct Entry {
    int degree = 0;
    double value = 0.0;
    std::array<int, kMaxDegree> row{};
    std::array<int, kMaxDegree> col{};
  };

  static Eigen::Index ipow(int base, int exp) {
    Eigen::Index r = 1;
    for (int i = 0; i < exp; ++i) r *= base;
    return r;
  }

  void compile(const XiTerm& term) {
    const auto side = ipow(dim_, term.degree);
    for (Eigen::Index r = 0; r < side; ++r) {
      for (Eigen::Index c = 0; c < side; ++c) {
        const double v = term.coeff(r, c);
        if (v == 0.0) continue;
        Entry e;
        e.degree = term.degree;
        e.value = v;
        // Multi-index digits are stored most-significant first.
        Eigen::Index rr = r, cc = c;
        for (int k = term.degree - 1; k >= 0; --k) {
          e.row[k] = static_cast<int>(rr % dim_);
          e.col[k] = static_cast<int>(cc % dim_);
          rr /= dim_;
          cc /= dim_;
        }
        entries_.push_back(e);
      }
    }
  }

  void check_shape(const Mat& a) const {
    require(a.rows() == dim_ && a.cols() == dim_, ErrorCode::InvalidArgument,
            "argument must be " + std::to_string(dim_) + "x" + std::to_string(dim_));
  }

  int dim_;
  std::vector<XiTerm> terms_;
  std::vector<Entry> entries_;
};

/// P_1: a finitely supported probability measure inside the closed unit ball.
class ReferenceMeasure {
 public:
  ReferenceMeasure(std::vector<Vec> atoms, std::vector<double> weights)
      : atoms_(std::move(atoms)), weights_(std::move(weights)) {
    require(!atoms_.empty() && atoms_.size() == weights_.size(), ErrorCode::InvalidArgument,
            "reference measure needs matching non-empty atoms and weights");
    const auto dim = atoms_.front().size();
    double total = 0.0;
    for (std::size_t i = 0; i < atoms_.size(); ++i) {
      require(atoms_[i].size() == dim, ErrorCode::InvalidArgument, "atoms have mixed dimensions");
      require(atoms_[i].norm() <= 1.0 + 1e-12, ErrorCode::InvalidArgument,
              "atom outside the closed unit ball");
      require(weights_[i] >= 0.0, ErrorCode::InvalidArgument, "negative weight");
      total += weights_[i];
    }
    require(std::abs(total - 1.0) <= 1e-12, ErrorCode::InvalidArgument, "weights must sum to 1");
  }

  /// Uniform measure on the 2^D corners of the hypercube, scaled to unit norm.
  static ReferenceMeasure ising(int dim) {
    std::vector<Vec> atoms;
    const int count = 1 << dim;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
    for (int mask = 0; mask < count; ++mask) {
      Vec v(dim);
      for (int d = 0; d < dim; ++d) v(d) = ((mask >> d) & 1) ? -scale : scale;
      atoms.push_back(std::move(v));
    }
    return ReferenceMeasure(std::move(atoms), std::vector<double>(count, 1.0 / count));
  }

  [[nodiscard]] int dim() const { return static_cast<int>(atoms_.front().size()); }
  [[nodiscard]] std::size_t size() const { return atoms_.size(); }
  [[nodiscard]] const std::vector<Vec>& atoms() const { return atoms_; }
  [[nodiscard]] const std::vector<double>& weights() const { return weights_; }

 private:
  std::vector<Vec> atoms_;
  std::vector<double> weights_;
};

inline double xi_eval(const XiModel& model, const Mat& a) { return model(a); }

/// sym(grad xi(a)).
inline Mat xi_grad(const XiModel& model, const Mat& a) { return symmetrize(model.gradient_raw(a)); }

/// Largest entry of grad - grad^T; zero up to rounding for symmetric a.
inline double xi_grad_asymmetry(const XiModel& model, const Mat& a) {
  const Mat g = model.gradient_raw(a);
  return (g - g.transpose()).cwiseAbs().maxCoeff();
}

/// theta(a) = a . grad xi(a) - xi(a).
inline double theta_eval(const XiModel& model, const Mat& a) {
  return frob_dot(a, xi_grad(model, a)) - model(a);
}

struct XiStarOptions {
  double radius = 4.0;
  int starts = 8;
  double tol = 1e-8;
  int max_iters = 20000;
  std::uint64_t seed = 0x5eed;
};

struct XiStarResult {
  double value = 0.0;
  Mat argmax;
  double residual = 0.0;
  int iterations = 0;
};

namespace detail {

inline Mat project_psd_ball(const Mat& b, double radius) {
  Mat p = clip_psd(b);
  const double n = p.norm();
  if (n > radius) p *= radius / n;
  return p;
}

inline Mat random_psd(rng::Stream& stream, int dim, double max_norm) {
  Mat g(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) g(i, j) = stream.normal();
  // Random rank so that boundary points of the cone are exercised too.
  const int rank = 1 + static_cast<int>(stream.below(static_cast<std::uint64_t>(dim)));
  Mat a = g.leftCols(rank) * g.leftCols(rank).transpose();
  const double n = a.norm();
  if (n == 0.0) return Mat::Zero(dim, dim);
  return a * (max_norm * stream.uniform() / n);
}

}  // namespace detail

/// Numerical convex dual sup_{b PSD, |b| <= radius} {a . b - xi(b)} by
/// multi-start projected gradient ascent with backtracking.
inline XiStarResult xi_star_solve(const XiModel& model, const Mat& a, const XiStarOptions& opts = {}) {
  require(opts.radius > 0.0, ErrorCode::InvalidArgument, "xi_star radius must be positive");
  const int dim = model.dim();
  const Mat sa = symmetrize(a);
  auto objective = [&](const Mat& b) { return frob_dot(sa, b) - model(b); };
  auto ascent = [&](const Mat& b) -> Mat { return sa - xi_grad(model, b); };

  std::vector<Mat> starts;
  starts.push_back(Mat::Zero(dim, dim));
  starts.push_back(detail::project_psd_ball(sa, opts.radius));
  auto stream = rng::Stream::keyed(opts.seed, rng::Purpose::Start, dim);
  while (static_cast<int>(starts.size()) < std::max(opts.starts, 2))
    starts.push_back(detail::random_psd(stream, dim, opts.radius));

  XiStarResult best;
  best.value = -std::numeric_limits<double>::infinity();
  bool any_converged = false;
  for (const Mat& start : starts) {
    Mat b = start;
    double f = objective(b);
    double step = 1.0;
    double residual = 0.0;
    int it = 0;
    for (; it < opts.max_iters; ++it) {
      const Mat g = ascent(b);
      residual = (detail::project_psd_ball(b + g, opts.radius) - b).norm();
      if (residual <= opts.tol) break;
      // Armijo backtracking along the projection arc.
      step = std::min(1.0, step * 2.0);
      Mat next;
      double fn = f;
      for (int bt = 0; bt < 60; ++bt) {
        next = detail::project_psd_ball(b + step * g, opts.radius);
        fn = objective(next);
        if (fn >= f + 1e-4 / step * (next - b).squaredNorm()) break;
        step *= 0.5;
      }
      if (fn < f) break;
      b = next;
      f = fn;
    }
    if (residual <= opts.tol) any_converged = true;
    if (residual <= opts.tol && f > best.value) {
      best.value = f;
      best.argmax = b;
      best.residual = residual;
      best.iterations = it;
    }
  }
  require(any_converged, ErrorCode::NonConvergence,
          "xi_star ascent stalled above first-order tolerance");
  return best;
}

inline double xi_star(const XiModel& model, const Mat& a, double radius = 4.0) {
  XiStarOptions opts;
  opts.radius = radius;
  return xi_star_solve(model, a, opts).value;
}

struct ConvexityReport {
  bool is_convex_on_psd = true;
  struct Witness {
    Mat a;
    Mat b;
    double lambda = 0.0;
    double gap = 0.0;  // xi(lambda a + (1-lambda) b) - lambda xi(a) - (1-lambda) xi(b)
  };
  std::optional<Witness> witness;
};

/// Randomized midpoint-convexity test on PSD pairs in the unit ball.
/// A `true` verdict is only a probabilistic certificate.
inline ConvexityReport convexity_probe(const XiModel& model, int samples, std::uint64_t seed) {
  require(samples >= 1, ErrorCode::InvalidArgument, "samples must be >= 1");
  ConvexityReport report;
  constexpr double lambdas[] = {0.25, 0.5, 0.75};
  for (int s = 0; s < samples; ++s) {
    auto stream = rng::Stream::keyed(seed, rng::Purpose::Probe, 1, s);
    const Mat a = detail::random_psd(stream, model.dim(), 1.0);
    const Mat b = detail::random_psd(stream, model.dim(), 1.0);
    for (double lambda : lambdas) {
      const double gap = model(lambda * a + (1 - lambda) * b) - lambda * model(a) - (1 - lambda) * model(b);
      if (gap > 1e-10 && (!report.witness || gap > report.witness->gap)) {
        report.is_convex_on_psd = false;
        report.witness = ConvexityReport::Witness{a, b, lambda, gap};
      }
    }
  }
  return report;
}

struct LipschitzEstimate {
  double estimate = 0.0;        // best sampled/refined ratio
  double analytic_bound = 0.0;  // sum_p p(p-1) ||C^(p)||_op
};

namespace detail {

/// Operator norm of the Hessian restricted to symmetric directions.
inline double symmetric_hessian_norm(const XiModel& model, const Mat& a) {
  const int dim = model.dim();
  std::vector<Mat> basis;
  for (int i = 0; i < dim; ++i) {
    for (int j = i; j < dim; ++j) {
      Mat e = Mat::Zero(dim, dim);
      if (i == j) {
        e(i, i) = 1.0;
      } else {
        e(i, j) = e(j, i) = 1.0 / std::sqrt(2.0);
      }
      basis.push_back(std::move(e));
    }
  }
  const Mat hess = model.hessian(a);
  const auto n = static_cast<Eigen::Index>(basis.size());
  Mat restricted(n, n);
  for (Eigen::Index u = 0; u < n; ++u) {
    const Eigen::Map<const Vec> eu(basis[u].data(), basis[u].size());
    for (Eigen::Index v = 0; v < n; ++v) {
      const Eigen::Map<const Vec> ev(basis[v].data(), basis[v].size());
      // Basis elements are symmetric, so row- and column-major flattening agree.
      restricted(u, v) = eu.dot(hess * ev);
    }
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(restricted), Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace detail

/// Lipschitz constant of grad xi over PSD matrices in the unit ball.
/// Sampled difference quotients are refined by hill-climbing the Hessian
/// norm, which is the limit of quotients over nearby pairs.
inline LipschitzEstimate grad_lipschitz_const(const XiModel& model, int samples, std::uint64_t seed) {
  require(samples >= 1, ErrorCode::InvalidArgument, "samples must be >= 1");
  LipschitzEstimate out;
  for (const auto& term : model.terms()) {
    Eigen::SelfAdjointEigenSolver<Mat> es(term.coeff, Eigen::EigenvaluesOnly);
    out.analytic_bound += term.degree * (term.degree - 1) * es.eigenvalues().cwiseAbs().maxCoeff();
  }
  const int dim = model.dim();
  double best = 0.0;
  Mat best_point = Mat::Zero(dim, dim);
  for (int s = 0; s < samples; ++s) {
    auto stream = rng::Stream::keyed(seed, rng::Purpose::Probe, 2, s);
    const Mat a = detail::random_psd(stream, dim, 1.0);
    const Mat b = detail::random_psd(stream, dim, 1.0);
    const double gap = (a - b).norm();
    if (gap > 1e-12) best = std::max(best, (xi_grad(model, a) - xi_grad(model, b)).norm() / gap);
    const double h = detail::symmetric_hessian_norm(model, a);
    if (h > best) {
      best = h;
      best_point = a;
    }
  }
  // Local refinement around the best point.
  auto stream = rng::Stream::keyed(seed, rng::Purpose::Probe, 3);
  double radius = 0.25;
  double current = detail::symmetric_hessian_norm(model, best_point);
  for (int it = 0; it < 400 && radius > 1e-6; ++it) {
    Mat trial = best_point + detail::random_psd(stream, dim, radius) - detail::random_psd(stream, dim, radius);
    trial = detail::project_psd_ball(trial, 1.0);
    const double h = detail::symmetric_hessian_norm(model, trial);
    if (h > current) {
      current = h;
      best_point = trial;
    } else if (it % 20 == 19) {
      radius *= 0.5;
    }
  }
  out.estimate = std::max(best, current);
  return out;
}

}  // namespace hjparisi
