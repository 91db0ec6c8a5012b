// Copyright 2026 The hjparisi Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Hamilton-Jacobi functionals and their critical points
//   q' = q + t grad xi(p) + 2 that p,   p = d psi / dq (q').

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "error.hpp"
#include "linalg.hpp"
#include "model.hpp"
#include "onebody.hpp"
#include "path.hpp"

namespace hjparisi {

namespace detail {

/// q + t grad xi(p) + 2 that p on the common partition; nullopt if that is not increasing.
inline std::optional<PiecewisePath> shifted_path(const XiModel& model, double t, double t_hat, const PiecewisePath& q,
                                                 const SignedPiecewisePath& p) {
  const auto [x, y] = common_refinement(static_cast<const SignedPiecewisePath&>(q), p);
  std::vector<Mat> v;
  v.reserve(x.blocks());
  for (std::size_t k = 0; k < x.blocks(); ++k)
    v.push_back(symmetrize(x.value(k) + t * xi_grad(model, y.value(k)) + 2.0 * t_hat * y.value(k)));
  try {
    return PiecewisePath(x.zetas(), std::move(v));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::NotIncreasing) return std::nullopt;
    throw;
  }
}

}  // namespace detail

/// J = psi(q') + <p, q - q'> + t int xi(p).
inline double hj_functional(const XiModel& model, const ReferenceMeasure& p1, double t, const PiecewisePath& q,
                            const PiecewisePath& q_prime, const SignedPiecewisePath& p,
                            const QuadratureSpec& quad = {}, int threads = 1) {
  const double psi = psi_eval(p1, q_prime, quad, std::nullopt, threads).value;
  const auto diff = combine(1.0, q, -1.0, q_prime);
  return psi + l2_dot(p, diff) + t * p.integrate([&](const Mat& a) { return model(a); });
}

/// J-hat = J + that int |p|^2.
inline double hat_functional(const XiModel& model, const ReferenceMeasure& p1, double t, double t_hat,
                             const PiecewisePath& q, const PiecewisePath& q_prime, const SignedPiecewisePath& p,
                             const QuadratureSpec& quad = {}, int threads = 1) {
  return hj_functional(model, p1, t, q, q_prime, p, quad, threads) +
         t_hat * p.integrate([](const Mat& a) { return a.squaredNorm(); });
}

/// P = psi(q + t grad xi(p)) - t int theta(p).
inline double parisi_functional(const XiModel& model, const ReferenceMeasure& p1, double t, const PiecewisePath& q,
                                const SignedPiecewisePath& p, const QuadratureSpec& quad = {}, int threads = 1) {
  const auto shifted = detail::shifted_path(model, t, 0.0, q, p);
  require(shifted.has_value(), ErrorCode::NotIncreasing, "q + t grad xi(p) is not increasing");
  return psi_eval(p1, *shifted, quad, std::nullopt, threads).value -
         t * p.integrate([&](const Mat& a) { return theta_eval(model, a); });
}

struct SolverOptions {
  double damping = 0.5;
  double tol = 1e-8;
  int max_iters = 500;
  std::optional<SignedPiecewisePath> initial_p;
};

struct CriticalPoint {
  SignedPiecewisePath p;
  PiecewisePath q_prime;
  double j_value = std::numeric_limits<double>::quiet_NaN();
  double residual_l2 = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
  double t = 0.0;
  double t_hat = 0.0;
  std::vector<double> residual_history;
  std::string diagnostic;
};

/// |p - d psi(q + t grad xi(p) + 2 that p)|_{L^2}, or +inf if the shifted path is not increasing.
inline double critical_residual(const XiModel& model, const ReferenceMeasure& p1, double t, double t_hat,
                                const PiecewisePath& q, const SignedPiecewisePath& p, const QuadratureSpec& quad = {},
                                int threads = 1) {
  const auto shifted = detail::shifted_path(model, t, t_hat, q, p);
  if (!shifted) return std::numeric_limits<double>::infinity();
  const auto g = psi_grad(p1, *shifted, quad, 1e-4, GradMethod::Gibbs, std::nullopt, threads);
  return lp_distance(p, g.p, 2.0);
}

/// Damped fixed-point iteration p <- (1 - w) p + w d psi(q + t grad xi(p) + 2 that p).
/// Non-convergence is reported in the result, not thrown.
inline CriticalPoint solve_critical(const XiModel& model, const ReferenceMeasure& p1, double t, double t_hat,
                                    const PiecewisePath& q, const SolverOptions& opts = {},
                                    const QuadratureSpec& quad = {}, int threads = 1) {
  require(t >= 0.0 && t_hat >= 0.0, ErrorCode::InvalidArgument, "t and t_hat must be non-negative");
  require(opts.damping > 0.0 && opts.damping <= 1.0, ErrorCode::InvalidArgument, "damping must lie in (0, 1]");
  require(opts.max_iters >= 1, ErrorCode::InvalidArgument, "max_iters must be >= 1");
  require(model.dim() == q.dim() && p1.dim() == q.dim(), ErrorCode::InvalidArgument, "dimension mismatch");

  CriticalPoint cp;
  cp.t = t;
  cp.t_hat = t_hat;
  PiecewisePath base = q;
  SignedPiecewisePath p;
  if (opts.initial_p) {
    require(opts.initial_p->dim() == q.dim(), ErrorCode::InvalidArgument, "initial p has the wrong dimension");
    const auto zetas = merge_breakpoints(q.zetas(), opts.initial_p->zetas());
    base = q.on_partition(zetas);
    p = opts.initial_p->on_partition(zetas);
  } else {
    p = psi_grad(p1, q, quad, 1e-4, GradMethod::Gibbs, std::nullopt, threads).p;
  }

  for (int it = 1; it <= opts.max_iters; ++it) {
    cp.iterations = it;
    const auto shifted = detail::shifted_path(model, t, t_hat, base, p);
    if (!shifted) {
      cp.p = p;
      cp.diagnostic = "q + t grad xi(p) + 2 that p is not increasing at iteration " + std::to_string(it);
      return cp;
    }
    const auto g = psi_grad(p1, *shifted, quad, 1e-4, GradMethod::Gibbs, std::nullopt, threads).p;
    const double residual = lp_distance(p, g, 2.0);
    cp.residual_history.push_back(residual);
    cp.residual_l2 = residual;
    cp.p = p;
    cp.q_prime = *shifted;
    if (residual <= opts.tol) {
      cp.converged = true;
      break;
    }
    if (!std::isfinite(residual)) {
      cp.diagnostic = "residual is not finite";
      return cp;
    }
    p = combine(1.0 - opts.damping, p, opts.damping, g);
  }
  if (!cp.converged)
    cp.diagnostic = "no convergence after " + std::to_string(opts.max_iters) + " iterations, residual " +
                    std::to_string(cp.residual_l2);
  cp.j_value = hat_functional(model, p1, t, t_hat, base.on_partition(cp.p.zetas()), cp.q_prime, cp.p, quad, threads);
  return cp;
}

/// (16 C)^-1 with C the Lipschitz constant of grad xi on the unit PSD ball.
inline double t_critical(const XiModel& model, int samples = 200, std::uint64_t seed = 1) {
  const double c = grad_lipschitz_const(model, samples, seed).estimate;
  return c <= 1e-14 ? std::numeric_limits<double>::infinity() : 1.0 / (16.0 * c);
}

struct ContinuationResult {
  std::vector<CriticalPoint> points;
  std::vector<double> jumps;           // L^2 distance of p between grid points i-1 and i (jumps[0] = 0)
  std::vector<std::size_t> flagged;    // indices whose jump exceeds the threshold
};

/// Sequential warm-started solves along t_grid. A jump is flagged when it
/// exceeds jump_factor * dt * 16 sup_k |grad xi(p_k)|, a heuristic bound on
/// |dp/dt| in the contraction regime.
inline ContinuationResult continuation(const XiModel& model, const ReferenceMeasure& p1,
                                       const std::vector<double>& t_grid, double t_hat, const PiecewisePath& q,
                                       SolverOptions opts = {}, const QuadratureSpec& quad = {}, int threads = 1,
                                       double jump_factor = 10.0) {
  require(!t_grid.empty(), ErrorCode::InvalidArgument, "t_grid must not be empty");
  for (std::size_t i = 1; i < t_grid.size(); ++i)
    require(t_grid[i] > t_grid[i - 1], ErrorCode::InvalidArgument, "t_grid must be increasing");
  ContinuationResult out;
  for (std::size_t i = 0; i < t_grid.size(); ++i) {
    auto cp = solve_critical(model, p1, t_grid[i], t_hat, q, opts, quad, threads);
    double jump = 0.0;
    if (i > 0) {
      const auto& prev = out.points.back();
      jump = lp_distance(prev.p, cp.p, 2.0);
      double slope = 0.0;
      for (const auto& v : prev.p.values()) slope = std::max(slope, 16.0 * xi_grad(model, v).norm());
      const double threshold = jump_factor * (t_grid[i] - t_grid[i - 1]) * std::max(slope, 1e-12);
      if (jump > threshold) out.flagged.push_back(i);
    }
    out.jumps.push_back(jump);
    opts.initial_p = cp.p;
    out.points.push_back(std::move(cp));
  }
  return out;
}

}  // namespace hjparisi
