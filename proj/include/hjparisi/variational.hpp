// Copyright 2026 The hjparisi Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Convex-case variational formulas: sup_p P(p), the Hopf-Lax form and the
// classic Parisi functional with its saddle point over the tilt y.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "critpoint.hpp"
#include "error.hpp"
#include "linalg.hpp"
#include "model.hpp"
#include "onebody.hpp"
#include "path.hpp"
#include "rng.hpp"

namespace hjparisi {

struct VariationalOptions {
  /// Breakpoints of the optimization partition (merged with those of q).
  /// Empty means four equal blocks.
  std::vector<double> partition;
  int starts = 4;
  int max_iters = 300;
  double tol = 1e-9;       // first-order residual counted as converged
  double fail_tol = 1e-4;  // residual above which a stalled ascent is an error
  std::uint64_t seed = 1;
  std::optional<SignedPiecewisePath> initial_p;  // extra start, tried first
  int convexity_samples = 200;
};

struct VariationalResult {
  double value = -std::numeric_limits<double>::infinity();
  PiecewisePath argmax_path;
  int optimizer_iters = 0;
  double first_order_residual = std::numeric_limits<double>::infinity();
  bool converged = false;
  int best_start = -1;
  std::vector<std::string> warnings;
};

namespace detail {

inline std::vector<double> optimization_partition(const VariationalOptions& opts, const std::vector<double>& base) {
  std::vector<double> z = opts.partition.empty() ? std::vector<double>{0.0, 0.25, 0.5, 0.75} : opts.partition;
  return merge_breakpoints(z, base);
}

/// Feasible image: PSD increments by eigenvalue clipping, then a common
/// rescaling so that the last (largest) block has norm at most cap.
inline std::vector<Mat> project_increasing(const std::vector<Mat>& v, double cap) {
  std::vector<Mat> out;
  out.reserve(v.size());
  Mat prev = Mat::Zero(v.front().rows(), v.front().cols());
  for (const auto& m : v) {
    prev = prev + clip_psd(symmetrize(m) - prev);
    out.push_back(prev);
  }
  const double n = out.back().norm();
  if (std::isfinite(cap) && n > cap)
    for (auto& m : out) m *= cap / n;
  return out;
}

inline std::vector<Mat> random_increasing(rng::Stream& s, int dim, std::size_t blocks, double cap) {
  std::vector<Mat> v;
  Mat acc = Mat::Zero(dim, dim);
  for (std::size_t k = 0; k < blocks; ++k) {
    acc += random_psd(s, dim, cap / static_cast<double>(blocks));
    v.push_back(acc);
  }
  return v;
}

inline void add_convexity_warning(const XiModel& model, const VariationalOptions& opts, VariationalResult& r) {
  const auto report = convexity_probe(model, opts.convexity_samples, opts.seed);
  if (!report.is_convex_on_psd)
    r.warnings.push_back("xi failed the convexity probe; the variational value need not equal the limit");
}

/// Backtracking ascent x <- x + eta (target(x) - x) on a convex feasible set.
/// `eval` returns (objective, target) or nullopt when x is infeasible.
struct AscentState {
  std::vector<Mat> x;
  double value;
  std::vector<Mat> target;
};

template <class Eval>
void damped_ascent(Eval&& eval, AscentState& st, const std::vector<double>& zetas, const VariationalOptions& opts,
                   int& iters, double& residual) {
  const auto dist = [&](const std::vector<Mat>& a, const std::vector<Mat>& b) {
    return lp_distance(SignedPiecewisePath(zetas, a), SignedPiecewisePath(zetas, b), 2.0);
  };
  residual = dist(st.x, st.target);
  for (iters = 0; iters < opts.max_iters && residual > opts.tol;) {
    ++iters;
    bool moved = false;
    for (double eta = 1.0; eta >= 1.0 / 1024.0; eta *= 0.5) {
      std::vector<Mat> next(st.x.size());
      for (std::size_t k = 0; k < next.size(); ++k) next[k] = symmetrize(st.x[k] + eta * (st.target[k] - st.x[k]));
      auto trial = eval(next);
      if (!trial || !(trial->value > st.value)) continue;
      st = std::move(*trial);
      moved = true;
      break;
    }
    residual = dist(st.x, st.target);
    if (!moved) break;
  }
}

}  // namespace detail

/// sup over increasing step paths p with |p| <= 1 of P_{t,q}(p), optionally
/// with a tilt x inside psi. The ascent direction d psi(q + t grad xi(p)) - p
/// is an ascent direction for convex xi and keeps iterates feasible.
inline VariationalResult parisi_sup(const XiModel& model, const ReferenceMeasure& p1, double t, const PiecewisePath& q,
                                    const VariationalOptions& opts = {}, const QuadratureSpec& quad = {},
                                    int threads = 1, const std::optional<Mat>& tilt = std::nullopt) {
  require(t >= 0.0, ErrorCode::InvalidArgument, "t must be non-negative");
  require(model.dim() == q.dim() && p1.dim() == q.dim(), ErrorCode::InvalidArgument, "dimension mismatch");
  const int dim = q.dim();
  const Mat x = tilt ? symmetrize(*tilt) : Mat::Zero(dim, dim);
  const auto zetas = detail::optimization_partition(opts, q.zetas());
  const auto base = q.on_partition(zetas);

  const auto eval = [&](const std::vector<Mat>& p) -> std::optional<detail::AscentState> {
    const SignedPiecewisePath path(zetas, p);
    const auto shifted = detail::shifted_path(model, t, 0.0, base, path);
    if (!shifted) return std::nullopt;
    auto out = detail::run_recursion(p1, *shifted, x, quad, true, threads);
    const double value = out.value - t * path.integrate([&](const Mat& a) { return theta_eval(model, a); });
    return detail::AscentState{p, value, std::move(out.p)};
  };

  std::vector<std::vector<Mat>> starts;
  if (opts.initial_p) starts.push_back(detail::project_increasing(opts.initial_p->on_partition(zetas).values(), 1.0));
  {
    auto g = detail::run_recursion(p1, base, x, quad, true, threads).p;
    starts.push_back(detail::project_increasing(g, 1.0));
  }
  auto stream = rng::Stream::keyed(opts.seed, rng::Purpose::Start, 1);
  while (static_cast<int>(starts.size()) < std::max(opts.starts, 1) + (opts.initial_p ? 1 : 0))
    starts.push_back(detail::random_increasing(stream, dim, zetas.size(), stream.uniform()));

  VariationalResult best;
  for (std::size_t s = 0; s < starts.size(); ++s) {
    auto st = eval(starts[s]);
    if (!st) continue;
    int iters = 0;
    double residual = 0.0;
    detail::damped_ascent(eval, *st, zetas, opts, iters, residual);
    best.optimizer_iters += iters;
    if (st->value > best.value) {
      best.value = st->value;
      best.argmax_path = PiecewisePath(zetas, st->x);
      best.first_order_residual = residual;
      best.best_start = static_cast<int>(s);
    }
  }
  require(best.best_start >= 0, ErrorCode::NonConvergence, "no feasible start for the Parisi supremum");
  require(best.first_order_residual <= opts.fail_tol, ErrorCode::NonConvergence,
          "Parisi ascent stalled at first-order residual " + std::to_string(best.first_order_residual));
  best.converged = best.first_order_residual <= opts.tol;
  detail::add_convexity_warning(model, opts, best);
  return best;
}

/// sup over increasing q' of psi(q + q') - t int xi*(q'/t), with xi* evaluated
/// numerically. Iterates move towards t grad xi(d psi(q + q')), which is an
/// ascent direction by monotonicity of grad xi for convex xi.
inline VariationalResult hopf_lax_value(const XiModel& model, const ReferenceMeasure& p1, double t,
                                        const PiecewisePath& q, const VariationalOptions& opts = {},
                                        const QuadratureSpec& quad = {}, int threads = 1,
                                        const XiStarOptions& star = {}) {
  require(t > 0.0, ErrorCode::InvalidArgument, "t must be positive");
  require(model.dim() == q.dim() && p1.dim() == q.dim(), ErrorCode::InvalidArgument, "dimension mismatch");
  const int dim = q.dim();
  const Mat zero = Mat::Zero(dim, dim);
  const auto zetas = detail::optimization_partition(opts, q.zetas());
  const auto base = q.on_partition(zetas);
  const SignedPiecewisePath width_probe(zetas, std::vector<Mat>(zetas.size(), zero));

  const auto toward = [&](const std::vector<Mat>& g) {
    std::vector<Mat> v;
    for (const auto& m : g) v.push_back(t * xi_grad(model, m));
    return detail::project_increasing(v, std::numeric_limits<double>::infinity());
  };
  const auto eval = [&](const std::vector<Mat>& qp) -> std::optional<detail::AscentState> {
    std::vector<Mat> total;
    for (std::size_t k = 0; k < qp.size(); ++k) total.push_back(symmetrize(base.value(k) + qp[k]));
    std::optional<PiecewisePath> path;
    try {
      path.emplace(zetas, total);
      (void)PiecewisePath(zetas, qp);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::NotIncreasing) return std::nullopt;
      throw;
    }
    auto out = detail::run_recursion(p1, *path, zero, quad, true, threads);
    double penalty = 0.0;
    for (std::size_t k = 0; k < qp.size(); ++k)
      penalty += width_probe.width(k) * xi_star_solve(model, qp[k] / t, star).value;
    return detail::AscentState{qp, out.value - t * penalty, toward(out.p)};
  };

  std::vector<std::vector<Mat>> starts;
  if (opts.initial_p) {
    const auto init = opts.initial_p->on_partition(zetas);
    std::vector<Mat> v;
    for (const auto& m : init.values()) v.push_back(t * xi_grad(model, m));
    starts.push_back(detail::project_increasing(v, std::numeric_limits<double>::infinity()));
  }
  starts.push_back(toward(detail::run_recursion(p1, base, zero, quad, true, threads).p));
  starts.push_back(std::vector<Mat>(zetas.size(), zero));
  auto stream = rng::Stream::keyed(opts.seed, rng::Purpose::Start, 2);
  while (static_cast<int>(starts.size()) < std::max(opts.starts, 2) + (opts.initial_p ? 1 : 0))
    starts.push_back(toward(detail::random_increasing(stream, dim, zetas.size(), stream.uniform())));

  VariationalResult best;
  for (std::size_t s = 0; s < starts.size(); ++s) {
    auto st = eval(starts[s]);
    if (!st) continue;
    int iters = 0;
    double residual = 0.0;
    detail::damped_ascent(eval, *st, zetas, opts, iters, residual);
    best.optimizer_iters += iters;
    if (st->value > best.value) {
      best.value = st->value;
      best.argmax_path = PiecewisePath(zetas, st->x);
      best.first_order_residual = residual;
      best.best_start = static_cast<int>(s);
    }
  }
  require(best.best_start >= 0, ErrorCode::NonConvergence, "no feasible start for the Hopf-Lax supremum");
  // Residual here is measured in q' units; scale back to p units for the tolerance.
  require(best.first_order_residual <= opts.fail_tol * std::max(1.0, t * 16.0), ErrorCode::NonConvergence,
          "Hopf-Lax ascent stalled at first-order residual " + std::to_string(best.first_order_residual));
  best.converged = best.first_order_residual <= opts.tol * std::max(1.0, t * 16.0);
  detail::add_convexity_warning(model, opts, best);
  return best;
}

/// E log int int exp(w(alpha) . s - 1/2 r(1) . ss^T + x . ss^T) dP1 dR + 1/2 int theta(pi),
/// with r = grad xi o pi and w the cascade field of r (no sqrt 2).
inline double classic_parisi(const XiModel& model, const ReferenceMeasure& p1, const PiecewisePath& pi, const Mat& x,
                             const QuadratureSpec& quad = {}, int threads = 1) {
  require(model.dim() == pi.dim() && p1.dim() == pi.dim(), ErrorCode::InvalidArgument, "dimension mismatch");
  std::vector<Mat> half;
  for (const auto& v : pi.values()) half.push_back(0.5 * xi_grad(model, v));
  std::optional<PiecewisePath> r;
  try {
    r.emplace(pi.zetas(), std::move(half));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::NotIncreasing) throw Error(ErrorCode::NotIncreasing, "grad xi o pi is not increasing");
    throw;
  }
  const double first = -psi_eval(p1, *r, quad, x, threads).value;
  return first + 0.5 * pi.integrate([&](const Mat& a) { return theta_eval(model, a); });
}

struct StdOptions {
  VariationalOptions inner = [] {
    VariationalOptions o;
    o.starts = 3;
    return o;
  }();
  int grid = 5;             // grid points per coordinate of y
  double y_radius = 0.0;    // 0 picks max_atoms |grad xi(tt^T)| + 0.1
  double tol = 1e-6;        // final pattern-search step
  int max_evals = 400;
  XiStarOptions star;
};

struct StdResult {
  double value = -std::numeric_limits<double>::infinity();
  Mat y;
  VariationalResult inner;        // sup of P with tilt y at t = 1/2, q = 0
  double annealed_upper_bound = 0.0;
  int evaluations = 0;
  std::vector<std::string> warnings;
};

/// sup_y inf_pi { classic_parisi(pi, y) - 1/2 xi*(2y) }. The inner infimum is
/// - sup_p P_{1/2,0}(p) with tilt y; the outer search is a grid followed by a
/// compass search over the symmetric coordinates of y. No global-optimality
/// claim is made for either level.
inline StdResult parisi_std(const XiModel& model, const ReferenceMeasure& p1, const StdOptions& opts = {},
                            const QuadratureSpec& quad = {}, int threads = 1) {
  require(model.dim() == p1.dim(), ErrorCode::InvalidArgument, "dimension mismatch");
  const int dim = model.dim();
  StdResult best;
  double radius = opts.y_radius;
  for (const auto& atom : p1.atoms()) {
    const Mat tt = atom * atom.transpose();
    best.annealed_upper_bound = std::max(best.annealed_upper_bound, 0.5 * model(tt));
    if (opts.y_radius <= 0.0) radius = std::max(radius, xi_grad(model, tt).norm() + 0.1);
  }

  const auto zero_path = PiecewisePath::zero(dim);
  // When every atom has the same tt^T the tilt only shifts psi by -y . tt^T,
  // so a single inner solve serves every y.
  const Mat tt0 = p1.atoms().front() * p1.atoms().front().transpose();
  bool constant_self = true;
  for (const auto& atom : p1.atoms())
    constant_self = constant_self && (atom * atom.transpose() - tt0).cwiseAbs().maxCoeff() <= 1e-14;
  std::optional<VariationalResult> shared;
  if (constant_self) shared = parisi_sup(model, p1, 0.5, zero_path, opts.inner, quad, threads);
  std::optional<SignedPiecewisePath> warm;
  const auto f = [&](const Mat& y, VariationalResult* inner_out) {
    ++best.evaluations;
    VariationalResult inner;
    if (shared) {
      inner = *shared;
      inner.value -= (y.array() * tt0.array()).sum();
    } else {
      auto o = opts.inner;
      if (warm) o.initial_p = warm;
      inner = parisi_sup(model, p1, 0.5, zero_path, o, quad, threads, y);
      warm = SignedPiecewisePath(inner.argmax_path);
    }
    const double value = -inner.value - 0.5 * xi_star_solve(model, 2.0 * y, opts.star).value;
    if (inner_out) *inner_out = std::move(inner);
    return value;
  };

  const auto basis = symmetric_basis(dim);
  const std::size_t nb = basis.size();
  // Coarse grid over [-radius, radius] in each symmetric coordinate.
  std::vector<int> idx(nb, 0);
  Mat y_best = Mat::Zero(dim, dim);
  double f_best = -std::numeric_limits<double>::infinity();
  const int g = std::max(opts.grid, 1);
  while (true) {
    Mat y = Mat::Zero(dim, dim);
    for (std::size_t i = 0; i < nb; ++i)
      y += basis[i] * (g == 1 ? 0.0 : -radius + 2.0 * radius * idx[i] / (g - 1));
    const double v = f(y, nullptr);
    if (v > f_best) {
      f_best = v;
      y_best = y;
    }
    std::size_t i = 0;
    while (i < nb && ++idx[i] == g) idx[i++] = 0;
    if (i == nb) break;
  }
  // Compass search.
  double step = g > 1 ? 2.0 * radius / (g - 1) : radius;
  while (step > opts.tol && best.evaluations < opts.max_evals) {
    bool improved = false;
    for (std::size_t i = 0; i < nb && !improved; ++i) {
      for (double sign : {1.0, -1.0}) {
        const Mat y = y_best + sign * step * basis[i];
        const double v = f(y, nullptr);
        if (v > f_best) {
          f_best = v;
          y_best = y;
          improved = true;
          break;
        }
      }
    }
    if (!improved) step *= 0.5;
  }
  if (step > opts.tol) best.warnings.push_back("tilt search stopped at the evaluation cap");
  best.value = f(y_best, &best.inner);
  best.y = y_best;
  for (const auto& w : best.inner.warnings) best.warnings.push_back(w);
  return best;
}

}  // namespace hjparisi
