// Copyright 2026 The hjparisi Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// The one-body free energy psi(q) = -E log sum_alpha v_alpha
// int exp(sqrt2 w^q(alpha).s - q(1).ss^T) dP1(s) and its path derivative.
//
// The deterministic backend runs the Ruelle-cascade recursion
//   X_K = g(sum_k s_k z_k),  X_{l-1} = zeta_l^-1 log E_{z_l} exp(zeta_l X_l),
//   psi = -E_{z_0} X_0
// with tensorized Gauss-Hermite rules. Each level only integrates over the
// range of its increment, so rank-deficient increments are cheap.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "cascade.hpp"
#include "error.hpp"
#include "linalg.hpp"
#include "model.hpp"
#include "parallel.hpp"
#include "path.hpp"
#include "quadrature.hpp"
#include "rng.hpp"
#include "stats.hpp"

namespace hjparisi {

enum class PsiMethod { Quadrature, MonteCarlo };

inline const char* to_string(PsiMethod m) { return m == PsiMethod::Quadrature ? "quadrature" : "mc"; }

struct PsiResult {
  double value = 0.0;
  PsiMethod method = PsiMethod::Quadrature;
  double error_estimate = 0.0;  // 0 for quadrature, standard error for MC
};

struct PsiGradResult {
  SignedPiecewisePath p;
  PsiMethod method = PsiMethod::Quadrature;
  double error_estimate = 0.0;
};

enum class GradMethod { Gibbs, FiniteDifference };

namespace detail {

struct PsiLevel {
  double zeta = 0.0;  // 0 marks the plain average over z_0
  std::vector<double> weights;
  std::vector<Vec> shifts;  // B_l y_j, the contribution s_l z_l at each node
};

struct PsiStats {
  double y = 0.0;
  Vec a;
  std::vector<Mat> b;
};

/// Depth-first evaluation of the cascade recursion over explicit per-level
/// point sets. Besides X it carries the Gibbs means needed for d psi / dq:
/// a = <s> below the current node and b[k] = E<s s'^T | alpha ^ alpha' = k>
/// restricted to the subtree.
class PsiRecursion {
 public:
  PsiRecursion(const ReferenceMeasure& p1, const Mat& q_terminal, const Mat& tilt, std::vector<PsiLevel> levels,
               bool with_grad)
      : levels_(std::move(levels)), grad_(with_grad), dim_(p1.dim()) {
    const auto m = static_cast<Eigen::Index>(p1.size());
    atoms_.resize(dim_, m);
    offset_.resize(m);
    const Mat quad = q_terminal - tilt;
    for (Eigen::Index a = 0; a < m; ++a) {
      const Vec& s = p1.atoms()[static_cast<std::size_t>(a)];
      atoms_.col(a) = s;
      const double w = p1.weights()[static_cast<std::size_t>(a)];
      offset_(a) = (w > 0.0 ? std::log(w) : -std::numeric_limits<double>::infinity()) - s.dot(quad * s);
    }
    const std::size_t depth = levels_.size();
    scratch_.resize(depth + 1);
    for (auto& st : scratch_) init(st);
    wbuf_.assign(depth, Vec::Zero(dim_));
    exps_.resize(m);
  }

  /// Statistics at the root (after the z_0 average).
  PsiStats run(int threads) {
    PsiStats out;
    init(out);
    // Levels before `split` have a single point; parallelize over the first
    // level that has several.
    std::size_t split = 0;
    Vec w = Vec::Zero(dim_);
    while (split < levels_.size() && levels_[split].shifts.size() == 1) {
      w += levels_[split].shifts.front();
      ++split;
    }
    if (split == levels_.size() || threads == 1) {
      level(0, Vec::Zero(dim_), out);
      return out;
    }
    const auto& lv = levels_[split];
    std::vector<PsiStats> children(lv.shifts.size());
    parallel_for(children.size(), threads, [&](std::size_t j) {
      PsiRecursion worker(*this);
      init(children[j]);
      worker.child(split + 1, w + lv.shifts[j], children[j]);
    });
    PsiStats acc;
    init(acc);
    aggregate(split, [&](std::size_t j) -> const PsiStats& { return children[j]; }, acc);
    // Levels above the split are single points: replay their aggregation.
    for (std::size_t l = split; l-- > 0;) {
      PsiStats up;
      init(up);
      aggregate(l, [&](std::size_t) -> const PsiStats& { return acc; }, up);
      acc = std::move(up);
    }
    return acc;
  }

 private:
  void init(PsiStats& s) const {
    s.a = Vec::Zero(dim_);
    if (grad_) s.b.assign(levels_.size(), Mat::Zero(dim_, dim_));
  }

  void leaf(const Vec& w, PsiStats& s) {
    exps_.noalias() = std::sqrt(2.0) * (atoms_.transpose() * w);
    exps_ += offset_;
    const double m = exps_.maxCoeff();
    exps_ = (exps_.array() - m).exp();
    const double total = exps_.sum();
    s.y = m + std::log(total);
    if (grad_) {
      s.a.noalias() = atoms_ * exps_;
      s.a /= total;
      s.b.back().noalias() = s.a * s.a.transpose();
    }
  }

  // Stats of the node whose field so far is w, integrating z_l and below.
  void child(std::size_t l, const Vec& w, PsiStats& out) {
    if (l == levels_.size()) {
      leaf(w, out);
      return;
    }
    level(l, w, out);
  }

  void level(std::size_t l, const Vec& w, PsiStats& out) {
    PsiStats& c = scratch_[l];
    Vec& wn = wbuf_[l];
    const auto& lv = levels_[l];
    aggregate(
        l,
        [&](std::size_t j) -> const PsiStats& {
          wn = w + lv.shifts[j];
          child(l + 1, wn, c);
          return c;
        },
        out);
  }

  template <class Child>
  void aggregate(std::size_t l, Child&& get, PsiStats& out) const {
    const auto& lv = levels_[l];
    const std::size_t first_b = l == 0 ? 0 : l;
    out.a.setZero();
    if (grad_)
      for (std::size_t k = first_b; k < out.b.size(); ++k) out.b[k].setZero();
    if (lv.zeta == 0.0) {
      out.y = 0.0;
      for (std::size_t j = 0; j < lv.weights.size(); ++j) {
        const PsiStats& c = get(j);
        const double om = lv.weights[j];
        out.y += om * c.y;
        if (grad_) {
          out.a += om * c.a;
          for (std::size_t k = first_b; k < out.b.size(); ++k) out.b[k] += om * c.b[k];
        }
      }
      return;
    }
    const double zeta = lv.zeta;
    double m = -std::numeric_limits<double>::infinity();
    double sum = 0.0;
    for (std::size_t j = 0; j < lv.weights.size(); ++j) {
      const PsiStats& c = get(j);
      const double v = zeta * c.y;
      if (v > m) {
        const double scale = std::isfinite(m) ? std::exp(m - v) : 0.0;
        sum *= scale;
        if (grad_) {
          out.a *= scale;
          for (std::size_t k = first_b; k < out.b.size(); ++k) out.b[k] *= scale;
        }
        m = v;
      }
      const double e = lv.weights[j] * std::exp(v - m);
      sum += e;
      if (grad_) {
        out.a += e * c.a;
        for (std::size_t k = first_b; k < out.b.size(); ++k) out.b[k] += e * c.b[k];
      }
    }
    out.y = (m + std::log(sum)) / zeta;
    if (grad_) {
      out.a /= sum;
      for (std::size_t k = first_b; k < out.b.size(); ++k) out.b[k] /= sum;
      out.b[l - 1].noalias() = out.a * out.a.transpose();
    }
  }

  std::vector<PsiLevel> levels_;
  bool grad_;
  int dim_;
  Mat atoms_;
  Vec offset_;
  std::vector<PsiStats> scratch_;
  std::vector<Vec> wbuf_;
  Vec exps_;
};

inline std::vector<PsiLevel> quadrature_levels(const PiecewisePath& q, int nodes) {
  const GaussRule& rule = gauss_hermite_cached(nodes);
  std::vector<PsiLevel> levels;
  for (std::size_t l = 0; l < q.blocks(); ++l) {
    PsiLevel lv;
    lv.zeta = l == 0 ? 0.0 : q.zetas()[l];
    const Mat factor = psd_factor(q.increment(l));
    const auto rank = static_cast<int>(factor.cols());
    std::size_t count = 1;
    for (int r = 0; r < rank; ++r) count *= static_cast<std::size_t>(nodes);
    Vec y(rank);
    for (std::size_t idx = 0; idx < count; ++idx) {
      std::size_t rest = idx;
      double weight = 1.0;
      for (int r = 0; r < rank; ++r) {
        const std::size_t node = rest % static_cast<std::size_t>(nodes);
        rest /= static_cast<std::size_t>(nodes);
        y(r) = rule.nodes[node];
        weight *= rule.weights[node];
      }
      lv.weights.push_back(weight);
      lv.shifts.push_back(rank == 0 ? Vec::Zero(q.dim()) : Vec(factor * y));
    }
    levels.push_back(std::move(lv));
  }
  return levels;
}

/// Nested Monte Carlo levels: m Gaussian points per non-degenerate level.
inline std::vector<PsiLevel> mc_levels(const PiecewisePath& q, std::int64_t samples, std::uint64_t seed,
                                       std::uint64_t replicate) {
  std::vector<Mat> factors;
  int active = 0;
  for (std::size_t l = 0; l < q.blocks(); ++l) {
    factors.push_back(psd_factor(q.increment(l)));
    if (factors.back().cols() > 0) ++active;
  }
  const auto m = std::max<std::int64_t>(
      2, static_cast<std::int64_t>(std::floor(std::pow(static_cast<double>(samples), 1.0 / std::max(active, 1)))));
  std::vector<PsiLevel> levels;
  for (std::size_t l = 0; l < q.blocks(); ++l) {
    PsiLevel lv;
    lv.zeta = l == 0 ? 0.0 : q.zetas()[l];
    const Mat& f = factors[l];
    if (f.cols() == 0) {
      lv.weights = {1.0};
      lv.shifts = {Vec::Zero(q.dim())};
    } else {
      auto stream = rng::Stream::keyed(seed, rng::Purpose::Quadrature, replicate, l);
      Vec y(f.cols());
      for (std::int64_t j = 0; j < m; ++j) {
        for (Eigen::Index r = 0; r < y.size(); ++r) y(r) = stream.normal();
        lv.weights.push_back(1.0 / static_cast<double>(m));
        lv.shifts.push_back(f * y);
      }
    }
    levels.push_back(std::move(lv));
  }
  return levels;
}

inline constexpr int kMcReplicates = 8;

struct RecursionOutput {
  double value = 0.0;
  std::vector<Mat> p;
  PsiMethod method = PsiMethod::Quadrature;
  double error = 0.0;
  double grad_error = 0.0;
};

inline RecursionOutput run_recursion(const ReferenceMeasure& p1, const PiecewisePath& q, const Mat& tilt,
                                     const QuadratureSpec& quad, bool with_grad, int threads) {
  require(p1.dim() == q.dim(), ErrorCode::InvalidArgument, "reference measure and path dimensions differ");
  require(quad.nodes_per_dim >= 3, ErrorCode::InvalidArgument, "nodes_per_dim must be >= 3");
  RecursionOutput out;
  int total_rank = 0;
  for (std::size_t l = 0; l < q.blocks(); ++l) total_rank += static_cast<int>(psd_factor(q.increment(l)).cols());
  int nodes = quad.nodes_per_dim;
  const auto cost = [&](int n) { return std::pow(static_cast<double>(n), total_rank); };
  while (nodes > quad.min_nodes_per_dim && cost(nodes) > quad.budget) --nodes;
  if (cost(nodes) <= quad.budget) {
    PsiRecursion rec(p1, q.terminal(), tilt, quadrature_levels(q, nodes), with_grad);
    auto stats = rec.run(threads);
    out.value = -stats.y;
    out.p = std::move(stats.b);
    return out;
  }
  if (!quad.mc_fallback)
    throw Error(ErrorCode::BudgetExceeded, "quadrature grid of " + std::to_string(cost(nodes)) +
                                               " points exceeds the budget and no MC fallback is configured");
  const auto& mc = *quad.mc_fallback;
  std::vector<double> values(kMcReplicates);
  std::vector<std::vector<Mat>> grads(kMcReplicates);
  parallel_for(static_cast<std::size_t>(kMcReplicates), threads, [&](std::size_t r) {
    PsiRecursion rec(p1, q.terminal(), tilt, mc_levels(q, mc.samples, mc.seed, r), with_grad);
    auto stats = rec.run(1);
    values[r] = -stats.y;
    grads[r] = std::move(stats.b);
  });
  const auto est = summarize(values, mc.seed);
  out.value = est.mean;
  out.error = est.std_error;
  out.method = PsiMethod::MonteCarlo;
  if (with_grad) {
    out.p.assign(q.blocks(), Mat::Zero(q.dim(), q.dim()));
    for (const auto& g : grads)
      for (std::size_t k = 0; k < g.size(); ++k) out.p[k] += g[k] / kMcReplicates;
    double worst = 0.0;
    for (std::size_t k = 0; k < q.blocks(); ++k) {
      std::vector<double> entry(kMcReplicates);
      for (Eigen::Index i = 0; i < q.dim(); ++i)
        for (Eigen::Index j = 0; j < q.dim(); ++j) {
          for (int r = 0; r < kMcReplicates; ++r) entry[static_cast<std::size_t>(r)] = grads[static_cast<std::size_t>(r)][k](i, j);
          worst = std::max(worst, summarize(entry).std_error);
        }
    }
    out.grad_error = worst;
  }
  return out;
}

}  // namespace detail

/// psi(q) with an optional tilt x: the innermost integrand gains exp(x . ss^T).
inline PsiResult psi_eval(const ReferenceMeasure& p1, const PiecewisePath& q, const QuadratureSpec& quad = {},
                          const std::optional<Mat>& tilt = std::nullopt, int threads = 1) {
  const Mat x = tilt ? symmetrize(*tilt) : Mat::Zero(q.dim(), q.dim());
  const auto out = detail::run_recursion(p1, q, x, quad, false, threads);
  return {out.value + 0.0, out.method, out.error};  // + 0.0 maps -0 to 0
}

/// Monte Carlo over resampled truncated cascades and fields (N = 1). This is
/// the direct definition; psi_eval is checked against it.
inline PsiResult psi_mc(const ReferenceMeasure& p1, const PiecewisePath& q, std::size_t n_max, std::int64_t samples,
                        std::uint64_t seed, int threads = 1, const std::optional<Mat>& tilt = std::nullopt) {
  require(p1.dim() == q.dim(), ErrorCode::InvalidArgument, "reference measure and path dimensions differ");
  require(samples >= 1, ErrorCode::InvalidArgument, "samples must be >= 1");
  const std::vector<double> zetas(q.zetas().begin() + 1, q.zetas().end());
  const int dim = q.dim();
  const auto m = static_cast<Eigen::Index>(p1.size());
  Mat atoms(dim, m);
  Vec offset(m);
  const Mat quad = q.terminal() - (tilt ? symmetrize(*tilt) : Mat::Zero(dim, dim));
  for (Eigen::Index a = 0; a < m; ++a) {
    const Vec& s = p1.atoms()[static_cast<std::size_t>(a)];
    atoms.col(a) = s;
    offset(a) = std::log(p1.weights()[static_cast<std::size_t>(a)]) - s.dot(quad * s);
  }
  std::vector<double> draws(static_cast<std::size_t>(samples));
  parallel_for(draws.size(), threads, [&](std::size_t i) {
    const auto cascade = sample_cascade(zetas, n_max, seed, i);
    const CascadeField field(cascade, q, 1, seed, i);
    const std::size_t depth = cascade.depth();
    std::vector<std::size_t> span(depth + 1);
    for (std::size_t k = 0; k <= depth; ++k) span[k] = detail::ipow(n_max, depth - k);
    const auto& logv = cascade.log_leaf_weights();
    std::vector<double> terms(cascade.leaves());
    Vec w(dim), e(m);
    for (std::size_t leaf = 0; leaf < cascade.leaves(); ++leaf) {
      w.setZero();
      for (std::size_t k = 0; k <= depth; ++k) w += Eigen::Map<const Vec>(field.contribution(k, leaf / span[k]), dim);
      e.noalias() = std::sqrt(2.0) * (atoms.transpose() * w);
      e += offset;
      const double top = e.maxCoeff();
      terms[leaf] = logv[leaf] + top + std::log((e.array() - top).exp().sum());
    }
    draws[i] = -detail::log_sum_exp(terms);
  });
  const auto est = summarize(draws, seed);
  return {est.mean + 0.0, PsiMethod::MonteCarlo, est.std_error};
}

namespace detail {

inline void validate_grad(const std::vector<Mat>& p, double tol) {
  for (std::size_t k = 0; k < p.size(); ++k) {
    require(p[k].norm() <= 1.0 + tol, ErrorCode::InvalidArgument,
            "derivative block " + std::to_string(k) + " has norm " + std::to_string(p[k].norm()));
    if (k > 0)
      require(min_eigenvalue(p[k] - p[k - 1]) >= -tol, ErrorCode::NotIncreasing,
              "derivative is not increasing at block " + std::to_string(k));
  }
}

/// Whether q with block k moved by h*e is still an increasing path.
inline std::optional<PiecewisePath> shifted(const PiecewisePath& q, std::size_t k, const Mat& e, double h) {
  std::vector<Mat> v = q.values();
  v[k] += h * e;
  if (min_eigenvalue(k == 0 ? v[0] : Mat(v[k] - v[k - 1])) < -kPsdTol) return std::nullopt;
  if (k + 1 < v.size() && min_eigenvalue(v[k + 1] - v[k]) < -kPsdTol) return std::nullopt;
  return PiecewisePath(q.zetas(), std::move(v));
}

}  // namespace detail

/// d psi / dq on the partition of q: block k holds E<ss'^T | alpha ^ alpha' = k>.
/// The Gibbs method reads these conditional means off the recursion; the
/// finite-difference method differentiates psi_eval block by block.
inline PsiGradResult psi_grad(const ReferenceMeasure& p1, const PiecewisePath& q, const QuadratureSpec& quad = {},
                              double eps = 1e-4, GradMethod method = GradMethod::Gibbs,
                              const std::optional<Mat>& tilt = std::nullopt, int threads = 1) {
  require(eps > 0.0, ErrorCode::InvalidArgument, "eps must be positive");
  for (std::size_t k = 0; k < q.blocks(); ++k)
    require(q.width(k) >= 1e-9, ErrorCode::DegenerateBlock, "block " + std::to_string(k) + " is too narrow");
  const Mat x = tilt ? symmetrize(*tilt) : Mat::Zero(q.dim(), q.dim());
  PsiGradResult result;
  if (method == GradMethod::Gibbs) {
    auto out = detail::run_recursion(p1, q, x, quad, true, threads);
    if (out.method == PsiMethod::Quadrature) detail::validate_grad(out.p, 1e-6);
    result.p = SignedPiecewisePath(q.zetas(), std::move(out.p));
    result.method = out.method;
    result.error_estimate = out.grad_error;
    return result;
  }
  const auto value = [&](const PiecewisePath& path) { return detail::run_recursion(p1, path, x, quad, false, threads); };
  const auto basis = symmetric_basis(q.dim());
  std::vector<Mat> p(q.blocks(), Mat::Zero(q.dim(), q.dim()));
  std::optional<double> base;
  PsiMethod used = PsiMethod::Quadrature;
  double error = 0.0;
  for (std::size_t k = 0; k < q.blocks(); ++k) {
    for (const Mat& e : basis) {
      double deriv = std::numeric_limits<double>::quiet_NaN();
      double h = eps;
      for (int attempt = 0; attempt <= 4 && std::isnan(deriv); ++attempt, h /= 10.0) {
        const auto plus = detail::shifted(q, k, e, h);
        const auto minus = detail::shifted(q, k, e, -h);
        if (plus && minus) {
          const auto a = value(*plus), b = value(*minus);
          deriv = (a.value - b.value) / (2.0 * h);
          error = std::max(error, std::hypot(a.error, b.error) / (2.0 * h));
          if (a.method == PsiMethod::MonteCarlo) used = PsiMethod::MonteCarlo;
        }
      }
      if (std::isnan(deriv)) {
        // One-sided second-order stencil in whichever direction stays feasible.
        for (double sign : {1.0, -1.0}) {
          const auto one = detail::shifted(q, k, e, sign * eps);
          const auto two = detail::shifted(q, k, e, 2.0 * sign * eps);
          if (!one || !two) continue;
          if (!base) base = value(q).value;
          deriv = sign * (-3.0 * *base + 4.0 * value(*one).value - value(*two).value) / (2.0 * eps);
          break;
        }
      }
      require(!std::isnan(deriv), ErrorCode::NotIncreasing,
              "no feasible finite-difference stencil at block " + std::to_string(k));
      const bool diagonal = (e.array() != 0.0).count() == 1;
      const double entry = deriv / q.width(k) / (diagonal ? 1.0 : 2.0);
      for (Eigen::Index i = 0; i < e.rows(); ++i)
        for (Eigen::Index j = 0; j < e.cols(); ++j)
          if (e(i, j) != 0.0) p[k](i, j) = entry;
    }
  }
  if (used == PsiMethod::Quadrature) detail::validate_grad(p, 1e-6);
  result.p = SignedPiecewisePath(q.zetas(), std::move(p));
  result.method = used;
  result.error_estimate = error;
  return result;
}

/// Closed form of E log int exp(Y) dR for a Gaussian process on a cascade
/// with covariance theta(alpha ^ alpha'): breakpoints s_0 = 0 < ... < s_k = 1,
/// values theta_1..theta_k on [s_{l-1}, s_l).
inline double gaussian_cascade_logfree(const std::vector<double>& s, const std::vector<double>& theta) {
  require(s.size() >= 2 && theta.size() + 1 == s.size(), ErrorCode::InvalidArgument,
          "need k+1 breakpoints and k values");
  require(s.front() == 0.0 && s.back() == 1.0, ErrorCode::BadBreakpoints, "breakpoints must run from 0 to 1");
  for (std::size_t l = 1; l < s.size(); ++l)
    require(s[l] > s[l - 1], ErrorCode::BadBreakpoints, "breakpoints must be strictly increasing");
  const std::size_t k = theta.size();
  double sum = 0.0;
  for (std::size_t l = 1; l <= k; ++l) sum += (s[l] - s[l - 1]) * theta[l - 1];
  return 0.5 * (-sum + s[k] * theta[k - 1]);
}

/// Monte Carlo counterpart of gaussian_cascade_logfree on truncated cascades.
/// Uses the single-atom measure: with q = theta / 2 the field sqrt2 w^q has
/// covariance theta and psi subtracts q(1) = theta_k / 2.
inline PsiResult gaussian_cascade_logfree_mc(const std::vector<double>& s, const std::vector<double>& theta,
                                             std::size_t n_max, std::int64_t samples, std::uint64_t seed,
                                             int threads = 1) {
  require(s.size() >= 2 && theta.size() + 1 == s.size(), ErrorCode::InvalidArgument,
          "need k+1 breakpoints and k values");
  std::vector<double> zetas(s.begin(), s.end() - 1);
  std::vector<Mat> values;
  for (double v : theta) values.push_back(Mat::Constant(1, 1, 0.5 * v));
  const PiecewisePath q(zetas, values);
  const ReferenceMeasure delta({Vec::Ones(1)}, {1.0});
  auto r = psi_mc(delta, q, n_max, samples, seed, threads);
  r.value = -r.value + 0.5 * theta.back();
  return r;
}

}  // namespace hjparisi
