// Copyright 2026 The hjparisi Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Truncated Poisson-Dirichlet (Ruelle) cascades, their Gaussian fields, and
// ultrametric tree reconstruction.
//
// Leaves of a depth-K cascade with n children per node are numbered
// 0 .. n^K - 1 in base n, most significant digit first; the ancestor of a
// leaf at depth k is leaf / n^(K-k).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "error.hpp"
#include "linalg.hpp"
#include "parallel.hpp"
#include "path.hpp"
#include "rng.hpp"
#include "stats.hpp"

namespace hjparisi {

namespace detail {

inline double log_sum_exp(std::span<const double> xs) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : xs) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

inline std::size_t ipow(std::size_t base, std::size_t exp) {
  std::size_t r = 1;
  for (std::size_t i = 0; i < exp; ++i) r *= base;
  return r;
}

inline void check_cascade_zetas(const std::vector<double>& zetas) {
  double prev = 0.0;
  for (double z : zetas) {
    require(z > prev && z < 1.0, ErrorCode::BadBreakpoints, "cascade parameters must satisfy 0 < z_1 < ... < z_K < 1");
    prev = z;
  }
}

}  // namespace detail

class CascadeSample {
 public:
  /// Parameters zeta_1 < ... < zeta_K in (0, 1).
  [[nodiscard]] const std::vector<double>& zetas() const { return zetas_; }
  [[nodiscard]] std::size_t depth() const { return zetas_.size(); }
  [[nodiscard]] std::size_t n_max() const { return n_max_; }
  [[nodiscard]] std::size_t leaves() const { return weights_.size(); }
  [[nodiscard]] const std::vector<double>& leaf_weights() const { return weights_; }
  [[nodiscard]] const std::vector<double>& log_leaf_weights() const { return log_weights_; }
  /// Largest ratio, over internal nodes, of the expected discarded Poisson
  /// tail mass to the retained mass of the node's children.
  [[nodiscard]] double tail_ratio() const { return tail_ratio_; }

  [[nodiscard]] std::size_t ancestor(std::size_t leaf, std::size_t k) const {
    return leaf / detail::ipow(n_max_, depth() - k);
  }

  /// alpha ^ alpha': depth of the most recent common ancestor.
  [[nodiscard]] std::size_t meet(std::size_t a, std::size_t b) const {
    std::size_t k = depth();
    while (a != b) {
      a /= n_max_;
      b /= n_max_;
      --k;
    }
    return k;
  }

  /// Total weight of every node at depth k.
  [[nodiscard]] std::vector<double> node_masses(std::size_t k) const {
    std::vector<double> mass(detail::ipow(n_max_, k), 0.0);
    const std::size_t span = detail::ipow(n_max_, depth() - k);
    for (std::size_t leaf = 0; leaf < weights_.size(); ++leaf) mass[leaf / span] += weights_[leaf];
    return mass;
  }

  /// Gibbs probability of {alpha ^ alpha' = k}, for k = 0..K.
  [[nodiscard]] std::vector<double> level_probabilities() const {
    std::vector<double> at_least(depth() + 2, 0.0);
    for (std::size_t k = 0; k <= depth(); ++k)
      for (double m : node_masses(k)) at_least[k] += m * m;
    std::vector<double> out(depth() + 1);
    for (std::size_t k = 0; k <= depth(); ++k) out[k] = at_least[k] - at_least[k + 1];
    return out;
  }

  /// Inverse-CDF draw of a leaf from the weights.
  std::size_t draw_leaf(rng::Stream& stream) const {
    const double u = stream.uniform();
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cdf_.begin()), cdf_.size() - 1);
  }

 private:
  friend CascadeSample sample_cascade(const std::vector<double>&, std::size_t, std::uint64_t, std::uint64_t);

  std::vector<double> zetas_;
  std::size_t n_max_ = 1;
  std::vector<double> weights_;
  std::vector<double> log_weights_;
  std::vector<double> cdf_;
  double tail_ratio_ = 0.0;
};

/// Samples a cascade truncated to n_max children per node. Children of a
/// depth-k node get weights Gamma_j^(-1/zeta_{k+1}), Gamma_j the arrival
/// times of a unit-rate Poisson process: these are the n_max largest atoms
/// of a process with intensity x^(-1-zeta) dx up to a constant factor, which
/// cancels after normalization.
inline CascadeSample sample_cascade(const std::vector<double>& zetas, std::size_t n_max, std::uint64_t seed,
                                    std::uint64_t draw = 0) {
  detail::check_cascade_zetas(zetas);
  require(n_max >= 2, ErrorCode::InvalidArgument, "n_max must be >= 2");
  CascadeSample c;
  c.zetas_ = zetas;
  c.n_max_ = n_max;
  const std::size_t depth = zetas.size();
  std::vector<double> log_w{0.0};
  for (std::size_t k = 0; k < depth; ++k) {
    const double inv = 1.0 / zetas[k];
    std::vector<double> next(log_w.size() * n_max);
    std::vector<double> local(n_max);
    for (std::size_t node = 0; node < log_w.size(); ++node) {
      auto stream = rng::Stream::keyed(seed, rng::Purpose::CascadeWeights, draw, k, node);
      double gamma = 0.0;
      for (std::size_t j = 0; j < n_max; ++j) {
        gamma += stream.exponential();
        local[j] = -inv * std::log(gamma);
        next[node * n_max + j] = log_w[node] + local[j];
      }
      const double log_retained = detail::log_sum_exp(local);
      // Expected tail: int_{Gamma_n}^inf g^(-1/zeta) dg = Gamma_n^(1-1/zeta) / (1/zeta - 1).
      const double log_tail = (1.0 - inv) * std::log(gamma) - std::log(inv - 1.0);
      c.tail_ratio_ = std::max(c.tail_ratio_, std::exp(log_tail - log_retained));
    }
    log_w = std::move(next);
  }
  const double norm = detail::log_sum_exp(log_w);
  c.log_weights_.resize(log_w.size());
  c.weights_.resize(log_w.size());
  c.cdf_.resize(log_w.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < log_w.size(); ++i) {
    c.log_weights_[i] = log_w[i] - norm;
    c.weights_[i] = std::exp(c.log_weights_[i]);
    acc += c.weights_[i];
    c.cdf_[i] = acc;
  }
  // Renormalize in linear space so the weights sum to one to rounding.
  for (std::size_t i = 0; i < c.weights_.size(); ++i) {
    c.weights_[i] /= acc;
    c.cdf_[i] /= acc;
  }
  return c;
}

/// Gaussian field w^q(alpha) = sum_k (q_k - q_{k-1})^(1/2) z_{alpha|k} in R^{D x N}.
/// Node Gaussians come from per-node counter streams, so any node can be
/// regenerated independently of the others.
class CascadeField {
 public:
  CascadeField(const CascadeSample& cascade, const PiecewisePath& q, std::size_t n_spins, std::uint64_t seed,
               std::uint64_t draw = 0)
      : n_max_(cascade.n_max()), depth_(cascade.depth()), dim_(q.dim()), n_(n_spins), seed_(seed), draw_(draw) {
    require(q.blocks() == depth_ + 1, ErrorCode::PartitionMismatch, "path and cascade have different depths");
    for (std::size_t k = 0; k < depth_; ++k)
      require(std::abs(q.zetas()[k + 1] - cascade.zetas()[k]) <= 1e-15, ErrorCode::PartitionMismatch,
              "path breakpoints differ from cascade parameters");
    require(n_spins >= 1, ErrorCode::InvalidArgument, "need at least one spin");
    roots_ = sqrt_increments(q);
    // contribution_[k][node] holds s_k z_node as a D x N column-major block.
    contribution_.resize(depth_ + 1);
    for (std::size_t k = 0; k <= depth_; ++k) {
      const std::size_t count = detail::ipow(n_max_, k);
      auto& level = contribution_[k];
      level.assign(count * dim_ * n_, 0.0);
      if (roots_[k].norm() == 0.0) continue;
      Mat z(dim_, static_cast<Eigen::Index>(n_));
      for (std::size_t node = 0; node < count; ++node) {
        fill_gaussian(k, node, z);
        Eigen::Map<Mat>(level.data() + node * dim_ * n_, dim_, static_cast<Eigen::Index>(n_)).noalias() =
            roots_[k] * z;
      }
    }
  }

  /// Standard Gaussian z_beta for the node at depth k with the given index.
  [[nodiscard]] Mat node_gaussian(std::size_t k, std::size_t node) const {
    Mat z(dim_, static_cast<Eigen::Index>(n_));
    fill_gaussian(k, node, z);
    return z;
  }

  /// s_k z_node, D x N column-major.
  [[nodiscard]] const double* contribution(std::size_t k, std::size_t node) const {
    return contribution_[k].data() + node * dim_ * n_;
  }

  [[nodiscard]] Mat w(std::size_t leaf) const {
    Mat out = Mat::Zero(dim_, static_cast<Eigen::Index>(n_));
    for (std::size_t k = 0; k <= depth_; ++k) {
      const std::size_t node = leaf / detail::ipow(n_max_, depth_ - k);
      out += Eigen::Map<const Mat>(contribution(k, node), dim_, static_cast<Eigen::Index>(n_));
    }
    return out;
  }

  [[nodiscard]] std::size_t depth() const { return depth_; }
  [[nodiscard]] std::size_t n_max() const { return n_max_; }
  [[nodiscard]] int dim() const { return dim_; }
  [[nodiscard]] std::size_t spins() const { return n_; }

 private:
  void fill_gaussian(std::size_t k, std::size_t node, Mat& z) const {
    auto stream = rng::Stream::keyed(seed_, rng::Purpose::CascadeField, draw_, k, node);
    for (Eigen::Index i = 0; i < z.cols(); ++i)
      for (Eigen::Index d = 0; d < z.rows(); ++d) z(d, i) = stream.normal();
  }

  std::size_t n_max_;
  std::size_t depth_;
  int dim_;
  std::size_t n_;
  std::uint64_t seed_;
  std::uint64_t draw_;
  std::vector<Mat> roots_;
  std::vector<std::vector<double>> contribution_;
};

inline CascadeField sample_field(const CascadeSample& cascade, const PiecewisePath& q, std::size_t n_spins,
                                 std::uint64_t seed, std::uint64_t draw = 0) {
  return {cascade, q, n_spins, seed, draw};
}

struct LevelLaw {
  std::vector<double> frequency;  // levels 0..K
  std::vector<double> std_error;
  std::vector<std::int64_t> counts;
  std::int64_t draws = 0;
};

namespace detail {

inline LevelLaw finish_law(std::vector<std::int64_t> counts, std::int64_t draws) {
  LevelLaw law;
  law.counts = std::move(counts);
  law.draws = draws;
  for (auto c : law.counts) {
    const double f = static_cast<double>(c) / static_cast<double>(draws);
    law.frequency.push_back(f);
    law.std_error.push_back(std::sqrt(f * (1.0 - f) / static_cast<double>(draws)));
  }
  return law;
}

}  // namespace detail

/// Empirical law of alpha ^ alpha' for i.i.d. leaf pairs from one cascade.
inline LevelLaw overlap_level_law(const CascadeSample& cascade, std::int64_t draws, std::uint64_t seed) {
  require(draws >= 1, ErrorCode::InvalidArgument, "draws must be >= 1");
  std::vector<std::int64_t> counts(cascade.depth() + 1, 0);
  auto stream = rng::Stream::keyed(seed, rng::Purpose::ReplicaDraws, 0);
  for (std::int64_t i = 0; i < draws; ++i) {
    const auto a = cascade.draw_leaf(stream);
    const auto b = cascade.draw_leaf(stream);
    ++counts[cascade.meet(a, b)];
  }
  return detail::finish_law(std::move(counts), draws);
}

/// Law of alpha ^ alpha' under E< . >: every draw uses a fresh cascade, so
/// the counts are multinomial with the averaged level probabilities.
inline LevelLaw overlap_level_law_averaged(const std::vector<double>& zetas, std::size_t n_max, std::int64_t draws,
                                           std::uint64_t seed, int threads = 1) {
  require(draws >= 1, ErrorCode::InvalidArgument, "draws must be >= 1");
  std::vector<std::size_t> level(static_cast<std::size_t>(draws));
  parallel_for(level.size(), threads, [&](std::size_t i) {
    const auto cascade = sample_cascade(zetas, n_max, seed, i);
    auto stream = rng::Stream::keyed(seed, rng::Purpose::ReplicaDraws, i);
    const auto a = cascade.draw_leaf(stream);
    const auto b = cascade.draw_leaf(stream);
    level[i] = cascade.meet(a, b);
  });
  std::vector<std::int64_t> counts(zetas.size() + 1, 0);
  for (auto l : level) ++counts[l];
  return detail::finish_law(std::move(counts), draws);
}

/// Expected level probabilities zeta_{k+1} - zeta_k with zeta_0 = 0, zeta_{K+1} = 1.
inline std::vector<double> cascade_level_targets(const std::vector<double>& zetas) {
  std::vector<double> out;
  double prev = 0.0;
  for (double z : zetas) {
    out.push_back(z - prev);
    prev = z;
  }
  out.push_back(1.0 - prev);
  return out;
}

struct ChiSquareResult {
  double statistic = 0.0;
  int dof = 0;
  double critical = 0.0;  // upper quantile at the requested confidence
  bool pass = true;
};

inline ChiSquareResult chi_square_test(const std::vector<std::int64_t>& counts, const std::vector<double>& probs,
                                       double confidence = 0.99) {
  require(counts.size() == probs.size(), ErrorCode::InvalidArgument, "counts and probabilities differ in size");
  ChiSquareResult r;
  std::int64_t total = 0;
  for (auto c : counts) total += c;
  int cells = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    const double expected = probs[i] * static_cast<double>(total);
    r.statistic += (static_cast<double>(counts[i]) - expected) * (static_cast<double>(counts[i]) - expected) / expected;
    ++cells;
  }
  r.dof = std::max(cells - 1, 0);
  if (r.dof == 0) {
    r.pass = true;
    return r;
  }
  r.critical = boost::math::quantile(boost::math::chi_squared(r.dof), confidence);
  r.pass = r.statistic <= r.critical;
  return r;
}

/// Test function of an n x n overlap array.
using OverlapFunction = std::function<double(const Mat&)>;

struct GgResult {
  double residual = 0.0;
  double std_error = 0.0;
  double tail_ratio = 0.0;  // largest truncation diagnostic seen over the draws
};

/// Ghirlanda-Guerra statistic
///   | E<f R^{1,n+1}> - E<f> E<R^{1,2}> / n - sum_{l=2}^n E<f R^{1,l}> / n |
/// with R^{l,l'} = zeta_{alpha^l ^ alpha^l'} (zeta_0 = 0), estimated over
/// fresh cascades and n+1 replicas per draw. The error bar comes from the
/// delta method applied to the product of means.
inline GgResult gg_check(const std::vector<double>& zetas, std::size_t n_max, const OverlapFunction& f, int n,
                         std::int64_t draws, std::uint64_t seed, int threads = 1) {
  require(n >= 2, ErrorCode::InvalidArgument, "n must be >= 2");
  require(draws >= 2, ErrorCode::InvalidArgument, "draws must be >= 2");
  const auto count = static_cast<std::size_t>(draws);
  std::vector<double> fa(count), fb(count), fc(count), fd(count), tails(count);
  std::vector<double> level_value{0.0};
  for (double z : zetas) level_value.push_back(z);
  if (zetas.empty()) level_value = {0.0};
  parallel_for(count, threads, [&](std::size_t i) {
    const auto cascade = sample_cascade(zetas, n_max, seed, i);
    tails[i] = cascade.tail_ratio();
    auto stream = rng::Stream::keyed(seed, rng::Purpose::ReplicaDraws, i);
    std::vector<std::size_t> rep(static_cast<std::size_t>(n) + 1);
    for (auto& r : rep) r = cascade.draw_leaf(stream);
    auto overlap = [&](std::size_t a, std::size_t b) { return level_value[cascade.meet(rep[a], rep[b])]; };
    Mat arr(n, n);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) arr(a, b) = overlap(static_cast<std::size_t>(a), static_cast<std::size_t>(b));
    const double fv = f(arr);
    fa[i] = fv * overlap(0, static_cast<std::size_t>(n));
    fb[i] = fv;
    fc[i] = overlap(0, 1);
    double s = 0.0;
    for (int l = 1; l < n; ++l) s += fv * overlap(0, static_cast<std::size_t>(l));
    fd[i] = s;
  });
  const double inv_n = 1.0 / n;
  const auto mean = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); };
  const double ma = mean(fa), mb = mean(fb), mc = mean(fc), md = mean(fd);
  const double stat = ma - inv_n * mb * mc - inv_n * md;
  std::vector<double> influence(count);
  for (std::size_t i = 0; i < count; ++i)
    influence[i] = fa[i] - inv_n * (fb[i] * mc + mb * fc[i]) - inv_n * fd[i];
  GgResult r;
  r.residual = std::abs(stat);
  r.std_error = summarize(influence).std_error;
  r.tail_ratio = *std::max_element(tails.begin(), tails.end());
  return r;
}

/// Rooted tree recovered from an ultrametric overlap matrix.
struct UltrametricTree {
  std::vector<double> levels;                   // s_0 < ... < s_K
  std::vector<std::vector<std::size_t>> class_of;  // class_of[k][i]: node at depth k containing leaf i
  std::vector<std::vector<std::size_t>> parent;    // parent[k][c]: node at depth k-1 (k >= 1)

  [[nodiscard]] std::size_t depth() const { return levels.empty() ? 0 : levels.size() - 1; }
  [[nodiscard]] std::size_t leaves() const { return class_of.empty() ? 0 : class_of.front().size(); }
  [[nodiscard]] std::size_t nodes_at(std::size_t k) const {
    return class_of[k].empty() ? 0 : *std::max_element(class_of[k].begin(), class_of[k].end()) + 1;
  }

  /// Depth of the most recent common ancestor of leaves i and j.
  [[nodiscard]] std::size_t meet(std::size_t i, std::size_t j) const {
    std::size_t k = depth();
    while (class_of[k][i] != class_of[k][j]) --k;
    return k;
  }

  [[nodiscard]] Mat overlaps() const {
    const auto n = static_cast<Eigen::Index>(leaves());
    Mat out(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        out(i, j) = levels[meet(static_cast<std::size_t>(i), static_cast<std::size_t>(j))];
    return out;
  }
};

class UltrametricViolation : public Error {
 public:
  UltrametricViolation(std::array<std::size_t, 3> triple, const std::string& what)
      : Error(ErrorCode::NotUltrametric, what), triple_(triple) {}
  [[nodiscard]] const std::array<std::size_t, 3>& triple() const { return triple_; }

 private:
  std::array<std::size_t, 3> triple_;
};

/// Nested equivalence classes i ~_k j iff overlap(i, j) >= s_k, where
/// s_0 < ... < s_K are the distinct entries of the matrix.
inline UltrametricTree ultrametric_tree(const Mat& overlaps, double tol = 1e-12) {
  const auto n = static_cast<std::size_t>(overlaps.rows());
  require(n >= 1 && overlaps.cols() == overlaps.rows(), ErrorCode::InvalidArgument, "overlap matrix must be square");
  require((overlaps - overlaps.transpose()).cwiseAbs().maxCoeff() <= tol, ErrorCode::InvalidArgument,
          "overlap matrix must be symmetric");
  const auto at = [&](std::size_t i, std::size_t j) {
    return overlaps(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  };
  const double diag = at(0, 0);
  for (std::size_t i = 0; i < n; ++i) {
    require(std::abs(at(i, i) - diag) <= tol, ErrorCode::InvalidArgument, "diagonal must be constant");
    for (std::size_t j = 0; j < n; ++j)
      require(at(i, j) <= diag + tol, ErrorCode::InvalidArgument, "diagonal must be maximal");
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t l = 0; l < n; ++l)
        if (at(i, l) < std::min(at(i, j), at(j, l)) - tol)
          throw UltrametricViolation({i, j, l}, "triple (" + std::to_string(i) + ", " + std::to_string(j) + ", " +
                                                    std::to_string(l) + ") violates the min-inequality");

  UltrametricTree tree;
  std::set<double> distinct;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) distinct.insert(at(i, j));
  // Merge values closer than tol so that rounding noise does not create levels.
  for (double v : distinct)
    if (tree.levels.empty() || v - tree.levels.back() > tol) tree.levels.push_back(v);
  tree.levels.back() = diag;

  const std::size_t depth = tree.levels.size() - 1;
  tree.class_of.assign(depth + 1, std::vector<std::size_t>(n));
  tree.parent.assign(depth + 1, {});
  for (std::size_t k = 0; k <= depth; ++k) {
    std::vector<std::size_t> rep;  // representative leaf of each class
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t c = 0;
      while (c < rep.size() && at(i, rep[c]) < tree.levels[k] - tol) ++c;
      if (c == rep.size()) rep.push_back(i);
      tree.class_of[k][i] = c;
    }
    if (k > 0) {
      tree.parent[k].resize(rep.size());
      for (std::size_t c = 0; c < rep.size(); ++c) tree.parent[k][c] = tree.class_of[k - 1][rep[c]];
    }
  }
  return tree;
}

}  // namespace hjparisi
