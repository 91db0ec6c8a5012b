// Copyright 2026 The hjparisi Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Finite-N ground truth. Spins are enumerated exactly, the cascade is
// truncated to n_max children per node, and the disorder is averaged by
// Monte Carlo over independent samples.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "cascade.hpp"
#include "error.hpp"
#include "linalg.hpp"
#include "model.hpp"
#include "onebody.hpp"
#include "parallel.hpp"
#include "path.hpp"
#include "rng.hpp"
#include "stats.hpp"

namespace hjparisi {

/// Feasibility limits. The defaults admit N <= 14 for D = 1 Ising spins and
/// N <= 7 for D = 2.
struct FiniteBudget {
  std::size_t max_configs = 16384;         // |supp P1|^N
  double max_ops = 4e9;                    // per disorder sample
  std::size_t max_tensor = std::size_t{1} << 24;  // entries of one coupling tensor
  double max_pairs = 2e8;                  // configuration pairs x tree nodes for pair statistics
};

/// One draw of H_N(s) = sum_p N^{-(p-1)/2} sum_i J_i . s_{i_1} (x) ... (x) s_{i_p}.
/// Couplings are stored as a dense order-p tensor over the flattened spin
/// index d * N + i.
class DisorderSample {
 public:
  struct Term {
    int degree = 0;
    std::vector<double> tensor;
  };

  DisorderSample(int dim, int n, std::vector<Term> terms) : dim_(dim), n_(n), terms_(std::move(terms)) {}

  [[nodiscard]] int dim() const { return dim_; }
  [[nodiscard]] int spins() const { return n_; }
  [[nodiscard]] const std::vector<Term>& terms() const { return terms_; }

  /// H_N at a D x N configuration.
  [[nodiscard]] double operator()(const Mat& sigma) const {
    require(sigma.rows() == dim_ && sigma.cols() == n_, ErrorCode::InvalidArgument, "configuration must be D x N");
    Vec s(dim_ * n_);
    for (int d = 0; d < dim_; ++d)
      for (int i = 0; i < n_; ++i) s(d * n_ + i) = sigma(d, i);
    return evaluate_flat(s);
  }

  /// H_N at a flattened configuration s(d * N + i).
  [[nodiscard]] double evaluate_flat(const Vec& s) const {
    const Eigen::Index m = s.size();
    double total = 0.0;
    std::vector<double> buf, next;
    for (const auto& term : terms_) {
      if (term.degree == 1) {
        total += Eigen::Map<const Vec>(term.tensor.data(), m).dot(s);
        continue;
      }
      // Contract the last index repeatedly.
      const double* cur = term.tensor.data();
      Eigen::Index rest = static_cast<Eigen::Index>(term.tensor.size()) / m;
      for (int k = term.degree; k > 1; --k) {
        next.resize(static_cast<std::size_t>(rest));
        Eigen::Map<Vec>(next.data(), rest).noalias() = Eigen::Map<const Mat>(cur, rest, m) * s;
        buf.swap(next);
        cur = buf.data();
        rest /= m;
      }
      total += Eigen::Map<const Vec>(cur, m).dot(s);
    }
    return total;
  }

  /// The same disorder with spin labels relabelled: H'(s) = H(s o perm^-1).
  [[nodiscard]] DisorderSample permuted(const std::vector<int>& perm) const {
    require(static_cast<int>(perm.size()) == n_, ErrorCode::InvalidArgument, "permutation has the wrong length");
    const int m = dim_ * n_;
    const auto relabel = [&](int flat) { return (flat / n_) * n_ + perm[static_cast<std::size_t>(flat % n_)]; };
    std::vector<Term> out;
    for (const auto& term : terms_) {
      Term t{term.degree, std::vector<double>(term.tensor.size())};
      for (std::size_t idx = 0; idx < term.tensor.size(); ++idx) {
        std::size_t rem = idx, target = 0, scale = 1;
        for (int k = 0; k < term.degree; ++k) {
          target += static_cast<std::size_t>(relabel(static_cast<int>(rem % m))) * scale;
          rem /= m;
          scale *= m;
        }
        t.tensor[target] = term.tensor[idx];
      }
      out.push_back(std::move(t));
    }
    return {dim_, n_, std::move(out)};
  }

 private:
  int dim_;
  int n_;
  std::vector<Term> terms_;
};

/// Independent Gaussian blocks J_i ~ N(0, C^(p)) for every index tuple i.
inline DisorderSample sample_hamiltonian(const XiModel& model, int n, std::uint64_t seed, std::uint64_t draw = 0,
                                         const FiniteBudget& budget = {}) {
  require(n >= 1, ErrorCode::InvalidArgument, "N must be >= 1");
  const int dim = model.dim();
  const auto m = static_cast<std::size_t>(dim * n);
  std::vector<DisorderSample::Term> terms;
  for (std::size_t ti = 0; ti < model.terms().size(); ++ti) {
    const auto& xt = model.terms()[ti];
    const int p = xt.degree;
    double size = 1.0;
    for (int k = 0; k < p; ++k) size *= static_cast<double>(m);
    require(size <= static_cast<double>(budget.max_tensor), ErrorCode::BudgetExceeded,
            "coupling tensor of degree " + std::to_string(p) + " is too large");
    DisorderSample::Term term{p, std::vector<double>(static_cast<std::size_t>(size), 0.0)};
    if (xt.coeff.cwiseAbs().maxCoeff() == 0.0) {
      terms.push_back(std::move(term));
      continue;
    }
    const Mat factor = psd_factor(xt.coeff);  // D^p x r
    const double scale = std::pow(static_cast<double>(n), -(p - 1) / 2.0);
    auto stream = rng::Stream::keyed(seed, rng::Purpose::Disorder, draw, ti);
    std::size_t tuples = 1;
    for (int k = 0; k < p; ++k) tuples *= static_cast<std::size_t>(n);
    const auto dp = static_cast<std::size_t>(factor.rows());
    Vec z(factor.cols());
    for (std::size_t tuple = 0; tuple < tuples; ++tuple) {
      for (Eigen::Index r = 0; r < z.size(); ++r) z(r) = stream.normal();
      const Vec j = factor * z;
      // Index digits: i_1 is the most significant, matching the coefficient layout.
      for (std::size_t dmulti = 0; dmulti < dp; ++dmulti) {
        std::size_t flat = 0, tr = tuple, dr = dmulti;
        std::vector<std::size_t> digits(static_cast<std::size_t>(p));
        for (int k = p - 1; k >= 0; --k) {
          digits[static_cast<std::size_t>(k)] = (dr % static_cast<std::size_t>(dim)) * static_cast<std::size_t>(n) +
                                                tr % static_cast<std::size_t>(n);
          dr /= static_cast<std::size_t>(dim);
          tr /= static_cast<std::size_t>(n);
        }
        // Flat tensor index with the first digit fastest, as evaluate_flat contracts the last.
        for (int k = p - 1; k >= 0; --k) flat = flat * m + digits[static_cast<std::size_t>(k)];
        term.tensor[flat] = scale * j(static_cast<Eigen::Index>(dmulti));
      }
    }
    terms.push_back(std::move(term));
  }
  return {dim, n, std::move(terms)};
}

struct FiniteOptions {
  int threads = 1;
  bool compensator = true;  // include -t N xi(ss^T / N)
  FiniteBudget budget;
};

/// Weighted joint law of (overlap matrix, level).
struct OverlapAtom {
  std::size_t level = 0;
  Mat overlap;
  double weight = 0.0;
};

struct OverlapLaw {
  std::size_t depth = 0;
  std::vector<double> level_frequency;          // E<1{alpha ^ alpha' = k}>
  std::vector<double> level_std_error;
  std::vector<Mat> conditional_mean;            // E<ss'^T/N 1{level k}> / E<1{level k}>
  std::vector<Mat> conditional_std_error;
  std::vector<OverlapAtom> joint;               // empty when over the pair budget
  bool joint_computed = false;
  double max_overlap_norm = 0.0;
  std::int64_t samples = 0;
  std::uint64_t seed = 0;
  bool heuristic = false;                       // t_hat = 0 lies outside the overlap theorem
};

namespace detail {

/// Per-sample output of the exact inner computation.
struct FiniteDraw {
  double free_energy = 0.0;              // -(1/N) log Z
  std::vector<double> level_ge;          // P(level >= k), k = 0..K
  std::vector<Mat> overlap_ge;           // E<ss'^T/N 1{level >= k}>
  double xi_pair = 0.0;                  // <xi(ss'^T/N)>
  std::map<std::pair<std::size_t, std::vector<double>>, double> joint;
  double max_overlap_norm = 0.0;
};

struct DrawRequest {
  bool gibbs = false;
  bool xi_pair = false;
  bool joint = false;
};

/// Precomputed configuration tables shared by every disorder sample.
class FiniteSystem {
 public:
  FiniteSystem(const XiModel& model, const ReferenceMeasure& p1, int n, double t, const PiecewisePath& q,
               double t_hat, std::size_t n_max, const FiniteOptions& opts)
      : model_(model), p1_(p1), n_(n), dim_(model.dim()), t_(t), t_hat_(t_hat), q_(q), n_max_(n_max), opts_(opts) {
    require(model.dim() == p1.dim() && q.dim() == p1.dim(), ErrorCode::InvalidArgument, "dimension mismatch");
    require(n >= 1, ErrorCode::InvalidArgument, "N must be >= 1");
    require(t >= 0.0 && t_hat >= 0.0, ErrorCode::InvalidArgument, "t and t_hat must be non-negative");
    require(n_max >= 2, ErrorCode::InvalidArgument, "n_max must be >= 2");
    const std::size_t m = p1.size();
    double configs = std::pow(static_cast<double>(m), n);
    require(configs <= static_cast<double>(opts.budget.max_configs), ErrorCode::BudgetExceeded,
            std::to_string(m) + "^" + std::to_string(n) + " spin configurations exceed the budget");
    configs_ = static_cast<std::size_t>(configs);
    zetas_.assign(q.zetas().begin() + 1, q.zetas().end());
    leaves_ = detail::ipow(n_max, zetas_.size());
    const double flat = dim_ * n;
    double h_ops = 0.0;
    for (const auto& term : model.terms()) h_ops += std::pow(flat, term.degree);
    const double ops = static_cast<double>(configs_) * (h_ops + static_cast<double>(leaves_) * n);
    require(ops <= opts.budget.max_ops, ErrorCode::BudgetExceeded,
            "one disorder sample needs " + std::to_string(ops) + " operations");

    // Configuration tables. Spin i of configuration c uses atom (c / m^i) % m.
    atom_.resize(configs_ * static_cast<std::size_t>(n));
    spins_.resize(dim_ * n, static_cast<Eigen::Index>(configs_));
    log_prior_.resize(configs_);
    self_.resize(configs_);
    self_overlap_.assign(configs_, Mat());
    std::vector<double> log_w(m), quad(m);
    for (std::size_t a = 0; a < m; ++a) {
      log_w[a] = std::log(p1.weights()[a]);
      quad[a] = p1.atoms()[a].dot(q.terminal() * p1.atoms()[a]);
    }
    for (std::size_t c = 0; c < configs_; ++c) {
      std::size_t rem = c;
      double lp = 0.0, sq = 0.0;
      Mat r = Mat::Zero(dim_, dim_);
      for (int i = 0; i < n; ++i) {
        const std::size_t a = rem % m;
        rem /= m;
        atom_[c * n + i] = static_cast<std::uint16_t>(a);
        const Vec& tau = p1.atoms()[a];
        for (int d = 0; d < dim_; ++d) spins_(d * n + i, static_cast<Eigen::Index>(c)) = tau(d);
        lp += log_w[a];
        sq += quad[a];
        r += tau * tau.transpose();
      }
      r /= n;
      log_prior_[c] = lp;
      self_[c] = sq;
      self_overlap_[c] = r;
    }
    compensator_.resize(configs_);
    self_sq_.resize(configs_);
    for (std::size_t c = 0; c < configs_; ++c) {
      compensator_[c] = n * model(self_overlap_[c]);
      self_sq_[c] = n * self_overlap_[c].squaredNorm();
    }
  }

  [[nodiscard]] std::size_t depth() const { return zetas_.size(); }
  [[nodiscard]] std::size_t configs() const { return configs_; }
  [[nodiscard]] std::size_t leaves() const { return leaves_; }

  [[nodiscard]] FiniteDraw draw(std::uint64_t seed, std::uint64_t sample, const DrawRequest& req) const {
    const std::size_t m = p1_.size();
    const auto nn = static_cast<std::size_t>(n_);
    // Spin-only part of the exponent.
    std::vector<double> base(configs_);
    const bool disorder = t_ > 0.0 && !model_.is_zero();
    std::optional<DisorderSample> h;
    if (disorder) h.emplace(sample_hamiltonian(model_, n_, seed, sample, opts_.budget));
    Mat w_hat;
    if (t_hat_ > 0.0) {
      auto stream = rng::Stream::keyed(seed, rng::Purpose::PerturbDisorder, sample);
      w_hat.resize(n_, n_);
      for (int i = 0; i < n_; ++i)
        for (int j = 0; j < n_; ++j) w_hat(i, j) = stream.normal();
    }
    const double root_t = std::sqrt(2.0 * t_), root_that = std::sqrt(2.0 * t_hat_);
    for (std::size_t c = 0; c < configs_; ++c) {
      double e = log_prior_[c] - self_[c];
      if (disorder) e += root_t * h->evaluate_flat(spins_.col(static_cast<Eigen::Index>(c)));
      if (opts_.compensator) e -= t_ * compensator_[c];
      if (t_hat_ > 0.0) {
        double hh = 0.0;
        for (int d = 0; d < dim_; ++d) {
          const auto row = spins_.col(static_cast<Eigen::Index>(c)).segment(d * n_, n_);
          hh += row.dot(w_hat * row);
        }
        e += root_that * hh / std::sqrt(static_cast<double>(n_)) - t_hat_ * self_sq_[c];
      }
      base[c] = e;
    }

    // Cascade and field. The same (seed, sample) keys as psi_mc, so N = 1 at t = 0 reproduces it.
    const auto cascade = sample_cascade(zetas_, n_max_, seed, sample);
    const CascadeField field(cascade, q_, nn, seed, sample);
    const std::size_t depth = cascade.depth();
    std::vector<std::size_t> span(depth + 1);
    for (std::size_t k = 0; k <= depth; ++k) span[k] = detail::ipow(n_max_, depth - k);
    const auto& logv = cascade.log_leaf_weights();

    // log weight of (c, alpha); stored only when Gibbs averages are needed.
    std::vector<double> joint_log(req.gibbs ? configs_ * leaves_ : 0);
    std::vector<double> per_leaf(leaves_);
    Mat w(dim_, n_);
    Mat u(static_cast<Eigen::Index>(m), n_);  // sqrt2 w_i . tau_a
    Mat atoms(dim_, static_cast<Eigen::Index>(m));
    for (std::size_t a = 0; a < m; ++a) atoms.col(static_cast<Eigen::Index>(a)) = p1_.atoms()[a];
    std::vector<double> row(configs_);
    for (std::size_t leaf = 0; leaf < leaves_; ++leaf) {
      w.setZero();
      for (std::size_t k = 0; k <= depth; ++k)
        w += Eigen::Map<const Mat>(field.contribution(k, leaf / span[k]), dim_, n_);
      u.noalias() = std::sqrt(2.0) * atoms.transpose() * w;
      for (std::size_t c = 0; c < configs_; ++c) {
        double f = 0.0;
        const std::uint16_t* at = atom_.data() + c * nn;
        for (std::size_t i = 0; i < nn; ++i) f += u(at[i], static_cast<Eigen::Index>(i));
        row[c] = base[c] + f;
      }
      per_leaf[leaf] = logv[leaf] + detail::log_sum_exp(row);
      if (req.gibbs)
        for (std::size_t c = 0; c < configs_; ++c) joint_log[leaf * configs_ + c] = logv[leaf] + row[c];
    }
    const double log_z = detail::log_sum_exp(per_leaf);
    FiniteDraw out;
    out.free_energy = -log_z / n_;
    if (!req.gibbs) return out;

    // Gibbs weights G(c, alpha), their leaf marginals and node-summed spin means.
    std::vector<double> gibbs(joint_log.size());
    for (std::size_t i = 0; i < gibbs.size(); ++i) gibbs[i] = std::exp(joint_log[i] - log_z);
    std::vector<double> mu(configs_, 0.0);
    for (std::size_t leaf = 0; leaf < leaves_; ++leaf)
      for (std::size_t c = 0; c < configs_; ++c) mu[c] += gibbs[leaf * configs_ + c];

    out.level_ge.assign(depth + 1, 0.0);
    out.overlap_ge.assign(depth + 1, Mat::Zero(dim_, dim_));
    for (std::size_t k = 0; k <= depth; ++k) {
      const std::size_t nodes = detail::ipow(n_max_, k);
      for (std::size_t node = 0; node < nodes; ++node) {
        double mass = 0.0;
        Vec mean = Vec::Zero(dim_ * n_);
        for (std::size_t leaf = node * span[k]; leaf < (node + 1) * span[k]; ++leaf) {
          const double* g = gibbs.data() + leaf * configs_;
          const Eigen::Map<const Vec> gv(g, static_cast<Eigen::Index>(configs_));
          mass += gv.sum();
          mean.noalias() += spins_ * gv;
        }
        out.level_ge[k] += mass * mass;
        const Eigen::Map<const Mat> mm(mean.data(), n_, dim_);  // column d holds spin row d
        out.overlap_ge[k] += mm.transpose() * mm / n_;
      }
    }

    const bool pairs_ok = static_cast<double>(configs_) * static_cast<double>(configs_) <= opts_.budget.max_pairs;
    if (req.xi_pair) {
      require(pairs_ok, ErrorCode::BudgetExceeded, "configuration pairs exceed the pair budget");
      Mat r(dim_, dim_);
      double total = 0.0;
      for (std::size_t c = 0; c < configs_; ++c) {
        if (mu[c] == 0.0) continue;
        double inner = 0.0;
        const auto sc = spins_.col(static_cast<Eigen::Index>(c));
        for (std::size_t c2 = 0; c2 < configs_; ++c2) {
          const auto sc2 = spins_.col(static_cast<Eigen::Index>(c2));
          for (int d = 0; d < dim_; ++d)
            for (int e = 0; e < dim_; ++e) r(d, e) = sc.segment(d * n_, n_).dot(sc2.segment(e * n_, n_)) / n_;
          inner += mu[c2] * model_(r);
        }
        total += mu[c] * inner;
      }
      out.xi_pair = total;
    }

    // Joint (level, overlap) law from node marginals g_k(u, c).
    double node_total = 0.0;
    for (std::size_t k = 0; k <= depth; ++k) node_total += static_cast<double>(detail::ipow(n_max_, k));
    if (req.joint && static_cast<double>(configs_) * static_cast<double>(configs_) * node_total <= opts_.budget.max_pairs) {
      std::vector<std::vector<double>> ge(depth + 2, std::vector<double>(configs_ * configs_, 0.0));
      for (std::size_t k = 0; k <= depth; ++k) {
        const std::size_t nodes = detail::ipow(n_max_, k);
        std::vector<double> g(configs_);
        for (std::size_t node = 0; node < nodes; ++node) {
          std::fill(g.begin(), g.end(), 0.0);
          for (std::size_t leaf = node * span[k]; leaf < (node + 1) * span[k]; ++leaf)
            for (std::size_t c = 0; c < configs_; ++c) g[c] += gibbs[leaf * configs_ + c];
          for (std::size_t c = 0; c < configs_; ++c)
            for (std::size_t c2 = 0; c2 < configs_; ++c2) ge[k][c * configs_ + c2] += g[c] * g[c2];
        }
      }
      Mat r(dim_, dim_);
      for (std::size_t c = 0; c < configs_; ++c) {
        const auto sc = spins_.col(static_cast<Eigen::Index>(c));
        for (std::size_t c2 = 0; c2 < configs_; ++c2) {
          const auto sc2 = spins_.col(static_cast<Eigen::Index>(c2));
          for (int d = 0; d < dim_; ++d)
            for (int e = 0; e < dim_; ++e) r(d, e) = sc.segment(d * n_, n_).dot(sc2.segment(e * n_, n_)) / n_;
          out.max_overlap_norm = std::max(out.max_overlap_norm, r.norm());
          std::vector<double> key(r.data(), r.data() + r.size());
          for (auto& v : key) v = std::round(v * 1e12) / 1e12 + 0.0;
          for (std::size_t k = 0; k <= depth; ++k) {
            const double wgt = ge[k][c * configs_ + c2] - ge[k + 1][c * configs_ + c2];
            if (wgt != 0.0) out.joint[{k, key}] += wgt;
          }
        }
      }
    }
    return out;
  }

 private:
  const XiModel& model_;
  const ReferenceMeasure& p1_;
  int n_;
  int dim_;
  double t_;
  double t_hat_;
  PiecewisePath q_;
  std::size_t n_max_;
  FiniteOptions opts_;
  std::vector<double> zetas_;
  std::size_t configs_ = 0;
  std::size_t leaves_ = 1;
  std::vector<std::uint16_t> atom_;
  Mat spins_;  // (D N) x configs, row d * N + i
  std::vector<double> log_prior_;
  std::vector<double> self_;
  std::vector<Mat> self_overlap_;
  std::vector<double> compensator_;
  std::vector<double> self_sq_;
};

}  // namespace detail

/// Per-sample values of -(1/N) log Z_N; sample i is keyed by (seed, i).
inline std::vector<double> free_energy_draws(const XiModel& model, const ReferenceMeasure& p1, int n, double t,
                                             const PiecewisePath& q, double t_hat, std::int64_t samples,
                                             std::size_t n_max, std::uint64_t seed, const FiniteOptions& opts = {}) {
  require(samples >= 1, ErrorCode::InvalidArgument, "samples must be >= 1");
  const detail::FiniteSystem sys(model, p1, n, t, q, t_hat, n_max, opts);
  std::vector<double> out(static_cast<std::size_t>(samples));
  parallel_for(out.size(), opts.threads, [&](std::size_t i) { out[i] = sys.draw(seed, i, {}).free_energy; });
  return out;
}

/// F_N(t, q) with the t_hat perturbation, estimated over disorder samples.
inline McEstimate free_energy_mc(const XiModel& model, const ReferenceMeasure& p1, int n, double t,
                                 const PiecewisePath& q, double t_hat, std::int64_t samples, std::size_t n_max,
                                 std::uint64_t seed, const FiniteOptions& opts = {}) {
  const auto draws = free_energy_draws(model, p1, n, t, q, t_hat, samples, n_max, seed, opts);
  return summarize(draws, seed);
}

namespace detail {

/// Ratio of means with a delta-method standard error.
inline std::pair<double, double> ratio_estimate(const std::vector<double>& num, const std::vector<double>& den) {
  const double n = static_cast<double>(num.size());
  const double mn = std::accumulate(num.begin(), num.end(), 0.0) / n;
  const double md = std::accumulate(den.begin(), den.end(), 0.0) / n;
  if (md <= 0.0) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::infinity()};
  const double r = mn / md;
  std::vector<double> infl(num.size());
  for (std::size_t i = 0; i < num.size(); ++i) infl[i] = (num[i] - r * den[i]) / md;
  return {r, summarize(infl).std_error};
}

}  // namespace detail

/// Joint law of (ss'^T/N, alpha ^ alpha') under E<.>, with per-level
/// conditional means of the overlap.
inline OverlapLaw gibbs_overlap_law(const XiModel& model, const ReferenceMeasure& p1, int n, double t,
                                    const PiecewisePath& q, double t_hat, std::int64_t samples, std::size_t n_max,
                                    std::uint64_t seed, const FiniteOptions& opts = {}, bool want_joint = true) {
  require(samples >= 1, ErrorCode::InvalidArgument, "samples must be >= 1");
  const detail::FiniteSystem sys(model, p1, n, t, q, t_hat, n_max, opts);
  std::vector<detail::FiniteDraw> draws(static_cast<std::size_t>(samples));
  detail::DrawRequest req;
  req.gibbs = true;
  req.joint = want_joint;
  parallel_for(draws.size(), opts.threads, [&](std::size_t i) { draws[i] = sys.draw(seed, i, req); });

  const std::size_t depth = sys.depth();
  const int dim = model.dim();
  OverlapLaw law;
  law.depth = depth;
  law.samples = samples;
  law.seed = seed;
  law.heuristic = t_hat == 0.0;
  const auto level_exact = [&](const detail::FiniteDraw& d, std::size_t k) {
    return d.level_ge[k] - (k < depth ? d.level_ge[k + 1] : 0.0);
  };
  const auto overlap_exact = [&](const detail::FiniteDraw& d, std::size_t k) -> Mat {
    return k < depth ? Mat(d.overlap_ge[k] - d.overlap_ge[k + 1]) : d.overlap_ge[k];
  };
  std::vector<double> den(draws.size()), num(draws.size());
  for (std::size_t k = 0; k <= depth; ++k) {
    for (std::size_t i = 0; i < draws.size(); ++i) den[i] = level_exact(draws[i], k);
    const auto est = summarize(den);
    law.level_frequency.push_back(est.mean);
    law.level_std_error.push_back(est.std_error);
    Mat mean(dim, dim), err(dim, dim);
    for (int a = 0; a < dim; ++a)
      for (int b = 0; b < dim; ++b) {
        for (std::size_t i = 0; i < draws.size(); ++i) num[i] = overlap_exact(draws[i], k)(a, b);
        const auto [r, se] = detail::ratio_estimate(num, den);
        mean(a, b) = r;
        err(a, b) = se;
      }
    law.conditional_mean.push_back(mean);
    law.conditional_std_error.push_back(err);
  }
  law.joint_computed = want_joint && std::all_of(draws.begin(), draws.end(), [](const auto& d) { return !d.joint.empty(); });
  if (law.joint_computed) {
    std::map<std::pair<std::size_t, std::vector<double>>, double> acc;
    for (const auto& d : draws) {
      for (const auto& [key, w] : d.joint) acc[key] += w / static_cast<double>(samples);
      law.max_overlap_norm = std::max(law.max_overlap_norm, d.max_overlap_norm);
    }
    for (const auto& [key, w] : acc) {
      OverlapAtom atom;
      atom.level = key.first;
      atom.overlap = Eigen::Map<const Mat>(key.second.data(), dim, dim);
      atom.weight = w;
      law.joint.push_back(std::move(atom));
    }
  }
  return law;
}

/// Per-sample Gibbs averages E<xi(ss'^T/N)> (the t-derivative of F_N).
inline std::vector<double> xi_pair_draws(const XiModel& model, const ReferenceMeasure& p1, int n, double t,
                                         const PiecewisePath& q, double t_hat, std::int64_t samples, std::size_t n_max,
                                         std::uint64_t seed, const FiniteOptions& opts = {}) {
  const detail::FiniteSystem sys(model, p1, n, t, q, t_hat, n_max, opts);
  std::vector<double> out(static_cast<std::size_t>(samples));
  detail::DrawRequest req;
  req.gibbs = true;
  req.xi_pair = true;
  parallel_for(out.size(), opts.threads, [&](std::size_t i) { out[i] = sys.draw(seed, i, req).xi_pair; });
  return out;
}

struct IdentityItem {
  std::string name;
  bool pass = false;
  double lhs = 0.0;
  double rhs = 0.0;
  double std_error = 0.0;
  double margin = 0.0;  // positive means room to spare
  std::string detail;
};

struct IdentityReport {
  std::vector<IdentityItem> items;
  [[nodiscard]] bool all_pass() const {
    return std::all_of(items.begin(), items.end(), [](const IdentityItem& i) { return i.pass; });
  }
};

struct IdentityOptions {
  std::size_t n_max = 64;
  int lipschitz_pairs = 3;
  double dt = 1e-3;
  FiniteOptions finite;
  QuadratureSpec quad;
};

/// Sum_p |C^(p)|_op, an upper bound on sup_{|a| <= 1} |xi(a)|.
inline double xi_sup_bound(const XiModel& model) {
  double total = 0.0;
  for (const auto& term : model.terms()) {
    Eigen::SelfAdjointEigenSolver<Mat> es(term.coeff, Eigen::EigenvaluesOnly);
    total += es.eigenvalues().cwiseAbs().maxCoeff();
  }
  return total;
}

/// (a) Lipschitz bound, (b) d/dt F_N = E<xi(ss'^T/N)>, (c) monotonicity along
/// the dual cone, (d) F_N(0, q) = psi(q). Paired comparisons reuse the same
/// disorder, cascade and field draws.
inline IdentityReport identity_checks(const XiModel& model, const ReferenceMeasure& p1, int n, double t,
                                      const PiecewisePath& q, std::int64_t samples, std::uint64_t seed,
                                      const IdentityOptions& opts = {}) {
  IdentityReport report;
  const auto draws = [&](double tt, const PiecewisePath& qq) {
    return free_energy_draws(model, p1, n, tt, qq, 0.0, samples, opts.n_max, seed, opts.finite);
  };
  const auto paired = [](const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    return summarize(d);
  };
  const auto base = draws(t, q);
  const double sup_xi = xi_sup_bound(model);

  // (a) Perturbed (t', q') on the same partition.
  {
    IdentityItem item{"lipschitz", true, 0.0, 0.0, 0.0, std::numeric_limits<double>::infinity(), ""};
    auto stream = rng::Stream::keyed(seed, rng::Purpose::Probe, 1);
    for (int pair = 0; pair < opts.lipschitz_pairs; ++pair) {
      std::vector<Mat> v;
      Mat acc = Mat::Zero(q.dim(), q.dim());
      for (std::size_t k = 0; k < q.blocks(); ++k) {
        acc += detail::random_psd(stream, q.dim(), 0.1);
        v.push_back(q.value(k) + acc);
      }
      const PiecewisePath q2(q.zetas(), v);
      const double t2 = t + 0.05 * stream.uniform();
      const auto est = paired(draws(t2, q2), base);
      const double bound = lp_distance(q, q2, 1.0) + std::abs(t2 - t) * sup_xi;
      const double margin = bound + 3.0 * est.std_error - std::abs(est.mean);
      if (margin < item.margin) {
        item.margin = margin;
        item.lhs = std::abs(est.mean);
        item.rhs = bound;
        item.std_error = est.std_error;
      }
      item.pass = item.pass && margin >= 0.0;
    }
    report.items.push_back(item);
  }
  // (b) Central difference in t (forward when t < dt) against the Gibbs average.
  {
    IdentityItem item{"dt_identity", false, 0.0, 0.0, 0.0, 0.0, ""};
    const double h = opts.dt;
    std::vector<double> fd(static_cast<std::size_t>(samples));
    if (t >= h) {
      const auto up = draws(t + h, q), down = draws(t - h, q);
      for (std::size_t i = 0; i < fd.size(); ++i) fd[i] = (up[i] - down[i]) / (2.0 * h);
      item.detail = "central difference";
    } else {
      const auto up = draws(t + h, q), up2 = draws(t + 2.0 * h, q);
      for (std::size_t i = 0; i < fd.size(); ++i) fd[i] = (-3.0 * base[i] + 4.0 * up[i] - up2[i]) / (2.0 * h);
      item.detail = "one-sided difference";
    }
    const auto g = xi_pair_draws(model, p1, n, t, q, 0.0, samples, opts.n_max, seed, opts.finite);
    const auto est = paired(fd, g);
    item.lhs = summarize(fd).mean;
    item.rhs = summarize(g).mean;
    item.std_error = est.std_error;
    item.margin = 3.0 * est.std_error - std::abs(est.mean);
    item.pass = item.margin >= 0.0;
    report.items.push_back(item);
  }
  // (c) q2 - q increasing and PSD, hence in the dual cone: F(t, q2) >= F(t, q).
  {
    IdentityItem item{"monotonicity", false, 0.0, 0.0, 0.0, 0.0, ""};
    auto stream = rng::Stream::keyed(seed, rng::Purpose::Probe, 2);
    std::vector<Mat> v;
    Mat acc = Mat::Zero(q.dim(), q.dim());
    for (std::size_t k = 0; k < q.blocks(); ++k) {
      acc += detail::random_psd(stream, q.dim(), 0.2);
      v.push_back(q.value(k) + acc);
    }
    const PiecewisePath q2(q.zetas(), v);
    const auto est = paired(draws(t, q2), base);
    item.lhs = est.mean;
    item.rhs = 0.0;
    item.std_error = est.std_error;
    item.margin = est.mean + 3.0 * est.std_error;
    item.pass = item.margin >= 0.0;
    report.items.push_back(item);
  }
  // (d) Initial condition.
  {
    IdentityItem item{"initial_condition", false, 0.0, 0.0, 0.0, 0.0, ""};
    const auto est = summarize(t == 0.0 ? base : draws(0.0, q));
    const auto psi = psi_eval(p1, q, opts.quad);
    item.lhs = est.mean;
    item.rhs = psi.value;
    item.std_error = std::hypot(est.std_error, psi.error_estimate);
    item.margin = 3.0 * item.std_error - std::abs(est.mean - psi.value);
    item.pass = item.margin >= 0.0;
    report.items.push_back(item);
  }
  return report;
}

}  // namespace hjparisi
