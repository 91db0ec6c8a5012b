// Copyright 2026 The hjparisi Authors
// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "hjparisi/finiten.hpp"
#include "hjparisi/variational.hpp"
#include "test_util.hpp"

using namespace hjparisi;
using hjparisi::testing::m1;
using hjparisi::testing::m2;

namespace {

const auto kIsing1 = ReferenceMeasure::ising(1);
const auto kIsing2 = ReferenceMeasure::ising(2);

Mat random_spins(rng::Stream& s, int dim, int n) {
  Mat out(dim, n);
  for (int d = 0; d < dim; ++d)
    for (int i = 0; i < n; ++i) out(d, i) = s.uniform() < 0.5 ? -1.0 : 1.0;
  return out;
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

}  // namespace

TEST(Hamiltonian, CovarianceMatchesXi) {
  struct Case {
    XiModel model;
    int dim;
    int n;
  };
  const std::vector<Case> cases{{XiModel::sk(1.3), 1, 3}, {XiModel::pure_p(3, 0.8), 1, 3},
                                {XiModel::frobenius_square(0.9), 2, 2}, {XiModel::bipartite(), 2, 2}};
  rng::Stream s(4, 0);
  for (const auto& c : cases) {
    const Mat a = random_spins(s, c.dim, c.n), b = random_spins(s, c.dim, c.n);
    const int draws = 10000;
    std::vector<double> prod(draws);
    for (int i = 0; i < draws; ++i) {
      const auto h = sample_hamiltonian(c.model, c.n, 9, static_cast<std::uint64_t>(i));
      prod[static_cast<std::size_t>(i)] = h(a) * h(b);
    }
    const auto est = summarize(prod);
    const double expect = c.n * c.model(Mat(a * b.transpose() / c.n));
    EXPECT_NEAR(est.mean, expect, 4.0 * est.std_error + 1e-12) << c.dim << " " << c.n;
  }
}

TEST(Hamiltonian, ZeroModelVanishes) {
  const auto h = sample_hamiltonian(XiModel::sk(0.0), 4, 1);
  rng::Stream s(2, 0);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(h(random_spins(s, 1, 4)), 0.0);
}

TEST(Hamiltonian, PermutedRelabelsSpins) {
  const auto h = sample_hamiltonian(XiModel::frobenius_square(1.0), 3, 5);
  const std::vector<int> perm{2, 0, 1};
  const auto hp = h.permuted(perm);
  rng::Stream s(6, 0);
  for (int trial = 0; trial < 4; ++trial) {
    const Mat a = random_spins(s, 2, 3);
    Mat b(2, 3);
    for (int i = 0; i < 3; ++i) b.col(perm[static_cast<std::size_t>(i)]) = a.col(i);
    EXPECT_NEAR(hp(b), h(a), 1e-12);
  }
}

TEST(Hamiltonian, TensorBudget) {
  FiniteBudget b;
  b.max_tensor = 100;
  EXPECT_THROW(sample_hamiltonian(XiModel::pure_p(3), 5, 1, 0, b), Error);
}

TEST(FreeEnergy, ZeroPathZeroTimeIsZero) {
  for (int n : {1, 3, 6}) {
    const auto draws = free_energy_draws(XiModel::sk(), kIsing1, n, 0.0, PiecewisePath::zero(1), 0.0, 3, 8, 1);
    for (double d : draws) EXPECT_NEAR(d, 0.0, 1e-15);
  }
}

TEST(FreeEnergy, SingleSpinSkClosedForm) {
  // N = 1: H = J sigma^2 = J, so each draw shifts by t - sqrt(2t) J exactly.
  const auto q = path_new({0.0, 0.4}, {m1(0.1), m1(0.5)});
  const double t = 0.3;
  const auto at0 = free_energy_draws(XiModel::sk(), kIsing1, 1, 0.0, q, 0.0, 20, 16, 7);
  const auto at_t = free_energy_draws(XiModel::sk(), kIsing1, 1, t, q, 0.0, 20, 16, 7);
  for (std::size_t i = 0; i < at0.size(); ++i) {
    const double j = sample_hamiltonian(XiModel::sk(), 1, 7, i).terms()[0].tensor[0];
    EXPECT_NEAR(at_t[i] - at0[i], t - std::sqrt(2.0 * t) * j, 1e-12);
  }
}

TEST(FreeEnergy, SingleSpinMatchesPsiMc) {
  const auto q = path_new({0.0, 0.5}, {m1(0.1), m1(0.4)});
  const auto fe = free_energy_mc(XiModel::sk(), kIsing1, 1, 0.0, q, 0.0, 50, 16, 3);
  EXPECT_NEAR(fe.mean, psi_mc(kIsing1, q, 16, 50, 3).value, 1e-13);
}

TEST(FreeEnergy, ZeroTimeAgreesWithPsi) {
  const auto q = path_new({0.0, 0.5}, {m1(0.1), m1(0.4)});
  const double psi = psi_eval(kIsing1, q).value;
  for (int n : {1, 2, 4}) {
    const auto fe = free_energy_mc(XiModel::sk(), kIsing1, n, 0.0, q, 0.0, 600, 64, 11);
    EXPECT_NEAR(fe.mean, psi, 4.0 * fe.std_error + 2e-3) << n;
  }
}

TEST(FreeEnergy, DeterministicAcrossThreads) {
  const auto q = path_new({0.0, 0.5}, {m1(0.1), m1(0.4)});
  FiniteOptions one, three;
  three.threads = 3;
  const auto a = free_energy_draws(XiModel::sk(), kIsing1, 4, 0.2, q, 0.05, 7, 8, 5, one);
  const auto b = free_energy_draws(XiModel::sk(), kIsing1, 4, 0.2, q, 0.05, 7, 8, 5, three);
  EXPECT_EQ(a, b);
}

TEST(FreeEnergy, ConfigBudget) {
  EXPECT_THROW(free_energy_mc(XiModel::sk(), kIsing1, 15, 0.1, PiecewisePath::zero(1), 0.0, 1, 2, 1), Error);
  EXPECT_THROW(free_energy_mc(XiModel::bipartite(), kIsing2, 8, 0.1, PiecewisePath::zero(2), 0.0, 1, 2, 1), Error);
}

TEST(FreeEnergy, RejectsBadArguments) {
  const auto z = PiecewisePath::zero(1);
  EXPECT_THROW(free_energy_mc(XiModel::sk(), kIsing1, 2, -0.1, z, 0.0, 1, 2, 1), Error);
  EXPECT_THROW(free_energy_mc(XiModel::sk(), kIsing1, 2, 0.1, z, -0.1, 1, 2, 1), Error);
  EXPECT_THROW(free_energy_mc(XiModel::sk(), kIsing1, 0, 0.1, z, 0.0, 1, 2, 1), Error);
  EXPECT_THROW(free_energy_mc(XiModel::sk(), kIsing2, 2, 0.1, PiecewisePath::zero(2), 0.0, 1, 2, 1), Error);
}

TEST(OverlapLaw, ProbabilitiesAndBounds) {
  const auto q = path_new({0.0, 0.3, 0.7}, {m1(0.05), m1(0.2), m1(0.5)});
  const auto law = gibbs_overlap_law(XiModel::sk(), kIsing1, 4, 0.1, q, 0.05, 30, 6, 2);
  ASSERT_EQ(law.level_frequency.size(), 3u);
  EXPECT_NEAR(std::accumulate(law.level_frequency.begin(), law.level_frequency.end(), 0.0), 1.0, 1e-12);
  ASSERT_TRUE(law.joint_computed);
  EXPECT_FALSE(law.heuristic);
  EXPECT_LE(law.max_overlap_norm, 1.0 + 1e-12);
  std::vector<double> marginal(3, 0.0);
  for (const auto& atom : law.joint) {
    EXPECT_GE(atom.weight, -1e-12);
    marginal[atom.level] += atom.weight;
  }
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_NEAR(marginal[k], law.level_frequency[k], 1e-10);
    EXPECT_LE(std::abs(law.conditional_mean[k](0, 0)), 1.0 + 1e-12);
  }
  // The joint law reproduces the conditional means.
  for (std::size_t k = 0; k < 3; ++k) {
    double m = 0.0;
    for (const auto& atom : law.joint)
      if (atom.level == k) m += atom.weight * atom.overlap(0, 0);
    EXPECT_NEAR(m / law.level_frequency[k], law.conditional_mean[k](0, 0), 1e-9);
  }
}

TEST(OverlapLaw, ZeroPerturbationIsHeuristic) {
  const auto law = gibbs_overlap_law(XiModel::sk(), kIsing1, 3, 0.1, PiecewisePath::zero(1), 0.0, 3, 4, 1);
  EXPECT_TRUE(law.heuristic);
  ASSERT_EQ(law.level_frequency.size(), 1u);
  EXPECT_NEAR(law.level_frequency[0], 1.0, 1e-12);
}

TEST(OverlapLaw, LevelLawIsCascadeLawAtZeroTime) {
  // Gibbs reweighting by the field leaves the level law of the cascade unchanged.
  const auto q = path_new({0.0, 0.4}, {m1(0.1), m1(0.5)});
  const auto law = gibbs_overlap_law(XiModel::sk(), kIsing1, 3, 0.0, q, 0.0, 800, 64, 4, {}, false);
  EXPECT_NEAR(law.level_frequency[1], 0.6, 4.0 * law.level_std_error[1] + 0.02);
}

TEST(OverlapLaw, ConditionalMeanIsBlockDerivative) {
  const auto model = XiModel::sk();
  const auto q = path_new({0.0, 0.5}, {m1(0.1), m1(0.4)});
  const int n = 3;
  const double t = 0.1, h = 1e-4;
  const std::int64_t samples = 300;
  const auto law = gibbs_overlap_law(model, kIsing1, n, t, q, 0.0, samples, 16, 8, {}, false);
  for (std::size_t k = 0; k < 2; ++k) {
    std::vector<Mat> up = q.values(), down = q.values();
    up[k] += m1(h);
    down[k] -= m1(h);
    const auto fu = free_energy_draws(model, kIsing1, n, t, PiecewisePath(q.zetas(), up), 0.0, samples, 16, 8);
    const auto fd = free_energy_draws(model, kIsing1, n, t, PiecewisePath(q.zetas(), down), 0.0, samples, 16, 8);
    std::vector<double> diff(fu.size());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = (fu[i] - fd[i]) / (2.0 * h);
    const auto est = summarize(diff);
    const double numer = law.conditional_mean[k](0, 0) * law.level_frequency[k];
    const double se = std::hypot(est.std_error, law.conditional_std_error[k](0, 0) * law.level_frequency[k]);
    EXPECT_NEAR(est.mean, numer, 4.0 * se + 1e-4) << k;
  }
}

TEST(OverlapLaw, XiPairIsTimeDerivative) {
  const auto model = XiModel::sk();
  const auto q = path_new({0.0, 0.5}, {m1(0.1), m1(0.4)});
  const double t = 0.1, h = 1e-4;
  const auto fu = free_energy_draws(model, kIsing1, 3, t + h, q, 0.0, 200, 16, 3);
  const auto fd = free_energy_draws(model, kIsing1, 3, t - h, q, 0.0, 200, 16, 3);
  const auto g = xi_pair_draws(model, kIsing1, 3, t, q, 0.0, 200, 16, 3);
  std::vector<double> diff(fu.size());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = (fu[i] - fd[i]) / (2.0 * h) - g[i];
  const auto est = summarize(diff);
  EXPECT_NEAR(est.mean, 0.0, 4.0 * est.std_error);
  EXPECT_GT(mean(g), 0.0);
}

TEST(IdentityChecks, PassOnSk) {
  const auto q = path_new({0.0, 0.5}, {m1(0.1), m1(0.4)});
  IdentityOptions o;
  o.n_max = 16;
  const auto rep = identity_checks(XiModel::sk(), kIsing1, 3, 0.1, q, 200, 13, o);
  ASSERT_EQ(rep.items.size(), 4u);
  for (const auto& item : rep.items) EXPECT_TRUE(item.pass) << item.name << " " << item.lhs << " " << item.rhs;
  EXPECT_TRUE(rep.all_pass());
}

TEST(IdentityChecks, OneSidedAtZeroTime) {
  const auto q = path_new({0.0}, {m2(0.1, 0.0, 0.2)});
  IdentityOptions o;
  o.n_max = 8;
  const auto rep = identity_checks(XiModel::frobenius_square(0.8), kIsing2, 2, 0.0, q, 100, 3, o);
  EXPECT_EQ(rep.items[1].detail, "one-sided difference");
  EXPECT_TRUE(rep.all_pass());
}

TEST(FreeEnergy, NonNegative) {
  const auto q = path_new({0.0, 0.5}, {m1(0.1), m1(0.4)});
  for (double t : {0.0, 0.1, 0.5}) {
    const auto fe = free_energy_mc(XiModel::pure_p(3, 0.9), kIsing1, 4, t, q, 0.05, 100, 8, 21);
    EXPECT_GE(fe.mean, -3.0 * fe.std_error) << t;
  }
}

TEST(FreeEnergy, ExchangeableUnderRelabelling) {
  // Relabelling spins maps one disorder draw to another with the same value.
  const auto model = XiModel::pure_p(3, 1.0);
  const auto h = sample_hamiltonian(model, 4, 17);
  const auto hp = h.permuted({3, 1, 0, 2});
  double za = 0.0, zb = 0.0;
  for (int c = 0; c < 16; ++c) {
    Mat s(1, 4);
    for (int i = 0; i < 4; ++i) s(0, i) = (c >> i) & 1 ? 1.0 : -1.0;
    za += std::exp(h(s));
    zb += std::exp(hp(s));
  }
  EXPECT_NEAR(std::log(za), std::log(zb), 1e-12);
}

TEST(OverlapLaw, IndependentSpinsAtZero) {
  const auto law = gibbs_overlap_law(XiModel::sk(), kIsing1, 4, 0.0, PiecewisePath::zero(1), 0.0, 2, 4, 1);
  EXPECT_NEAR(law.conditional_mean[0](0, 0), 0.0, 1e-14);
  // R = (4 - 2 * #disagreements) / 4 with #disagreements ~ Binomial(4, 1/2).
  ASSERT_TRUE(law.joint_computed);
  for (const auto& atom : law.joint) {
    const int k = static_cast<int>(std::lround((1.0 - atom.overlap(0, 0)) * 2.0));
    const double binom[] = {1, 4, 6, 4, 1};
    EXPECT_NEAR(atom.weight, binom[k] / 16.0, 1e-12);
  }
}

TEST(FreeEnergy, StandardFreeEnergyMatchesVariationalFormula) {
  // Without the compensator at t = 1/2, -F_N is (1/N) E log Z_std.
  const auto model = XiModel::sk(std::sqrt(0.1));
  StdOptions o;
  o.inner.partition = {0.0};
  o.grid = 3;
  o.tol = 1e-6;
  QuadratureSpec quad;
  quad.nodes_per_dim = 16;
  const double formula = parisi_std(model, kIsing1, o, quad).value;
  FiniteOptions f;
  f.compensator = false;
  const auto fe = free_energy_mc(model, kIsing1, 10, 0.5, PiecewisePath::zero(1), 0.0, 200, 2, 6, f);
  EXPECT_NEAR(-fe.mean, formula, 0.05);
  EXPECT_NEAR(formula, 0.05, 1e-6);
}
