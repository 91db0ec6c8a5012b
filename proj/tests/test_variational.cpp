// Copyright 2026 The hjparisi Authors
// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "hjparisi/variational.hpp"
#include "test_util.hpp"

using namespace hjparisi;
using hjparisi::testing::m1;
using hjparisi::testing::m2;

namespace {

const auto kIsing1 = ReferenceMeasure::ising(1);
const auto kIsing2 = ReferenceMeasure::ising(2);

QuadratureSpec nodes(int n) {
  QuadratureSpec q;
  q.nodes_per_dim = n;
  return q;
}

VariationalOptions fast(int starts = 2) {
  VariationalOptions o;
  o.starts = starts;
  o.partition = {0.0, 0.5};
  return o;
}

}  // namespace

TEST(ParisiSup, ZeroTimeIsPsi) {
  const auto q = path_new({0.0, 0.5}, {m1(0.1), m1(0.4)});
  const auto r = parisi_sup(XiModel::sk(), kIsing1, 0.0, q, fast());
  EXPECT_NEAR(r.value, psi_eval(kIsing1, q).value, 1e-14);
}

TEST(ParisiSup, SkZeroPathMatchesCriticalValue) {
  const auto cp = solve_critical(XiModel::sk(), kIsing1, 0.02, 0.0, PiecewisePath::zero(1));
  const auto r = parisi_sup(XiModel::sk(), kIsing1, 0.02, PiecewisePath::zero(1));
  EXPECT_NEAR(r.value, cp.j_value, 1e-6);
  EXPECT_TRUE(r.warnings.empty());
}

TEST(ParisiSup, DominatesCriticalPoint) {
  const auto model = XiModel::sk();
  const auto q = path_new({0.0, 0.4}, {m1(0.1), m1(0.3)});
  for (double t : {0.02, 0.05, 0.2}) {
    const auto cp = solve_critical(model, kIsing1, t, 0.0, q);
    ASSERT_TRUE(cp.converged);
    const auto r = parisi_sup(model, kIsing1, t, q, fast());
    EXPECT_GE(r.value, parisi_functional(model, kIsing1, t, q, cp.p) - 1e-8) << t;
    EXPECT_NEAR(r.value, cp.j_value, 1e-6) << t;
    // Feasibility of the maximizer.
    for (std::size_t k = 0; k < r.argmax_path.blocks(); ++k) EXPECT_LE(r.argmax_path.value(k).norm(), 1.0 + 1e-9);
  }
}

TEST(ParisiSup, OneBlockAgreesWithGrid) {
  const auto model = XiModel::sk(1.2);
  const auto q = PiecewisePath::constant(m1(0.2));
  const double t = 0.3;
  VariationalOptions o;
  o.partition = {0.0};
  const auto r = parisi_sup(model, kIsing1, t, q, o);
  double grid_best = -1e300;
  for (int i = 0; i <= 1000; ++i) {
    const auto p = SignedPiecewisePath::constant(m1(i / 1000.0));
    grid_best = std::max(grid_best, parisi_functional(model, kIsing1, t, q, p));
  }
  EXPECT_GE(r.value, grid_best - 1e-10);
  EXPECT_LE(r.value, grid_best + 1e-6);
}

TEST(ParisiSup, RefinementDoesNotLoseValue) {
  const auto model = XiModel::sk();
  const auto q = path_new({0.0, 0.5}, {m1(0.05), m1(0.3)});
  auto coarse = fast(1);
  auto fine = fast(1);
  fine.partition = {0.0, 0.25, 0.5, 0.75};
  for (double t : {0.1, 0.4}) {
    const double a = parisi_sup(model, kIsing1, t, q, coarse, nodes(16)).value;
    const double b = parisi_sup(model, kIsing1, t, q, fine, nodes(16)).value;
    EXPECT_GE(b, a - 1e-9) << t;
  }
}

TEST(ParisiSup, NonConvexModelWarns) {
  VariationalOptions o = fast(1);
  o.fail_tol = 1.0;
  const auto q = path_new({0.0}, {m2(0.1, 0.0, 0.1)});
  const auto r = parisi_sup(XiModel::bipartite(), kIsing2, 0.02, q, o, nodes(8));
  EXPECT_FALSE(r.warnings.empty());
}

TEST(HopfLax, LowerBoundedByPsi) {
  const auto q = path_new({0.0, 0.5}, {m1(0.1), m1(0.4)});
  const auto r = hopf_lax_value(XiModel::sk(), kIsing1, 0.1, q, fast(), nodes(16));
  EXPECT_GE(r.value, psi_eval(kIsing1, q, nodes(16)).value - 1e-12);
}

TEST(HopfLax, AgreesWithParisiSupSk) {
  const auto model = XiModel::sk();
  for (double t : {0.01, 0.05, 0.3}) {
    const auto q = path_new({0.0, 0.5}, {m1(0.1), m1(0.4)});
    const double a = parisi_sup(model, kIsing1, t, q, fast(), nodes(16)).value;
    const double b = hopf_lax_value(model, kIsing1, t, q, fast(), nodes(16)).value;
    EXPECT_NEAR(a, b, 1e-4) << t;
  }
}

TEST(HopfLax, AgreesWithParisiSupFrobenius) {
  const auto model = XiModel::frobenius_square(0.8);
  rng::Stream s(21, 0);
  for (int trial = 0; trial < 2; ++trial) {
    const Mat a = detail::random_psd(s, 2, 0.3);
    const auto q = path_new({0.0, 0.5}, {a, Mat(a + detail::random_psd(s, 2, 0.3))});
    auto o = fast(1);
    const double x = parisi_sup(model, kIsing2, 0.1, q, o, nodes(6)).value;
    const double y = hopf_lax_value(model, kIsing2, 0.1, q, o, nodes(6)).value;
    EXPECT_NEAR(x, y, 1e-4);
  }
}

TEST(ClassicParisi, ZeroPathZeroTilt) {
  EXPECT_NEAR(classic_parisi(XiModel::sk(), kIsing1, PiecewisePath::zero(1), m1(0.0)), 0.0, 1e-15);
}

TEST(ClassicParisi, IdentityTiltShiftsByConstant) {
  // Unit-norm atoms: x = c Id adds c |tau|^2 = c inside the log.
  const auto pi1 = path_new({0.0, 0.5}, {m1(0.2), m1(0.6)});
  const double base1 = classic_parisi(XiModel::sk(), kIsing1, pi1, m1(0.0));
  EXPECT_NEAR(classic_parisi(XiModel::sk(), kIsing1, pi1, m1(0.7)), base1 + 0.7, 1e-12);
  const auto pi2 = path_new({0.0}, {m2(0.3, 0.1, 0.2)});
  const auto model2 = XiModel::frobenius_square(1.0);
  const double base2 = classic_parisi(model2, kIsing2, pi2, Mat::Zero(2, 2), nodes(16));
  EXPECT_NEAR(classic_parisi(model2, kIsing2, pi2, -0.4 * Mat::Identity(2, 2), nodes(16)), base2 - 0.4, 1e-12);
}

TEST(ClassicParisi, EqualsMinusParisiFunctionalAtHalf) {
  const auto model = XiModel::pure_p(3, 0.9);
  const auto pi = path_new({0.0, 0.3, 0.7}, {m1(0.1), m1(0.3), m1(0.8)});
  const double lhs = classic_parisi(model, kIsing1, pi, m1(0.0));
  const double rhs = -parisi_functional(model, kIsing1, 0.5, PiecewisePath::zero(1), pi);
  EXPECT_NEAR(lhs, rhs, 1e-12);
}

TEST(ParisiStd, ZeroCoupling) {
  StdOptions o;
  o.inner.partition = {0.0};
  o.grid = 3;
  o.tol = 1e-4;
  const auto r = parisi_std(XiModel::sk(0.0), kIsing1, o, nodes(12));
  EXPECT_NEAR(r.value, 0.0, 1e-9);
}

TEST(ParisiStd, SkHighTemperatureIsAnnealed) {
  const double beta = std::sqrt(0.05);
  StdOptions o;
  o.inner.partition = {0.0, 0.5};
  o.tol = 1e-7;
  const auto r = parisi_std(XiModel::sk(beta), kIsing1, o, nodes(12));
  EXPECT_NEAR(r.value, 0.025, 1e-6);
  EXPECT_LE(r.value, r.annealed_upper_bound + 1e-9);
  EXPECT_NEAR(r.y(0, 0), 0.05, 1e-4);
}

TEST(ParisiStd, SkLowTemperatureBelowReplicaSymmetric) {
  // xi = r^2 at t = 1/2 is the usual SK model at beta^2 = 2. The replica
  // symmetric value 0.490038... (one-block oracle below) bounds it from above.
  StdOptions o;
  o.inner.partition = {0.0, 0.5};
  o.inner.fail_tol = 1e-3;
  o.grid = 3;
  o.tol = 1e-5;
  const auto r = parisi_std(XiModel::sk(), kIsing1, o, nodes(16));
  // One-block oracle: q = E tanh^2(sqrt(2 q) Z), value (1 - q)^2 / 2 + E log cosh(sqrt(2 q) Z).
  double q = 0.5;
  for (int i = 0; i < 500; ++i)
    q = hjparisi::testing::gauss_expect([&](double z) { return std::pow(std::tanh(std::sqrt(2.0 * q) * z), 2); });
  const double rs = 0.5 * (1 - q) * (1 - q) +
                    hjparisi::testing::gauss_expect([&](double z) { return std::log(std::cosh(std::sqrt(2.0 * q) * z)); });
  EXPECT_NEAR(rs, 0.49004, 1e-4);
  EXPECT_LE(r.value, rs + 1e-5);
  EXPECT_GT(r.value, rs - 0.01);
  EXPECT_LT(r.value, r.annealed_upper_bound - 0.005);
}

TEST(HopfLax, AcceptsInitialPath) {
  const auto model = XiModel::sk();
  const auto q = path_new({0.0, 0.5}, {m1(0.1), m1(0.4)});
  auto o = fast();
  const double plain = hopf_lax_value(model, kIsing1, 0.1, q, o, nodes(16)).value;
  o.initial_p = SignedPiecewisePath({0.0, 0.5}, {m1(0.2), m1(0.5)});
  EXPECT_NEAR(hopf_lax_value(model, kIsing1, 0.1, q, o, nodes(16)).value, plain, 1e-6);
}
