// Copyright 2026 The hjparisi Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance run: one PASS/FAIL line per criterion. Exit status 0 only if
// every selected criterion passes.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "hjparisi/hjparisi.hpp"

using namespace hjparisi;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

struct Settings {
  int threads = 1;
  std::string cli;
  std::string data;
  std::string work = "acceptance_work";
};

std::string fmt(double x, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, x);
  return buf;
}

Mat m1(double v) { return Mat::Constant(1, 1, v); }

QuadratureSpec nodes(int n) {
  QuadratureSpec q;
  q.nodes_per_dim = n;
  return q;
}

const ReferenceMeasure& ising(int dim) {
  static const auto one = ReferenceMeasure::ising(1);
  static const auto two = ReferenceMeasure::ising(2);
  return dim == 1 ? one : two;
}

PiecewisePath two_step() { return path_new({0.0, 0.5}, {m1(0.1), m1(0.4)}); }

PiecewisePath random_path(rng::Stream& s, int dim, int blocks, double scale) {
  std::vector<double> z{0.0};
  for (int k = 1; k < blocks; ++k) z.push_back(z.back() + (1.0 - z.back()) * (0.2 + 0.6 * s.uniform()));
  std::vector<Mat> v;
  Mat acc = Mat::Zero(dim, dim);
  for (int k = 0; k < blocks; ++k) {
    Mat g(dim, dim);
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j) g(i, j) = s.normal();
    acc += scale * g * g.transpose() / dim;
    v.push_back(acc);
  }
  return {z, v};
}

// ----------------------------------------------------------------- criteria

Outcome initial_condition(const Settings& cfg) {
  Outcome out;
  const auto q = two_step();
  const double psi = psi_eval(ising(1), q).value;
  FiniteOptions f;
  f.threads = cfg.threads;
  for (int n : {1, 2, 4}) {
    const auto fe = free_energy_mc(XiModel::sk(), ising(1), n, 0.0, q, 0.0, 2000, 256, 101, f);
    const double z = std::abs(fe.mean - psi) / fe.std_error;
    out.pass = out.pass && z <= 3.0;
    out.detail += "N=" + std::to_string(n) + " |dF|/se=" + fmt(z) + " ";
  }
  out.detail += "psi=" + fmt(psi, 6);
  return out;
}

Outcome backend_equivalence(const Settings& cfg) {
  Outcome out;
  auto s = rng::Stream::keyed(202, rng::Purpose::Sample);
  double worst = 0.0;
  int failures = 0;
  for (int c = 0; c < 20; ++c) {
    const int dim = 1 + c % 2;
    const int blocks = 1 + (c / 2) % 2;
    const auto q = random_path(s, dim, blocks, 0.3);
    const auto quad = psi_eval(ising(dim), q);
    const auto mc = psi_mc(ising(dim), q, 256, 10000, 300 + c, cfg.threads);
    const double se = std::hypot(mc.error_estimate, quad.error_estimate);
    const double z = std::abs(quad.value - mc.value) / se;
    worst = std::max(worst, z);
    if (z > 3.0) ++failures;
  }
  out.pass = failures == 0;
  out.detail = "20 instances, worst |d|/se=" + fmt(worst) + ", failures=" + std::to_string(failures);
  return out;
}

Outcome closed_form_cascade(const Settings& cfg) {
  Outcome out;
  auto s = rng::Stream::keyed(303, rng::Purpose::Sample);
  double worst = -1e300, worst_bias = 0.0;
  for (int c = 0; c < 10; ++c) {
    const double s1 = 0.1 + 0.8 * s.uniform();
    const double th1 = 2.0 * s.uniform();
    const double th2 = th1 + 2.0 * s.uniform();
    const std::vector<double> sv{0.0, s1, 1.0}, theta{th1, th2};
    const double exact = gaussian_cascade_logfree(sv, theta);
    const auto full = gaussian_cascade_logfree_mc(sv, theta, 256, 10000, 400 + c, cfg.threads);
    const auto half = gaussian_cascade_logfree_mc(sv, theta, 128, 10000, 400 + c, cfg.threads);
    // Truncation bias is reported as the shift from halving n_max on the same draws.
    const double bias = std::abs(full.value - half.value);
    const double excess = std::abs(full.value - exact) - 3.0 * full.error_estimate - bias;
    worst = std::max(worst, excess);
    worst_bias = std::max(worst_bias, bias);
    out.pass = out.pass && excess <= 0.0;
  }
  out.detail = "10 instances, max(|d| - 3se - bias)=" + fmt(worst) + ", max bias=" + fmt(worst_bias);
  return out;
}

Outcome critical_certificate(const Settings& cfg) {
  Outcome out;
  const auto model = XiModel::sk();
  const auto q = PiecewisePath::zero(1);
  const double t = 0.02;
  const std::vector<double> zetas{0.0, 0.3, 0.7};
  rng::Stream s(404, 0);
  std::vector<SignedPiecewisePath> found;
  double worst_residual = 0.0, worst_pj = 0.0;
  for (int start = 0; start < 5; ++start) {
    std::vector<Mat> v;
    Mat acc = Mat::Zero(1, 1);
    for (std::size_t k = 0; k < zetas.size(); ++k) {
      acc += detail::random_psd(s, 1, 1.0 / zetas.size());
      v.push_back(acc);
    }
    SolverOptions o;
    o.initial_p = SignedPiecewisePath(zetas, v);
    const auto cp = solve_critical(model, ising(1), t, 0.0, q, o, {}, cfg.threads);
    out.pass = out.pass && cp.converged && cp.residual_l2 < 1e-8;
    worst_residual = std::max(worst_residual, cp.residual_l2);
    const double pj = std::abs(parisi_functional(model, ising(1), t, q, cp.p, {}, cfg.threads) - cp.j_value);
    worst_pj = std::max(worst_pj, pj);
    found.push_back(cp.p);
  }
  double spread = 0.0;
  for (const auto& p : found) spread = std::max(spread, lp_distance(p, found.front(), 2.0));
  out.pass = out.pass && spread <= 1e-6 && worst_pj <= 1e-10;
  out.detail = "5 starts, L2 spread=" + fmt(spread) + ", max residual=" + fmt(worst_residual) +
               ", |P-J|=" + fmt(worst_pj);
  return out;
}

Outcome high_temperature(const Settings& cfg) {
  Outcome out;
  const auto model = XiModel::sk();
  const auto q = PiecewisePath::zero(1);
  const double t = 0.1;
  const auto cp = solve_critical(model, ising(1), t, 0.0, q, {}, {}, cfg.threads);
  FiniteOptions f;
  f.threads = cfg.threads;
  std::vector<McEstimate> fe;
  for (int n : {4, 8, 12}) fe.push_back(free_energy_mc(model, ising(1), n, t, q, 0.0, 4000, 2, 505, f));
  const double gap = std::abs(fe.back().mean - cp.j_value);
  bool monotone = true;
  for (std::size_t i = 1; i < fe.size(); ++i)
    monotone = monotone &&
               fe[i].mean <= fe[i - 1].mean + 3.0 * std::hypot(fe[i].std_error, fe[i - 1].std_error);
  out.pass = cp.converged && gap < 0.05 && monotone;
  out.detail = "F4=" + fmt(fe[0].mean, 4) + " F8=" + fmt(fe[1].mean, 4) + " F12=" + fmt(fe[2].mean, 4) +
               " J=" + fmt(cp.j_value, 4) + " gap=" + fmt(gap) + (monotone ? " non-increasing" : " NOT monotone");
  return out;
}

Outcome convex_equivalence(const Settings& cfg) {
  Outcome out;
  rng::Stream s(606, 0);
  double worst_gap = 0.0, worst_floor = -1e300;
  for (int c = 0; c < 10; ++c) {
    const bool sk = c < 5;
    const int dim = sk ? 1 : 2;
    const auto model = sk ? XiModel::sk() : XiModel::frobenius_square(0.8);
    const auto quad = nodes(sk ? 16 : 6);
    const double t = 0.02 + (sk ? 0.28 : 0.13) * s.uniform();
    const Mat a = detail::random_psd(s, dim, 0.3);
    const auto q = path_new({0.0, 0.5}, {a, Mat(a + detail::random_psd(s, dim, 0.3))});
    const auto cp = solve_critical(model, ising(dim), t, 0.0, q, {}, quad, cfg.threads);
    const double crit = parisi_functional(model, ising(dim), t, q, cp.p, quad, cfg.threads);
    VariationalOptions o;
    o.starts = 2;
    o.partition = {0.0, 0.5};
    // Cold starts first, then with the critical point offered as a start.
    const double sup0 = parisi_sup(model, ising(dim), t, q, o, quad, cfg.threads).value;
    const double hl0 = hopf_lax_value(model, ising(dim), t, q, o, quad, cfg.threads).value;
    o.initial_p = cp.p;
    const double sup = parisi_sup(model, ising(dim), t, q, o, quad, cfg.threads).value;
    const double hl = hopf_lax_value(model, ising(dim), t, q, o, quad, cfg.threads).value;
    worst_gap = std::max({worst_gap, std::abs(sup - hl), std::abs(sup0 - hl0)});
    out.pass = out.pass && std::abs(sup0 - hl0) <= 1e-4;
    worst_floor = std::max(worst_floor, crit - std::min(sup, hl));
    out.pass = out.pass && cp.converged && std::abs(sup - hl) <= 1e-4 && std::min(sup, hl) >= crit - 1e-8;
  }
  out.detail = "10 instances (5 sk, 5 frobenius D=2), max |sup - hopf-lax|=" + fmt(worst_gap) +
               ", max (critical - value)=" + fmt(worst_floor);
  return out;
}

Outcome cascade_laws(const Settings& cfg) {
  Outcome out;
  const std::vector<double> zetas{0.15, 0.35};
  const auto law = overlap_level_law_averaged(zetas, 64, 100000, 707, cfg.threads);
  const auto chi = chi_square_test(law.counts, cascade_level_targets(zetas), 0.99);
  out.detail = "chi2=" + fmt(chi.statistic) + " (99% crit " + fmt(chi.critical) + ", dof " + std::to_string(chi.dof) + ")";
  out.pass = chi.pass;
  const std::vector<std::pair<std::string, OverlapFunction>> tests{
      {"one", [](const Mat&) { return 1.0; }},
      {"r12", [](const Mat& m) { return m(0, 1); }},
      {"top", [&](const Mat& m) { return m(0, 1) == zetas.back() ? 1.0 : 0.0; }},
      {"r12r23", [](const Mat& m) { return m(0, 1) * m(1, 2); }},
      {"exp", [](const Mat& m) { return std::exp(-m(0, 1) - m(1, 2)); }},
  };
  double worst = -1e300;
  for (std::size_t i = 0; i < tests.size(); ++i) {
    const auto r = gg_check(zetas, 64, tests[i].second, 3, 40000, 710 + i, cfg.threads);
    // Every test function is bounded by 1, so discarded mass bounds the bias.
    const double excess = r.residual - 3.0 * r.std_error - r.tail_ratio;
    worst = std::max(worst, excess);
    out.pass = out.pass && excess <= 0.0;
  }
  out.detail += ", gg 5 functions max(residual - 3se - bias)=" + fmt(worst);
  return out;
}

Outcome derivative_identities(const Settings& cfg) {
  Outcome out;
  // xi gradient against central differences.
  auto s = rng::Stream::keyed(808, rng::Purpose::Sample);
  double worst_fd = 0.0;
  for (int c = 0; c < 100; ++c) {
    const int dim = 1 + c % 3, degree = 2 + c % 3;
    const auto side = static_cast<Eigen::Index>(std::pow(dim, degree));
    Mat g(side, side);
    for (Eigen::Index i = 0; i < side; ++i)
      for (Eigen::Index j = 0; j < side; ++j) g(i, j) = s.normal();
    const XiModel model(dim, {XiTerm{degree, g * g.transpose() / static_cast<double>(side)}});
    Mat a(dim, dim);
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j) a(i, j) = s.normal();
    a = symmetrize(a);
    a *= s.uniform() / a.norm();
    const Mat grad = xi_grad(model, a);
    const double h = 1e-5;
    for (const Mat& e : symmetric_basis(dim)) {
      const double fd = (model(a + h * e) - model(a - h * e)) / (2 * h);
      const double exact = frob_dot(grad, e);
      worst_fd = std::max(worst_fd, std::abs(fd - exact) / std::max(1.0, std::abs(exact)));
    }
  }
  out.pass = worst_fd < 1e-6;
  out.detail = "xi_grad max rel err=" + fmt(worst_fd);

  // Lipschitz bounds of psi and its derivative.
  const auto quad = nodes(12);
  double worst_psi = -1e300, worst_grad = -1e300;
  for (int c = 0; c < 50; ++c) {
    const int dim = 1 + c % 2;
    const auto a = random_path(s, dim, 2, 0.3), b = random_path(s, dim, 2, 0.3);
    const double dpsi = std::abs(psi_eval(ising(dim), a, quad, std::nullopt, cfg.threads).value -
                                 psi_eval(ising(dim), b, quad, std::nullopt, cfg.threads).value);
    const auto ga = psi_grad(ising(dim), a, quad, 1e-4, GradMethod::Gibbs, std::nullopt, cfg.threads).p;
    const auto gb = psi_grad(ising(dim), b, quad, 1e-4, GradMethod::Gibbs, std::nullopt, cfg.threads).p;
    worst_psi = std::max(worst_psi, dpsi - lp_distance(a, b, 1.0));
    worst_grad = std::max(worst_grad, lp_distance(ga, gb, 2.0) - 16.0 * lp_distance(a, b, 2.0));
  }
  out.pass = out.pass && worst_psi <= 1e-9 && worst_grad <= 1e-9;
  out.detail += ", 50 pairs max(|dpsi| - L1)=" + fmt(worst_psi) + " max(|dgrad| - 16 L2)=" + fmt(worst_grad);

  // d/dt F_N against the Gibbs average of xi at N = 8.
  IdentityOptions o;
  o.n_max = 16;
  o.finite.threads = cfg.threads;
  o.lipschitz_pairs = 1;
  const auto rep = identity_checks(XiModel::sk(), ising(1), 8, 0.1, two_step(), 400, 809, o);
  for (const auto& item : rep.items)
    if (item.name == "dt_identity") {
      out.pass = out.pass && item.pass;
      out.detail += ", dF/dt=" + fmt(item.lhs, 5) + " vs <xi>=" + fmt(item.rhs, 5) + " se=" + fmt(item.std_error);
    }
  return out;
}

Outcome overlap_target(const Settings& cfg) {
  Outcome out;
  const auto model = XiModel::sk();
  const auto q = two_step();
  const double t = 0.1, t_hat = 0.05;
  const auto cp = solve_critical(model, ising(1), t, t_hat, q, {}, {}, cfg.threads);
  FiniteOptions f;
  f.threads = cfg.threads;
  const auto law = gibbs_overlap_law(model, ising(1), 12, t, q, t_hat, 400, 16, 909, f, false);
  out.pass = cp.converged && law.depth + 1 == cp.p.blocks();
  double worst = 0.0;
  for (std::size_t k = 0; k <= law.depth && out.pass; ++k) {
    const double mean = law.conditional_mean[k](0, 0);
    worst = std::max(worst, std::abs(mean - cp.p.value(k)(0, 0)));
    if (k > 0) out.pass = out.pass && mean > law.conditional_mean[k - 1](0, 0);
    out.detail += "level " + std::to_string(k) + ": mean=" + fmt(mean, 4) + " p=" + fmt(cp.p.value(k)(0, 0), 4) + "; ";
  }
  out.pass = out.pass && worst <= 0.1;
  out.detail += "max gap=" + fmt(worst);
  return out;
}

std::string slurp(const std::string& file) {
  std::ifstream in(file, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome determinism(const Settings& cfg) {
  Outcome out;
  // Library entry points, bitwise.
  const auto q = two_step();
  FiniteOptions one, four;
  four.threads = 4;
  const bool fe = free_energy_draws(XiModel::sk(), ising(1), 5, 0.1, q, 0.05, 40, 16, 1, one) ==
                  free_energy_draws(XiModel::sk(), ising(1), 5, 0.1, q, 0.05, 40, 16, 1, four);
  const bool mc = psi_mc(ising(1), q, 32, 500, 2, 1).value == psi_mc(ising(1), q, 32, 500, 2, 4).value;
  const auto f = [](const Mat& m) { return m(0, 1); };
  const bool gg = gg_check({0.3, 0.6}, 8, f, 3, 500, 3, 1).residual == gg_check({0.3, 0.6}, 8, f, 3, 500, 3, 4).residual;
  out.pass = fe && mc && gg;
  out.detail = std::string("library ") + (out.pass ? "bitwise equal" : "MISMATCH");
  if (cfg.cli.empty()) {
    out.pass = false;
    out.detail += ", no --cli given so command outputs were not compared";
    return out;
  }
  const std::string d = cfg.data + "/";
  const std::vector<std::pair<std::string, std::string>> commands{
      {"psi_mc", "psi eval --method mc --model " + d + "sk.json --path " + d + "step2.json --samples 2000 --nmax 64"},
      {"model_check", "model check --model " + d + "frobenius.json"},
      {"parisi_sup", "parisi sup --model " + d + "sk.json --path " + d + "step2.json --t 0.1 --K 2 --starts 2"},
      {"crit_sweep", "crit sweep --model " + d + "sk.json --path " + d + "step2.json --t-grid 0.01,0.02 --format csv"},
      {"cascade_diag", "cascade diag --zetas 0.15,0.35 --nmax 16 --draws 20000 --gg-draws 2000"},
      {"finite_fe", "finiteN fe --model " + d + "sk.json --path " + d + "step2.json --t 0.1 --N 6 --samples 200 --nmax 16,32"},
      {"finite_overlap", "finiteN overlap --model " + d + "sk.json --path " + d + "step2.json --t 0.1 --that 0.05 --N 5 --samples 100 --nmax 16"},
      {"finite_check", "finiteN check --model " + d + "sk.json --path " + d + "step2.json --t 0.1 --N 4 --samples 200 --nmax 16"},
  };
  std::filesystem::create_directories(cfg.work);
  int same = 0;
  for (const auto& [name, args] : commands) {
    std::string outputs[2];
    bool ran = true;
    for (int i = 0; i < 2; ++i) {
      const std::string file = cfg.work + "/" + name + (i == 0 ? ".t1" : ".t4");
      const std::string cmd = "\"" + cfg.cli + "\" " + args + " --seed 7 --threads " + (i == 0 ? "1" : "4") +
                              " --out \"" + file + "\"";
      ran = ran && std::system(cmd.c_str()) == 0;
      outputs[i] = slurp(file);
    }
    if (ran && !outputs[0].empty() && outputs[0] == outputs[1]) {
      ++same;
    } else {
      out.pass = false;
      out.detail += ", " + name + (ran ? " differs" : " failed to run");
    }
  }
  out.detail += ", " + std::to_string(same) + "/" + std::to_string(commands.size()) + " commands byte-identical";
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  Settings cfg;
  std::vector<int> only;
  app.add_option("--threads", cfg.threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--cli", cfg.cli, "Path to the hjparisi executable");
  app.add_option("--data", cfg.data, "Directory with sample model and path files");
  app.add_option("--work", cfg.work, "Scratch directory for command outputs");
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome(const Settings&)>>> criteria{
      {"initial-condition identity", initial_condition},
      {"backend equivalence", backend_equivalence},
      {"closed-form cascade check", closed_form_cascade},
      {"critical-point certificate", critical_certificate},
      {"high-temperature limit", high_temperature},
      {"convex-case formula equivalence", convex_equivalence},
      {"cascade laws", cascade_laws},
      {"gradient and derivative identities", derivative_identities},
      {"overlap-law target", overlap_target},
      {"determinism", determinism},
  };
  const std::set<int> selected(only.begin(), only.end());
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome r;
    try {
      r = criteria[i].second(cfg);
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    all = all && r.pass;
    std::printf("criterion %2d %s  %s: %s [%.1fs]\n", id, r.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                r.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return all ? 0 : 1;
}
