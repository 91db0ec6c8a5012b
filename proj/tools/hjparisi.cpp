// Copyright 2026 The hjparisi Authors
// SPDX-License-Identifier: Apache-2.0
//
// hjparisi command-line front end. Every run writes its resolved
// configuration next to the results; the worker count is left out because
// results do not depend on it.

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "hjparisi/hjparisi.hpp"

namespace {

using namespace hjparisi;
using io::Json;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitNonConvergence = 2;
constexpr int kExitUsage = 64;

/// Raised by a command whose result is valid data but counts as failure.
struct NonConverged {
  Json doc;
};

struct Params {
  std::string model_file;
  std::string path_file;
  std::string out;
  std::string format;
  int threads = 0;
  std::uint64_t seed = 1;
  int refine = 1;
  int nodes = 32;
  double t = 0.0;
  double t_hat = 0.0;
  double tol = 1e-8;
  double damping = 0.5;
  int max_iters = 500;
  double eps = 1e-4;
  std::string method = "quad";
  std::string grad_method = "gibbs";
  std::size_t n_max = 64;
  std::vector<std::size_t> n_max_list{64};
  std::int64_t samples = 10000;
  int probe_samples = 200;
  int n_spins = 4;
  int blocks = 4;
  int starts = 4;
  int grid = 5;
  bool no_compensator = false;
  std::vector<double> t_grid;
  double t_min = 0.0;
  double t_max = 0.1;
  int steps = 11;
  std::vector<double> zetas;
  std::int64_t draws = 100000;
  std::int64_t gg_draws = 20000;
  int gg_n = 2;
};

// ---------------------------------------------------------------- output

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_cell(const Json& v) {
  if (v.is_number_float()) return fmt_double(v.get<double>());
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
  }
  if (v.is_structured()) return csv_cell(Json(v.dump()));
  return v.dump();
}

/// Flat CSV: comment lines with schema and config, then one row per entry of
/// doc["rows"] (or a single row built from doc["result"]).
std::string to_csv(const Json& doc) {
  std::ostringstream os;
  os << "# schema_version=" << doc["schema_version"].get<int>() << "\n";
  os << "# command=" << doc["command"].get<std::string>() << "\n";
  os << "# config=" << doc["config"].dump() << "\n";
  std::vector<Json> rows;
  if (doc.contains("rows")) {
    for (const auto& r : doc["rows"]) rows.push_back(r);
  } else {
    rows.push_back(doc["result"]);
  }
  if (rows.empty()) return os.str();
  bool first = true;
  for (const auto& [key, value] : rows.front().items()) {
    os << (first ? "" : ",") << key;
    first = false;
  }
  os << "\n";
  for (const auto& r : rows) {
    first = true;
    for (const auto& [key, value] : r.items()) {
      os << (first ? "" : ",") << csv_cell(value);
      first = false;
    }
    os << "\n";
  }
  return os.str();
}

void emit(const Params& p, const Json& doc, const std::string& default_format) {
  const std::string format = p.format.empty() ? default_format : p.format;
  const std::string text = format == "csv" ? to_csv(doc) : doc.dump(2) + "\n";
  if (p.out.empty() || p.out == "-") {
    std::cout << text;
    return;
  }
  std::ofstream f(p.out, std::ios::binary);
  require(static_cast<bool>(f), ErrorCode::InvalidArgument, "cannot write " + p.out);
  f << text;
}

Json document(const std::string& command, Json config) {
  Json doc;
  doc["schema_version"] = io::kSchemaVersion;
  doc["command"] = command;
  doc["config"] = std::move(config);
  return doc;
}

// ---------------------------------------------------------------- inputs

struct Inputs {
  XiModel model;
  ReferenceMeasure p1;
  Json model_json;
};

Inputs load_model(const Params& p) {
  const auto j = io::read_json_file(p.model_file);
  auto model = io::model_from_json(j);
  auto p1 = io::reference_from_json(j, model.dim());
  return {std::move(model), std::move(p1), j};
}

PiecewisePath load_path(const Params& p) {
  auto q = io::path_from_json(io::read_json_file(p.path_file));
  return p.refine > 1 ? q.refined(p.refine) : q;
}

QuadratureSpec quad_spec(const Params& p) {
  QuadratureSpec q;
  q.nodes_per_dim = p.nodes;
  if (q.mc_fallback) q.mc_fallback->seed = p.seed;
  return q;
}

Json base_config(const Params& p, const Inputs& in, const std::optional<PiecewisePath>& q) {
  Json c;
  c["model_file"] = p.model_file;
  c["model"] = io::model_to_json(in.model);
  c["P1"] = io::reference_to_json(in.p1);
  if (q) {
    c["path_file"] = p.path_file;
    c["refine"] = p.refine;
    c["path"] = io::to_json(*q);
  }
  c["seed"] = p.seed;
  return c;
}

std::vector<double> uniform_partition(int blocks) {
  require(blocks >= 1, ErrorCode::InvalidArgument, "--K must be >= 1");
  std::vector<double> z;
  for (int k = 0; k < blocks; ++k) z.push_back(static_cast<double>(k) / blocks);
  return z;
}

Json variational_json(const VariationalResult& r) {
  Json j;
  j["value"] = r.value;
  j["kind"] = "deterministic";
  j["argmax_path"] = io::to_json(r.argmax_path);
  j["optimizer_iters"] = r.optimizer_iters;
  j["first_order_residual"] = r.first_order_residual;
  j["converged"] = r.converged;
  j["best_start"] = r.best_start;
  j["warnings"] = r.warnings;
  return j;
}

Json critical_json(const CriticalPoint& cp) {
  Json j;
  j["converged"] = cp.converged;
  j["iterations"] = cp.iterations;
  j["residual_l2"] = cp.residual_l2;
  j["j_value"] = cp.j_value;
  j["kind"] = "deterministic";
  j["t"] = cp.t;
  j["t_hat"] = cp.t_hat;
  j["p"] = io::to_json(cp.p);
  j["q_prime"] = io::to_json(cp.q_prime);
  j["residual_history"] = cp.residual_history;
  j["diagnostic"] = cp.diagnostic;
  return j;
}

// ---------------------------------------------------------------- commands

void model_check(const Params& p) {
  const auto in = load_model(p);
  auto cfg = base_config(p, in, std::nullopt);
  cfg["probe_samples"] = p.probe_samples;
  auto doc = document("model check", cfg);
  const auto conv = convexity_probe(in.model, p.probe_samples, p.seed);
  const auto lip = grad_lipschitz_const(in.model, p.probe_samples, p.seed);
  Json r;
  r["dim"] = in.model.dim();
  r["degrees"] = Json::array();
  for (const auto& t : in.model.terms()) r["degrees"].push_back(t.degree);
  r["is_convex_on_psd"] = conv.is_convex_on_psd;
  if (conv.witness) {
    r["witness"] = {{"a", io::to_json(conv.witness->a)},
                    {"b", io::to_json(conv.witness->b)},
                    {"lambda", conv.witness->lambda},
                    {"gap", conv.witness->gap}};
  }
  r["grad_lipschitz_estimate"] = lip.estimate;
  r["grad_lipschitz_analytic_bound"] = lip.analytic_bound;
  const double tc = t_critical(in.model, p.probe_samples, p.seed);
  r["t_critical"] = std::isfinite(tc) ? Json(tc) : Json("inf");
  // Does grad xi keep the PSD cone? Checked on random PSD points.
  auto stream = rng::Stream::keyed(p.seed, rng::Purpose::Probe, 0);
  double worst = 0.0;
  for (int i = 0; i < p.probe_samples; ++i) {
    const Mat a = detail::random_psd(stream, in.model.dim(), 1.0);
    worst = std::min(worst, min_eigenvalue(xi_grad(in.model, a)));
  }
  r["grad_min_eigenvalue"] = worst;
  r["grad_preserves_psd"] = worst >= -1e-9;
  r["reference_atoms"] = in.p1.size();
  doc["result"] = r;
  emit(p, doc, "json");
}

void psi_eval_cmd(const Params& p) {
  const auto in = load_model(p);
  const auto q = load_path(p);
  auto cfg = base_config(p, in, q);
  cfg["method"] = p.method;
  Json r;
  if (p.method == "mc") {
    cfg["n_max"] = p.n_max;
    cfg["samples"] = p.samples;
    const auto res = psi_mc(in.p1, q, p.n_max, p.samples, p.seed, p.threads);
    r["value"] = res.value;
    r["stderr"] = res.error_estimate;
    r["kind"] = "mc";
  } else {
    require(p.method == "quad", ErrorCode::InvalidArgument, "--method must be quad or mc");
    cfg["nodes"] = p.nodes;
    const auto res = psi_eval(in.p1, q, quad_spec(p), std::nullopt, p.threads);
    r["value"] = res.value;
    r["stderr"] = res.error_estimate;
    r["kind"] = res.method == PsiMethod::Quadrature ? "quadrature" : "mc";
  }
  auto doc = document("psi eval", cfg);
  doc["result"] = r;
  emit(p, doc, "json");
}

void psi_grad_cmd(const Params& p) {
  const auto in = load_model(p);
  const auto q = load_path(p);
  auto cfg = base_config(p, in, q);
  cfg["nodes"] = p.nodes;
  cfg["eps"] = p.eps;
  cfg["grad_method"] = p.grad_method;
  require(p.grad_method == "gibbs" || p.grad_method == "fd", ErrorCode::InvalidArgument,
          "--grad-method must be gibbs or fd");
  const auto g = psi_grad(in.p1, q, quad_spec(p), p.eps,
                          p.grad_method == "fd" ? GradMethod::FiniteDifference : GradMethod::Gibbs, std::nullopt,
                          p.threads);
  auto doc = document("psi grad", cfg);
  doc["result"] = {{"p", io::to_json(g.p)},
                   {"kind", g.method == PsiMethod::Quadrature ? "quadrature" : "mc"},
                   {"stderr", g.error_estimate}};
  emit(p, doc, "json");
}

SolverOptions solver_options(const Params& p) {
  SolverOptions o;
  o.damping = p.damping;
  o.tol = p.tol;
  o.max_iters = p.max_iters;
  return o;
}

Json solver_config(const Params& p, Json cfg) {
  cfg["t_hat"] = p.t_hat;
  cfg["tol"] = p.tol;
  cfg["damping"] = p.damping;
  cfg["max_iters"] = p.max_iters;
  cfg["nodes"] = p.nodes;
  return cfg;
}

void crit_solve(const Params& p) {
  const auto in = load_model(p);
  const auto q = load_path(p);
  auto cfg = solver_config(p, base_config(p, in, q));
  cfg["t"] = p.t;
  const auto cp = solve_critical(in.model, in.p1, p.t, p.t_hat, q, solver_options(p), quad_spec(p), p.threads);
  auto doc = document("crit solve", cfg);
  doc["result"] = critical_json(cp);
  if (!cp.converged) throw NonConverged{doc};
  emit(p, doc, "json");
}

void crit_sweep(const Params& p) {
  const auto in = load_model(p);
  const auto q = load_path(p);
  std::vector<double> grid = p.t_grid;
  if (grid.empty()) {
    require(p.steps >= 1, ErrorCode::InvalidArgument, "--steps must be >= 1");
    for (int i = 0; i < p.steps; ++i)
      grid.push_back(p.steps == 1 ? p.t_min : p.t_min + (p.t_max - p.t_min) * i / (p.steps - 1));
  }
  auto cfg = solver_config(p, base_config(p, in, q));
  cfg["t_grid"] = grid;
  const auto res = continuation(in.model, in.p1, grid, p.t_hat, q, solver_options(p), quad_spec(p), p.threads);
  auto doc = document("crit sweep", cfg);
  doc["rows"] = Json::array();
  for (std::size_t i = 0; i < res.points.size(); ++i) {
    const auto& cp = res.points[i];
    const bool flagged = std::find(res.flagged.begin(), res.flagged.end(), i) != res.flagged.end();
    doc["rows"].push_back(Json{{"t", cp.t},
                               {"converged", cp.converged},
                               {"iterations", cp.iterations},
                               {"residual_l2", cp.residual_l2},
                               {"j_value", cp.j_value},
                               {"kind", "deterministic"},
                               {"jump", res.jumps[i]},
                               {"flagged", flagged},
                               {"p", io::to_json(cp.p)}});
  }
  emit(p, doc, "csv");
}

VariationalOptions variational_options(const Params& p) {
  VariationalOptions o;
  o.partition = uniform_partition(p.blocks);
  o.starts = p.starts;
  o.max_iters = p.max_iters;
  o.seed = p.seed;
  o.tol = p.tol;
  return o;
}

Json variational_config(const Params& p, Json cfg) {
  cfg["t"] = p.t;
  cfg["K"] = p.blocks;
  cfg["starts"] = p.starts;
  cfg["max_iters"] = p.max_iters;
  cfg["tol"] = p.tol;
  cfg["nodes"] = p.nodes;
  return cfg;
}

void parisi_sup_cmd(const Params& p) {
  const auto in = load_model(p);
  const auto q = load_path(p);
  const auto r = parisi_sup(in.model, in.p1, p.t, q, variational_options(p), quad_spec(p), p.threads);
  auto doc = document("parisi sup", variational_config(p, base_config(p, in, q)));
  doc["result"] = variational_json(r);
  emit(p, doc, "json");
}

void parisi_hopflax_cmd(const Params& p) {
  const auto in = load_model(p);
  const auto q = load_path(p);
  XiStarOptions star;
  star.seed = p.seed;
  const auto r = hopf_lax_value(in.model, in.p1, p.t, q, variational_options(p), quad_spec(p), p.threads, star);
  auto doc = document("parisi hopflax", variational_config(p, base_config(p, in, q)));
  doc["result"] = variational_json(r);
  emit(p, doc, "json");
}

void parisi_std_cmd(const Params& p) {
  const auto in = load_model(p);
  StdOptions o;
  o.inner = variational_options(p);
  o.grid = p.grid;
  o.star.seed = p.seed;
  auto cfg = base_config(p, in, std::nullopt);
  cfg["K"] = p.blocks;
  cfg["starts"] = p.starts;
  cfg["max_iters"] = p.max_iters;
  cfg["tol"] = p.tol;
  cfg["grid"] = p.grid;
  cfg["nodes"] = p.nodes;
  const auto r = parisi_std(in.model, in.p1, o, quad_spec(p), p.threads);
  auto doc = document("parisi std", cfg);
  doc["result"] = {{"value", r.value},
                   {"kind", "deterministic"},
                   {"y", io::to_json(r.y)},
                   {"annealed_upper_bound", r.annealed_upper_bound},
                   {"evaluations", r.evaluations},
                   {"inner", variational_json(r.inner)},
                   {"warnings", r.warnings}};
  emit(p, doc, "json");
}

void cascade_diag(const Params& p) {
  Json cfg;
  cfg["zetas"] = p.zetas;
  cfg["n_max"] = p.n_max;
  cfg["draws"] = p.draws;
  cfg["gg_draws"] = p.gg_draws;
  cfg["gg_n"] = p.gg_n;
  cfg["seed"] = p.seed;
  const auto law = overlap_level_law_averaged(p.zetas, p.n_max, p.draws, p.seed, p.threads);
  const auto target = cascade_level_targets(p.zetas);
  const auto chi = chi_square_test(law.counts, target, 0.99);
  std::vector<double> level_value{0.0};
  for (double z : p.zetas) level_value.push_back(z);
  // f = 1{R^{1,2} = level value k}, one per level.
  std::vector<GgResult> gg;
  for (double v : level_value) {
    const OverlapFunction f = [v](const Mat& r) { return r(0, 1) == v ? 1.0 : 0.0; };
    gg.push_back(gg_check(p.zetas, p.n_max, f, p.gg_n, p.gg_draws, p.seed, p.threads));
  }
  auto doc = document("cascade diag", cfg);
  doc["rows"] = Json::array();
  for (std::size_t k = 0; k < target.size(); ++k) {
    doc["rows"].push_back(Json{{"level", k},
                               {"frequency", law.frequency[k]},
                               {"stderr", law.std_error[k]},
                               {"target", target[k]},
                               {"kind", "mc"},
                               {"chi2_statistic", chi.statistic},
                               {"chi2_critical_99", chi.critical},
                               {"chi2_pass", chi.pass},
                               {"gg_residual", gg[k].residual},
                               {"gg_stderr", gg[k].std_error},
                               {"tail_ratio", gg[k].tail_ratio}});
  }
  emit(p, doc, "csv");
}

FiniteOptions finite_options(const Params& p) {
  FiniteOptions o;
  o.threads = p.threads;
  o.compensator = !p.no_compensator;
  return o;
}

Json finite_config(const Params& p, Json cfg) {
  cfg["t"] = p.t;
  cfg["t_hat"] = p.t_hat;
  cfg["N"] = p.n_spins;
  cfg["samples"] = p.samples;
  cfg["compensator"] = !p.no_compensator;
  return cfg;
}

void finite_fe(const Params& p) {
  const auto in = load_model(p);
  const auto q = load_path(p);
  auto cfg = finite_config(p, base_config(p, in, q));
  cfg["n_max"] = p.n_max_list;
  auto doc = document("finiteN fe", cfg);
  doc["rows"] = Json::array();
  for (std::size_t n_max : p.n_max_list) {
    const auto est = free_energy_mc(in.model, in.p1, p.n_spins, p.t, q, p.t_hat, p.samples, n_max, p.seed,
                                    finite_options(p));
    doc["rows"].push_back(Json{{"n_max", n_max},
                               {"estimate", est.mean},
                               {"stderr", est.std_error},
                               {"n", est.n_samples},
                               {"seed", est.seed},
                               {"kind", "mc"}});
  }
  emit(p, doc, "csv");
}

void finite_overlap(const Params& p) {
  const auto in = load_model(p);
  const auto q = load_path(p);
  auto cfg = finite_config(p, base_config(p, in, q));
  cfg["n_max"] = p.n_max;
  const auto law = gibbs_overlap_law(in.model, in.p1, p.n_spins, p.t, q, p.t_hat, p.samples, p.n_max, p.seed,
                                     finite_options(p));
  auto doc = document("finiteN overlap", cfg);
  Json levels = Json::array();
  for (std::size_t k = 0; k <= law.depth; ++k) {
    levels.push_back(Json{{"level", k},
                          {"frequency", law.level_frequency[k]},
                          {"stderr", law.level_std_error[k]},
                          {"conditional_mean", io::to_json(law.conditional_mean[k])},
                          {"conditional_stderr", io::to_json(law.conditional_std_error[k])},
                          {"kind", "mc"}});
  }
  Json joint = Json::array();
  for (const auto& atom : law.joint)
    joint.push_back(Json{{"level", atom.level}, {"overlap", io::to_json(atom.overlap)}, {"weight", atom.weight}});
  doc["rows"] = Json::array();
  for (std::size_t k = 0; k <= law.depth; ++k)
    for (int a = 0; a < in.model.dim(); ++a)
      for (int b = a; b < in.model.dim(); ++b)
        doc["rows"].push_back(Json{{"level", k},
                                   {"frequency", law.level_frequency[k]},
                                   {"frequency_stderr", law.level_std_error[k]},
                                   {"entry", std::to_string(a) + "-" + std::to_string(b)},
                                   {"conditional_mean", law.conditional_mean[k](a, b)},
                                   {"conditional_stderr", law.conditional_std_error[k](a, b)},
                                   {"kind", "mc"}});
  doc["result"] = {{"levels", levels},
                   {"joint_computed", law.joint_computed},
                   {"joint", joint},
                   {"max_overlap_norm", law.max_overlap_norm},
                   {"heuristic", law.heuristic},
                   {"samples", law.samples}};
  emit(p, doc, "json");
}

void finite_check(const Params& p) {
  const auto in = load_model(p);
  const auto q = load_path(p);
  auto cfg = finite_config(p, base_config(p, in, q));
  cfg["n_max"] = p.n_max;
  cfg["nodes"] = p.nodes;
  IdentityOptions o;
  o.n_max = p.n_max;
  o.finite = finite_options(p);
  o.quad = quad_spec(p);
  const auto rep = identity_checks(in.model, in.p1, p.n_spins, p.t, q, p.samples, p.seed, o);
  auto doc = document("finiteN check", cfg);
  doc["rows"] = Json::array();
  for (const auto& item : rep.items) {
    doc["rows"].push_back(Json{{"check", item.name},
                               {"pass", item.pass},
                               {"lhs", item.lhs},
                               {"rhs", item.rhs},
                               {"stderr", item.std_error},
                               {"margin", item.margin},
                               {"kind", "mc"},
                               {"detail", item.detail}});
  }
  doc["all_pass"] = rep.all_pass();
  emit(p, doc, "json");
}

// ---------------------------------------------------------------- parser

struct Leaf {
  CLI::App* app;
  std::function<void(const Params&)> run;
};

void add_common(CLI::App* c, Params& p) {
  c->add_option("--threads", p.threads, "Worker threads (0: HJPARISI_THREADS or 1)")->check(CLI::NonNegativeNumber);
  c->add_option("--seed", p.seed, "Random seed");
  c->add_option("--out", p.out, "Output file (default stdout)");
  c->add_option("--format", p.format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
}

void add_model(CLI::App* c, Params& p) { c->add_option("--model", p.model_file, "Model JSON file")->required(); }

void add_path(CLI::App* c, Params& p) {
  c->add_option("--path", p.path_file, "Path JSON file")->required();
  c->add_option("--refine", p.refine, "Split every block of the path into n equal parts")->check(CLI::PositiveNumber);
  c->add_option("--nodes", p.nodes, "Gauss-Hermite nodes per dimension")->check(CLI::PositiveNumber);
}

void add_solver(CLI::App* c, Params& p) {
  c->add_option("--that", p.t_hat, "Perturbation strength t_hat")->check(CLI::NonNegativeNumber);
  c->add_option("--tol", p.tol, "Residual tolerance");
  c->add_option("--damping", p.damping, "Fixed-point damping in (0, 1]");
  c->add_option("--max-iters", p.max_iters, "Iteration cap");
}

void add_variational(CLI::App* c, Params& p) {
  c->add_option("--t", p.t, "Time t")->check(CLI::NonNegativeNumber);
  c->add_option("--K", p.blocks, "Blocks of the uniform optimization partition");
  c->add_option("--starts", p.starts, "Multi-start count");
  c->add_option("--max-iters", p.max_iters, "Ascent iteration cap");
  c->add_option("--tol", p.tol, "First-order residual counted as converged");
}

void add_finite(CLI::App* c, Params& p) {
  c->add_option("--t", p.t, "Time t")->check(CLI::NonNegativeNumber);
  c->add_option("--that", p.t_hat, "Perturbation strength t_hat")->check(CLI::NonNegativeNumber);
  c->add_option("--N", p.n_spins, "Number of spins")->check(CLI::PositiveNumber);
  c->add_option("--samples", p.samples, "Disorder samples")->check(CLI::PositiveNumber);
  c->add_flag("--no-compensator", p.no_compensator, "Drop the -t N xi(ss^T/N) term");
}

int run(int argc, char** argv) {
  Params p;
  CLI::App app{"hjparisi: Hamilton-Jacobi and Parisi formulas for vector spin glasses"};
  app.require_subcommand(1);
  std::vector<Leaf> leaves;
  const auto leaf = [&](CLI::App* parent, const std::string& name, const std::string& help,
                        std::function<void(const Params&)> run_fn) {
    auto* c = parent->add_subcommand(name, help);
    add_common(c, p);
    leaves.push_back({c, std::move(run_fn)});
    return c;
  };

  auto* model = app.add_subcommand("model", "Model diagnostics")->require_subcommand(1);
  {
    auto* c = leaf(model, "check", "Convexity, gradient Lipschitz constant and t_c", model_check);
    add_model(c, p);
    c->add_option("--samples", p.probe_samples, "Probe samples")->check(CLI::PositiveNumber);
  }

  auto* psi = app.add_subcommand("psi", "One-body free energy")->require_subcommand(1);
  {
    auto* c = leaf(psi, "eval", "Evaluate psi(q)", psi_eval_cmd);
    add_model(c, p);
    add_path(c, p);
    c->add_option("--method", p.method, "quad or mc")->check(CLI::IsMember({"quad", "mc"}));
    c->add_option("--nmax", p.n_max, "Cascade truncation for mc")->check(CLI::Range(2, 1 << 20));
    c->add_option("--samples", p.samples, "Samples for mc")->check(CLI::PositiveNumber);
    auto* g = leaf(psi, "grad", "Derivative of psi on q's partition", psi_grad_cmd);
    add_model(g, p);
    add_path(g, p);
    g->add_option("--eps", p.eps, "Finite-difference step")->check(CLI::PositiveNumber);
    g->add_option("--grad-method", p.grad_method, "gibbs or fd")->check(CLI::IsMember({"gibbs", "fd"}));
  }

  auto* crit = app.add_subcommand("crit", "Critical points of the Hamilton-Jacobi functional")->require_subcommand(1);
  {
    auto* c = leaf(crit, "solve", "Damped fixed-point solve", crit_solve);
    add_model(c, p);
    add_path(c, p);
    add_solver(c, p);
    c->add_option("--t", p.t, "Time t")->check(CLI::NonNegativeNumber);
    auto* s = leaf(crit, "sweep", "Warm-started continuation in t", crit_sweep);
    add_model(s, p);
    add_path(s, p);
    add_solver(s, p);
    s->add_option("--t-grid", p.t_grid, "Explicit increasing t values")->delimiter(',');
    s->add_option("--t-min", p.t_min, "First t of a uniform grid");
    s->add_option("--t-max", p.t_max, "Last t of a uniform grid");
    s->add_option("--steps", p.steps, "Points of the uniform grid");
  }

  auto* parisi = app.add_subcommand("parisi", "Convex-case variational formulas")->require_subcommand(1);
  {
    auto* s = leaf(parisi, "sup", "sup over p of the Parisi functional", parisi_sup_cmd);
    add_model(s, p);
    add_path(s, p);
    add_variational(s, p);
    auto* h = leaf(parisi, "hopflax", "Hopf-Lax formula", parisi_hopflax_cmd);
    add_model(h, p);
    add_path(h, p);
    add_variational(h, p);
    auto* d = leaf(parisi, "std", "Free energy without the self-overlap correction", parisi_std_cmd);
    add_model(d, p);
    d->add_option("--K", p.blocks, "Blocks of the inner partition");
    d->add_option("--grid", p.grid, "Grid points per coordinate of y")->check(CLI::PositiveNumber);
    d->add_option("--nodes", p.nodes, "Gauss-Hermite nodes per dimension")->check(CLI::PositiveNumber);
    d->add_option("--max-iters", p.max_iters, "Inner ascent iteration cap");
    d->add_option("--starts", p.starts, "Inner multi-start count");
    d->add_option("--tol", p.tol, "Inner first-order tolerance");
  }

  auto* cascade = app.add_subcommand("cascade", "Cascade diagnostics")->require_subcommand(1);
  {
    auto* c = leaf(cascade, "diag", "Level law, chi-square and Ghirlanda-Guerra residuals", cascade_diag);
    c->add_option("--zetas", p.zetas, "Cascade parameters 0 < z1 < ... < zK < 1")->delimiter(',');
    c->add_option("--nmax", p.n_max, "Children per node")->check(CLI::Range(2, 1 << 20));
    c->add_option("--draws", p.draws, "Replica-pair draws")->check(CLI::PositiveNumber);
    c->add_option("--gg-draws", p.gg_draws, "Draws per Ghirlanda-Guerra check")->check(CLI::Range(2, 1 << 30));
    c->add_option("--gg-n", p.gg_n, "Replicas n in the Ghirlanda-Guerra statistic")->check(CLI::Range(2, 16));
  }

  auto* finite = app.add_subcommand("finiteN", "Finite-N exact enumeration")->require_subcommand(1);
  {
    auto* f = leaf(finite, "fe", "Free energy; repeat --nmax for a truncation sensitivity table", finite_fe);
    add_model(f, p);
    add_path(f, p);
    add_finite(f, p);
    f->add_option("--nmax", p.n_max_list, "Children per cascade node")->delimiter(',')->check(CLI::Range(2, 1 << 20));
    auto* o = leaf(finite, "overlap", "Gibbs overlap law", finite_overlap);
    add_model(o, p);
    add_path(o, p);
    add_finite(o, p);
    o->add_option("--nmax", p.n_max, "Children per cascade node")->check(CLI::Range(2, 1 << 20));
    auto* k = leaf(finite, "check", "Lipschitz, time-derivative, monotonicity and initial-condition checks",
                   finite_check);
    add_model(k, p);
    add_path(k, p);
    add_finite(k, p);
    k->add_option("--nmax", p.n_max, "Children per cascade node")->check(CLI::Range(2, 1 << 20));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kExitUsage;
  }
  if (p.threads == 0) p.threads = default_threads();

  for (const auto& l : leaves) {
    if (!l.app->parsed()) continue;
    try {
      l.run(p);
      return kExitOk;
    } catch (const NonConverged& nc) {
      emit(p, nc.doc, "json");
      std::cerr << "error: no convergence: " << nc.doc["result"].value("diagnostic", "") << "\n";
      return kExitNonConvergence;
    } catch (const Error& e) {
      std::cerr << "error: " << e.what() << "\n";
      return e.code() == ErrorCode::NonConvergence ? kExitNonConvergence : kExitValidation;
    }
  }
  std::cerr << app.help();
  return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
}
