#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "stochadj/cli.hpp"
#include "stochadj/csv.hpp"
#include "stochadj/error.hpp"
#include "stochadj/estimator.hpp"
#include "stochadj/optimize.hpp"
#include "stochadj/oracle.hpp"
#include "stochadj/rng.hpp"

namespace stochadj::cli {

namespace {

struct Common {
  std::uint64_t seed;
  int threads;
  std::filesystem::path output;
};

// Reads the fields every command shares and resolves seed/threads against
// the command line.
Common read_common(Section& root, const Context& ctx, const std::string& default_output) {
  Common c;
  const std::uint64_t seed = root.u64("seed", 0);
  c.seed = ctx.seed ? *ctx.seed : seed;
  const int threads = root.integer("threads", 1);
  c.threads = ctx.threads ? *ctx.threads : threads;
  if (c.threads < 1) throw ValidationError("config.threads: must be at least 1");
  const std::string out = root.string("output", default_output);
  if (out.empty()) throw ValidationError("config.output: must not be empty");
  std::filesystem::create_directories(ctx.paths.out_dir);
  c.output = ctx.paths.out_dir / out;
  return c;
}

std::ofstream open_output(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ValidationError("output: cannot write '" + p.string() + "'");
  return out;
}

std::filesystem::path sibling(const std::filesystem::path& p, const std::string& suffix) {
  return p.parent_path() / (p.stem().string() + suffix + p.extension().string());
}

std::ostream& log(const Context& ctx) {
  static std::ofstream null_stream;
  return ctx.log ? *ctx.log : null_stream;
}

std::string num(double v) { return format_number(v); }

std::string coordinate(const Problem& p, int j) {
  return p.theta0.slices().empty() ? "theta[" + std::to_string(j) + "]" : p.theta0.coordinate_name(j);
}

Eigen::VectorXd theta_or_default(Section& s, const Problem& p) {
  const Eigen::VectorXd theta = s.vector("theta", p.theta0.values());
  if (theta.size() != p.theta0.size()) {
    throw ValidationError(s.path() + ".theta: expected " + std::to_string(p.theta0.size()) + " entries");
  }
  return theta;
}

// Max |kappa=0 - bootstrap| and |kappa=1 - discounted| over random cases.
std::pair<double, double> gae_endpoint_gaps(int trials, std::uint64_t seed) {
  double gap0 = 0.0, gap1 = 0.0;
  for (int t = 0; t < trials; ++t) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
    const int n = 1 + static_cast<int>(rng.uniform() * 30);
    std::vector<double> losses(n + 1, 0.0), values(n + 1, 0.0);
    for (int i = 1; i <= n; ++i) {
      losses[i] = 3.0 * rng.normal();
      values[i] = 3.0 * rng.normal();
    }
    const double gamma = rng.uniform();
    auto returns = [&](ReturnMode mode, double kappa) {
      return compute_returns(losses, values, {gamma, kappa, mode});
    };
    const auto g0 = returns(ReturnMode::kGae, 0.0), boot = returns(ReturnMode::kBootstrap, 0.0);
    const auto g1 = returns(ReturnMode::kGae, 1.0), disc = returns(ReturnMode::kDiscounted, 1.0);
    for (int i = 1; i <= n; ++i) {
      gap0 = std::max(gap0, std::abs(g0[i] - boot[i]));
      gap1 = std::max(gap1, std::abs(g1[i] - disc[i]));
    }
  }
  return {gap0, gap1};
}

BaselineState sweep_state(const std::string& kind, const EnumerationReport& report, const ConditioningKey& keys,
                          int m) {
  if (kind == "none") return BaselineState::none(m);
  for (ExactBaseline k : {ExactBaseline::kValue, ExactBaseline::kOptimal, ExactBaseline::kOptimalPerParam,
                          ExactBaseline::kQFunction}) {
    if (kind == exact_baseline_name(k)) return exact_baseline(report, keys, k);
  }
  throw ValidationError("config.sweep.kinds: unknown baseline '" + kind +
                        "' (none, value, optimal, optimal_per_param, q_function)");
}

}  // namespace

int grad_check(const Json& config, const Context& ctx) {
  Section root(config, "config");
  const Common common = read_common(root, ctx, "grad_check.csv");
  Section gc = root.section("grad_check");
  const std::vector<std::string> checks = gc.strings("checks");
  if (checks.empty()) throw ValidationError("config.grad_check.checks: empty");
  const bool needs_problem = std::any_of(checks.begin(), checks.end(), [](const std::string& c) { return c != "gae_endpoints"; });
  std::optional<BuiltProblem> built;
  if (needs_problem || root.has("problem")) built = build_problem(root.section("problem"), ctx.paths);

  const Eigen::VectorXd theta = built ? theta_or_default(gc, built->problem) : Eigen::VectorXd();
  const int samples = gc.integer("samples", 100000);
  const double h = gc.number("h", 0.01);
  const std::string reader_name = gc.string("reader", "total");
  const double enum_tol = gc.number("enumeration_tolerance", 1e-12);
  const double crn_h = gc.number("crn_h", 1e-4);
  const int crn_samples = gc.integer("crn_samples", 1000);
  const double crn_tol = gc.number("crn_tolerance", 1e-4);
  const int points = gc.integer("points", 100);
  const double partials_tol = gc.number("partials_tolerance", 1e-5);
  const int gae_trials = gc.integer("gae_trials", 100);
  const double gae_tol = gc.number("gae_tolerance", 1e-12);
  gc.finish();
  root.finish();

  GradientReader reader;
  if (reader_name == "pathwise_only") {
    reader = [](const GradEstimate& e) { return e.pathwise; };
  } else if (reader_name != "total") {
    throw ValidationError("config.grad_check.reader: expected total or pathwise_only");
  }

  std::ofstream file = open_output(common.output);
  CsvWriter csv(file, {"check", "coordinate", "estimate", "reference", "gap", "z", "passed"});
  bool all_passed = true;
  auto row = [&](const std::string& check, const std::string& coord, double est, double ref, double gap,
                 std::optional<double> z, bool passed) {
    csv.row({check, coord, std::isnan(est) ? "" : num(est), std::isnan(ref) ? "" : num(ref), num(gap),
             z ? num(*z) : "", passed ? "true" : "false"});
    all_passed = all_passed && passed;
  };
  const double nan = std::numeric_limits<double>::quiet_NaN();

  for (const std::string& check : checks) {
    bool passed = true;
    if (check == "enumeration") {
      const Problem& p = built->problem;
      if (!p.enumerable) throw ValidationError("config.grad_check.checks: problem is not enumerable");
      if (!p.exact_gradient) throw ValidationError("config.grad_check.checks: problem has no closed-form gradient");
      const EnumerationReport rep = enumerate(*p.model, p.loss, theta, p.x0);
      const Eigen::VectorXd ref = p.exact_gradient(theta);
      if (p.exact_objective) {
        const double gap = std::abs(rep.expected_objective - p.exact_objective(theta));
        row(check, "objective", rep.expected_objective, p.exact_objective(theta), gap, {}, gap <= enum_tol);
        passed = passed && gap <= enum_tol;
      }
      for (int j = 0; j < ref.size(); ++j) {
        const double gap = std::abs(rep.expected_gradient[j] - ref[j]);
        row(check, coordinate(p, j), rep.expected_gradient[j], ref[j], gap, {}, gap <= enum_tol);
        passed = passed && gap <= enum_tol;
      }
    } else if (check == "unbiasedness") {
      const Problem& p = built->problem;
      const UnbiasednessReport rep = statistical_unbiasedness_test(*p.model, p.loss, theta, p.x0, samples, h,
                                                                   common.seed, common.threads, reader);
      for (int j = 0; j < rep.z.size(); ++j) {
        row(check, coordinate(p, j), rep.mean_gradient[j], rep.fd_gradient[j],
            std::abs(rep.mean_gradient[j] - rep.fd_gradient[j]), rep.z[j], std::abs(rep.z[j]) < kZGate);
      }
      passed = rep.passed;
    } else if (check == "crn_fd") {
      const Problem& p = built->problem;
      const CrnReport rep = crn_fd_check(*p.model, p.loss, theta, p.x0, crn_h, crn_samples, common.seed, common.threads);
      for (int j = 0; j < rep.fd_gradient.size(); ++j) {
        row(check, coordinate(p, j), rep.mean_gradient[j], rep.fd_gradient[j], rep.coordinate_gap[j], {}, true);
      }
      passed = rep.relative_gap <= crn_tol;
      row(check, "relative_norm", nan, nan, rep.relative_gap, {}, passed);
    } else if (check == "partials") {
      const Problem& p = built->problem;
      const PartialsReport rep = check_step_partials(*p.model, p.loss, theta, p.x0, points, common.seed, p.project);
      passed = rep.max_gap <= partials_tol && rep.points > 0;
      row(check, rep.worst, nan, nan, rep.max_gap, {}, passed);
    } else if (check == "gae_endpoints") {
      const auto [g0, g1] = gae_endpoint_gaps(gae_trials, common.seed);
      row(check, "kappa0_vs_bootstrap", nan, nan, g0, {}, g0 <= gae_tol);
      row(check, "kappa1_vs_discounted", nan, nan, g1, {}, g1 <= gae_tol);
      passed = g0 <= gae_tol && g1 <= gae_tol;
    } else {
      throw ValidationError("config.grad_check.checks: unknown check '" + check +
                            "' (enumeration, unbiasedness, crn_fd, partials, gae_endpoints)");
    }
    log(ctx) << check << ": " << (passed ? "PASS" : "FAIL") << "\n";
  }
  return all_passed ? kExitOk : kExitCheckFailed;
}

int variance_sweep(const Json& config, const Context& ctx) {
  Section root(config, "config");
  const Common common = read_common(root, ctx, "variance_sweep.csv");
  const BuiltProblem built = build_problem(root.section("problem"), ctx.paths);
  const Problem& p = built.problem;
  Section sw = root.section("sweep");
  const Eigen::VectorXd base = theta_or_default(sw, p);
  const int coord = sw.integer("coordinate", p.theta0.size() - 1);
  if (coord < 0 || coord >= p.theta0.size()) throw ValidationError("config.sweep.coordinate: out of range");
  const Eigen::VectorXd values = sw.vector("values");
  const std::vector<std::string> kinds =
      sw.strings("kinds", std::vector<std::string>{"none", "value", "q_function", "optimal"});
  const std::string key_name = sw.string("keys", "problem");
  const int mc_samples = sw.integer("monte_carlo_samples", 0);
  sw.finish();
  root.finish();

  if (!p.enumerable) throw ValidationError("config.problem: variance-sweep needs an enumerable problem");
  if (mc_samples < 0) throw ValidationError("config.sweep.monte_carlo_samples: must be non-negative");
  ConditioningKey keys = constant_key();
  if (key_name == "problem") {
    if (!p.keys) throw ValidationError("config.sweep.keys: problem has no key");
    keys = *p.keys;
  } else if (key_name != "constant") {
    throw ValidationError("config.sweep.keys: expected problem or constant");
  }
  const int m = p.theta0.size();

  std::ofstream file = open_output(common.output);
  CsvWriter csv(file, {"theta_value", "baseline_kind", "variance"});
  std::optional<std::ofstream> mc_file;
  std::optional<CsvWriter> mc;
  if (mc_samples > 0) {
    mc_file.emplace(open_output(sibling(common.output, "_monte_carlo")));
    mc.emplace(*mc_file, std::vector<std::string>{"theta_value", "baseline_kind", "variance", "standard_error",
                                                  "exact_variance", "z"});
  }
  for (int v = 0; v < values.size(); ++v) {
    Eigen::VectorXd theta = base;
    theta[coord] = values[v];
    const EnumerationReport report = enumerate(*p.model, p.loss, theta, p.x0);
    for (const std::string& kind : kinds) {
      const BaselineState state = sweep_state(kind, report, keys, m);
      const double var = with_baseline(report, state, keys).variance;
      csv.row({num(values[v]), kind, num(var)});
    }
    if (mc) {
      const BatchEstimate b = estimate_gradient(*p.model, p.loss, theta, p.x0, mc_samples,
                                                derive_seed(common.seed, static_cast<std::uint64_t>(v)), common.threads);
      std::vector<Eigen::VectorXd> g;
      g.reserve(b.samples.size());
      for (const GradEstimate& e : b.samples) g.push_back(e.total());
      const VarianceEstimate ve = estimator_variance(g);
      mc->row({num(values[v]), "none", num(ve.variance), num(ve.standard_error), num(report.variance),
               num((ve.variance - report.variance) / ve.standard_error)});
    }
  }
  return kExitOk;
}

int train(const Json& config, const Context& ctx) {
  Section root(config, "config");
  const Common common = read_common(root, ctx, "train.csv");
  const BuiltProblem built = build_problem(root.section("problem"), ctx.paths);
  const Problem& p = built.problem;
  SgdConfig sc;
  Section s = root.section("sgd");
  sc.alpha_theta = s.number("alpha_theta", sc.alpha_theta);
  sc.alpha_phi = s.number("alpha_phi", sc.alpha_phi);
  sc.iterations = s.integer("iterations", sc.iterations);
  sc.batch = s.integer("batch", sc.batch);
  sc.replications = s.integer("replications", sc.replications);
  sc.baseline = parse_baseline_kind(s.string("baseline", "none"));
  const std::string rule = s.string("baseline_update", "sgd");
  if (rule == "running_mean") sc.baseline_rule = UpdateRule::kRunningMean;
  else if (rule != "sgd") throw ValidationError("config.sgd.baseline_update: expected sgd or running_mean");
  sc.track_exact_variance = s.boolean("track_exact_variance", false);
  sc.freeze_theta = s.boolean("freeze_theta", false);
  sc.theta0 = s.vector("theta0", Eigen::VectorXd());
  const int record_every = s.integer("record_every", 1);
  s.finish();
  if (auto r = root.optional_section("returns")) {
    sc.returns.mode = parse_return_mode(r->string("mode", "raw"));
    sc.returns.gamma = r->number("gamma", 1.0);
    sc.returns.kappa = r->number("kappa", 1.0);
    r->finish();
  }
  root.finish();
  if (record_every < 1) throw ValidationError("config.sgd.record_every: must be at least 1");
  if (sc.theta0.size() && sc.theta0.size() != p.theta0.size()) {
    throw ValidationError("config.sgd.theta0: expected " + std::to_string(p.theta0.size()) + " entries");
  }
  sc.seed = common.seed;

  const std::vector<RunHistory> runs = sgd_replications(p, sc, common.threads);

  std::vector<std::string> header = {"iter", "rep", "objective", p.metric_name.empty() ? "metric" : p.metric_name,
                                     "variance"};
  for (int j = 0; j < p.theta0.size(); ++j) header.push_back(coordinate(p, j));
  std::ofstream file = open_output(common.output);
  CsvWriter csv(file, header);
  for (size_t r = 0; r < runs.size(); ++r) {
    const RunHistory& h = runs[r];
    for (int k = 0; k < h.iterations(); ++k) {
      if (k % record_every != 0 && k != h.iterations() - 1) continue;
      std::vector<std::string> cells = {std::to_string(k), std::to_string(r), num(h.objective[k]), num(h.metric[k]),
                                        std::isnan(h.exact_variance[k]) ? "" : num(h.exact_variance[k])};
      for (int j = 0; j < h.theta[k].size(); ++j) cells.push_back(num(h.theta[k][j]));
      csv.row(cells);
    }
  }

  std::ofstream bfile = open_output(sibling(common.output, "_baselines"));
  CsvWriter bcsv(bfile, {"rep", "kind", "key", "component", "value"});
  const std::string kind_name = baseline_kind_name(sc.baseline);
  for (size_t r = 0; r < runs.size(); ++r) {
    const BaselineState& b = *runs[r].final_baseline;
    if (b.kind() == BaselineKind::kNone) continue;
    if (b.tabular()) {
      const bool per = b.kind() == BaselineKind::kCOptimalPerParam;
      for (int k = 0; k < b.key_count(); ++k) {
        const BetaEval e = b.beta_at_key(k);
        for (int c = 0; c < (per ? e.beta.size() : 1); ++c) {
          bcsv.row({std::to_string(r), kind_name, std::to_string(k), std::to_string(c), num(e.beta[c])});
        }
      }
    } else {
      const Eigen::VectorXd phi = b.parameters();
      for (int j = 0; j < phi.size(); ++j) {
        bcsv.row({std::to_string(r), kind_name, "weights", std::to_string(j), num(phi[j])});
      }
    }
  }

  double mean_metric = 0.0;
  for (const RunHistory& h : runs) mean_metric += h.metric.back();
  mean_metric /= static_cast<double>(runs.size());
  log(ctx) << "final mean " << (p.metric_name.empty() ? "metric" : p.metric_name) << ": " << num(mean_metric) << "\n";
  for (size_t r = 0; r < runs.size(); ++r) {
    if (runs[r].aborted) {
      log(ctx) << "replication " << r << " aborted: " << runs[r].abort_reason << "\n";
      return kExitNumerical;
    }
  }
  return kExitOk;
}

int calibrate_ovm(const Json& config, const Context& ctx) {
  Section root(config, "config");
  const Common common = read_common(root, ctx, "calibrate_ovm.csv");
  Section ps = root.section("problem");
  if (ps.string("id") != "ovm") throw ValidationError("config.problem.id: calibrate-ovm needs the ovm problem");
  const OvmSettings settings = read_ovm_settings(ps, ctx.paths);
  ps.finish();
  Section cs = root.section("calibrate");
  const double perturbation = cs.number("perturbation", 0.1);
  const int max_iterations = cs.integer("max_iterations", 2000);
  const double tolerance = cs.number("tolerance", 1e-8);
  const double fd_h = cs.number("fd_h", 1e-6);
  cs.finish();
  root.finish();

  const BuiltProblem built = build_ovm_problem(settings, settings.vehicles, ctx.paths);
  const Problem& p = built.problem;
  Eigen::VectorXd start;
  if (settings.theta0.size()) {
    start = p.theta0.values();
  } else if (built.ovm_true.size()) {
    start = built.ovm_true * (1.0 + perturbation);
  } else {
    throw ValidationError("config.problem.theta0: required when the data comes from a file");
  }
  start = p.projected(start);

  const Eigen::VectorXd adjoint = deterministic_adjoint(*p.model, p.loss, start, p.x0);
  auto objective = [&](const Eigen::VectorXd& th) { return simulate_objective(*p.model, p.loss, th, p.x0, 0); };
  const Eigen::VectorXd fd = finite_difference_gradient(objective, start, fd_h);
  const double fd_error = (adjoint - fd).norm() / std::max(fd.norm(), 1e-300);

  GdConfig gd;
  gd.lower = built.ovm_lower;
  gd.upper = built.ovm_upper;
  gd.max_iterations = max_iterations;
  gd.tolerance = tolerance;
  const GdResult res = gd_calibrate(p, start, gd);

  const OvmData& data = *built.ovm_data;
  const double start_rmse = ovm_rmse(data, objective(start));
  const double rmse = ovm_rmse(data, res.loss);
  const double scale = data.position_scale();

  std::ofstream file = open_output(common.output);
  CsvWriter csv(file, {"parameter", "true", "start", "recovered"});
  for (int j = 0; j < start.size(); ++j) {
    csv.row({coordinate(p, j), built.ovm_true.size() ? num(built.ovm_true[j]) : "", num(start[j]), num(res.theta[j])});
  }
  std::ofstream sfile = open_output(sibling(common.output, "_summary"));
  CsvWriter summary(sfile, {"metric", "value"});
  summary.row({"start_rmse", num(start_rmse)});
  summary.row({"rmse", num(rmse)});
  summary.row({"position_scale", num(scale)});
  summary.row({"relative_rmse", num(rmse / scale)});
  summary.row({"final_loss", num(res.loss)});
  summary.row({"iterations", std::to_string(res.iterations)});
  summary.row({"converged", res.converged ? "true" : "false"});
  summary.row({"line_search_failed", res.line_search_failed ? "true" : "false"});
  summary.row({"adjoint_fd_relative_error", num(fd_error)});
  log(ctx) << "rmse " << num(rmse) << " (relative " << num(rmse / scale) << "), adjoint vs fd " << num(fd_error) << "\n";
  return kExitOk;
}

int cost_scaling(const Json& config, const Context& ctx) {
  Section root(config, "config");
  const Common common = read_common(root, ctx, "cost_scaling.csv");
  Section ps = root.section("problem");
  if (ps.string("id") != "ovm") throw ValidationError("config.problem.id: cost-scaling needs the ovm problem");
  OvmSettings settings = read_ovm_settings(ps, ctx.paths);
  ps.finish();
  Section cs = root.section("cost");
  const std::vector<int> vehicles = cs.integers("vehicles", std::vector<int>{1, 10});
  const int repeats = cs.integer("repeats", 7);
  cs.finish();
  root.finish();
  if (settings.data_csv) throw ValidationError("config.problem.data_csv: cost-scaling synthesizes its own data");
  settings.export_csv.reset();

  std::ofstream file = open_output(common.output);
  CsvWriter csv(file, {"m", "t_objective", "t_adjoint", "t_fd"});
  for (int v : vehicles) {
    if (v < 1) throw ValidationError("config.cost.vehicles: entries must be at least 1");
    OvmSettings s = settings;
    if (s.true_params.size() != kOvmParams) throw ValidationError("config.problem.true_params: give one 5-entry block");
    s.theta0 = s.true_params * 1.05;
    const BuiltProblem b = build_ovm_problem(s, v, ctx.paths);
    const CostSample c = measure_gradient_cost(b.problem, b.problem.theta0.values(), repeats);
    csv.row({std::to_string(c.param_dim), num(c.t_objective), num(c.t_adjoint), num(c.t_fd)});
    log(ctx) << "m=" << c.param_dim << " adjoint/objective " << num(c.t_adjoint / c.t_objective)
             << " fd/objective " << num(c.t_fd / c.t_objective) << "\n";
  }
  return kExitOk;
}

}  // namespace stochadj::cli
