#include <cstdlib>
#include <exception>
#include <filesystem>
#include <functional>
#include <map>

#include <CLI11.hpp>

#include "stochadj/cli.hpp"
#include "stochadj/error.hpp"

namespace stochadj::cli {

namespace {

std::optional<int> env_threads() {
  const char* v = std::getenv("STOCHADJ_THREADS");
  if (!v || !*v) return std::nullopt;
  try {
    size_t used = 0;
    const int n = std::stoi(v, &used);
    if (used != std::string(v).size() || n < 1) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw ValidationError(std::string("STOCHADJ_THREADS: expected a positive integer, got '") + v + "'");
  }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  using Command = std::function<int(const Json&, const Context&)>;
  const std::vector<std::pair<std::string, std::pair<std::string, Command>>> commands = {
      {"grad-check", {"Oracle comparisons with per-coordinate gaps", grad_check}},
      {"variance-sweep", {"Exact estimator variance over a parameter grid per baseline", variance_sweep}},
      {"train", {"SGD co-training of parameters and baselines", train}},
      {"calibrate-ovm", {"Recover car-following parameters from synthetic or CSV data", calibrate_ovm}},
      {"cost-scaling", {"Objective, adjoint and finite-difference timings versus parameter count", cost_scaling}},
  };

  CLI::App app{"Gradient estimation for sequential stochastic models", "stochadj"};
  app.require_subcommand(1);
  std::string config_flag, config_positional, out_dir = ".";
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  app.add_option("--config", config_flag, "Experiment config (JSON)");
  app.add_option("--seed", seed, "Base seed, overrides the config");
  app.add_option("--out", out_dir, "Output directory");
  app.add_option("--threads", threads, "Worker threads; STOCHADJ_THREADS is the fallback")->check(CLI::PositiveNumber);
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, info] : commands) {
    CLI::App* sub = app.add_subcommand(name, info.first);
    sub->fallthrough();
    sub->add_option("config", config_positional, "Experiment config (JSON)");
    subs[name] = sub;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (!config_flag.empty() && !config_positional.empty() && config_flag != config_positional) {
      throw ValidationError("--config: given twice with different paths");
    }
    const std::string config_path = config_flag.empty() ? config_positional : config_flag;
    if (config_path.empty()) throw ValidationError("--config: required");
    Context ctx;
    ctx.paths.config_dir = std::filesystem::path(config_path).parent_path();
    ctx.paths.out_dir = out_dir;
    ctx.seed = seed;
    ctx.threads = threads ? threads : env_threads();
    ctx.log = &out;
    const Json config = load_json(config_path);
    for (const auto& [name, info] : commands) {
      if (subs[name]->parsed()) return info.second(config, ctx);
    }
    return kExitValidation;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "failure: " << e.what() << "\n";
    return kExitNumerical;
  }
}

}  // namespace stochadj::cli
