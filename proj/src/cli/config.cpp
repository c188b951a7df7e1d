#include "stochadj/cli/config.hpp"

#include <fstream>

#include "stochadj/error.hpp"
#include "stochadj/problems/bandit.hpp"
#include "stochadj/problems/coin_flip.hpp"
#include "stochadj/problems/piecewise_ode.hpp"
#include "stochadj/problems/sde.hpp"

namespace stochadj::cli {

Section::Section(const Json& object, std::string path) : object_(&object), path_(std::move(path)) {
  if (!object.is_object()) throw ValidationError(path_ + ": expected an object");
}

bool Section::has(const std::string& key) const {
  return object_->contains(key) && !(*object_)[key].is_null();
}

const Json& Section::get(const std::string& key) {
  used_.insert(key);
  return (*object_)[key];
}

double Section::number(const std::string& key, std::optional<double> fallback) {
  if (!has(key)) {
    used_.insert(key);
    if (fallback) return *fallback;
    throw ValidationError(field(key) + ": required");
  }
  const Json& v = get(key);
  if (!v.is_number()) throw ValidationError(field(key) + ": must be a number");
  return v.get<double>();
}

int Section::integer(const std::string& key, std::optional<int> fallback) {
  if (!has(key)) {
    used_.insert(key);
    if (fallback) return *fallback;
    throw ValidationError(field(key) + ": required");
  }
  const Json& v = get(key);
  if (!v.is_number_integer()) throw ValidationError(field(key) + ": must be an integer");
  return v.get<int>();
}

std::uint64_t Section::u64(const std::string& key, std::optional<std::uint64_t> fallback) {
  if (!has(key)) {
    used_.insert(key);
    if (fallback) return *fallback;
    throw ValidationError(field(key) + ": required");
  }
  const Json& v = get(key);
  if (!v.is_number_unsigned()) throw ValidationError(field(key) + ": must be a non-negative integer");
  return v.get<std::uint64_t>();
}

bool Section::boolean(const std::string& key, std::optional<bool> fallback) {
  if (!has(key)) {
    used_.insert(key);
    if (fallback) return *fallback;
    throw ValidationError(field(key) + ": required");
  }
  const Json& v = get(key);
  if (!v.is_boolean()) throw ValidationError(field(key) + ": must be true or false");
  return v.get<bool>();
}

std::string Section::string(const std::string& key, std::optional<std::string> fallback) {
  if (!has(key)) {
    used_.insert(key);
    if (fallback) return *fallback;
    throw ValidationError(field(key) + ": required");
  }
  const Json& v = get(key);
  if (!v.is_string()) throw ValidationError(field(key) + ": must be a string");
  return v.get<std::string>();
}

namespace {

Eigen::VectorXd to_vector(const Json& v, const std::string& where) {
  if (!v.is_array()) throw ValidationError(where + ": must be an array of numbers");
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) throw ValidationError(where + "[" + std::to_string(i) + "]: must be a number");
    out[static_cast<Eigen::Index>(i)] = v[i].get<double>();
  }
  return out;
}

}  // namespace

Eigen::VectorXd Section::vector(const std::string& key, std::optional<Eigen::VectorXd> fallback) {
  if (!has(key)) {
    used_.insert(key);
    if (fallback) return *fallback;
    throw ValidationError(field(key) + ": required");
  }
  return to_vector(get(key), field(key));
}

Eigen::MatrixXd Section::matrix(const std::string& key, std::optional<Eigen::MatrixXd> fallback) {
  if (!has(key)) {
    used_.insert(key);
    if (fallback) return *fallback;
    throw ValidationError(field(key) + ": required");
  }
  const Json& v = get(key);
  if (!v.is_array() || v.empty()) throw ValidationError(field(key) + ": must be a non-empty array of rows");
  Eigen::MatrixXd out;
  for (size_t r = 0; r < v.size(); ++r) {
    const Eigen::VectorXd row = to_vector(v[r], field(key) + "[" + std::to_string(r) + "]");
    if (r == 0) out.resize(static_cast<Eigen::Index>(v.size()), row.size());
    if (row.size() != out.cols()) throw ValidationError(field(key) + ": rows differ in length");
    out.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return out;
}

std::vector<std::string> Section::strings(const std::string& key, std::optional<std::vector<std::string>> fallback) {
  if (!has(key)) {
    used_.insert(key);
    if (fallback) return *fallback;
    throw ValidationError(field(key) + ": required");
  }
  const Json& v = get(key);
  if (!v.is_array()) throw ValidationError(field(key) + ": must be an array of strings");
  std::vector<std::string> out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_string()) throw ValidationError(field(key) + "[" + std::to_string(i) + "]: must be a string");
    out.push_back(v[i].get<std::string>());
  }
  return out;
}

std::vector<int> Section::integers(const std::string& key, std::optional<std::vector<int>> fallback) {
  if (!has(key)) {
    used_.insert(key);
    if (fallback) return *fallback;
    throw ValidationError(field(key) + ": required");
  }
  const Json& v = get(key);
  if (!v.is_array()) throw ValidationError(field(key) + ": must be an array of integers");
  std::vector<int> out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number_integer()) throw ValidationError(field(key) + "[" + std::to_string(i) + "]: must be an integer");
    out.push_back(v[i].get<int>());
  }
  return out;
}

Section Section::section(const std::string& key) {
  if (!has(key)) throw ValidationError(field(key) + ": required");
  return Section(get(key), field(key));
}

std::optional<Section> Section::optional_section(const std::string& key) {
  if (!has(key)) {
    used_.insert(key);
    return std::nullopt;
  }
  return Section(get(key), field(key));
}

void Section::finish() const {
  for (auto it = object_->begin(); it != object_->end(); ++it) {
    if (!used_.count(it.key())) throw ValidationError(field(it.key()) + ": unknown field");
  }
}

Json load_json(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ValidationError("config: cannot open '" + file.string() + "'");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ValidationError("config: invalid JSON in '" + file.string() + "': " + e.what());
  }
}

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

BuiltProblem coin_flip(Section& s) {
  CoinFlipConfig c;
  c.theta0 = s.vector("theta0", Eigen::VectorXd(c.theta0));
  if (c.theta0.size() != 2) throw ValidationError(s.path() + ".theta0: expected 2 logits");
  c.payoff_tails = s.number("payoff_tails", c.payoff_tails);
  c.payoff_heads = s.number("payoff_heads", c.payoff_heads);
  c.payoff_mixed = s.number("payoff_mixed", c.payoff_mixed);
  return {"coin_flip", build_coin_flip(c), {}, {}, {}, {}};
}

BuiltProblem bandit(Section& s) {
  BanditConfig c;
  c.theta0 = s.vector("theta0", c.theta0);
  c.rewards = s.vector("rewards", c.rewards);
  return {"bandit", build_bandit(c), {}, {}, {}, {}};
}

BuiltProblem piecewise(Section& s) {
  PiecewiseScenario sc = default_piecewise_scenario();
  const bool custom = s.has("lead_speeds") || s.has("initial_gap") || s.has("target_threshold") ||
                      s.has("target_slow_speed") || s.has("x0");
  if (custom) {
    std::vector<double> speeds;
    for (int i = 1; i <= sc.steps; ++i) speeds.push_back(sc.lead[i] - sc.lead[i - 1]);
    const Eigen::VectorXd v = s.vector("lead_speeds", Eigen::Map<Eigen::VectorXd>(speeds.data(), speeds.size()));
    if (v.size() < 1) throw ValidationError(s.path() + ".lead_speeds: need at least one step");
    sc.x0 = s.number("x0", sc.x0);
    const double gap = s.number("initial_gap", sc.lead[0] - sc.x0);
    const double threshold = s.number("target_threshold", 1.6);
    const double slow = s.number("target_slow_speed", 0.1);
    sc.steps = static_cast<int>(v.size());
    sc.lead.assign(1, sc.x0 + gap);
    for (int i = 0; i < v.size(); ++i) sc.lead.push_back(sc.lead.back() + v[i]);
    sc.target.assign(sc.steps + 1, 0.0);
    const std::vector<double> path = piecewise_deterministic_path(sc, threshold, slow);
    for (int i = 1; i <= sc.steps; ++i) sc.target[i] = path[i];
  }
  const Eigen::VectorXd t0 = s.vector("theta0", Eigen::VectorXd(sc.theta0));
  if (t0.size() != 3) throw ValidationError(s.path() + ".theta0: expected 3 entries");
  sc.theta0 = t0;
  sc.min_scale = s.number("min_scale", sc.min_scale);
  return {"piecewise_ode", build_piecewise_ode(sc), {}, {}, {}, {}};
}

BuiltProblem sde(Section& s) {
  const SdeVariant variant = parse_sde_variant(s.string("variant", "pathwise"));
  SdeConfig c = default_sde_config(variant);
  c.dim = s.integer("dim", c.dim);
  c.lag = s.integer("lag", c.lag);
  c.steps = s.integer("steps", c.steps);
  c.dt = s.number("dt", c.dt);
  c.jump_levels = s.integer("jump_levels", c.jump_levels);
  c.x0 = s.vector("x0", c.x0);
  c.target = s.vector("target", c.target);
  // drift matrices stacked vertically, lag 1 first
  if (s.has("drift")) {
    const Eigen::MatrixXd stacked = s.matrix("drift");
    if (stacked.cols() != c.dim || stacked.rows() != c.dim * c.lag) {
      throw ValidationError(s.path() + ".drift: expected lag*dim rows of dim entries (lag 1 first)");
    }
    c.drift.clear();
    for (int l = 0; l < c.lag; ++l) c.drift.push_back(stacked.middleRows(l * c.dim, c.dim));
  } else {
    if (c.lag != static_cast<int>(c.drift.size())) {
      const Eigen::MatrixXd first = c.drift.front();
      c.drift.assign(c.lag, Eigen::MatrixXd::Zero(first.rows(), first.cols()));
      c.drift.front() = first;
    }
  }
  c.offset = s.vector("offset", c.offset);
  c.diffusion = s.matrix("diffusion", c.diffusion);
  c.jump_size = s.matrix("jump_size", c.jump_size);
  c.jump_bias = s.matrix("jump_bias", c.jump_bias);
  c.jump_slope = s.matrix("jump_slope", c.jump_slope);
  return {std::string("sde"), build_sde(c), {}, {}, {}, {}};
}

Eigen::VectorXd per_vehicle_or_full(const Eigen::VectorXd& v, int vehicles, const std::string& what) {
  if (v.size() == kOvmParams) return tile_ovm(v, vehicles);
  if (v.size() == kOvmParams * vehicles) return v;
  throw ValidationError(what + ": expected 5 entries or 5 per vehicle");
}

}  // namespace

OvmSettings read_ovm_settings(Section& s, const Paths& paths) {
  OvmSettings o;
  o.true_params = s.vector("true_params", default_ovm_parameters());
  o.vehicles = s.integer("vehicles", 1);
  if (o.vehicles < 1) throw ValidationError(s.path() + ".vehicles: must be at least 1");
  o.horizon = s.integer("horizon", o.horizon);
  o.dt = s.number("dt", o.dt);
  o.lead_length = s.number("lead_length", o.lead_length);
  if (auto lp = s.optional_section("lead_profile")) {
    o.lead.cruise_speed = lp->number("cruise_speed", o.lead.cruise_speed);
    o.lead.pulse_speed = lp->number("pulse_speed", o.lead.pulse_speed);
    o.lead.pulse_start = lp->number("pulse_start", o.lead.pulse_start);
    o.lead.pulse_length = lp->number("pulse_length", o.lead.pulse_length);
    o.lead.jitter = lp->number("jitter", o.lead.jitter);
    lp->finish();
  }
  o.data_seed = s.u64("data_seed", o.data_seed);
  if (s.has("data_csv")) o.data_csv = resolve(paths.config_dir, s.string("data_csv"));
  else s.string("data_csv", "");
  if (s.has("export_csv")) o.export_csv = resolve(paths.out_dir, s.string("export_csv"));
  else s.string("export_csv", "");
  o.theta0 = s.vector("theta0", Eigen::VectorXd());
  o.lower = s.vector("lower", ovm_lower_bounds());
  o.upper = s.vector("upper", ovm_upper_bounds());
  if (o.data_csv && o.vehicles != 1) throw ValidationError(s.path() + ".data_csv: supports a single follower");
  return o;
}

BuiltProblem build_ovm_problem(const OvmSettings& o, int vehicles, const Paths&) {
  BuiltProblem b;
  b.id = "ovm";
  if (o.data_csv) {
    std::ifstream in(*o.data_csv);
    if (!in) throw ValidationError("problem.data_csv: cannot open '" + o.data_csv->string() + "'");
    b.ovm_data = read_ovm_csv(in, o.lead_length);
  } else {
    b.ovm_true = per_vehicle_or_full(o.true_params, vehicles, "problem.true_params");
    b.ovm_data = synthesize_ovm_data(b.ovm_true, o.lead, o.horizon, o.data_seed, o.dt, o.lead_length);
  }
  if (o.export_csv) {
    std::ofstream out(*o.export_csv, std::ios::binary);
    if (!out) throw ValidationError("problem.export_csv: cannot write '" + o.export_csv->string() + "'");
    write_ovm_csv(out, *b.ovm_data);
  }
  b.ovm_lower = per_vehicle_or_full(o.lower, vehicles, "problem.lower");
  b.ovm_upper = per_vehicle_or_full(o.upper, vehicles, "problem.upper");
  OvmProblemConfig pc;
  pc.data = *b.ovm_data;
  pc.theta0 = o.theta0.size() ? per_vehicle_or_full(o.theta0, vehicles, "problem.theta0")
              : b.ovm_true.size() ? b.ovm_true
                                  : tile_ovm(default_ovm_parameters(), vehicles);
  pc.lower = b.ovm_lower;
  pc.upper = b.ovm_upper;
  b.problem = build_ovm(pc);
  return b;
}

BuiltProblem build_problem(Section s, const Paths& paths) {
  const std::string id = s.string("id");
  BuiltProblem b;
  if (id == "coin_flip") {
    b = coin_flip(s);
  } else if (id == "bandit") {
    b = bandit(s);
  } else if (id == "piecewise_ode") {
    b = piecewise(s);
  } else if (id == "sde") {
    b = sde(s);
  } else if (id == "ovm") {
    const OvmSettings o = read_ovm_settings(s, paths);
    b = build_ovm_problem(o, o.vehicles, paths);
  } else {
    throw ValidationError(s.path() + ".id: unknown problem '" + id + "'");
  }
  s.finish();
  return b;
}

}  // namespace stochadj::cli
