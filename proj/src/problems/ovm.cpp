#include "stochadj/problems/ovm.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "stochadj/csv.hpp"
#include "stochadj/error.hpp"
#include "stochadj/rng.hpp"

namespace stochadj {

OvmPartials ovm_acceleration(const Eigen::Ref<const Eigen::VectorXd>& c, double headway, double speed) {
  const double t = std::tanh(c[1] * headway - c[2] - c[4]);
  const double sech2 = 1.0 - t * t;
  const double t3 = std::tanh(c[2]);
  const double v_eq = c[0] * (t + t3);
  OvmPartials p;
  p.accel = c[3] * (v_eq - speed);
  p.d_params[0] = c[3] * (t + t3);
  p.d_params[1] = c[3] * c[0] * sech2 * headway;
  p.d_params[2] = c[3] * c[0] * (1.0 - t3 * t3 - sech2);
  p.d_params[3] = v_eq - speed;
  p.d_params[4] = -c[3] * c[0] * sech2;
  p.d_headway = c[3] * c[0] * sech2 * c[1];
  p.d_speed = -c[3];
  return p;
}

double ovm_equilibrium_headway(const Eigen::Ref<const Eigen::VectorXd>& c, double speed) {
  const double t = speed / c[0] - std::tanh(c[2]);
  if (!(std::abs(t) < 1.0) || c[1] == 0.0) {
    throw ValidationError("ovm: no equilibrium headway for speed " + format_number(speed));
  }
  return (std::atanh(t) + c[2] + c[4]) / c[1];
}

double OvmData::position_scale() const {
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& path : follower_pos) {
    for (double p : path) {
      lo = std::min(lo, p);
      hi = std::max(hi, p);
    }
  }
  return hi - lo;
}

Eigen::VectorXd default_ovm_parameters() {
  Eigen::VectorXd c(kOvmParams);
  c << 16.8, 0.086, 1.545, 0.66, 0.775;
  return c;
}

Eigen::VectorXd ovm_lower_bounds() {
  Eigen::VectorXd c(kOvmParams);
  c << 5.0, 0.01, 0.1, 0.05, 0.0;
  return c;
}

Eigen::VectorXd ovm_upper_bounds() {
  Eigen::VectorXd c(kOvmParams);
  c << 40.0, 0.5, 5.0, 5.0, 5.0;
  return c;
}

Eigen::VectorXd tile_ovm(const Eigen::VectorXd& per_vehicle, int vehicles) {
  if (per_vehicle.size() != kOvmParams) throw ValidationError("ovm: expected 5 parameters per vehicle");
  return per_vehicle.replicate(vehicles, 1);
}

OvmModel::OvmModel(std::vector<double> lead_pos, int vehicles, double dt, double lead_length)
    : lead_pos_(std::move(lead_pos)), vehicles_(vehicles), dt_(dt), lead_length_(lead_length) {
  if (lead_pos_.size() < 2) throw ValidationError("ovm.lead_pos: need at least two samples");
  if (vehicles_ < 1) throw ValidationError("ovm.vehicles: must be at least 1");
  if (!(dt_ > 0.0)) throw ValidationError("ovm.dt: must be positive");
}

ModelShape OvmModel::shape() const {
  return {static_cast<int>(lead_pos_.size()) - 1, 1, 2 * vehicles_, kOvmParams * vehicles_, false, true};
}

StepDraw OvmModel::draw(const StepInput&, Rng&) const { return {}; }

double OvmModel::leader_pos(const StepInput& in, int k) const {
  return k == 0 ? lead_pos_[in.step - 1] : in.window.previous()[2 * (k - 1)];
}

Eigen::VectorXd OvmModel::step(const StepInput& in) const {
  const Eigen::VectorXd& prev = in.window.previous();
  Eigen::VectorXd next(prev.size());
  for (int k = 0; k < vehicles_; ++k) {
    const double pos = prev[2 * k], v = prev[2 * k + 1];
    const double s = leader_pos(in, k) - pos - lead_length_;
    const double a = ovm_acceleration(in.theta.segment(kOvmParams * k, kOvmParams), s, v).accel;
    next[2 * k] = pos + dt_ * v;
    next[2 * k + 1] = v + dt_ * a;
  }
  return next;
}

void OvmModel::step_vjp(const StepInput& in, const Eigen::VectorXd& lambda, Eigen::VectorXd& d_theta,
                        std::vector<Eigen::VectorXd>& d_lags) const {
  const Eigen::VectorXd& prev = in.window.previous();
  Eigen::VectorXd& d_prev = d_lags[0];
  for (int k = 0; k < vehicles_; ++k) {
    const double pos = prev[2 * k], v = prev[2 * k + 1];
    const double s = leader_pos(in, k) - pos - lead_length_;
    const OvmPartials p = ovm_acceleration(in.theta.segment(kOvmParams * k, kOvmParams), s, v);
    const double lp = lambda[2 * k], lv = lambda[2 * k + 1];
    d_prev[2 * k] += lp - lv * dt_ * p.d_headway;
    d_prev[2 * k + 1] += lp * dt_ + lv * (1.0 + dt_ * p.d_speed);
    if (k > 0) d_prev[2 * (k - 1)] += lv * dt_ * p.d_headway;
    d_theta.segment(kOvmParams * k, kOvmParams) += lv * dt_ * p.d_params;
  }
}

namespace {

void check_bounds(const Eigen::VectorXd& theta, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                  const std::string& what) {
  for (int j = 0; j < theta.size(); ++j) {
    if (!(theta[j] >= lower[j] && theta[j] <= upper[j])) {
      throw ValidationError(what + "[" + std::to_string(j) + "]: " + format_number(theta[j]) +
                            " outside [" + format_number(lower[j]) + ", " + format_number(upper[j]) + "]");
    }
  }
}

LossSpec ovm_loss(const OvmData& data) {
  const std::vector<std::vector<double>> meas = data.follower_pos;
  return LossSpec::summable([meas](int i, const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
    double total = 0.0;
    if (grad) grad->setZero(x.size());
    for (size_t k = 0; k < meas.size(); ++k) {
      const double d = x[2 * k] - meas[k][i];
      total += d * d;
      if (grad) (*grad)[2 * k] = 2.0 * d;
    }
    return total;
  });
}

Eigen::VectorXd initial_state(const OvmData& data) {
  Eigen::VectorXd x0(2 * data.vehicles());
  for (int k = 0; k < data.vehicles(); ++k) {
    x0[2 * k] = data.follower_pos[k][0];
    x0[2 * k + 1] = data.follower_speed[k][0];
  }
  return x0;
}

}  // namespace

OvmData synthesize_ovm_data(const Eigen::VectorXd& true_params, const LeadProfile& profile, int horizon,
                            std::uint64_t seed, double dt, double lead_length) {
  if (horizon < 10) throw ValidationError("ovm.horizon: must be at least 10 steps");
  if (true_params.size() == 0 || true_params.size() % kOvmParams != 0) {
    throw ValidationError("ovm.true_params: need 5 entries per vehicle");
  }
  if (!(dt > 0.0)) throw ValidationError("ovm.dt: must be positive");
  if (!(profile.cruise_speed > 0.0) || !(profile.pulse_speed >= 0.0)) {
    throw ValidationError("ovm.lead_profile: speeds must be positive");
  }
  const int vehicles = static_cast<int>(true_params.size()) / kOvmParams;
  check_bounds(true_params, tile_ovm(ovm_lower_bounds(), vehicles), tile_ovm(ovm_upper_bounds(), vehicles),
               "ovm.true_params");

  Rng rng(derive_seed(seed, 0x0a11));
  const double start = profile.pulse_start + profile.jitter * rng.uniform();
  const double length = profile.pulse_length + profile.jitter * rng.uniform();

  OvmData data;
  data.dt = dt;
  data.lead_length = lead_length;
  Eigen::VectorXd x0(2 * vehicles);
  double front = 0.0;
  for (int k = 0; k < vehicles; ++k) {
    const double gap = ovm_equilibrium_headway(true_params.segment(kOvmParams * k, kOvmParams),
                                               profile.cruise_speed);
    front -= gap + lead_length;
    x0[2 * k] = front;
    x0[2 * k + 1] = profile.cruise_speed;
  }
  // front is now the last vehicle's position; shift so vehicle 0 starts at 0.
  const double shift = -x0[0];
  for (int k = 0; k < vehicles; ++k) x0[2 * k] += shift;

  data.t.resize(horizon + 1);
  data.lead_pos.resize(horizon + 1);
  data.lead_speed.resize(horizon + 1);
  double pos = shift;
  for (int i = 0; i <= horizon; ++i) {
    const double t = i * dt;
    const bool slow = t >= start && t < start + length;
    data.t[i] = t;
    data.lead_speed[i] = slow ? profile.pulse_speed : profile.cruise_speed;
    data.lead_pos[i] = pos;
    pos += dt * data.lead_speed[i];
  }

  const OvmModel model(data.lead_pos, vehicles, dt, lead_length);
  const LossSpec zero = LossSpec::summable([](int, const Eigen::VectorXd&, Eigen::VectorXd*) { return 0.0; });
  const Trajectory traj = simulate(model, zero, true_params, x0, seed);
  data.follower_pos.assign(vehicles, std::vector<double>(horizon + 1));
  data.follower_speed.assign(vehicles, std::vector<double>(horizon + 1));
  for (int i = 0; i <= horizon; ++i) {
    for (int k = 0; k < vehicles; ++k) {
      data.follower_pos[k][i] = traj.x[i][2 * k];
      data.follower_speed[k][i] = traj.x[i][2 * k + 1];
    }
  }
  return data;
}

void write_ovm_csv(std::ostream& out, const OvmData& data) {
  if (data.vehicles() != 1) throw ValidationError("ovm csv: export supports a single follower");
  CsvWriter w(out, {"t", "lead_pos", "lead_speed", "follower_pos", "follower_speed"});
  for (int i = 0; i <= data.steps(); ++i) {
    w.row({format_number(data.t[i]), format_number(data.lead_pos[i]), format_number(data.lead_speed[i]),
           format_number(data.follower_pos[0][i]), format_number(data.follower_speed[0][i])});
  }
}

OvmData read_ovm_csv(std::istream& in, double lead_length) {
  const CsvTable table = read_csv(in);
  const int ct = table.column("t"), clp = table.column("lead_pos"), cls = table.column("lead_speed"),
            cfp = table.column("follower_pos"), cfs = table.column("follower_speed");
  if (table.rows.size() < 11) throw ValidationError("ovm csv: need at least 11 rows");
  OvmData data;
  data.lead_length = lead_length;
  data.follower_pos.resize(1);
  data.follower_speed.resize(1);
  for (size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string where = "ovm csv row " + std::to_string(r + 1);
    data.t.push_back(parse_number(row[ct], where + " t"));
    data.lead_pos.push_back(parse_number(row[clp], where + " lead_pos"));
    data.lead_speed.push_back(parse_number(row[cls], where + " lead_speed"));
    data.follower_pos[0].push_back(parse_number(row[cfp], where + " follower_pos"));
    data.follower_speed[0].push_back(parse_number(row[cfs], where + " follower_speed"));
  }
  data.dt = data.t[1] - data.t[0];
  if (!(data.dt > 0.0)) throw ValidationError("ovm csv: t must increase");
  for (size_t i = 1; i < data.t.size(); ++i) {
    if (std::abs(data.t[i] - data.t[i - 1] - data.dt) > 1e-9 * std::max(1.0, std::abs(data.t[i]))) {
      throw ValidationError("ovm csv: t must be uniformly spaced (row " + std::to_string(i + 1) + ")");
    }
  }
  return data;
}

double ovm_rmse(const OvmData& data, double loss) {
  return std::sqrt(loss / (static_cast<double>(data.steps()) * data.vehicles()));
}

Problem build_ovm(const OvmProblemConfig& config) {
  const OvmData& data = config.data;
  const int v = data.vehicles();
  const int n = data.steps();
  if (v < 1) throw ValidationError("ovm.data: no follower trajectory");
  if (n < 10) throw ValidationError("ovm.data: need at least 10 steps");
  if (static_cast<int>(data.lead_pos.size()) != n + 1) throw ValidationError("ovm.data: lead_pos length");
  for (int k = 0; k < v; ++k) {
    if (static_cast<int>(data.follower_pos[k].size()) != n + 1 ||
        static_cast<int>(data.follower_speed[k].size()) != n + 1) {
      throw ValidationError("ovm.data: follower trajectory length");
    }
  }
  const int m = kOvmParams * v;
  if (config.theta0.size() != m) throw ValidationError("ovm.theta0: expected " + std::to_string(m) + " entries");
  if (config.lower.size() != m || config.upper.size() != m) {
    throw ValidationError("ovm.bounds: expected " + std::to_string(m) + " entries");
  }
  for (int j = 0; j < m; ++j) {
    if (!std::isfinite(config.lower[j]) || !std::isfinite(config.upper[j]) || config.lower[j] > config.upper[j]) {
      throw ValidationError("ovm.bounds[" + std::to_string(j) + "]: must be finite with lower <= upper");
    }
  }
  if (!config.theta0.allFinite()) throw ValidationError("ovm.theta0: non-finite entry");

  Problem p;
  p.name = "ovm";
  auto model = std::make_shared<OvmModel>(data.lead_pos, v, data.dt, data.lead_length);
  p.model = model;
  p.loss = ovm_loss(data);
  p.x0 = initial_state(data);
  std::vector<ParamSlice> slices;
  for (int k = 0; k < v; ++k) {
    slices.push_back({v == 1 ? std::string("c") : "c_vehicle" + std::to_string(k), kOvmParams * k, kOvmParams});
  }
  p.theta0 = ParamVector(config.theta0, slices);
  p.sense = Sense::kMinimize;
  const Eigen::VectorXd lo = config.lower, hi = config.upper;
  p.project = [lo, hi](const Eigen::VectorXd& theta) { return Eigen::VectorXd(theta.cwiseMax(lo).cwiseMin(hi)); };
  p.metric_name = "rmse";
  const LossSpec loss = p.loss;
  const Eigen::VectorXd x0 = p.x0;
  const OvmData copy = data;
  p.metric = [model, loss, x0, copy](const Eigen::VectorXd& theta) {
    return ovm_rmse(copy, simulate_objective(*model, loss, theta, x0, 0));
  };
  return p;
}

}  // namespace stochadj
