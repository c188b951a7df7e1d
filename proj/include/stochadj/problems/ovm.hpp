#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <vector>

#include <Eigen/Dense>

#include "stochadj/problems/problem.hpp"

namespace stochadj {

/// Optimal velocity car following: accel = c4 (V(s) - v) with
/// V(s) = c1 [tanh(c2 s - c3 - c5) + tanh(c3)] and s the gap to the
/// leader's rear bumper. Parameters per vehicle: c1..c5 (0-based c[0..4]).
constexpr int kOvmParams = 5;

struct OvmPartials {
  double accel;
  Eigen::Matrix<double, kOvmParams, 1> d_params;
  double d_headway;
  double d_speed;
};

OvmPartials ovm_acceleration(const Eigen::Ref<const Eigen::VectorXd>& c, double headway, double speed);

// Headway at which V(s) equals `speed`; throws when no such headway exists.
double ovm_equilibrium_headway(const Eigen::Ref<const Eigen::VectorXd>& c, double speed);

/// Lead speed profile: cruise, then a constant-speed slow pulse, then
/// cruise again. The seed jitters the pulse start and length.
struct LeadProfile {
  double cruise_speed = 15.0;
  double pulse_speed = 5.0;
  double pulse_start = 15.0;   // seconds
  double pulse_length = 10.0;  // seconds
  double jitter = 2.0;         // max seconds added to start and length
};

/// Lead and follower trajectories on a shared time grid t_0..t_n.
/// follower_pos[k] / follower_speed[k] belong to vehicle k of the chain.
struct OvmData {
  double dt = 0.1;
  double lead_length = 5.0;
  std::vector<double> t;
  std::vector<double> lead_pos;
  std::vector<double> lead_speed;
  std::vector<std::vector<double>> follower_pos;
  std::vector<std::vector<double>> follower_speed;

  int steps() const { return static_cast<int>(t.size()) - 1; }
  int vehicles() const { return static_cast<int>(follower_pos.size()); }
  double position_scale() const;  // max - min of the measured follower positions
};

Eigen::VectorXd default_ovm_parameters();
// Box used for calibration, per vehicle.
Eigen::VectorXd ovm_lower_bounds();
Eigen::VectorXd ovm_upper_bounds();

/// Noise-free data from the OVM itself. `true_params` holds 5 entries per
/// vehicle; vehicles start at the equilibrium headway for the cruise speed.
OvmData synthesize_ovm_data(const Eigen::VectorXd& true_params, const LeadProfile& profile, int horizon,
                            std::uint64_t seed, double dt = 0.1, double lead_length = 5.0);

void write_ovm_csv(std::ostream& out, const OvmData& data);
OvmData read_ovm_csv(std::istream& in, double lead_length = 5.0);

/// Chain of followers: vehicle 0 trails the recorded lead, vehicle k trails
/// simulated vehicle k-1. State is [pos_0, v_0, pos_1, v_1, ...]; forward
/// Euler with the data's dt.
class OvmModel : public StepModel {
 public:
  OvmModel(std::vector<double> lead_pos, int vehicles, double dt, double lead_length);

  ModelShape shape() const override;
  StepDraw draw(const StepInput& in, Rng& rng) const override;
  Eigen::VectorXd step(const StepInput& in) const override;
  void step_vjp(const StepInput& in, const Eigen::VectorXd& lambda, Eigen::VectorXd& d_theta,
                std::vector<Eigen::VectorXd>& d_lags) const override;

 private:
  double leader_pos(const StepInput& in, int k) const;

  std::vector<double> lead_pos_;
  int vehicles_;
  double dt_;
  double lead_length_;
};

struct OvmProblemConfig {
  OvmData data;
  Eigen::VectorXd theta0;  // 5 per vehicle
  Eigen::VectorXd lower;   // 5 per vehicle
  Eigen::VectorXd upper;
};

// Loss: sum over steps 1..n and vehicles of (pos - measured pos)^2.
Problem build_ovm(const OvmProblemConfig& config);

// sqrt(loss / (n * vehicles))
double ovm_rmse(const OvmData& data, double loss);

// Repeats the per-vehicle block for every vehicle of the chain.
Eigen::VectorXd tile_ovm(const Eigen::VectorXd& per_vehicle, int vehicles);

}  // namespace stochadj
