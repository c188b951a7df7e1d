#include "stochadj/tape_model.hpp"

#include <map>
#include <string>

#include "stochadj/error.hpp"

namespace stochadj {
namespace {

std::string lag_slot(int l) { return "lag" + std::to_string(l); }

}  // namespace

TapeStepModel::TapeStepModel(ModelShape shape, TapeStepBuilder builder, DrawFn draw,
                             SupportFn support)
    : shape_(shape), builder_(std::move(builder)), draw_(std::move(draw)),
      support_(std::move(support)) {
  if (shape_.lag < 1) throw ValidationError("TapeStepModel: lag must be at least 1");
  if (!builder_ || !draw_) throw ValidationError("TapeStepModel: builder and draw are required");
}

void TapeStepModel::record(const StepInput& in, Tape& tape, TapeStep& out) const {
  std::vector<VarVec> lags;
  std::map<std::string, Eigen::VectorXd> bound;
  for (int l = 1; l <= shape_.lag; ++l) {
    lags.push_back(tape.input(lag_slot(l), shape_.state_dim));
    bound.emplace(lag_slot(l), in.window.lag(l));
  }
  const VarVec theta = tape.input("theta", shape_.param_dim);
  bound.emplace("theta", in.theta);
  out = builder_(tape, in.step, lags, theta, in.y, in.z);
  if (static_cast<int>(out.next_state.size()) != shape_.state_dim) {
    throw ValidationError("TapeStepModel: builder produced wrong state dimension");
  }
  VarVec outputs = out.next_state;
  if (out.logp) outputs.push_back(*out.logp);
  tape.set_outputs(outputs);
  tape.forward(bound);
}

Eigen::VectorXd TapeStepModel::step(const StepInput& in) const {
  Tape tape;
  TapeStep out;
  record(in, tape, out);
  Eigen::VectorXd x(shape_.state_dim);
  for (int j = 0; j < shape_.state_dim; ++j) x[j] = tape.value(out.next_state[j].index);
  return x;
}

std::optional<LogDensity> TapeStepModel::log_density(const StepInput& in) const {
  if (in.y.size() == 0) return std::nullopt;
  Tape tape;
  TapeStep out;
  record(in, tape, out);
  if (!out.logp) return std::nullopt;
  Eigen::VectorXd seed = Eigen::VectorXd::Zero(tape.output_size());
  seed[shape_.state_dim] = 1.0;
  auto adj = tape.vjp(seed);
  LogDensity ld;
  ld.value = tape.value(out.logp->index);
  ld.d_theta = adj.at("theta");
  for (int l = 1; l <= shape_.lag; ++l) ld.d_lags.push_back(adj.at(lag_slot(l)));
  return ld;
}

void TapeStepModel::step_vjp(const StepInput& in, const Eigen::VectorXd& lambda,
                             Eigen::VectorXd& d_theta, std::vector<Eigen::VectorXd>& d_lags) const {
  Tape tape;
  TapeStep out;
  record(in, tape, out);
  Eigen::VectorXd seed = Eigen::VectorXd::Zero(tape.output_size());
  seed.head(shape_.state_dim) = lambda;
  auto adj = tape.vjp(seed);
  d_theta += adj.at("theta");
  for (int l = 1; l <= shape_.lag; ++l) d_lags[l - 1] += adj.at(lag_slot(l));
}

std::vector<Outcome> TapeStepModel::support(const StepInput& in) const {
  if (!support_) return StepModel::support(in);
  return support_(in);
}

bool TapeStepModel::at_kink(const StepInput& in) const {
  Tape tape;
  TapeStep out;
  record(in, tape, out);
  return tape.tie_encountered();
}

}  // namespace stochadj
