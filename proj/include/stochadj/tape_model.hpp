#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "stochadj/model.hpp"
#include "stochadj/tape.hpp"

namespace stochadj {

struct TapeStep {
  VarVec next_state;
  std::optional<Var> logp;
};

// Records h_i (and optionally log p_i) for one step. The branch is fixed by
// the given y and z, so the recording is straight-line.
using TapeStepBuilder =
    std::function<TapeStep(Tape& tape, int step, const std::vector<VarVec>& lags, const VarVec& theta,
                           const Eigen::VectorXd& y, const Eigen::VectorXd& z)>;

using DrawFn = std::function<StepDraw(const StepInput& in, Rng& rng)>;
using SupportFn = std::function<std::vector<Outcome>(const StepInput& in)>;

/// StepModel whose partials all come from the tape instead of hand-coded
/// derivatives. Each callback re-records the step.
class TapeStepModel : public StepModel {
 public:
  TapeStepModel(ModelShape shape, TapeStepBuilder builder, DrawFn draw, SupportFn support = {});

  ModelShape shape() const override { return shape_; }
  StepDraw draw(const StepInput& in, Rng& rng) const override { return draw_(in, rng); }
  Eigen::VectorXd step(const StepInput& in) const override;
  std::optional<LogDensity> log_density(const StepInput& in) const override;
  void step_vjp(const StepInput& in, const Eigen::VectorXd& lambda, Eigen::VectorXd& d_theta,
                std::vector<Eigen::VectorXd>& d_lags) const override;
  std::vector<Outcome> support(const StepInput& in) const override;
  bool at_kink(const StepInput& in) const override;

 private:
  void record(const StepInput& in, Tape& tape, TapeStep& out) const;

  ModelShape shape_;
  TapeStepBuilder builder_;
  DrawFn draw_;
  SupportFn support_;
};

}  // namespace stochadj
