#pragma once

#include <memory>

#include "stochadj/model.hpp"
#include "stochadj/tape_model.hpp"

namespace stochadj::toy {

inline StepDraw no_draw(const StepInput&, Rng&) { return {}; }

// x_i = x_{i-1} + theta, scalar.
inline std::shared_ptr<TapeStepModel> chain(int steps) {
  return std::make_shared<TapeStepModel>(
      ModelShape{steps, 1, 1, 1, false, true},
      [](Tape&, int, const std::vector<VarVec>& lags, const VarVec& th, const Eigen::VectorXd&,
         const Eigen::VectorXd&) { return TapeStep{{lags[0][0] + th[0]}, std::nullopt}; },
      no_draw);
}

// x_i = x_{i-1} (1 + theta[0] dt) + theta[1] z_i with z_i ~ N(0, 1).
inline std::shared_ptr<TapeStepModel> scalar_sde(int steps, double dt) {
  return std::make_shared<TapeStepModel>(
      ModelShape{steps, 1, 1, 2, false, true},
      [dt](Tape&, int, const std::vector<VarVec>& lags, const VarVec& th, const Eigen::VectorXd&,
           const Eigen::VectorXd& z) {
        return TapeStep{{lags[0][0] * (1.0 + th[0] * dt) + th[1] * z[0]}, std::nullopt};
      },
      [](const StepInput&, Rng& rng) { return StepDraw{Eigen::VectorXd::Constant(1, rng.normal()), {}}; });
}

// x_i = a x_{i-1} + b x_{i-2} + c z_i, written with a lag-2 window.
inline std::shared_ptr<TapeStepModel> ar2_lagged(int steps) {
  return std::make_shared<TapeStepModel>(
      ModelShape{steps, 2, 1, 3, false, true},
      [](Tape&, int, const std::vector<VarVec>& lags, const VarVec& th, const Eigen::VectorXd&,
         const Eigen::VectorXd& z) {
        return TapeStep{{th[0] * lags[0][0] + th[1] * lags[1][0] + th[2] * z[0]}, std::nullopt};
      },
      [](const StepInput&, Rng& rng) { return StepDraw{Eigen::VectorXd::Constant(1, rng.normal()), {}}; });
}

// Same recursion on the augmented state (x_i, x_{i-1}) with lag 1.
inline std::shared_ptr<TapeStepModel> ar2_augmented(int steps) {
  return std::make_shared<TapeStepModel>(
      ModelShape{steps, 1, 2, 3, false, true},
      [](Tape&, int, const std::vector<VarVec>& lags, const VarVec& th, const Eigen::VectorXd&,
         const Eigen::VectorXd& z) {
        const VarVec& p = lags[0];
        return TapeStep{{th[0] * p[0] + th[1] * p[1] + th[2] * z[0], p[0] + 0.0}, std::nullopt};
      },
      [](const StepInput&, Rng& rng) { return StepDraw{Eigen::VectorXd::Constant(1, rng.normal()), {}}; });
}

inline LossSpec last_state_squared() {
  return LossSpec::general([](const std::vector<Eigen::VectorXd>& x, std::vector<Eigen::VectorXd>* g) {
    const double v = x.back()[0];
    if (g) g->back()[0] = 2.0 * v;
    return v * v;
  });
}

inline LossSpec first_coordinate_sum() {
  return LossSpec::summable([](int, const Eigen::VectorXd& x, Eigen::VectorXd* g) {
    if (g) {
      g->setZero();
      (*g)[0] = 1.0;
    }
    return x[0];
  });
}

}  // namespace stochadj::toy
