#include "stochadj/problems/sde.hpp"

#include <cmath>
#include <string>

#include "stochadj/distributions.hpp"
#include "stochadj/error.hpp"

namespace stochadj {

const char* sde_variant_name(SdeVariant v) {
  switch (v) {
    case SdeVariant::kPathwise: return "pathwise";
    case SdeVariant::kScore: return "score";
    case SdeVariant::kJump: return "jump";
  }
  return "?";
}

SdeVariant parse_sde_variant(const std::string& name) {
  for (SdeVariant v : {SdeVariant::kPathwise, SdeVariant::kScore, SdeVariant::kJump}) {
    if (name == sde_variant_name(v)) return v;
  }
  throw ValidationError("sde.variant: unknown variant '" + name + "'");
}

SdeConfig default_sde_config(SdeVariant variant) {
  SdeConfig c;
  c.variant = variant;
  c.dim = 2;
  c.lag = 1;
  c.steps = variant == SdeVariant::kPathwise ? 50 : 10;
  c.dt = 0.1;
  c.x0 = Eigen::Vector2d(1.0, -0.5);
  c.target = Eigen::Vector2d(0.5, 0.5);
  Eigen::MatrixXd b(2, 2);
  b << -0.5, 0.2, -0.1, -0.3;
  c.drift = {b};
  c.offset = Eigen::Vector2d(0.1, -0.2);
  c.diffusion = Eigen::MatrixXd::Zero(2, 2);
  c.diffusion << std::log(0.3), 0.0, 0.1, std::log(0.4);
  c.jump_levels = 2;
  c.jump_size = Eigen::MatrixXd(2, 2);
  c.jump_size << 0.0, 0.3, -0.2, 0.1;
  c.jump_bias = Eigen::MatrixXd(2, 2);
  c.jump_bias << 0.0, -1.0, 0.5, 0.0;
  c.jump_slope = Eigen::MatrixXd(2, 2);
  c.jump_slope << 0.0, 0.5, 0.0, -0.3;
  return c;
}

namespace {

int extra_dim(const SdeConfig& c) {
  return c.variant == SdeVariant::kJump ? 3 * c.dim * c.jump_levels : c.dim * (c.dim + 1) / 2;
}

void validate(const SdeConfig& c) {
  if (c.dim < 1) throw ValidationError("sde.dim: must be at least 1");
  if (c.lag < 1) throw ValidationError("sde.lag: must be at least 1");
  if (c.steps < 1) throw ValidationError("sde.steps: must be at least 1");
  if (!(c.dt > 0.0) || !std::isfinite(c.dt)) throw ValidationError("sde.dt: must be positive");
  if (c.variant == SdeVariant::kJump && c.jump_levels < 1) {
    throw ValidationError("sde.jump_levels: must be at least 1");
  }
}

}  // namespace

SdeModel::SdeModel(const SdeConfig& config)
    : variant_(config.variant), dim_(config.dim), lag_(config.lag), steps_(config.steps),
      dt_(config.dt), levels_(config.jump_levels) {
  validate(config);
  param_dim_ = lag_ * dim_ * dim_ + dim_ + extra_dim(config);
}

ModelShape SdeModel::shape() const {
  const bool score = variant_ != SdeVariant::kPathwise;
  const bool pathwise = variant_ != SdeVariant::kScore;
  return {steps_, lag_, dim_, param_dim_, score, pathwise};
}

Eigen::MatrixXd SdeModel::drift(const Eigen::VectorXd& theta, int lag) const {
  Eigen::MatrixXd b(dim_, dim_);
  const int at = drift_offset(lag);
  for (int r = 0; r < dim_; ++r) {
    for (int c = 0; c < dim_; ++c) b(r, c) = theta[at + r * dim_ + c];
  }
  return b;
}

Eigen::MatrixXd SdeModel::diffusion_params(const Eigen::VectorXd& theta) const {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(dim_, dim_);
  int at = extra_offset();
  for (int r = 0; r < dim_; ++r) {
    for (int c = 0; c <= r; ++c) a(r, c) = theta[at++];
  }
  return a;
}

Eigen::MatrixXd SdeModel::jump_block(const Eigen::VectorXd& theta, int which) const {
  Eigen::MatrixXd m(dim_, levels_);
  const int at = extra_offset() + which * dim_ * levels_;
  for (int r = 0; r < dim_; ++r) {
    for (int c = 0; c < levels_; ++c) m(r, c) = theta[at + r * levels_ + c];
  }
  return m;
}

Eigen::VectorXd SdeModel::drift_step(const StepInput& in) const {
  const Eigen::VectorXd& th = in.theta;
  Eigen::VectorXd out = in.window.previous();
  for (int r = 0; r < dim_; ++r) {
    double b = th[offset_offset() + r];
    for (int l = 1; l <= lag_; ++l) {
      const Eigen::VectorXd& x = in.window.lag(l);
      const int at = drift_offset(l) + r * dim_;
      for (int c = 0; c < dim_; ++c) b += th[at + c] * x[c];
    }
    out[r] += dt_ * b;
  }
  return out;
}

void SdeModel::drift_vjp(const StepInput& in, const Eigen::VectorXd& lambda, Eigen::VectorXd& d_theta,
                         std::vector<Eigen::VectorXd>& d_lags) const {
  const Eigen::VectorXd& th = in.theta;
  d_lags[0] += lambda;
  for (int l = 1; l <= lag_; ++l) {
    const Eigen::VectorXd& x = in.window.lag(l);
    Eigen::VectorXd& dl = d_lags[l - 1];
    const int at = drift_offset(l);
    for (int r = 0; r < dim_; ++r) {
      const double g = dt_ * lambda[r];
      for (int c = 0; c < dim_; ++c) {
        dl[c] += g * th[at + r * dim_ + c];
        d_theta[at + r * dim_ + c] += g * x[c];
      }
    }
  }
  d_theta.segment(offset_offset(), dim_) += dt_ * lambda;
}

Eigen::VectorXd SdeModel::jump_logits(const Eigen::VectorXd& theta, const Eigen::VectorXd& prev,
                                      int j) const {
  const int bias_at = extra_offset() + dim_ * levels_ + j * levels_;
  const int slope_at = bias_at + dim_ * levels_;
  Eigen::VectorXd out(levels_);
  for (int r = 0; r < levels_; ++r) out[r] = theta[bias_at + r] + prev[j] * theta[slope_at + r];
  return out;
}

namespace {

// A v for the lower-triangular factor stored row by row after `at`, with the
// diagonal kept as its log.
Eigen::VectorXd factor_times(const Eigen::VectorXd& theta, int at, const Eigen::VectorXd& v) {
  const int k = static_cast<int>(v.size());
  Eigen::VectorXd out = Eigen::VectorXd::Zero(k);
  for (int r = 0; r < k; ++r) {
    for (int c = 0; c < r; ++c) out[r] += theta[at++] * v[c];
    out[r] += std::exp(theta[at++]) * v[r];
  }
  return out;
}

}  // namespace

StepDraw SdeModel::draw(const StepInput& in, Rng& rng) const {
  StepDraw d;
  switch (variant_) {
    case SdeVariant::kPathwise:
      d.z.resize(dim_);
      for (int j = 0; j < dim_; ++j) d.z[j] = std::sqrt(dt_) * rng.normal();
      break;
    case SdeVariant::kScore: {
      Eigen::VectorXd eps(dim_);
      for (int j = 0; j < dim_; ++j) eps[j] = rng.normal();
      d.y = drift_step(in) + std::sqrt(dt_) * factor_times(in.theta, extra_offset(), eps);
      break;
    }
    case SdeVariant::kJump:
      d.y.resize(dim_);
      for (int j = 0; j < dim_; ++j) {
        d.y[j] = categorical_sample(jump_logits(in.theta, in.window.previous(), j), rng.uniform());
      }
      break;
  }
  return d;
}

Eigen::VectorXd SdeModel::step(const StepInput& in) const {
  switch (variant_) {
    case SdeVariant::kPathwise:
      return drift_step(in) + factor_times(in.theta, extra_offset(), in.z);
    case SdeVariant::kScore:
      return in.y;
    case SdeVariant::kJump: {
      Eigen::VectorXd x = drift_step(in);
      for (int j = 0; j < dim_; ++j) x[j] += in.theta[extra_offset() + j * levels_ + static_cast<int>(in.y[j])];
      return x;
    }
  }
  return {};
}

std::optional<LogDensity> SdeModel::log_density(const StepInput& in) const {
  if (variant_ == SdeVariant::kPathwise) return std::nullopt;
  LogDensity ld;
  ld.d_theta = Eigen::VectorXd::Zero(param_dim_);
  ld.d_lags.assign(lag_, Eigen::VectorXd::Zero(dim_));
  if (variant_ == SdeVariant::kScore) {
    MvNormalCholesky dist{drift_step(in), diffusion_params(in.theta)};
    const double root = std::sqrt(dt_);
    Eigen::MatrixXd scaled = dist.factor_params * root;
    scaled.diagonal() = dist.factor_params.diagonal().array() + std::log(root);
    dist.factor_params = scaled;
    const MvNormalLogpdf r = mvnormal_logpdf(dist, in.y);
    ld.value = r.value;
    drift_vjp(in, r.d_mean, ld.d_theta, ld.d_lags);
    int at = extra_offset();
    for (int row = 0; row < dim_; ++row) {
      for (int c = 0; c <= row; ++c) {
        ld.d_theta[at++] = row == c ? r.d_factor_params(row, c) : root * r.d_factor_params(row, c);
      }
    }
    return ld;
  }
  const Eigen::VectorXd& prev = in.window.previous();
  ld.value = 0.0;
  for (int j = 0; j < dim_; ++j) {
    const CategoricalScore s = categorical_score(jump_logits(in.theta, prev, j), static_cast<int>(in.y[j]));
    ld.value += s.logpmf;
    const int bias_at = extra_offset() + dim_ * levels_ + j * levels_;
    const int slope_at = extra_offset() + 2 * dim_ * levels_ + j * levels_;
    ld.d_theta.segment(bias_at, levels_) += s.d_logits;
    ld.d_theta.segment(slope_at, levels_) += prev[j] * s.d_logits;
    ld.d_lags[0][j] += s.d_logits.dot(in.theta.segment(slope_at, levels_));
  }
  return ld;
}

void SdeModel::step_vjp(const StepInput& in, const Eigen::VectorXd& lambda, Eigen::VectorXd& d_theta,
                        std::vector<Eigen::VectorXd>& d_lags) const {
  switch (variant_) {
    case SdeVariant::kPathwise: {
      drift_vjp(in, lambda, d_theta, d_lags);
      int at = extra_offset();
      for (int r = 0; r < dim_; ++r) {
        for (int c = 0; c <= r; ++c, ++at) {
          const double g = lambda[r] * in.z[c];
          d_theta[at] += r == c ? g * std::exp(in.theta[at]) : g;
        }
      }
      break;
    }
    case SdeVariant::kScore:
      break;
    case SdeVariant::kJump:
      drift_vjp(in, lambda, d_theta, d_lags);
      for (int j = 0; j < dim_; ++j) {
        d_theta[extra_offset() + j * levels_ + static_cast<int>(in.y[j])] += lambda[j];
      }
      break;
  }
}

std::vector<Outcome> SdeModel::support(const StepInput& in) const {
  if (variant_ != SdeVariant::kJump) return StepModel::support(in);
  std::vector<Eigen::VectorXd> probs;
  for (int j = 0; j < dim_; ++j) probs.push_back(softmax(jump_logits(in.theta, in.window.previous(), j)));
  std::vector<Outcome> out;
  Eigen::VectorXi idx = Eigen::VectorXi::Zero(dim_);
  while (true) {
    Outcome o{Eigen::VectorXd(dim_), 1.0};
    for (int j = 0; j < dim_; ++j) {
      o.y[j] = idx[j];
      o.probability *= probs[j][idx[j]];
    }
    out.push_back(std::move(o));
    int j = dim_ - 1;
    while (j >= 0 && ++idx[j] == levels_) idx[j--] = 0;
    if (j < 0) break;
  }
  return out;
}

std::vector<ParamSlice> sde_param_slices(const SdeConfig& c) {
  std::vector<ParamSlice> s;
  int at = 0;
  for (int l = 1; l <= c.lag; ++l) {
    s.push_back({"drift_lag" + std::to_string(l), at, c.dim * c.dim});
    at += c.dim * c.dim;
  }
  s.push_back({"offset", at, c.dim});
  at += c.dim;
  if (c.variant == SdeVariant::kJump) {
    for (const char* name : {"jump_size", "jump_bias", "jump_slope"}) {
      s.push_back({name, at, c.dim * c.jump_levels});
      at += c.dim * c.jump_levels;
    }
  } else {
    s.push_back({"diffusion", at, c.dim * (c.dim + 1) / 2});
  }
  return s;
}

Eigen::VectorXd pack_sde_theta(const SdeConfig& c) {
  validate(c);
  if (static_cast<int>(c.drift.size()) != c.lag) throw ValidationError("sde.drift: need one matrix per lag");
  for (const auto& b : c.drift) {
    if (b.rows() != c.dim || b.cols() != c.dim) throw ValidationError("sde.drift: wrong matrix shape");
  }
  if (c.offset.size() != c.dim) throw ValidationError("sde.offset: wrong length");
  std::vector<double> v;
  for (const auto& b : c.drift) {
    for (int r = 0; r < c.dim; ++r) {
      for (int k = 0; k < c.dim; ++k) v.push_back(b(r, k));
    }
  }
  for (int j = 0; j < c.dim; ++j) v.push_back(c.offset[j]);
  if (c.variant == SdeVariant::kJump) {
    for (const Eigen::MatrixXd* m : {&c.jump_size, &c.jump_bias, &c.jump_slope}) {
      if (m->rows() != c.dim || m->cols() != c.jump_levels) {
        throw ValidationError("sde.jump: matrices must be dim x jump_levels");
      }
      for (int r = 0; r < c.dim; ++r) {
        for (int k = 0; k < c.jump_levels; ++k) v.push_back((*m)(r, k));
      }
    }
  } else {
    if (c.diffusion.rows() != c.dim || c.diffusion.cols() != c.dim) {
      throw ValidationError("sde.diffusion: must be dim x dim");
    }
    for (int r = 0; r < c.dim; ++r) {
      if (!(std::exp(c.diffusion(r, r)) > 0.0) || !std::isfinite(std::exp(c.diffusion(r, r)))) {
        throw ValidationError("sde.diffusion: degenerate diagonal");
      }
      for (int k = 0; k <= r; ++k) v.push_back(c.diffusion(r, k));
    }
  }
  Eigen::VectorXd theta = Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  if (!theta.allFinite()) throw ValidationError("sde: non-finite parameters");
  return theta;
}

Problem build_sde(const SdeConfig& config) {
  const Eigen::VectorXd theta = pack_sde_theta(config);
  if (config.x0.size() != config.dim) throw ValidationError("sde.x0: wrong length");
  if (config.target.size() != config.dim) throw ValidationError("sde.target: wrong length");
  Problem p;
  p.name = std::string("sde_") + sde_variant_name(config.variant);
  p.model = std::make_shared<SdeModel>(config);
  const Eigen::VectorXd target = config.target;
  p.loss = LossSpec::summable([target](int, const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
    const Eigen::VectorXd d = x - target;
    if (grad) *grad = 2.0 * d;
    return d.squaredNorm();
  });
  p.x0 = config.x0;
  p.theta0 = ParamVector(theta, sde_param_slices(config));
  p.sense = Sense::kMinimize;
  p.keys = ConditioningKey::table(config.steps, [](const PathPrefix& prefix) { return prefix.step() - 1; });
  p.enumerable = config.variant == SdeVariant::kJump &&
                 std::pow(static_cast<double>(config.jump_levels), config.dim * config.steps) <= 1e6;
  return p;
}

}  // namespace stochadj
