#include "stochadj/tape.hpp"

#include <cmath>
#include <string>

#include "stochadj/error.hpp"
#include "stochadj/special.hpp"

namespace stochadj {

const char* op_name(Op op) {
  switch (op) {
    case Op::kInput: return "input";
    case Op::kConst: return "const";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kDiv: return "div";
    case Op::kNeg: return "neg";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kTanh: return "tanh";
    case Op::kSqrt: return "sqrt";
    case Op::kLogNormalCdf: return "log_normal_cdf";
    case Op::kPow: return "pow";
    case Op::kMin: return "min";
    case Op::kMax: return "max";
    case Op::kDot: return "dot";
    case Op::kMatVec: return "matvec";
    case Op::kSum: return "sum";
  }
  return "?";
}

Var Tape::push(Op op, std::initializer_list<int> parents, double param) {
  const int first = static_cast<int>(parent_index_.size());
  parent_index_.insert(parent_index_.end(), parents.begin(), parents.end());
  nodes_.push_back({op, first, static_cast<int>(parents.size()), param});
  values_.push_back(0.0);
  evaluated_ = false;
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::push_list(Op op, const std::vector<int>& parents) {
  const int first = static_cast<int>(parent_index_.size());
  parent_index_.insert(parent_index_.end(), parents.begin(), parents.end());
  nodes_.push_back({op, first, static_cast<int>(parents.size()), 0.0});
  values_.push_back(0.0);
  evaluated_ = false;
  return {this, static_cast<int>(nodes_.size()) - 1};
}

int Tape::check(Var v) const {
  if (v.tape != this || v.index < 0 || v.index >= size()) {
    throw ValidationError("tape: variable does not belong to this tape");
  }
  return v.index;
}

VarVec Tape::input(const std::string& name, int dim) {
  if (dim < 0) throw ValidationError("tape: negative input dimension for '" + name + "'");
  for (const Slot& s : slots_) {
    if (s.name == name) throw ValidationError("tape: duplicate input slot '" + name + "'");
  }
  slots_.push_back({name, size(), dim});
  VarVec out;
  out.reserve(dim);
  for (int j = 0; j < dim; ++j) out.push_back(push(Op::kInput, {}));
  return out;
}

Var Tape::constant(double value) {
  if (!std::isfinite(value)) throw NumericalError("tape: non-finite constant");
  return push(Op::kConst, {}, value);
}

Var Tape::add(Var a, Var b) { return push(Op::kAdd, {check(a), check(b)}); }
Var Tape::sub(Var a, Var b) { return push(Op::kSub, {check(a), check(b)}); }
Var Tape::mul(Var a, Var b) { return push(Op::kMul, {check(a), check(b)}); }
Var Tape::div(Var a, Var b) { return push(Op::kDiv, {check(a), check(b)}); }
Var Tape::neg(Var a) { return push(Op::kNeg, {check(a)}); }
Var Tape::exp(Var a) { return push(Op::kExp, {check(a)}); }
Var Tape::log(Var a) { return push(Op::kLog, {check(a)}); }
Var Tape::tanh(Var a) { return push(Op::kTanh, {check(a)}); }
Var Tape::sqrt(Var a) { return push(Op::kSqrt, {check(a)}); }
Var Tape::log_normal_cdf(Var a) { return push(Op::kLogNormalCdf, {check(a)}); }
Var Tape::min(Var a, Var b) { return push(Op::kMin, {check(a), check(b)}); }
Var Tape::max(Var a, Var b) { return push(Op::kMax, {check(a), check(b)}); }

Var Tape::pow(Var a, double exponent) {
  if (!std::isfinite(exponent)) throw NumericalError("tape: non-finite exponent");
  return push(Op::kPow, {check(a)}, exponent);
}

Var Tape::dot(const VarVec& a, const VarVec& b) {
  if (a.size() != b.size()) {
    throw ValidationError("tape: dot of lengths " + std::to_string(a.size()) + " and " +
                          std::to_string(b.size()));
  }
  std::vector<int> parents;
  parents.reserve(2 * a.size());
  for (Var v : a) parents.push_back(check(v));
  for (Var v : b) parents.push_back(check(v));
  return push_list(Op::kDot, parents);
}

VarVec Tape::matvec(const VarVec& matrix, int rows, const VarVec& x) {
  const int cols = static_cast<int>(x.size());
  if (rows < 0 || static_cast<std::size_t>(rows) * cols != matrix.size()) {
    throw ValidationError("tape: matvec shape mismatch");
  }
  VarVec out;
  out.reserve(rows);
  std::vector<int> parents(2 * cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      parents[c] = check(matrix[r * cols + c]);
      parents[cols + c] = check(x[c]);
    }
    out.push_back(push_list(Op::kMatVec, parents));
  }
  return out;
}

Var Tape::sum(const VarVec& a) {
  std::vector<int> parents;
  parents.reserve(a.size());
  for (Var v : a) parents.push_back(check(v));
  return push_list(Op::kSum, parents);
}

void Tape::set_outputs(const VarVec& outputs) {
  outputs_.clear();
  for (Var v : outputs) outputs_.push_back(check(v));
  evaluated_ = false;
}

std::span<const int> Tape::parents(int node) const {
  const Node& n = nodes_[node];
  return {parent_index_.data() + n.first_parent, static_cast<std::size_t>(n.parent_count)};
}

double Tape::evaluate(int node, bool* tie) const {
  const Node& n = nodes_[node];
  const int* p = parent_index_.data() + n.first_parent;
  auto v = [&](int k) { return values_[p[k]]; };
  switch (n.op) {
    case Op::kInput: return values_[node];
    case Op::kConst: return n.param;
    case Op::kAdd: return v(0) + v(1);
    case Op::kSub: return v(0) - v(1);
    case Op::kMul: return v(0) * v(1);
    case Op::kDiv: return v(0) / v(1);
    case Op::kNeg: return -v(0);
    case Op::kExp: return std::exp(v(0));
    case Op::kLog: return std::log(v(0));
    case Op::kTanh: return std::tanh(v(0));
    case Op::kSqrt: return std::sqrt(v(0));
    case Op::kLogNormalCdf: return stochadj::log_normal_cdf(v(0));
    case Op::kPow: {
      const double base = v(0);
      if (base <= 0.0 && n.param != std::floor(n.param)) {
        throw NumericalError("tape: pow with non-integer exponent needs a positive base (node " +
                             std::to_string(node) + ")");
      }
      return std::pow(base, n.param);
    }
    case Op::kMin:
      if (tie && v(0) == v(1)) *tie = true;
      return v(0) <= v(1) ? v(0) : v(1);
    case Op::kMax:
      if (tie && v(0) == v(1)) *tie = true;
      return v(0) >= v(1) ? v(0) : v(1);
    case Op::kDot:
    case Op::kMatVec: {
      const int len = n.parent_count / 2;
      double acc = 0.0;
      for (int k = 0; k < len; ++k) acc += v(k) * v(len + k);
      return acc;
    }
    case Op::kSum: {
      double acc = 0.0;
      for (int k = 0; k < n.parent_count; ++k) acc += v(k);
      return acc;
    }
  }
  return 0.0;
}

double Tape::reevaluate(int node) const {
  if (!evaluated_) throw ValidationError("tape: reevaluate before forward");
  return evaluate(node, nullptr);
}

Eigen::VectorXd Tape::forward(const std::map<std::string, Eigen::VectorXd>& inputs) {
  for (const Slot& s : slots_) {
    auto it = inputs.find(s.name);
    if (it == inputs.end()) throw ValidationError("tape: input slot '" + s.name + "' not bound");
    if (it->second.size() != s.dim) {
      throw ValidationError("tape: input '" + s.name + "' has dimension " +
                            std::to_string(it->second.size()) + ", expected " +
                            std::to_string(s.dim));
    }
    for (int j = 0; j < s.dim; ++j) values_[s.first_node + j] = it->second[j];
  }
  if (inputs.size() != slots_.size()) {
    for (const auto& [name, value] : inputs) {
      bool known = false;
      for (const Slot& s : slots_) known = known || s.name == name;
      if (!known) throw ValidationError("tape: unknown input slot '" + name + "'");
    }
  }
  tie_ = false;
  evaluated_ = false;
  for (int i = 0; i < size(); ++i) {
    const double x = evaluate(i, &tie_);
    if (!std::isfinite(x)) {
      throw NumericalError(std::string("tape: non-finite value at node ") + std::to_string(i) +
                           " (" + op_name(nodes_[i].op) + ")");
    }
    values_[i] = x;
  }
  evaluated_ = true;
  Eigen::VectorXd out(outputs_.size());
  for (std::size_t k = 0; k < outputs_.size(); ++k) out[k] = values_[outputs_[k]];
  return out;
}

std::map<std::string, Eigen::VectorXd> Tape::vjp(const Eigen::VectorXd& seed) const {
  if (!evaluated_) throw ValidationError("tape: vjp called before forward");
  if (seed.size() != output_size()) {
    throw ValidationError("tape: seed has dimension " + std::to_string(seed.size()) +
                          ", expected " + std::to_string(output_size()));
  }
  std::vector<double> adj(nodes_.size(), 0.0);
  for (int k = 0; k < output_size(); ++k) adj[outputs_[k]] += seed[k];

  for (int i = size() - 1; i >= 0; --i) {
    const double g = adj[i];
    if (g == 0.0) continue;
    const Node& n = nodes_[i];
    const int* p = parent_index_.data() + n.first_parent;
    auto v = [&](int k) { return values_[p[k]]; };
    switch (n.op) {
      case Op::kInput:
      case Op::kConst:
        break;
      case Op::kAdd:
        adj[p[0]] += g;
        adj[p[1]] += g;
        break;
      case Op::kSub:
        adj[p[0]] += g;
        adj[p[1]] -= g;
        break;
      case Op::kMul:
        adj[p[0]] += g * v(1);
        adj[p[1]] += g * v(0);
        break;
      case Op::kDiv:
        adj[p[0]] += g / v(1);
        adj[p[1]] -= g * values_[i] / v(1);
        break;
      case Op::kNeg:
        adj[p[0]] -= g;
        break;
      case Op::kExp:
        adj[p[0]] += g * values_[i];
        break;
      case Op::kLog:
        adj[p[0]] += g / v(0);
        break;
      case Op::kTanh:
        adj[p[0]] += g * (1.0 - values_[i] * values_[i]);
        break;
      case Op::kSqrt:
        adj[p[0]] += g * 0.5 / values_[i];
        break;
      case Op::kLogNormalCdf:
        adj[p[0]] += g * normal_hazard(v(0));
        break;
      case Op::kPow:
        adj[p[0]] += g * n.param * std::pow(v(0), n.param - 1.0);
        break;
      case Op::kMin:
        adj[v(0) <= v(1) ? p[0] : p[1]] += g;
        break;
      case Op::kMax:
        adj[v(0) >= v(1) ? p[0] : p[1]] += g;
        break;
      case Op::kDot:
      case Op::kMatVec: {
        const int len = n.parent_count / 2;
        for (int k = 0; k < len; ++k) {
          adj[p[k]] += g * v(len + k);
          adj[p[len + k]] += g * v(k);
        }
        break;
      }
      case Op::kSum:
        for (int k = 0; k < n.parent_count; ++k) adj[p[k]] += g;
        break;
    }
  }

  std::map<std::string, Eigen::VectorXd> out;
  for (const Slot& s : slots_) {
    Eigen::VectorXd a(s.dim);
    for (int j = 0; j < s.dim; ++j) {
      a[j] = adj[s.first_node + j];
      if (!std::isfinite(a[j])) {
        throw NumericalError("tape: non-finite adjoint for input '" + s.name + "'");
      }
    }
    out.emplace(s.name, std::move(a));
  }
  return out;
}

namespace {

Tape& owner(Var a, Var b) {
  if (a.tape == nullptr || a.tape != b.tape) {
    throw ValidationError("tape: operands recorded on different tapes");
  }
  return *a.tape;
}

Tape& owner(Var a) {
  if (a.tape == nullptr) throw ValidationError("tape: unbound variable");
  return *a.tape;
}

}  // namespace

Var operator+(Var a, Var b) { return owner(a, b).add(a, b); }
Var operator-(Var a, Var b) { return owner(a, b).sub(a, b); }
Var operator*(Var a, Var b) { return owner(a, b).mul(a, b); }
Var operator/(Var a, Var b) { return owner(a, b).div(a, b); }
Var operator-(Var a) { return owner(a).neg(a); }
Var operator+(Var a, double b) { return a + owner(a).constant(b); }
Var operator+(double a, Var b) { return owner(b).constant(a) + b; }
Var operator-(Var a, double b) { return a - owner(a).constant(b); }
Var operator-(double a, Var b) { return owner(b).constant(a) - b; }
Var operator*(Var a, double b) { return a * owner(a).constant(b); }
Var operator*(double a, Var b) { return owner(b).constant(a) * b; }
Var operator/(Var a, double b) { return a / owner(a).constant(b); }
Var operator/(double a, Var b) { return owner(b).constant(a) / b; }

Var exp(Var a) { return owner(a).exp(a); }
Var log(Var a) { return owner(a).log(a); }
Var tanh(Var a) { return owner(a).tanh(a); }
Var sqrt(Var a) { return owner(a).sqrt(a); }
Var log_normal_cdf(Var a) { return owner(a).log_normal_cdf(a); }
Var pow(Var a, double exponent) { return owner(a).pow(a, exponent); }
Var min(Var a, Var b) { return owner(a, b).min(a, b); }
Var max(Var a, Var b) { return owner(a, b).max(a, b); }

}  // namespace stochadj
