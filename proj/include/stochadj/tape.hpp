#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace stochadj {

class Tape;

// Handle to a scalar node on a tape.
struct Var {
  Tape* tape = nullptr;
  int index = -1;
};

using VarVec = std::vector<Var>;

enum class Op {
  kInput,
  kConst,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kNeg,
  kExp,
  kLog,
  kTanh,
  kSqrt,
  kLogNormalCdf,
  kPow,
  kMin,
  kMax,
  kDot,
  kMatVec,
  kSum,
};

const char* op_name(Op op);

/// Straight-line reverse-mode tape. Nodes are appended while the program is
/// recorded; forward() evaluates them for bound inputs and vjp() pulls a
/// seed on the outputs back to every input slot.
///
/// A tape is single-threaded. Separate tapes share nothing.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  VarVec input(const std::string& name, int dim);
  Var constant(double value);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var neg(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var tanh(Var a);
  Var sqrt(Var a);
  // log Phi(a), Phi the standard normal CDF.
  Var log_normal_cdf(Var a);
  // Non-integer exponents need a positive base at evaluation time.
  Var pow(Var a, double exponent);
  // Ties send the whole gradient to the first argument.
  Var min(Var a, Var b);
  Var max(Var a, Var b);
  Var dot(const VarVec& a, const VarVec& b);
  // `matrix` holds rows*x.size() entries in row-major order.
  VarVec matvec(const VarVec& matrix, int rows, const VarVec& x);
  Var sum(const VarVec& a);

  void set_outputs(const VarVec& outputs);

  Eigen::VectorXd forward(const std::map<std::string, Eigen::VectorXd>& inputs);
  std::map<std::string, Eigen::VectorXd> vjp(const Eigen::VectorXd& seed) const;

  int size() const { return static_cast<int>(nodes_.size()); }
  int output_size() const { return static_cast<int>(outputs_.size()); }
  Op op(int node) const { return nodes_[node].op; }
  std::span<const int> parents(int node) const;
  double value(int node) const { return values_[node]; }
  // Recomputes a node from the primals already stored for its parents.
  double reevaluate(int node) const;
  // True if the last forward pass hit an exact min/max tie.
  bool tie_encountered() const { return tie_; }
  bool evaluated() const { return evaluated_; }

 private:
  struct Node {
    Op op;
    int first_parent;
    int parent_count;
    double param;
  };
  struct Slot {
    std::string name;
    int first_node;
    int dim;
  };

  Var push(Op op, std::initializer_list<int> parents, double param = 0.0);
  Var push_list(Op op, const std::vector<int>& parents);
  int check(Var v) const;
  double evaluate(int node, bool* tie) const;

  std::vector<Node> nodes_;
  std::vector<int> parent_index_;
  std::vector<double> values_;
  std::vector<Slot> slots_;
  std::vector<int> outputs_;
  bool evaluated_ = false;
  bool tie_ = false;
};

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator-(Var a);
Var operator+(Var a, double b);
Var operator+(double a, Var b);
Var operator-(Var a, double b);
Var operator-(double a, Var b);
Var operator*(Var a, double b);
Var operator*(double a, Var b);
Var operator/(Var a, double b);
Var operator/(double a, Var b);

Var exp(Var a);
Var log(Var a);
Var tanh(Var a);
Var sqrt(Var a);
Var log_normal_cdf(Var a);
Var pow(Var a, double exponent);
Var min(Var a, Var b);
Var max(Var a, Var b);

}  // namespace stochadj
