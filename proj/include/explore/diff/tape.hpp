#pragma once

// Reverse-mode differentiation over f64 vectors.
//
// A Tape is an append-only list of nodes; inputs always precede outputs, so
// the reverse sweep is a single backwards pass over the node list. Trainable
// tensors live in Parameter objects owned outside the tape. A parameter leaf
// reads the parameter's storage directly and backward() accumulates straight
// into Parameter::grad, so gradients from several tapes (a minibatch) sum
// without copies.

#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace explore::diff {

class Parameter {
 public:
  Parameter(std::string name, std::size_t rows, std::size_t cols);

  const std::string& name() const { return name_; }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return value.size(); }

  std::vector<double> value;
  std::vector<double> grad;

  void zero_grad();

 private:
  std::string name_;
  std::size_t rows_, cols_;
};

/// Ordered, non-owning view over parameters (e.g. all tensors of one network).
class ParameterSet {
 public:
  ParameterSet() = default;
  explicit ParameterSet(std::vector<Parameter*> ps) : params_(std::move(ps)) {}

  void add(Parameter& p) { params_.push_back(&p); }
  void append(const ParameterSet& other);

  std::span<Parameter* const> items() const { return params_; }
  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) const { return *params_[i]; }

  std::size_t scalar_count() const;
  void zero_grad() const;
  /// FNV-1a over the raw bytes of every value; changes iff some bit changes.
  std::uint64_t checksum() const;
  std::vector<double> flatten_values() const;
  std::vector<double> flatten_grads() const;
  void assign_values(std::span<const double> flat) const;

 private:
  std::vector<Parameter*> params_;
};

/// Raised when a forward value or a gradient becomes NaN/inf.
class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(std::size_t node, const std::string& what)
      : std::runtime_error(what + " at node " + std::to_string(node)), node_(node) {}
  std::size_t node() const { return node_; }

 private:
  std::size_t node_;
};

enum class Op {
  constant,
  parameter,
  add,
  sub,
  mul,
  scale,
  add_scalar,
  neg,
  broadcast,
  sum,
  dot,
  matvec,
  affine,
  concat,
  slice,
  concat_cols,
  slice_cols,
  sum_row_groups,
  repeat_rows,
  log,
  exp,
  square,
  softplus,
  relu,
  tanh,
  lgamma,
  digamma,
};

class Tape;

/// Handle to a node; cheap to copy, valid while its tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  std::size_t size() const;
  std::span<const double> value() const;
  double scalar() const;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(std::vector<double> v);
  Var constant(std::span<const double> v);
  Var scalar(double x);
  Var param(Parameter& p);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double c);
  Var add_scalar(Var a, double c);
  Var neg(Var a);
  /// Repeats a size-1 node `n` times.
  Var broadcast(Var a, std::size_t n);
  Var sum(Var a);
  Var dot(Var a, Var b);
  /// W (rows x cols, row-major) times x.
  Var matvec(Var w, Var x, std::size_t rows, std::size_t cols);
  /// W x + b with W, b parameters; the fused form used by dense layers. If x
  /// holds n row vectors of length W.cols() (row-major), each row is mapped.
  Var affine(Parameter& w, Parameter& b, Var x);
  Var concat(Var a, Var b);
  Var slice(Var a, std::size_t offset, std::size_t len);

  // Row-batched layout helpers: a node of size rows * cols read row-major.
  Var concat_cols(Var a, Var b, std::size_t rows);
  Var slice_cols(Var a, std::size_t rows, std::size_t offset, std::size_t len);
  /// Sums each run of `group` consecutive rows.
  Var sum_row_groups(Var a, std::size_t cols, std::size_t group);
  /// Repeats each row `times` times in place.
  Var repeat_rows(Var a, std::size_t cols, std::size_t times);
  Var log(Var a);
  Var exp(Var a);
  Var square(Var a);
  Var softplus(Var a);
  Var relu(Var a);
  Var tanh(Var a);
  Var lgamma(Var a);
  Var digamma(Var a);

  /// Parameters read by later param()/affine() calls are treated as
  /// constants: backward() leaves their Parameter::grad untouched.
  void freeze(const ParameterSet& params);
  bool is_frozen(const Parameter* p) const;

  /// Reverse sweep from a size-1 node. Throws std::invalid_argument on a
  /// non-scalar output and NonFiniteError on NaN/inf values or gradients.
  void backward(Var out);

  std::size_t node_count() const { return nodes_.size(); }
  std::span<const double> value(std::size_t id) const;
  /// Gradient of a non-parameter node after backward().
  std::span<const double> grad(Var v) const;

 private:
  struct Node {
    Op op = Op::constant;
    std::size_t in0 = 0, in1 = 0;
    std::size_t rows = 0, cols = 0;  // matvec / slice offset / affine / row ops
    std::size_t batch = 1;           // affine rows; column offset for slice_cols
    double attr = 0.0;
    std::vector<double> val;
    std::vector<double> grad;
    Parameter* param = nullptr;   // Op::parameter
    Parameter* param_b = nullptr;  // Op::affine bias (param holds W)
  };

  Var push(Node n);
  const Node& node(Var v) const;
  std::span<const double> vals(const Node& n) const;
  std::span<double> grads(Node& n);
  void backprop_node(std::size_t id);

  std::vector<Node> nodes_;
  std::vector<const Parameter*> frozen_;
};

// Operator sugar; both operands must live on the same tape.
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator*(Var a, double c);
Var operator*(double c, Var a);
Var operator+(Var a, double c);
Var operator-(Var a);

}  // namespace explore::diff
