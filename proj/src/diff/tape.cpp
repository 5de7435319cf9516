#include "explore/diff/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "explore/diff/activations.hpp"
#include "explore/num/special.hpp"
#include "explore/simd/kernels.hpp"

namespace explore::diff {
namespace {

void check(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(std::string("tape: ") + msg);
}

// Σ v_i · 0 is 0 for finite input and NaN as soon as one entry is inf or NaN,
// so one vectorized dot replaces a scalar branch per element.
bool all_finite(std::span<const double> v) {
  thread_local std::vector<double> zeros;
  if (zeros.size() < v.size()) zeros.assign(v.size(), 0.0);
  return simd::dot(v, std::span<const double>(zeros).first(v.size())) == 0.0;
}

}  // namespace

Parameter::Parameter(std::string name, std::size_t rows, std::size_t cols)
    : value(rows * cols, 0.0), grad(rows * cols, 0.0), name_(std::move(name)), rows_(rows), cols_(cols) {}

void Parameter::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

void ParameterSet::append(const ParameterSet& other) {
  params_.insert(params_.end(), other.params_.begin(), other.params_.end());
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (auto* p : params_) n += p->size();
  return n;
}

void ParameterSet::zero_grad() const {
  for (auto* p : params_) p->zero_grad();
}

std::uint64_t ParameterSet::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto* p : params_) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p->value.data());
    for (std::size_t i = 0; i < p->value.size() * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

std::vector<double> ParameterSet::flatten_values() const {
  std::vector<double> out;
  out.reserve(scalar_count());
  for (auto* p : params_) out.insert(out.end(), p->value.begin(), p->value.end());
  return out;
}

std::vector<double> ParameterSet::flatten_grads() const {
  std::vector<double> out;
  out.reserve(scalar_count());
  for (auto* p : params_) out.insert(out.end(), p->grad.begin(), p->grad.end());
  return out;
}

void ParameterSet::assign_values(std::span<const double> flat) const {
  check(flat.size() == scalar_count(), "assign_values size mismatch");
  std::size_t off = 0;
  for (auto* p : params_) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), p->size(), p->value.begin());
    off += p->size();
  }
}

std::size_t Var::size() const { return tape->value(id).size(); }
std::span<const double> Var::value() const { return tape->value(id); }
double Var::scalar() const {
  auto v = value();
  check(v.size() == 1, "scalar() on non-scalar node");
  return v[0];
}

std::span<const double> Tape::value(std::size_t id) const { return vals(nodes_.at(id)); }

std::span<const double> Tape::grad(Var v) const {
  const Node& n = node(v);
  check(n.param == nullptr || n.op != Op::parameter, "grad() of a parameter leaf lives in Parameter::grad");
  return n.grad;
}

const Tape::Node& Tape::node(Var v) const {
  check(v.tape == this && v.id < nodes_.size(), "variable from another tape");
  return nodes_[v.id];
}

std::span<const double> Tape::vals(const Node& n) const {
  if (n.op == Op::parameter) return n.param->value;
  return n.val;
}

std::span<double> Tape::grads(Node& n) {
  if (n.op == Op::parameter) return n.param->grad;
  return n.grad;
}

Var Tape::push(Node n) {
  if (n.op != Op::parameter) n.grad.assign(n.val.size(), 0.0);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Tape::constant(std::vector<double> v) {
  Node n;
  n.op = Op::constant;
  n.val = std::move(v);
  return push(std::move(n));
}

Var Tape::constant(std::span<const double> v) { return constant(std::vector<double>(v.begin(), v.end())); }

Var Tape::scalar(double x) { return constant(std::vector<double>{x}); }

Var Tape::param(Parameter& p) {
  if (is_frozen(&p)) return constant(p.value);
  Node n;
  n.op = Op::parameter;
  n.param = &p;
  return push(std::move(n));
}

void Tape::freeze(const ParameterSet& params) {
  for (Parameter* p : params.items()) frozen_.push_back(p);
}

bool Tape::is_frozen(const Parameter* p) const {
  return std::find(frozen_.begin(), frozen_.end(), p) != frozen_.end();
}

Var Tape::add(Var a, Var b) {
  auto va = vals(node(a));
  auto vb = vals(node(b));
  check(va.size() == vb.size(), "add size mismatch");
  Node n;
  n.op = Op::add;
  n.in0 = a.id;
  n.in1 = b.id;
  n.val.resize(va.size());
  for (std::size_t i = 0; i < va.size(); ++i) n.val[i] = va[i] + vb[i];
  return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  auto va = vals(node(a));
  auto vb = vals(node(b));
  check(va.size() == vb.size(), "sub size mismatch");
  Node n;
  n.op = Op::sub;
  n.in0 = a.id;
  n.in1 = b.id;
  n.val.resize(va.size());
  for (std::size_t i = 0; i < va.size(); ++i) n.val[i] = va[i] - vb[i];
  return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
  auto va = vals(node(a));
  auto vb = vals(node(b));
  check(va.size() == vb.size(), "mul size mismatch");
  Node n;
  n.op = Op::mul;
  n.in0 = a.id;
  n.in1 = b.id;
  n.val.resize(va.size());
  for (std::size_t i = 0; i < va.size(); ++i) n.val[i] = va[i] * vb[i];
  return push(std::move(n));
}

Var Tape::scale(Var a, double c) {
  auto va = vals(node(a));
  Node n;
  n.op = Op::scale;
  n.in0 = a.id;
  n.attr = c;
  n.val.resize(va.size());
  for (std::size_t i = 0; i < va.size(); ++i) n.val[i] = c * va[i];
  return push(std::move(n));
}

Var Tape::add_scalar(Var a, double c) {
  auto va = vals(node(a));
  Node n;
  n.op = Op::add_scalar;
  n.in0 = a.id;
  n.attr = c;
  n.val.resize(va.size());
  for (std::size_t i = 0; i < va.size(); ++i) n.val[i] = va[i] + c;
  return push(std::move(n));
}

Var Tape::neg(Var a) {
  auto va = vals(node(a));
  Node n;
  n.op = Op::neg;
  n.in0 = a.id;
  n.val.resize(va.size());
  for (std::size_t i = 0; i < va.size(); ++i) n.val[i] = -va[i];
  return push(std::move(n));
}

Var Tape::broadcast(Var a, std::size_t len) {
  auto va = vals(node(a));
  check(va.size() == 1, "broadcast needs a scalar");
  Node n;
  n.op = Op::broadcast;
  n.in0 = a.id;
  n.val.assign(len, va[0]);
  return push(std::move(n));
}

Var Tape::sum(Var a) {
  auto va = vals(node(a));
  Node n;
  n.op = Op::sum;
  n.in0 = a.id;
  double s = 0.0;
  for (double x : va) s += x;
  n.val = {s};
  return push(std::move(n));
}

Var Tape::dot(Var a, Var b) {
  auto va = vals(node(a));
  auto vb = vals(node(b));
  check(va.size() == vb.size(), "dot size mismatch");
  Node n;
  n.op = Op::dot;
  n.in0 = a.id;
  n.in1 = b.id;
  n.val = {simd::dot(va, vb)};
  return push(std::move(n));
}

Var Tape::matvec(Var w, Var x, std::size_t rows, std::size_t cols) {
  auto vw = vals(node(w));
  auto vx = vals(node(x));
  check(vw.size() == rows * cols && vx.size() == cols, "matvec shape mismatch");
  Node n;
  n.op = Op::matvec;
  n.in0 = w.id;
  n.in1 = x.id;
  n.rows = rows;
  n.cols = cols;
  n.val.resize(rows);
  simd::gemv(vw, rows, cols, vx, {}, n.val);
  return push(std::move(n));
}

Var Tape::affine(Parameter& w, Parameter& b, Var x) {
  auto vx = vals(node(x));
  check(w.cols() > 0 && vx.size() % w.cols() == 0 && !vx.empty() && b.size() == w.rows(),
        "affine shape mismatch");
  Node n;
  n.op = Op::affine;
  n.in0 = x.id;
  n.rows = w.rows();
  n.cols = w.cols();
  n.param = &w;
  n.param_b = &b;
  n.attr = is_frozen(&w) || is_frozen(&b) ? 1.0 : 0.0;
  n.batch = vx.size() / w.cols();
  n.val.resize(w.rows() * n.batch);
  if (n.batch == 1) {
    simd::gemv(w.value, w.rows(), w.cols(), vx, b.value, n.val);
  } else {
    simd::gemm_nt(w.value, w.rows(), w.cols(), vx, n.batch, b.value, n.val);
  }
  return push(std::move(n));
}

Var Tape::concat(Var a, Var b) {
  auto va = vals(node(a));
  auto vb = vals(node(b));
  Node n;
  n.op = Op::concat;
  n.in0 = a.id;
  n.in1 = b.id;
  n.val.reserve(va.size() + vb.size());
  n.val.insert(n.val.end(), va.begin(), va.end());
  n.val.insert(n.val.end(), vb.begin(), vb.end());
  return push(std::move(n));
}

Var Tape::slice(Var a, std::size_t offset, std::size_t len) {
  auto va = vals(node(a));
  check(offset + len <= va.size(), "slice out of range");
  Node n;
  n.op = Op::slice;
  n.in0 = a.id;
  n.rows = offset;
  n.val.assign(va.begin() + static_cast<std::ptrdiff_t>(offset),
               va.begin() + static_cast<std::ptrdiff_t>(offset + len));
  return push(std::move(n));
}

Var Tape::concat_cols(Var a, Var b, std::size_t rows) {
  auto va = vals(node(a));
  auto vb = vals(node(b));
  check(rows > 0 && va.size() % rows == 0 && vb.size() % rows == 0, "concat_cols shape mismatch");
  const std::size_t ca = va.size() / rows, cb = vb.size() / rows;
  Node n;
  n.op = Op::concat_cols;
  n.in0 = a.id;
  n.in1 = b.id;
  n.rows = rows;
  n.cols = ca;
  n.val.reserve(va.size() + vb.size());
  for (std::size_t r = 0; r < rows; ++r) {
    n.val.insert(n.val.end(), va.begin() + static_cast<std::ptrdiff_t>(r * ca),
                 va.begin() + static_cast<std::ptrdiff_t>((r + 1) * ca));
    n.val.insert(n.val.end(), vb.begin() + static_cast<std::ptrdiff_t>(r * cb),
                 vb.begin() + static_cast<std::ptrdiff_t>((r + 1) * cb));
  }
  return push(std::move(n));
}

Var Tape::slice_cols(Var a, std::size_t rows, std::size_t offset, std::size_t len) {
  auto va = vals(node(a));
  check(rows > 0 && va.size() % rows == 0 && offset + len <= va.size() / rows,
        "slice_cols out of range");
  const std::size_t cols = va.size() / rows;
  Node n;
  n.op = Op::slice_cols;
  n.in0 = a.id;
  n.rows = rows;
  n.cols = cols;
  n.batch = offset;
  n.val.reserve(rows * len);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto first = va.begin() + static_cast<std::ptrdiff_t>(r * cols + offset);
    n.val.insert(n.val.end(), first, first + static_cast<std::ptrdiff_t>(len));
  }
  return push(std::move(n));
}

Var Tape::sum_row_groups(Var a, std::size_t cols, std::size_t group) {
  auto va = vals(node(a));
  check(cols > 0 && group > 0 && va.size() % (cols * group) == 0, "sum_row_groups shape mismatch");
  Node n;
  n.op = Op::sum_row_groups;
  n.in0 = a.id;
  n.rows = group;
  n.cols = cols;
  n.val.assign(va.size() / group, 0.0);
  for (std::size_t r = 0; r < va.size() / cols; ++r) {
    double* out = n.val.data() + (r / group) * cols;
    for (std::size_t c = 0; c < cols; ++c) out[c] += va[r * cols + c];
  }
  return push(std::move(n));
}

Var Tape::repeat_rows(Var a, std::size_t cols, std::size_t times) {
  auto va = vals(node(a));
  check(cols > 0 && times > 0 && va.size() % cols == 0, "repeat_rows shape mismatch");
  Node n;
  n.op = Op::repeat_rows;
  n.in0 = a.id;
  n.rows = times;
  n.cols = cols;
  n.val.reserve(va.size() * times);
  for (std::size_t r = 0; r < va.size() / cols; ++r) {
    const auto first = va.begin() + static_cast<std::ptrdiff_t>(r * cols);
    for (std::size_t k = 0; k < times; ++k) {
      n.val.insert(n.val.end(), first, first + static_cast<std::ptrdiff_t>(cols));
    }
  }
  return push(std::move(n));
}

#define EXPLORE_UNARY(NAME, OP, EXPR)               \
  Var Tape::NAME(Var a) {                           \
    auto va = vals(node(a));                        \
    Node n;                                         \
    n.op = OP;                                      \
    n.in0 = a.id;                                   \
    n.val.resize(va.size());                        \
    for (std::size_t i = 0; i < va.size(); ++i) {   \
      const double x = va[i];                       \
      n.val[i] = (EXPR);                            \
    }                                               \
    return push(std::move(n));                      \
  }

EXPLORE_UNARY(log, Op::log, std::log(x))
EXPLORE_UNARY(exp, Op::exp, std::exp(x))
EXPLORE_UNARY(square, Op::square, x* x)
EXPLORE_UNARY(softplus, Op::softplus, act::softplus(x))
EXPLORE_UNARY(relu, Op::relu, x > 0.0 ? x : 0.0)
EXPLORE_UNARY(tanh, Op::tanh, std::tanh(x))
EXPLORE_UNARY(lgamma, Op::lgamma, num::lgamma(x))
EXPLORE_UNARY(digamma, Op::digamma, num::digamma(x))

#undef EXPLORE_UNARY

void Tape::backward(Var out) {
  const Node& o = node(out);
  if (vals(o).size() != 1) throw std::invalid_argument("tape: backward() requires a scalar output");
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!all_finite(vals(nodes_[i]))) throw NonFiniteError(i, "non-finite forward value");
  }
  nodes_[out.id].grad[0] += 1.0;
  for (std::size_t id = out.id + 1; id-- > 0;) backprop_node(id);

  // Each parameter is scanned once, however many nodes read it.
  std::vector<const Parameter*> seen;
  auto check_param = [&seen](std::size_t id, const Parameter* p) {
    if (std::find(seen.begin(), seen.end(), p) != seen.end()) return;
    seen.push_back(p);
    if (!all_finite(p->grad)) throw NonFiniteError(id, "non-finite gradient in " + p->name());
  };
  for (std::size_t id = 0; id <= out.id; ++id) {
    const Node& n = nodes_[id];
    if (n.op == Op::parameter) check_param(id, n.param);
    if (n.op == Op::affine && n.attr == 0.0) {
      check_param(id, n.param);
      check_param(id, n.param_b);
    }
  }
}

void Tape::backprop_node(std::size_t id) {
  Node& n = nodes_[id];
  if (n.op == Op::constant || n.op == Op::parameter) return;
  const std::vector<double>& g = n.grad;
  bool any = false;
  for (double v : g) {
    if (!std::isfinite(v)) throw NonFiniteError(id, "non-finite gradient");
    any = any || v != 0.0;
  }
  if (!any) return;

  auto in_grad = [&](std::size_t k) { return grads(nodes_[k]); };
  auto in_val = [&](std::size_t k) { return vals(nodes_[k]); };

  switch (n.op) {
    case Op::add: {
      simd::axpy(1.0, g, in_grad(n.in0));
      simd::axpy(1.0, g, in_grad(n.in1));
      break;
    }
    case Op::sub: {
      simd::axpy(1.0, g, in_grad(n.in0));
      simd::axpy(-1.0, g, in_grad(n.in1));
      break;
    }
    case Op::mul: {
      auto ga = in_grad(n.in0);
      auto va = in_val(n.in0);
      auto vb = in_val(n.in1);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
      auto gb = in_grad(n.in1);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
      break;
    }
    case Op::scale:
      simd::axpy(n.attr, g, in_grad(n.in0));
      break;
    case Op::add_scalar:
      simd::axpy(1.0, g, in_grad(n.in0));
      break;
    case Op::neg:
      simd::axpy(-1.0, g, in_grad(n.in0));
      break;
    case Op::broadcast: {
      double s = 0.0;
      for (double v : g) s += v;
      in_grad(n.in0)[0] += s;
      break;
    }
    case Op::sum: {
      auto ga = in_grad(n.in0);
      for (double& v : ga) v += g[0];
      break;
    }
    case Op::dot: {
      simd::axpy(g[0], in_val(n.in1), in_grad(n.in0));
      simd::axpy(g[0], in_val(n.in0), in_grad(n.in1));
      break;
    }
    case Op::matvec: {
      if (nodes_[n.in0].op != Op::constant) {
        simd::ger_acc(in_grad(n.in0), n.rows, n.cols, g, in_val(n.in1));
      }
      if (nodes_[n.in1].op != Op::constant) {
        simd::gemv_t_acc(in_val(n.in0), n.rows, n.cols, g, in_grad(n.in1));
      }
      break;
    }
    case Op::affine: {
      if (n.batch == 1) {
        if (n.attr == 0.0) {
          simd::ger_acc(n.param->grad, n.rows, n.cols, g, in_val(n.in0));
          simd::axpy(1.0, g, n.param_b->grad);
        }
        if (nodes_[n.in0].op != Op::constant) {
          simd::gemv_t_acc(n.param->value, n.rows, n.cols, g, in_grad(n.in0));
        }
        break;
      }
      if (n.attr == 0.0) {
        simd::gemm_tn_acc(n.param->grad, n.rows, n.cols, g, in_val(n.in0), n.batch);
        for (std::size_t i = 0; i < n.batch; ++i) {
          simd::axpy(1.0, std::span<const double>(g).subspan(i * n.rows, n.rows), n.param_b->grad);
        }
      }
      if (nodes_[n.in0].op != Op::constant) {
        simd::gemm_nn_acc(n.param->value, n.rows, n.cols, g, n.batch, in_grad(n.in0));
      }
      break;
    }
    case Op::concat_cols: {
      auto ga = in_grad(n.in0);
      auto gb = in_grad(n.in1);
      const std::size_t ca = n.cols, cb = gb.size() / n.rows;
      for (std::size_t r = 0; r < n.rows; ++r) {
        const double* src = g.data() + r * (ca + cb);
        for (std::size_t c = 0; c < ca; ++c) ga[r * ca + c] += src[c];
        for (std::size_t c = 0; c < cb; ++c) gb[r * cb + c] += src[ca + c];
      }
      break;
    }
    case Op::slice_cols: {
      auto ga = in_grad(n.in0);
      const std::size_t len = g.size() / n.rows;
      for (std::size_t r = 0; r < n.rows; ++r) {
        for (std::size_t c = 0; c < len; ++c) ga[r * n.cols + n.batch + c] += g[r * len + c];
      }
      break;
    }
    case Op::sum_row_groups: {
      auto ga = in_grad(n.in0);
      for (std::size_t r = 0; r < ga.size() / n.cols; ++r) {
        const double* src = g.data() + (r / n.rows) * n.cols;
        for (std::size_t c = 0; c < n.cols; ++c) ga[r * n.cols + c] += src[c];
      }
      break;
    }
    case Op::repeat_rows: {
      auto ga = in_grad(n.in0);
      for (std::size_t r = 0; r < g.size() / n.cols; ++r) {
        double* dst = ga.data() + (r / n.rows) * n.cols;
        for (std::size_t c = 0; c < n.cols; ++c) dst[c] += g[r * n.cols + c];
      }
      break;
    }
    case Op::concat: {
      auto ga = in_grad(n.in0);
      auto gb = in_grad(n.in1);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[ga.size() + i];
      break;
    }
    case Op::slice: {
      auto ga = in_grad(n.in0);
      for (std::size_t i = 0; i < g.size(); ++i) ga[n.rows + i] += g[i];
      break;
    }
    case Op::log: {
      auto ga = in_grad(n.in0);
      auto va = in_val(n.in0);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / va[i];
      break;
    }
    case Op::exp: {
      auto ga = in_grad(n.in0);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.val[i];
      break;
    }
    case Op::square: {
      auto ga = in_grad(n.in0);
      auto va = in_val(n.in0);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += 2.0 * g[i] * va[i];
      break;
    }
    case Op::softplus: {
      auto ga = in_grad(n.in0);
      auto va = in_val(n.in0);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * act::sigmoid(va[i]);
      break;
    }
    case Op::relu: {
      auto ga = in_grad(n.in0);
      auto va = in_val(n.in0);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (va[i] > 0.0) ga[i] += g[i];
      }
      break;
    }
    case Op::tanh: {
      auto ga = in_grad(n.in0);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - n.val[i] * n.val[i]);
      break;
    }
    case Op::lgamma: {
      auto ga = in_grad(n.in0);
      auto va = in_val(n.in0);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * num::digamma(va[i]);
      break;
    }
    case Op::digamma: {
      auto ga = in_grad(n.in0);
      auto va = in_val(n.in0);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * num::trigamma(va[i]);
      break;
    }
    case Op::constant:
    case Op::parameter:
      break;
  }
}

Var operator+(Var a, Var b) { return a.tape->add(a, b); }
Var operator-(Var a, Var b) { return a.tape->sub(a, b); }
Var operator*(Var a, Var b) { return a.tape->mul(a, b); }
Var operator*(Var a, double c) { return a.tape->scale(a, c); }
Var operator*(double c, Var a) { return a.tape->scale(a, c); }
Var operator+(Var a, double c) { return a.tape->add_scalar(a, c); }
Var operator-(Var a) { return a.tape->neg(a); }

}  // namespace explore::diff
