#include "ddnf/autodiff.hpp"

#include <array>
#include <cassert>

namespace ddnf::ad {
namespace {

thread_local Tape* g_active = nullptr;

Tape& require_tape() {
  if (g_active == nullptr) throw Error("autodiff: no active tape on this thread");
  return *g_active;
}

}  // namespace

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::input: return "input";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::div: return "div";
    case OpKind::neg: return "neg";
    case OpKind::tanh: return "tanh";
    case OpKind::exp: return "exp";
    case OpKind::log: return "log";
    case OpKind::square: return "square";
    case OpKind::sqrt: return "sqrt";
    case OpKind::dot: return "dot";
    case OpKind::sum: return "sum";
  }
  return "unknown";
}

void Tape::check_forward(OpKind kind, double value) const {
  if (!std::isfinite(value)) {
    throw NumericalError(std::string("non-finite value in forward pass at '") + op_name(kind) +
                         "' node");
  }
}

std::uint32_t Tape::push(OpKind kind, double value, std::span<const std::uint32_t> nodes,
                         std::span<const double> partials) {
  assert(nodes.size() == partials.size());
  check_forward(kind, value);
  values_.push_back(value);
  kinds_.push_back(kind);
  edge_node_.insert(edge_node_.end(), nodes.begin(), nodes.end());
  edge_partial_.insert(edge_partial_.end(), partials.begin(), partials.end());
  edge_end_.push_back(static_cast<std::uint32_t>(edge_node_.size()));
  return static_cast<std::uint32_t>(values_.size() - 1);
}

std::uint32_t Tape::push1(OpKind kind, double value, std::uint32_t a, double da) {
  check_forward(kind, value);
  values_.push_back(value);
  kinds_.push_back(kind);
  edge_node_.push_back(a);
  edge_partial_.push_back(da);
  edge_end_.push_back(static_cast<std::uint32_t>(edge_node_.size()));
  return static_cast<std::uint32_t>(values_.size() - 1);
}

std::uint32_t Tape::push2(OpKind kind, double value, std::uint32_t a, double da, std::uint32_t b,
                          double db) {
  check_forward(kind, value);
  values_.push_back(value);
  kinds_.push_back(kind);
  edge_node_.push_back(a);
  edge_partial_.push_back(da);
  edge_node_.push_back(b);
  edge_partial_.push_back(db);
  edge_end_.push_back(static_cast<std::uint32_t>(edge_node_.size()));
  return static_cast<std::uint32_t>(values_.size() - 1);
}

const std::vector<double>& Tape::backward(std::uint32_t output) {
  adjoints_.assign(values_.size(), 0.0);
  adjoints_[output] = 1.0;
  for (std::uint32_t i = output + 1; i-- > 0;) {
    const double a = adjoints_[i];
    if (a == 0.0) continue;
    if (!std::isfinite(a)) {
      throw NumericalError(std::string("non-finite adjoint in backward pass at '") +
                           op_name(kinds_[i]) + "' node");
    }
    const std::uint32_t begin = i == 0 ? 0 : edge_end_[i - 1];
    const std::uint32_t end = edge_end_[i];
    for (std::uint32_t e = begin; e < end; ++e) adjoints_[edge_node_[e]] += a * edge_partial_[e];
  }
  return adjoints_;
}

void Tape::clear() {
  values_.clear();
  kinds_.clear();
  edge_end_.clear();
  edge_node_.clear();
  edge_partial_.clear();
}

Tape* active_tape() { return g_active; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active) { g_active = &tape; }
TapeScope::~TapeScope() { g_active = previous_; }

Var Var::input(double value) {
  Tape& tape = require_tape();
  return Var(value, tape.push(OpKind::input, value, {}, {}));
}

Var unary(OpKind kind, double value, const Var& a, double da) {
  if (!a.on_tape()) {
    if (!std::isfinite(value)) {
      throw NumericalError(std::string("non-finite value in forward pass at '") +
                           op_name(kind) + "' node");
    }
    return Var(value);
  }
  return Var(value, require_tape().push1(kind, value, a.index_, da));
}

Var binary(OpKind kind, double value, const Var& a, double da, const Var& b, double db) {
  if (!a.on_tape()) return unary(kind, value, b, db);
  if (!b.on_tape()) return unary(kind, value, a, da);
  return Var(value, require_tape().push2(kind, value, a.index_, da, b.index_, db));
}

Var nary(OpKind kind, double value, std::span<const Var> operands,
         std::span<const double> partials) {
  // Small fixed buffers cover the MLP widths used here; fall back to the heap.
  std::array<std::uint32_t, 32> node_buf;
  std::array<double, 32> partial_buf;
  std::vector<std::uint32_t> node_vec;
  std::vector<double> partial_vec;
  std::uint32_t* nodes = node_buf.data();
  double* parts = partial_buf.data();
  if (operands.size() > node_buf.size()) {
    node_vec.resize(operands.size());
    partial_vec.resize(operands.size());
    nodes = node_vec.data();
    parts = partial_vec.data();
  }
  std::size_t n = 0;
  for (std::size_t i = 0; i < operands.size(); ++i) {
    if (!operands[i].on_tape()) continue;
    nodes[n] = operands[i].index_;
    parts[n] = partials[i];
    ++n;
  }
  if (n == 0) return unary(kind, value, Var(), 0.0);
  return Var(value, require_tape().push(kind, value, std::span<const std::uint32_t>(nodes, n),
                                        std::span<const double>(parts, n)));
}

Var& Var::operator+=(const Var& o) { return *this = *this + o; }
Var& Var::operator-=(const Var& o) { return *this = *this - o; }
Var& Var::operator*=(const Var& o) { return *this = *this * o; }
Var& Var::operator/=(const Var& o) { return *this = *this / o; }

Var dot(std::span<const Var> a, std::span<const Var> b) { return dot_plus(a, b, Var(0.0)); }

Var dot_plus(std::span<const Var> a, std::span<const Var> b, const Var& bias) {
  if (a.size() != b.size()) throw ConfigError("dot: operand lengths differ");
  const std::size_t n = a.size();
  std::array<std::uint32_t, 65> node_buf;
  std::array<double, 65> partial_buf;
  std::vector<std::uint32_t> node_vec;
  std::vector<double> partial_vec;
  std::uint32_t* nodes = node_buf.data();
  double* parts = partial_buf.data();
  if (2 * n + 1 > node_buf.size()) {
    node_vec.resize(2 * n + 1);
    partial_vec.resize(2 * n + 1);
    nodes = node_vec.data();
    parts = partial_vec.data();
  }
  std::size_t m = 0;
  double value = bias.value();
  for (std::size_t i = 0; i < n; ++i) {
    value += a[i].value() * b[i].value();
    if (a[i].on_tape()) {
      nodes[m] = a[i].index();
      parts[m++] = b[i].value();
    }
    if (b[i].on_tape()) {
      nodes[m] = b[i].index();
      parts[m++] = a[i].value();
    }
  }
  if (bias.on_tape()) {
    nodes[m] = bias.index();
    parts[m++] = 1.0;
  }
  if (m == 0) return unary(OpKind::dot, value, Var(), 0.0);
  Tape* tape = active_tape();
  if (tape == nullptr) throw Error("autodiff: no active tape on this thread");
  return Var::from_node(value, tape->push(OpKind::dot, value,
                                          std::span<const std::uint32_t>(nodes, m),
                                          std::span<const double>(parts, m)));
}

Var sum(std::span<const Var> a) {
  double value = 0.0;
  for (const Var& x : a) value += x.value();
  std::vector<double> ones(a.size(), 1.0);
  return nary(OpKind::sum, value, a, ones);
}

}  // namespace ddnf::ad
