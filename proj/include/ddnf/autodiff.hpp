#pragma once

// Reverse-mode scalar tape (Var) and forward-mode dual numbers (Dual).
//
// A Var holds its value plus the index of the tape node that produced it.
// Vars built from plain doubles carry no node and act as constants, so
// mixed expressions only record edges for operands that are on the tape.
// Each node stores the local partial derivative of every edge at creation
// time; backward() is then a single reverse sweep of multiply-accumulates.

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "ddnf/error.hpp"

namespace ddnf::ad {

enum class OpKind : std::uint8_t {
  input,
  add,
  sub,
  mul,
  div,
  neg,
  tanh,
  exp,
  log,
  square,
  sqrt,
  dot,
  sum,
};

const char* op_name(OpKind kind);

class Tape {
 public:
  static constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();

  std::uint32_t push(OpKind kind, double value, std::span<const std::uint32_t> nodes,
                     std::span<const double> partials);
  std::uint32_t push1(OpKind kind, double value, std::uint32_t a, double da);
  std::uint32_t push2(OpKind kind, double value, std::uint32_t a, double da, std::uint32_t b,
                      double db);

  /// Reverse sweep seeded with d(output)/d(output) = 1. The returned adjoints
  /// stay valid until the next call to backward() or clear().
  const std::vector<double>& backward(std::uint32_t output);

  std::size_t size() const { return values_.size(); }
  double value(std::uint32_t node) const { return values_[node]; }
  OpKind kind(std::uint32_t node) const { return kinds_[node]; }
  void clear();

 private:
  void check_forward(OpKind kind, double value) const;

  std::vector<double> values_;
  std::vector<OpKind> kinds_;
  std::vector<std::uint32_t> edge_end_;
  std::vector<std::uint32_t> edge_node_;
  std::vector<double> edge_partial_;
  std::vector<double> adjoints_;
};

/// The tape new Vars are recorded on (per thread).
Tape* active_tape();

/// Makes `tape` the active tape for the current thread until destroyed.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

class Var {
 public:
  Var() = default;
  Var(double value) : value_(value) {}  // NOLINT: constants convert implicitly

  static Var input(double value);
  /// Wraps an existing tape node; used by kernels that push nodes directly.
  static Var from_node(double value, std::uint32_t index) { return Var(value, index); }

  double value() const { return value_; }
  std::uint32_t index() const { return index_; }
  bool on_tape() const { return index_ != Tape::kNone; }

  Var& operator+=(const Var& o);
  Var& operator-=(const Var& o);
  Var& operator*=(const Var& o);
  Var& operator/=(const Var& o);

 private:
  Var(double value, std::uint32_t index) : value_(value), index_(index) {}

  friend Var unary(OpKind, double, const Var&, double);
  friend Var binary(OpKind, double, const Var&, double, const Var&, double);
  friend Var nary(OpKind, double, std::span<const Var>, std::span<const double>);

  double value_ = 0.0;
  std::uint32_t index_ = Tape::kNone;
};

Var unary(OpKind kind, double value, const Var& a, double da);
Var binary(OpKind kind, double value, const Var& a, double da, const Var& b, double db);
Var nary(OpKind kind, double value, std::span<const Var> operands, std::span<const double> partials);

inline Var operator+(const Var& a, const Var& b) {
  return binary(OpKind::add, a.value() + b.value(), a, 1.0, b, 1.0);
}
inline Var operator-(const Var& a, const Var& b) {
  return binary(OpKind::sub, a.value() - b.value(), a, 1.0, b, -1.0);
}
inline Var operator*(const Var& a, const Var& b) {
  return binary(OpKind::mul, a.value() * b.value(), a, b.value(), b, a.value());
}
inline Var operator/(const Var& a, const Var& b) {
  const double inv = 1.0 / b.value();
  const double q = a.value() * inv;
  return binary(OpKind::div, q, a, inv, b, -q * inv);
}
inline Var operator-(const Var& a) { return unary(OpKind::neg, -a.value(), a, -1.0); }

inline Var operator+(const Var& a, double b) { return a + Var(b); }
inline Var operator+(double a, const Var& b) { return Var(a) + b; }
inline Var operator-(const Var& a, double b) { return a - Var(b); }
inline Var operator-(double a, const Var& b) { return Var(a) - b; }
inline Var operator*(const Var& a, double b) { return a * Var(b); }
inline Var operator*(double a, const Var& b) { return Var(a) * b; }
inline Var operator/(const Var& a, double b) { return a / Var(b); }
inline Var operator/(double a, const Var& b) { return Var(a) / b; }

inline Var tanh(const Var& a) {
  const double t = std::tanh(a.value());
  return unary(OpKind::tanh, t, a, 1.0 - t * t);
}
inline Var exp(const Var& a) {
  const double e = std::exp(a.value());
  return unary(OpKind::exp, e, a, e);
}
inline Var log(const Var& a) {
  return unary(OpKind::log, std::log(a.value()), a, 1.0 / a.value());
}
inline Var square(const Var& a) {
  return unary(OpKind::square, a.value() * a.value(), a, 2.0 * a.value());
}
/// sqrt with the subgradient 0 at the origin, so Euclidean norms of exactly
/// zero residuals stay differentiable.
inline Var sqrt(const Var& a) {
  const double s = std::sqrt(a.value());
  return unary(OpKind::sqrt, s, a, s > 0.0 ? 0.5 / s : 0.0);
}

Var dot(std::span<const Var> a, std::span<const Var> b);
/// bias + sum_i a_i * b_i recorded as one node.
Var dot_plus(std::span<const Var> a, std::span<const Var> b, const Var& bias);
Var sum(std::span<const Var> a);

inline double square(double x) { return x * x; }

inline double value_of(double x) { return x; }
inline double value_of(const Var& x) { return x.value(); }

// ---------------------------------------------------------------------------
// Forward mode

template <class T>
struct Dual {
  T val{};
  T tan{};
};

template <class T>
double value_of(const Dual<T>& x) {
  return value_of(x.val);
}

template <class T>
Dual<T> operator+(const Dual<T>& a, const Dual<T>& b) {
  return {a.val + b.val, a.tan + b.tan};
}
template <class T>
Dual<T> operator-(const Dual<T>& a, const Dual<T>& b) {
  return {a.val - b.val, a.tan - b.tan};
}
template <class T>
Dual<T> operator*(const Dual<T>& a, const Dual<T>& b) {
  return {a.val * b.val, a.tan * b.val + a.val * b.tan};
}
template <class T>
Dual<T> operator/(const Dual<T>& a, const Dual<T>& b) {
  const T q = a.val / b.val;
  return {q, (a.tan - q * b.tan) / b.val};
}
template <class T>
Dual<T> operator-(const Dual<T>& a) {
  return {-a.val, -a.tan};
}

// Mixed with the underlying scalar (for example Dual<Var> with Var weights).
template <class T>
  requires(!std::is_same_v<T, double>)
Dual<T> operator+(const Dual<T>& a, const T& b) {
  return {a.val + b, a.tan};
}
template <class T>
  requires(!std::is_same_v<T, double>)
Dual<T> operator*(const Dual<T>& a, const T& b) {
  return {a.val * b, a.tan * b};
}
template <class T>
  requires(!std::is_same_v<T, double>)
Dual<T> operator*(const T& a, const Dual<T>& b) {
  return {a * b.val, a * b.tan};
}

template <class T>
Dual<T> operator+(const Dual<T>& a, double b) {
  return {a.val + b, a.tan};
}
template <class T>
Dual<T> operator-(const Dual<T>& a, double b) {
  return {a.val - b, a.tan};
}
template <class T>
Dual<T> operator-(double a, const Dual<T>& b) {
  return {a - b.val, -b.tan};
}
template <class T>
Dual<T> operator*(const Dual<T>& a, double b) {
  return {a.val * b, a.tan * b};
}
template <class T>
Dual<T> operator*(double a, const Dual<T>& b) {
  return {a * b.val, a * b.tan};
}

template <class T>
Dual<T> tanh(const Dual<T>& a) {
  using std::tanh;
  const T t = tanh(a.val);
  return {t, (1.0 - t * t) * a.tan};
}
template <class T>
Dual<T> exp(const Dual<T>& a) {
  using std::exp;
  const T e = exp(a.val);
  return {e, e * a.tan};
}
template <class T>
Dual<T> log(const Dual<T>& a) {
  using std::log;
  return {log(a.val), a.tan / a.val};
}
template <class T>
Dual<T> square(const Dual<T>& a) {
  return {a.val * a.val, 2.0 * a.val * a.tan};
}

// ---------------------------------------------------------------------------
// Drivers

/// Gradient of a scalar expression. `f` receives the inputs as Vars on a
/// fresh tape and returns the output Var.
template <class F>
std::vector<double> grad(F&& f, std::span<const double> x, double* value_out = nullptr) {
  Tape tape;
  TapeScope scope(tape);
  std::vector<Var> inputs;
  inputs.reserve(x.size());
  for (double xi : x) inputs.push_back(Var::input(xi));
  const Var y = f(std::span<const Var>(inputs));
  if (value_out != nullptr) *value_out = y.value();
  std::vector<double> g(x.size(), 0.0);
  if (!y.on_tape()) return g;
  const auto& adj = tape.backward(y.index());
  for (std::size_t i = 0; i < x.size(); ++i) g[i] = adj[inputs[i].index()];
  return g;
}

/// Directional derivative (J g)(z) * w with one dual-number evaluation of g.
/// `g` maps a span of Dual<double> to a std::vector<Dual<double>>.
template <class G>
std::vector<double> jvp(G&& g, std::span<const double> z, std::span<const double> w) {
  if (z.size() != w.size()) {
    throw ConfigError("jvp: direction has dimension " + std::to_string(w.size()) +
                      ", point has " + std::to_string(z.size()));
  }
  std::vector<Dual<double>> in(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) in[i] = {z[i], w[i]};
  const std::vector<Dual<double>> out = g(std::span<const Dual<double>>(in));
  if (out.size() != z.size()) {
    throw ConfigError("jvp: function output dimension differs from input dimension");
  }
  std::vector<double> r(out.size());
  for (std::size_t i = 0; i < out.size(); ++i) r[i] = out[i].tan;
  return r;
}

}  // namespace ddnf::ad
