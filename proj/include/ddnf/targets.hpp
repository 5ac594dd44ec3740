#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ddnf/autodiff.hpp"
#include "ddnf/linalg.hpp"
#include "ddnf/rng.hpp"

namespace ddnf {

// ---------------------------------------------------------------------------
// Base distribution

/// Diagonal Gaussian q0 = N(mu, diag(exp(log_sigma))^2).
struct BaseDistribution {
  int dim = 2;
  Vector mu;
  Vector log_sigma;
  bool learnable = false;

  static BaseDistribution standard(int dim, bool learnable = false);
  double log_density(std::span<const double> z) const;
  /// Reparameterized draw mu + sigma * eps.
  Vector transform(std::span<const double> eps) const;
  Vector sample(Rng& rng) const;
};

inline constexpr double kHalfLog2Pi = 0.91893853320467274178;

// ---------------------------------------------------------------------------
// Special functions

inline constexpr double kLanczosG = 7.0;
inline constexpr double kLanczosCoeff[9] = {
    0.99999999999980993,  676.5203681218851,     -1259.1392167224028,
    771.32342877765313,   -176.61502916214059,   12.507343278686905,
    -0.13857109526572012, 9.9843695780195716e-6, 1.5056327351493116e-7};

/// log Gamma(x) for x > 0 by the Lanczos approximation (g = 7, 9 terms).
/// Arguments below 1/2 are shifted up with Gamma(x) = Gamma(x + 1) / x.
template <class T>
T log_gamma(const T& x) {
  using ad::value_of;
  using std::log;
  const double xv = value_of(x);
  if (!(xv > 0.0)) {
    throw NumericalError("log_gamma: argument must be positive, got " + std::to_string(xv));
  }
  if (xv < 0.5) return log_gamma(x + 1.0) - log(x);
  const T xm = x - 1.0;
  T series(kLanczosCoeff[0]);
  for (int i = 1; i < 9; ++i) series = series + kLanczosCoeff[i] / (xm + static_cast<double>(i));
  const T t = xm + (kLanczosG + 0.5);
  return kHalfLog2Pi + (xm + 0.5) * log(t) - t + log(series);
}

template <class T>
T log_beta(const T& a, const T& b) {
  return log_gamma(a) + log_gamma(b) - log_gamma(a + b);
}

/// log(1 + e^x) without overflow.
template <class T>
T softplus(const T& x) {
  using ad::value_of;
  using std::exp;
  using std::log;
  if (value_of(x) > 0.0) return x + log(1.0 + exp(-x));
  return log(1.0 + exp(x));
}

// ---------------------------------------------------------------------------
// Toy energies

enum class EnergyName { u1, u2 };
enum class RingNorm { squared, plain };

EnergyName parse_energy_name(const std::string& s);
const char* to_string(EnergyName name);

/// U(z) for the two bimodal ring densities, p(z) proportional to exp(-U(z)).
template <class T>
T energy(EnergyName name, std::span<const T> z, RingNorm ring = RingNorm::squared) {
  using ad::value_of;
  using std::exp;
  using std::log;
  using std::sqrt;
  if (z.size() != 2) throw ConfigError("energy targets are two-dimensional");
  const double radius_const = name == EnergyName::u1 ? 4.0 : 2.0;
  T r2 = z[0] * z[0] + z[1] * z[1];
  T r = ring == RingNorm::squared ? r2 : sqrt(r2);
  const T ring_term = 0.5 * ((r - radius_const) / 0.4) * ((r - radius_const) / 0.4);
  const T a = -0.5 * ((z[0] - 2.0) / 0.8) * ((z[0] - 2.0) / 0.8);
  const T b = -0.5 * ((z[0] + 2.0) / 0.8) * ((z[0] + 2.0) / 0.8);
  // log(e^a + e^b) shifted by the larger exponent.
  const bool a_big = value_of(a) >= value_of(b);
  const T& hi = a_big ? a : b;
  const T& lo = a_big ? b : a;
  const T lse = hi + log(1.0 + exp(lo - hi));
  return ring_term - lse;
}

// ---------------------------------------------------------------------------
// Beta-binomial over-dispersion model

struct BetaBinomialRecord {
  std::int64_t n = 0;
  std::int64_t y = 0;
};

struct BetaBinomialModel {
  std::vector<BetaBinomialRecord> data;
  void validate() const;
};

/// log of the improper prior 1 / (m (1 - m) (1 + L)^2).
double betabinom_log_prior(double m, double big_l);

/// Sum over records of log C(n, y) + log B(Lm + y, L(1 - m) + n - y) - log B(Lm, L(1 - m)).
template <class T>
T betabinom_log_likelihood(const T& m, const T& big_l, const BetaBinomialModel& model) {
  const T a = big_l * m;
  const T b = big_l * (1.0 - m);
  const T base = log_beta(a, b);
  T total(0.0);
  for (const BetaBinomialRecord& r : model.data) {
    const double n = static_cast<double>(r.n);
    const double y = static_cast<double>(r.y);
    const double log_choose = std::lgamma(n + 1.0) - std::lgamma(y + 1.0) - std::lgamma(n - y + 1.0);
    total = total + log_choose + log_beta(a + y, b + (n - y)) - base;
  }
  return total;
}

/// Unnormalized log posterior on the unconstrained point z = (logit m, log L),
/// including the log-Jacobian log(m (1 - m)) + log L of that transform.
template <class T>
T betabinom_log_unnorm_posterior(std::span<const T> z, const BetaBinomialModel& model) {
  using std::exp;
  if (z.size() != 2) throw ConfigError("beta-binomial posterior is two-dimensional");
  if (model.data.empty()) throw ConfigError("beta-binomial model has no data records");
  const T m = exp(-softplus(-z[0]));
  const T big_l = exp(z[1]);
  // The log m and log(1 - m) terms of prior and Jacobian cancel exactly.
  const T prior_and_jac = z[1] - 2.0 * softplus(z[1]);
  return prior_and_jac + betabinom_log_likelihood(m, big_l, model);
}

/// (m, L) from the unconstrained coordinates.
std::pair<double, double> betabinom_constrain(std::span<const double> z);

// ---------------------------------------------------------------------------
// Target interface used by the objectives

class TargetDensity {
 public:
  virtual ~TargetDensity() = default;
  virtual int dim() const = 0;
  virtual double log_unnorm(std::span<const double> z) const = 0;
  virtual ad::Var log_unnorm(std::span<const ad::Var> z) const = 0;
};

class EnergyTarget final : public TargetDensity {
 public:
  explicit EnergyTarget(EnergyName name, RingNorm ring = RingNorm::squared)
      : name_(name), ring_(ring) {}
  int dim() const override { return 2; }
  double log_unnorm(std::span<const double> z) const override {
    return -energy<double>(name_, z, ring_);
  }
  ad::Var log_unnorm(std::span<const ad::Var> z) const override {
    return -energy<ad::Var>(name_, z, ring_);
  }
  EnergyName name() const { return name_; }

 private:
  EnergyName name_;
  RingNorm ring_;
};

class BetaBinomialTarget final : public TargetDensity {
 public:
  explicit BetaBinomialTarget(BetaBinomialModel model);
  int dim() const override { return 2; }
  double log_unnorm(std::span<const double> z) const override {
    return betabinom_log_unnorm_posterior<double>(z, model_);
  }
  ad::Var log_unnorm(std::span<const ad::Var> z) const override {
    return betabinom_log_unnorm_posterior<ad::Var>(z, model_);
  }
  const BetaBinomialModel& model() const { return model_; }

 private:
  BetaBinomialModel model_;
};

// ---------------------------------------------------------------------------
// Planar flow baseline: f(z) = z + u_hat tanh(w^T z + b)

struct PlanarLayer {
  Vector u;
  Vector w;
  double b = 0.0;
};

struct PlanarFlow {
  int dim = 2;
  std::vector<PlanarLayer> layers;

  std::size_t param_count() const { return layers.size() * (2 * dim + 1); }
  /// Flat layout per layer: u (d), w (d), b.
  Vector flat() const;
  static PlanarFlow from_flat(int dim, std::span<const double> values);
};

PlanarFlow init_planar(int dim, int layers, std::uint64_t seed);

/// u + (m(w^T u) - w^T u) w / |w|^2 with m(x) = -1 + log(1 + e^x).
template <class T>
std::vector<T> planar_constrain(std::span<const T> u, std::span<const T> w) {
  using ad::value_of;
  if (u.size() != w.size()) throw ConfigError("planar: u and w differ in dimension");
  T wu(0.0);
  T ww(0.0);
  double ww_value = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    wu = wu + w[i] * u[i];
    ww = ww + w[i] * w[i];
    ww_value += value_of(w[i]) * value_of(w[i]);
  }
  if (ww_value == 0.0) throw ConfigError("planar: w must be nonzero");
  const T coef = (softplus(wu) - 1.0 - wu) / ww;
  std::vector<T> out(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) out[i] = u[i] + coef * w[i];
  return out;
}

template <class T>
struct PlanarStep {
  std::vector<T> z;
  T logdet;
};

/// One planar layer with params = (u, w, b). With `constrain` the raw u is
/// first mapped through planar_constrain (the training parameterization);
/// otherwise u is used as given and must already satisfy w^T u >= -1.
template <class T>
PlanarStep<T> planar_apply(std::span<const T> params, std::span<const T> z, bool constrain) {
  using ad::value_of;
  using std::log;
  using std::tanh;
  const std::size_t d = z.size();
  const std::span<const T> u = params.subspan(0, d);
  const std::span<const T> w = params.subspan(d, d);
  const T& b = params[2 * d];
  const std::vector<T> uh = constrain ? planar_constrain<T>(u, w) : std::vector<T>(u.begin(), u.end());
  T act = b;
  for (std::size_t i = 0; i < d; ++i) act = act + w[i] * z[i];
  const T h = tanh(act);
  const T hp = 1.0 - h * h;
  T wu(0.0);
  for (std::size_t i = 0; i < d; ++i) wu = wu + w[i] * uh[i];
  const T det = 1.0 + hp * wu;
  PlanarStep<T> out{std::vector<T>(d), value_of(det) < 0.0 ? log(-det) : log(det)};
  for (std::size_t i = 0; i < d; ++i) out.z[i] = z[i] + uh[i] * h;
  return out;
}

/// Applies a layer whose u is already constrained; returns (z', log|det|).
std::pair<Vector, double> planar_forward(const PlanarLayer& layer, std::span<const double> z);

}  // namespace ddnf
