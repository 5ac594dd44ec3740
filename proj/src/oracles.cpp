#include "ddnf/oracles.hpp"

#include <algorithm>
#include <cmath>

#include "ddnf/rng.hpp"

namespace ddnf {
namespace {

// Dormand-Prince tableau.
constexpr double kC[7] = {0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
constexpr double kA[7][6] = {
    {},
    {1.0 / 5},
    {3.0 / 40, 9.0 / 40},
    {44.0 / 45, -56.0 / 15, 32.0 / 9},
    {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729},
    {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656},
    {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84},
};
constexpr double kB5[7] = {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84, 0.0};
constexpr double kB4[7] = {5179.0 / 57600,    0.0,           7571.0 / 16695, 393.0 / 640,
                           -92097.0 / 339200, 187.0 / 2100, 1.0 / 40};

constexpr double kSafety = 0.9;
constexpr double kMinFactor = 0.2;
constexpr double kMaxFactor = 5.0;
constexpr double kMinStep = 1e-14;

}  // namespace

RkResult rk45_integrate(const OdeRhs& rhs, std::span<const double> z0, double t1, double rtol,
                        double atol) {
  if (!(rtol > 0.0) || !(atol > 0.0)) throw ConfigError("rk45: tolerances must be positive");
  if (!(t1 >= 0.0)) throw ConfigError("rk45: end time must be non-negative");
  const std::size_t n = z0.size();
  RkResult res;
  res.z_final.assign(z0.begin(), z0.end());
  Vector& y = res.z_final;
  double t = 0.0;
  double h = t1;
  std::vector<Vector> k(7, Vector(n));
  Vector tmp(n), y5(n);
  while (t < t1) {
    h = std::min(h, t1 - t);
    if (h < kMinStep) throw NumericalError("rk45: step size underflow (stiff problem?)");
    rhs(y, k[0]);
    for (int s = 1; s < 7; ++s) {
      for (std::size_t i = 0; i < n; ++i) {
        double acc = y[i];
        for (int j = 0; j < s; ++j) acc += h * kA[s][j] * k[j][i];
        tmp[i] = acc;
      }
      rhs(tmp, k[s]);
    }
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double hi = y[i], e = 0.0;
      for (int s = 0; s < 7; ++s) {
        hi += h * kB5[s] * k[s][i];
        e += h * (kB5[s] - kB4[s]) * k[s][i];
      }
      y5[i] = hi;
      const double sc = atol + rtol * std::max(std::abs(y[i]), std::abs(hi));
      err = std::max(err, std::abs(e) / sc);
    }
    if (!std::isfinite(err)) throw NumericalError("rk45: non-finite state");
    if (err <= 1.0) {
      t = (t1 - t - h <= 0.0) ? t1 : t + h;
      y = y5;
      ++res.steps_accepted;
      res.max_error_estimate = std::max(res.max_error_estimate, err);
    } else {
      ++res.steps_rejected;
    }
    const double factor =
        err == 0.0 ? kMaxFactor : std::clamp(kSafety * std::pow(err, -0.2), kMinFactor, kMaxFactor);
    h *= factor;
  }
  return res;
}

RkResult rk45_integrate(const VelocityField& field, std::span<const double> z0, double t1,
                        double rtol, double atol, std::span<const double> context) {
  check_inputs(field.spec, z0.size(), context.size());
  const Vector ctx(context.begin(), context.end());
  return rk45_integrate(
      [&](std::span<const double> z, std::span<double> dz) {
        const Vector v = eval(field, z, ctx);
        std::copy(v.begin(), v.end(), dz.begin());
      },
      z0, t1, rtol, atol);
}

SignedLogDet exact_cell_logdet(const Mat& j, double dt) {
  Mat a = Mat::identity(j.rows);
  for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += dt * j.data[i];
  const auto r = lu_log_abs_det(std::move(a));
  return {r.log_abs, r.sign};
}

Mat matrix_exp(const Mat& a) {
  if (a.rows != a.cols) throw ConfigError("matrix_exp: matrix must be square");
  const std::size_t n = a.rows;
  double norm1 = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    double col = 0.0;
    for (std::size_t r = 0; r < n; ++r) col += std::abs(a(r, c));
    norm1 = std::max(norm1, col);
  }
  int squarings = 0;
  if (norm1 > 0.5) squarings = static_cast<int>(std::ceil(std::log2(norm1 / 0.5)));
  Mat scaled = a;
  const double s = std::ldexp(1.0, -squarings);
  for (double& x : scaled.data) x *= s;
  Mat result = Mat::identity(n);
  Mat term = Mat::identity(n);
  for (int k = 1; k <= 18; ++k) {
    term = matmul(term, scaled);
    for (double& x : term.data) x /= k;
    for (std::size_t i = 0; i < result.data.size(); ++i) result.data[i] += term.data[i];
  }
  for (int i = 0; i < squarings; ++i) result = matmul(result, result);
  return result;
}

Vector finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                        std::span<const double> x, double h) {
  if (!(h > 0.0)) throw ConfigError("finite_diff_grad: h must be positive");
  Vector xp(x.begin(), x.end());
  Vector g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = xp[i];
    xp[i] = orig + h;
    const double fp = f(xp);
    xp[i] = orig - h;
    const double fm = f(xp);
    xp[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

Mat finite_diff_jacobian(const std::function<Vector(std::span<const double>)>& g,
                         std::span<const double> x, double h) {
  if (!(h > 0.0)) throw ConfigError("finite_diff_jacobian: h must be positive");
  Vector xp(x.begin(), x.end());
  Mat jac;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double orig = xp[j];
    xp[j] = orig + h;
    const Vector gp = g(xp);
    xp[j] = orig - h;
    const Vector gm = g(xp);
    xp[j] = orig;
    if (j == 0) jac = Mat(gp.size(), x.size());
    for (std::size_t i = 0; i < gp.size(); ++i) jac(i, j) = (gp[i] - gm[i]) / (2.0 * h);
  }
  return jac;
}

double mh_acceptance_probability(double log_p_current, double log_p_proposed) {
  const double diff = log_p_proposed - log_p_current;
  return diff >= 0.0 ? 1.0 : std::exp(diff);
}

McmcChain mh_sample(const std::function<double(std::span<const double>)>& log_target,
                    std::span<const double> init, const McmcOptions& opt) {
  if (!(opt.steps > opt.burn_in) || opt.burn_in < 0) {
    throw ConfigError("mh_sample: requires steps > burn_in >= 0");
  }
  if (opt.adapt_steps > opt.burn_in) {
    throw ConfigError("mh_sample: adaptation must finish within burn-in");
  }
  const std::size_t d = init.size();
  Vector scale(d);
  if (opt.proposal_scale.size() == 1) {
    std::fill(scale.begin(), scale.end(), opt.proposal_scale[0]);
  } else if (opt.proposal_scale.size() == d) {
    scale = opt.proposal_scale;
  } else {
    throw ConfigError("mh_sample: proposal scale must have 1 or d entries");
  }
  for (double s : scale) {
    if (!(s >= 0.0)) throw ConfigError("mh_sample: proposal scale must be non-negative");
  }
  Rng rng(opt.seed);
  Vector x(init.begin(), init.end());
  double lp = log_target(x);
  if (!std::isfinite(lp)) throw NumericalError("mh_sample: initial point has non-finite density");
  McmcChain chain;
  chain.burn_in = opt.burn_in;
  chain.samples.reserve(opt.steps - opt.burn_in);
  Vector prop(d);
  constexpr int kWindow = 100;
  int window_accepts = 0;
  long long kept_accepts = 0;
  for (int step = 0; step < opt.steps; ++step) {
    for (std::size_t i = 0; i < d; ++i) prop[i] = x[i] + scale[i] * rng.normal();
    const double lq = log_target(prop);
    const double u = rng.uniform();
    bool accept = false;
    if (std::isfinite(lq)) accept = u < mh_acceptance_probability(lp, lq);
    if (accept) {
      x = prop;
      lp = lq;
    }
    if (step < opt.adapt_steps) {
      window_accepts += accept ? 1 : 0;
      if ((step + 1) % kWindow == 0) {
        const double rate = static_cast<double>(window_accepts) / kWindow;
        const double f = rate < 0.2 ? 0.7 : (rate > 0.5 ? 1.4 : 1.0);
        for (double& s : scale) s *= f;
        window_accepts = 0;
      }
    }
    if (step >= opt.burn_in) {
      chain.samples.push_back(x);
      kept_accepts += accept ? 1 : 0;
    }
  }
  chain.acceptance_rate =
      static_cast<double>(kept_accepts) / static_cast<double>(opt.steps - opt.burn_in);
  chain.final_scale = scale;
  if (chain.acceptance_rate < 0.01 || chain.acceptance_rate > 0.99) {
    chain.warning = "acceptance rate " + std::to_string(chain.acceptance_rate) +
                    " outside [0.01, 0.99]; proposal scale is likely mistuned";
  }
  return chain;
}

Moments sample_moments(std::span<const Vector> samples) {
  if (samples.empty()) throw ConfigError("sample_moments: no samples");
  const std::size_t d = samples[0].size();
  Moments m{Vector(d, 0.0), Vector(d, 0.0)};
  for (const Vector& s : samples)
    for (std::size_t i = 0; i < d; ++i) m.mean[i] += s[i];
  for (double& x : m.mean) x /= static_cast<double>(samples.size());
  for (const Vector& s : samples)
    for (std::size_t i = 0; i < d; ++i) m.variance[i] += (s[i] - m.mean[i]) * (s[i] - m.mean[i]);
  const double denom = samples.size() > 1 ? static_cast<double>(samples.size() - 1) : 1.0;
  for (double& x : m.variance) x /= denom;
  return m;
}

}  // namespace ddnf
