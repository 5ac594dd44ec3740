#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ddnf/linalg.hpp"
#include "ddnf/velocity.hpp"

namespace ddnf {

// ---------------------------------------------------------------------------
// Dormand-Prince 5(4)

struct RkResult {
  Vector z_final;
  int steps_accepted = 0;
  int steps_rejected = 0;
  /// Largest accepted local error, measured in units of atol + rtol |z|
  /// (so a successful run reports a value <= 1).
  double max_error_estimate = 0.0;
};

using OdeRhs = std::function<void(std::span<const double> z, std::span<double> dz)>;

RkResult rk45_integrate(const OdeRhs& rhs, std::span<const double> z0, double t1, double rtol,
                        double atol);
/// Integrates dz/dt = v(z) with the field's context fixed.
RkResult rk45_integrate(const VelocityField& field, std::span<const double> z0, double t1,
                        double rtol, double atol, std::span<const double> context = {});

// ---------------------------------------------------------------------------
// Dense linear algebra oracles

struct SignedLogDet {
  double log_abs = 0.0;
  int sign = 1;
};

/// log|det(I + dt J)| with the determinant's sign; throws on a singular matrix.
SignedLogDet exact_cell_logdet(const Mat& j, double dt);

/// Scaling and squaring with a degree-18 Taylor polynomial.
Mat matrix_exp(const Mat& a);

// ---------------------------------------------------------------------------
// Finite differences

Vector finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                        std::span<const double> x, double h);

/// Column j holds (g(x + h e_j) - g(x - h e_j)) / 2h.
Mat finite_diff_jacobian(const std::function<Vector(std::span<const double>)>& g,
                         std::span<const double> x, double h);

// ---------------------------------------------------------------------------
// Random-walk Metropolis

struct McmcOptions {
  int steps = 100000;
  int burn_in = 10000;
  /// Per-dimension proposal standard deviations (one value broadcasts).
  Vector proposal_scale{1.0};
  /// Steps at the start of burn-in that rescale the proposal towards 20-50%
  /// acceptance; the scale is frozen afterwards.
  int adapt_steps = 0;
  std::uint64_t seed = 0;
};

struct McmcChain {
  std::vector<Vector> samples;  // post burn-in
  double acceptance_rate = 0.0;  // post burn-in
  int burn_in = 0;
  Vector final_scale;
  std::string warning;  // set when the acceptance rate is < 0.01 or > 0.99
};

double mh_acceptance_probability(double log_p_current, double log_p_proposed);

McmcChain mh_sample(const std::function<double(std::span<const double>)>& log_target,
                    std::span<const double> init, const McmcOptions& opt);

struct Moments {
  Vector mean;
  Vector variance;
};

Moments sample_moments(std::span<const Vector> samples);

}  // namespace ddnf
