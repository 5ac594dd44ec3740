#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ddnf/flow.hpp"
#include "ddnf/inference.hpp"
#include "ddnf/oracles.hpp"
#include "ddnf/targets.hpp"

namespace ddnf {

enum class FieldKind { random, zero, constant };
FieldKind parse_field_kind(const std::string& s);
const char* to_string(FieldKind k);

/// One row per cell count T. `mse` is the mean over trials and samples of the
/// squared Euclidean error; `std` is the spread of the per-trial means.
struct SweepRow {
  int cells = 0;
  double mse = 0.0;
  double std = 0.0;
  double rmse = 0.0;
};

struct SweepConfig {
  std::vector<int> t_list{1, 2, 4, 8, 16, 32, 64, 128};
  int trials = 50;
  int samples = 100;
  int blocks = 1;
  VelocitySpec velocity;
  FieldKind field = FieldKind::random;
  double rtol = 1e-10;
  double atol = 1e-12;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Euler forward pass against the adaptive Dormand-Prince reference.
std::vector<SweepRow> run_ode_accuracy(const SweepConfig& cfg);
/// |z0 - inverse(forward(z0))|^2 per T.
std::vector<SweepRow> run_inversion(const SweepConfig& cfg);

/// Least-squares slope of log y against log x.
double loglog_slope(std::span<const double> x, std::span<const double> y);

enum class FitKind { energy_u1, energy_u2, posterior };
FitKind parse_fit_kind(const std::string& s);
const char* to_string(FitKind k);

struct GridSpec {
  double lo = -4.0;
  double hi = 4.0;
  int resolution = 20;

  double step() const { return (hi - lo) / (resolution - 1); }
  std::vector<Vector> points() const;
  void validate() const;
};

struct FitConfig {
  FitKind kind = FitKind::energy_u1;
  FlowKind flow_kind = FlowKind::ddnf;
  FlowSpec flow;
  int planar_layers = 8;
  TrainConfig train;
  RingNorm ring = RingNorm::squared;
  /// Unset means learnable for the posterior and fixed for the energies.
  std::optional<bool> learn_base;
  /// Initial base mean; the posterior defaults to a moment-based guess.
  std::optional<Vector> base_mean;
  std::optional<double> base_log_sigma;
  BetaBinomialModel data;
  int sample_count = 10000;
  int eval_samples = 10000;
  GridSpec heat{-4.0, 4.0, 200};

  void validate() const;
};

struct FitOutput {
  TrainResult train;
  /// Pushforward draws zK, or (m, L) for the posterior.
  std::vector<Vector> samples;
  /// Negative ELBO without penalties on a held-out batch of eval_samples draws.
  double final_neg_elbo = 0.0;
  /// Energy fits with a DDNF flow: log q on `heat` points (row-major, x outer).
  std::vector<Vector> heat_points;
  Vector heat_log_density;
  double heat_integral = 0.0;
};

FitOutput run_fit(const FitConfig& cfg);

/// Initial base mean for the posterior: logit of the pooled rate and log 100.
Vector posterior_initial_mean(const BetaBinomialModel& data);

struct McmcRunConfig {
  bool standard_normal = false;
  int dim = 1;  // standard-normal target only
  BetaBinomialModel data;
  McmcOptions options;
  std::optional<Vector> init;
};

struct McmcRunOutput {
  McmcChain chain;
  Moments moments;  // in the sampled coordinates
  /// Posterior target only: moments of (m, L).
  std::optional<Moments> constrained;
};

McmcRunOutput run_mcmc(const McmcRunConfig& cfg);

struct GridExport {
  std::vector<Vector> points;
  std::vector<Vector> deformed;
  std::vector<Vector> displacement;
  std::vector<Vector> heat_points;
  Vector heat_log_density;
  double mean_inverse_residual = 0.0;
};

GridExport export_grid(const VariationalModel& model, const GridSpec& deform, const GridSpec& heat);

/// Mean of |z - inverse(forward(z))|_2 over the grid points.
double mean_inverse_residual(const FlowModel& flow, const GridSpec& grid);

}  // namespace ddnf
