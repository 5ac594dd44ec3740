#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ddnf/flow.hpp"
#include "ddnf/regularize.hpp"
#include "ddnf/targets.hpp"

namespace ddnf {

enum class OptimizerKind { sgd, adam };
enum class FlowKind { ddnf, planar };

OptimizerKind parse_optimizer(const std::string& s);
FlowKind parse_flow_kind(const std::string& s);
const char* to_string(OptimizerKind k);
const char* to_string(FlowKind k);

struct TrainConfig {
  int batch_size = 256;
  int iterations = 5000;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  RegWeights reg;
  std::uint64_t seed = 0;
  int eval_every = 10;

  void validate() const;
};

struct TrainRecord {
  int iteration = 0;
  double loss = 0.0;
  double elbo = 0.0;  // minus the data term of the loss
  double geodesic = 0.0;
  double inverse_consistency = 0.0;
  double seconds = 0.0;
};

/// Everything the optimizer moves: the flow (DDNF or planar) and, when
/// base.learnable, the base mean and log-scale.
struct VariationalModel {
  FlowKind kind = FlowKind::ddnf;
  FlowModel flow;
  PlanarFlow planar;
  BaseDistribution base;

  int dim() const { return base.dim; }
  std::size_t flow_param_count() const;
  std::size_t size() const;
  /// [flow parameters..., mu, log_sigma (only if learnable)]
  Vector pack() const;
  void unpack(std::span<const double> values);
};

VariationalModel make_ddnf_model(const FlowModel& flow, const BaseDistribution& base);
VariationalModel make_planar_model(const PlanarFlow& planar, const BaseDistribution& base);

struct LossBreakdown {
  double loss = 0.0;
  double data_term = 0.0;  // mean of log q0(z0) - sum_logdet - log p~(zK)
  double geodesic = 0.0;
  double inverse_consistency = 0.0;
};

/// Monte Carlo estimate of the regularized negative ELBO at the draws `eps`
/// (standard-normal noise, one row per sample).
LossBreakdown evaluate_objective(const VariationalModel& model, const TargetDensity& target,
                                 std::span<const Vector> eps, const RegWeights& reg,
                                 Rng* probe_rng = nullptr);

/// As evaluate_objective, also writing d(loss)/d(pack()) into `grad`.
LossBreakdown objective_gradient(const VariationalModel& model, const TargetDensity& target,
                                 std::span<const Vector> eps, const RegWeights& reg, Vector& grad,
                                 Rng* probe_rng = nullptr);

/// Per-sample data terms log q0(z0) - sum_logdet - log p~(zK), no penalties.
Vector per_sample_data_terms(const VariationalModel& model, const TargetDensity& target,
                             std::span<const Vector> eps);

LossBreakdown energy_objective(const FlowModel& flow, const BaseDistribution& base,
                               const EnergyTarget& target, std::span<const Vector> eps,
                               const RegWeights& reg);
LossBreakdown posterior_objective(const FlowModel& flow, const BaseDistribution& base,
                                  const BetaBinomialTarget& target, std::span<const Vector> eps,
                                  const RegWeights& reg);

std::vector<Vector> draw_standard_normal(Rng& rng, int count, int dim);

/// Adam or plain SGD over a flat parameter vector.
class Optimizer {
 public:
  Optimizer(const TrainConfig& cfg, std::size_t size);
  void step(std::span<double> params, std::span<const double> grad);

 private:
  OptimizerKind kind_;
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  Vector m_, v_;
};

struct TrainResult {
  VariationalModel model;
  std::vector<TrainRecord> history;
  bool diverged = false;
  std::string message;
  int iterations_completed = 0;
};

/// Stochastic-gradient training. A non-finite loss or gradient stops the run
/// and returns the history so far with diverged = true.
TrainResult train(VariationalModel init, const TargetDensity& target, const TrainConfig& cfg);

}  // namespace ddnf
