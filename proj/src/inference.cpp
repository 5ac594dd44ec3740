#include "ddnf/inference.hpp"

#include <chrono>
#include <cmath>

namespace ddnf {
namespace {

template <class T>
struct SampleTerms {
  T data;
  T geodesic;
  T inverse;
};

/// Splits a packed parameter span into per-block (or per-layer) views and the
/// base parameters.
template <class T>
struct ParamView {
  std::vector<std::span<const T>> blocks;
  std::vector<T> mu;
  std::vector<T> log_sigma;
};

template <class T>
ParamView<T> view_params(const VariationalModel& model, std::span<const T> params) {
  ParamView<T> view;
  std::size_t off = 0;
  if (model.kind == FlowKind::ddnf) {
    for (const auto& f : model.flow.fields) {
      view.blocks.push_back(params.subspan(off, f.params.values.size()));
      off += f.params.values.size();
    }
  } else {
    const std::size_t per = 2 * static_cast<std::size_t>(model.planar.dim) + 1;
    for (std::size_t k = 0; k < model.planar.layers.size(); ++k) {
      view.blocks.push_back(params.subspan(off, per));
      off += per;
    }
  }
  const int d = model.dim();
  if (model.base.learnable) {
    view.mu.assign(params.begin() + off, params.begin() + off + d);
    view.log_sigma.assign(params.begin() + off + d, params.begin() + off + 2 * d);
  } else {
    for (int i = 0; i < d; ++i) {
      view.mu.push_back(T(model.base.mu[i]));
      view.log_sigma.push_back(T(model.base.log_sigma[i]));
    }
  }
  return view;
}

template <class T>
T log_target(const TargetDensity& target, std::span<const T> z) {
  return target.log_unnorm(z);
}

template <class T>
SampleTerms<T> sample_terms(const VariationalModel& model, const ParamView<T>& view,
                            std::span<const double> eps, const TargetDensity& target,
                            const RegWeights& reg, Rng* rng) {
  using std::exp;
  const int d = model.dim();
  std::vector<T> z0(d);
  T log_q0(0.0);
  for (int i = 0; i < d; ++i) {
    z0[i] = view.mu[i] + exp(view.log_sigma[i]) * eps[i];
    log_q0 = log_q0 + (-0.5 * eps[i] * eps[i] - kHalfLog2Pi) - view.log_sigma[i];
  }
  SampleTerms<T> out{T(0.0), T(0.0), T(0.0)};
  std::vector<T> zk;
  T logdet(0.0);
  if (model.kind == FlowKind::ddnf) {
    detail::PassOptions opt;
    opt.geodesic = reg.gamma_geodesic > 0.0;
    auto pass = detail::integrate<T>(model.flow.spec, view.blocks, std::span<const T>(z0), {},
                                     opt, rng);
    logdet = pass.logdet;
    out.geodesic = pass.geodesic;
    zk = std::move(pass.z);
    if (reg.gamma_inverse > 0.0) {
      out.inverse = detail::inverse_residual<T>(model.flow.spec, view.blocks,
                                                std::span<const T>(z0), std::span<const T>(zk), {});
    }
  } else {
    zk = z0;
    for (const auto& layer : view.blocks) {
      auto step = planar_apply<T>(layer, std::span<const T>(zk), true);
      zk = std::move(step.z);
      logdet = logdet + step.logdet;
    }
  }
  out.data = log_q0 - logdet - log_target<T>(target, std::span<const T>(zk));
  return out;
}

void check_eps(const VariationalModel& model, std::span<const Vector> eps) {
  if (eps.empty()) throw ConfigError("objective: batch must be nonempty");
  for (const Vector& e : eps) {
    if (e.size() != static_cast<std::size_t>(model.dim())) {
      throw ConfigError("objective: noise dimension does not match the model");
    }
  }
}

LossBreakdown combine(double data, double geo, double inv, std::size_t n, const RegWeights& reg) {
  LossBreakdown b;
  b.data_term = data / static_cast<double>(n);
  b.geodesic = geo / static_cast<double>(n);
  b.inverse_consistency = inv / static_cast<double>(n);
  b.loss = b.data_term + reg.gamma_geodesic * b.geodesic + reg.gamma_inverse * b.inverse_consistency;
  return b;
}

/// Loss on the active tape; params must already be tape inputs.
ad::Var loss_on_tape(const VariationalModel& model, std::span<const ad::Var> params,
                     const TargetDensity& target, std::span<const Vector> eps,
                     const RegWeights& reg, Rng* rng, LossBreakdown& parts) {
  const ParamView<ad::Var> view = view_params<ad::Var>(model, params);
  std::vector<ad::Var> data, geo, inv;
  data.reserve(eps.size());
  for (std::size_t s = 0; s < eps.size(); ++s) {
    SampleTerms<ad::Var> t;
    try {
      t = sample_terms<ad::Var>(model, view, eps[s], target, reg, rng);
    } catch (const NumericalError& e) {
      throw NumericalError("sample " + std::to_string(s) + ": " + e.what());
    }
    data.push_back(t.data);
    if (reg.gamma_geodesic > 0.0) geo.push_back(t.geodesic);
    if (reg.gamma_inverse > 0.0) inv.push_back(t.inverse);
  }
  const double inv_n = 1.0 / static_cast<double>(eps.size());
  ad::Var loss = ad::sum(data) * inv_n;
  double geo_v = 0.0, inv_v = 0.0;
  if (!geo.empty()) {
    const ad::Var g = ad::sum(geo);
    geo_v = g.value();
    loss = loss + g * (reg.gamma_geodesic * inv_n);
  }
  if (!inv.empty()) {
    const ad::Var r = ad::sum(inv);
    inv_v = r.value();
    loss = loss + r * (reg.gamma_inverse * inv_n);
  }
  double data_v = 0.0;
  for (const auto& x : data) data_v += x.value();
  parts = combine(data_v, geo_v, inv_v, eps.size(), reg);
  if (!std::isfinite(loss.value())) throw NumericalError("non-finite loss");
  return loss;
}

}  // namespace

OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "sgd") return OptimizerKind::sgd;
  throw ConfigError("unknown optimizer '" + s + "'");
}

FlowKind parse_flow_kind(const std::string& s) {
  if (s == "ddnf") return FlowKind::ddnf;
  if (s == "planar") return FlowKind::planar;
  throw ConfigError("unknown flow '" + s + "'");
}

const char* to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }
const char* to_string(FlowKind k) { return k == FlowKind::ddnf ? "ddnf" : "planar"; }

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (iterations < 0) throw ConfigError("train: iterations must be >= 0");
  if (!(learning_rate >= 0.0)) throw ConfigError("train: learning_rate must be >= 0");
  if (eval_every < 1) throw ConfigError("train: eval_every must be >= 1");
  reg.validate();
}

std::size_t VariationalModel::flow_param_count() const {
  return kind == FlowKind::ddnf ? flow.param_count() : planar.param_count();
}

std::size_t VariationalModel::size() const {
  return flow_param_count() + (base.learnable ? 2 * static_cast<std::size_t>(base.dim) : 0);
}

Vector VariationalModel::pack() const {
  Vector out = kind == FlowKind::ddnf ? flow.flat_params() : planar.flat();
  if (base.learnable) {
    out.insert(out.end(), base.mu.begin(), base.mu.end());
    out.insert(out.end(), base.log_sigma.begin(), base.log_sigma.end());
  }
  return out;
}

void VariationalModel::unpack(std::span<const double> values) {
  if (values.size() != size()) throw ConfigError("model: packed parameter count mismatch");
  const std::size_t nf = flow_param_count();
  if (kind == FlowKind::ddnf) {
    flow.set_flat_params(values.subspan(0, nf));
  } else {
    planar = PlanarFlow::from_flat(planar.dim, values.subspan(0, nf));
  }
  if (base.learnable) {
    const int d = base.dim;
    std::copy(values.begin() + nf, values.begin() + nf + d, base.mu.begin());
    std::copy(values.begin() + nf + d, values.begin() + nf + 2 * d, base.log_sigma.begin());
  }
}

VariationalModel make_ddnf_model(const FlowModel& flow, const BaseDistribution& base) {
  if (flow.spec.dim != base.dim) throw ConfigError("flow and base dimensions differ");
  if (flow.spec.context_dim != 0) {
    throw ConfigError("variational training supports unconditioned flows only");
  }
  VariationalModel m;
  m.kind = FlowKind::ddnf;
  m.flow = flow;
  m.base = base;
  return m;
}

VariationalModel make_planar_model(const PlanarFlow& planar, const BaseDistribution& base) {
  if (planar.dim != base.dim) throw ConfigError("flow and base dimensions differ");
  VariationalModel m;
  m.kind = FlowKind::planar;
  m.planar = planar;
  m.base = base;
  return m;
}

LossBreakdown evaluate_objective(const VariationalModel& model, const TargetDensity& target,
                                 std::span<const Vector> eps, const RegWeights& reg,
                                 Rng* probe_rng) {
  check_eps(model, eps);
  Rng fallback(0);
  Rng* rng = probe_rng != nullptr ? probe_rng : &fallback;
  const Vector params = model.pack();
  const ParamView<double> view = view_params<double>(model, std::span<const double>(params));
  double data = 0.0, geo = 0.0, inv = 0.0;
  for (std::size_t s = 0; s < eps.size(); ++s) {
    const auto t = sample_terms<double>(model, view, eps[s], target, reg, rng);
    data += t.data;
    geo += t.geodesic;
    inv += t.inverse;
  }
  LossBreakdown b = combine(data, geo, inv, eps.size(), reg);
  if (!std::isfinite(b.loss)) throw NumericalError("non-finite loss");
  return b;
}

LossBreakdown objective_gradient(const VariationalModel& model, const TargetDensity& target,
                                 std::span<const Vector> eps, const RegWeights& reg, Vector& grad,
                                 Rng* probe_rng) {
  check_eps(model, eps);
  Rng fallback(0);
  Rng* rng = probe_rng != nullptr ? probe_rng : &fallback;
  const Vector params = model.pack();
  ad::Tape tape;
  ad::TapeScope scope(tape);
  std::vector<ad::Var> inputs;
  inputs.reserve(params.size());
  for (double p : params) inputs.push_back(ad::Var::input(p));
  LossBreakdown parts;
  const ad::Var loss = loss_on_tape(model, inputs, target, eps, reg, rng, parts);
  grad.assign(params.size(), 0.0);
  if (loss.on_tape()) {
    const auto& adj = tape.backward(loss.index());
    for (std::size_t i = 0; i < params.size(); ++i) grad[i] = adj[inputs[i].index()];
  }
  return parts;
}

Vector per_sample_data_terms(const VariationalModel& model, const TargetDensity& target,
                             std::span<const Vector> eps) {
  check_eps(model, eps);
  const Vector params = model.pack();
  const ParamView<double> view = view_params<double>(model, std::span<const double>(params));
  Rng probes(0);
  Vector out;
  out.reserve(eps.size());
  for (const Vector& e : eps) out.push_back(sample_terms<double>(model, view, e, target, {}, &probes).data);
  return out;
}

LossBreakdown energy_objective(const FlowModel& flow, const BaseDistribution& base,
                               const EnergyTarget& target, std::span<const Vector> eps,
                               const RegWeights& reg) {
  return evaluate_objective(make_ddnf_model(flow, base), target, eps, reg);
}

LossBreakdown posterior_objective(const FlowModel& flow, const BaseDistribution& base,
                                  const BetaBinomialTarget& target, std::span<const Vector> eps,
                                  const RegWeights& reg) {
  return evaluate_objective(make_ddnf_model(flow, base), target, eps, reg);
}

std::vector<Vector> draw_standard_normal(Rng& rng, int count, int dim) {
  std::vector<Vector> out(count, Vector(dim));
  for (auto& row : out)
    for (double& x : row) x = rng.normal();
  return out;
}

Optimizer::Optimizer(const TrainConfig& cfg, std::size_t size)
    : kind_(cfg.optimizer),
      lr_(cfg.learning_rate),
      beta1_(cfg.beta1),
      beta2_(cfg.beta2),
      eps_(cfg.epsilon),
      m_(size, 0.0),
      v_(size, 0.0) {}

void Optimizer::step(std::span<double> params, std::span<const double> grad) {
  if (lr_ == 0.0) return;
  if (kind_ == OptimizerKind::sgd) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr_ * grad[i];
    return;
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

TrainResult train(VariationalModel init, const TargetDensity& target, const TrainConfig& cfg) {
  cfg.validate();
  if (target.dim() != init.dim()) throw ConfigError("target and model dimensions differ");
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  TrainResult result;
  result.model = std::move(init);
  Vector params = result.model.pack();
  Optimizer opt(cfg, params.size());
  Rng noise(cfg.seed, 1);
  Rng probes(cfg.seed, 2);
  ad::Tape tape;
  std::vector<ad::Var> inputs(params.size());
  Vector grad(params.size());
  for (int it = 1; it <= cfg.iterations; ++it) {
    const std::vector<Vector> eps = draw_standard_normal(noise, cfg.batch_size, result.model.dim());
    LossBreakdown parts;
    try {
      tape.clear();
      ad::TapeScope scope(tape);
      for (std::size_t i = 0; i < params.size(); ++i) inputs[i] = ad::Var::input(params[i]);
      const ad::Var loss = loss_on_tape(result.model, inputs, target, eps, cfg.reg, &probes, parts);
      if (loss.on_tape()) {
        const auto& adj = tape.backward(loss.index());
        for (std::size_t i = 0; i < params.size(); ++i) grad[i] = adj[inputs[i].index()];
      } else {
        std::fill(grad.begin(), grad.end(), 0.0);
      }
      for (double g : grad) {
        if (!std::isfinite(g)) throw NumericalError("non-finite gradient");
      }
    } catch (const NumericalError& e) {
      result.diverged = true;
      result.message = "iteration " + std::to_string(it) + ": " + e.what();
      break;
    }
    if (it % cfg.eval_every == 0 || it == cfg.iterations) {
      TrainRecord r;
      r.iteration = it;
      r.loss = parts.loss;
      r.elbo = -parts.data_term;
      r.geodesic = parts.geodesic;
      r.inverse_consistency = parts.inverse_consistency;
      r.seconds = std::chrono::duration<double>(Clock::now() - start).count();
      result.history.push_back(r);
    }
    opt.step(params, grad);
    result.model.unpack(params);
    result.iterations_completed = it;
  }
  return result;
}

}  // namespace ddnf
