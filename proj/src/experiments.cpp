#include "ddnf/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace ddnf {
namespace {

// Stream ids under the user seed.
constexpr std::uint64_t kStreamInit = 5;
constexpr std::uint64_t kStreamEval = 3;
constexpr std::uint64_t kStreamSamples = 4;

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

FlowModel trial_model(const SweepConfig& cfg, std::uint64_t field_seed) {
  FlowSpec s;
  s.dim = cfg.velocity.dim;
  s.blocks = cfg.blocks;
  s.cells_per_block = 1;
  s.velocity = cfg.velocity;
  s.normalize();
  switch (cfg.field) {
    case FieldKind::random: return init_flow(s, field_seed);
    case FieldKind::zero: s.velocity.zero_init_output = true; return init_flow(s, field_seed);
    case FieldKind::constant: {
      Rng r(field_seed);
      Vector c(s.dim);
      for (double& x : c) x = r.normal();
      return make_flow(s, make_constant_field(c));
    }
  }
  throw ConfigError("unknown field kind");
}

template <class ErrorFn>
std::vector<SweepRow> sweep(const SweepConfig& cfg, ErrorFn&& err) {
  cfg.validate();
  const std::size_t nt = cfg.t_list.size();
  std::vector<Vector> per_trial(nt, Vector(cfg.trials, 0.0));
  const Rng root(cfg.seed);
  for (int trial = 0; trial < cfg.trials; ++trial) {
    const std::uint64_t field_seed = root.split(2 * static_cast<std::uint64_t>(trial)).next_u64();
    Rng sample_rng = root.split(2 * static_cast<std::uint64_t>(trial) + 1);
    FlowModel model = trial_model(cfg, field_seed);
    const auto z0 = draw_standard_normal(sample_rng, cfg.samples, model.spec.dim);
    for (std::size_t ti = 0; ti < nt; ++ti) {
      model.spec.cells_per_block = cfg.t_list[ti];
      per_trial[ti][trial] = err(model, z0, ti);
    }
  }
  std::vector<SweepRow> rows;
  for (std::size_t ti = 0; ti < nt; ++ti) {
    const Vector& v = per_trial[ti];
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var = v.size() > 1 ? var / static_cast<double>(v.size() - 1) : 0.0;
    rows.push_back({cfg.t_list[ti], mean, std::sqrt(var), std::sqrt(mean)});
  }
  return rows;
}

std::vector<std::span<const double>> planar_layers(const Vector& flat, int dim) {
  std::vector<std::span<const double>> out;
  const std::size_t per = 2 * static_cast<std::size_t>(dim) + 1;
  for (std::size_t off = 0; off < flat.size(); off += per) out.emplace_back(flat.data() + off, per);
  return out;
}

Vector push_forward(const VariationalModel& model, std::span<const double> z0) {
  if (model.kind == FlowKind::ddnf) return forward(model.flow, z0, {}, false, false).z_out;
  const Vector flat = model.planar.flat();
  Vector z(z0.begin(), z0.end());
  for (const auto layer : planar_layers(flat, model.planar.dim)) {
    z = planar_apply<double>(layer, z, true).z;
  }
  return z;
}

}  // namespace

FieldKind parse_field_kind(const std::string& s) {
  if (s == "random") return FieldKind::random;
  if (s == "zero") return FieldKind::zero;
  if (s == "constant") return FieldKind::constant;
  throw ConfigError("unknown field kind '" + s + "' (expected random, zero or constant)");
}

const char* to_string(FieldKind k) {
  switch (k) {
    case FieldKind::random: return "random";
    case FieldKind::zero: return "zero";
    case FieldKind::constant: return "constant";
  }
  return "unknown";
}

void SweepConfig::validate() const {
  if (t_list.empty()) throw ConfigError("sweep: the T list must be nonempty");
  for (int t : t_list) {
    if (t <= 0) throw ConfigError("sweep: every T must be positive");
  }
  if (trials < 1 || samples < 1) throw ConfigError("sweep: trials and samples must be >= 1");
  if (blocks < 1) throw ConfigError("sweep: blocks must be >= 1");
  if (velocity.context_dim != 0) throw ConfigError("sweep: context-conditioned fields are not supported");
  if (!(rtol > 0.0) || !(atol > 0.0)) throw ConfigError("sweep: tolerances must be positive");
  velocity.validate();
}

std::vector<SweepRow> run_ode_accuracy(const SweepConfig& cfg) {
  // The reference does not depend on T; it is computed on the first T of each trial.
  std::vector<Vector> ref;
  return sweep(cfg, [&](const FlowModel& model, const std::vector<Vector>& z0, std::size_t ti) {
    if (ti == 0) {
      ref.clear();
      for (const Vector& z : z0) {
        Vector p = z;
        for (const VelocityField& f : model.fields) {
          p = rk45_integrate(f, p, 1.0 / model.spec.blocks, cfg.rtol, cfg.atol).z_final;
        }
        ref.push_back(std::move(p));
      }
    }
    double acc = 0.0;
    for (std::size_t s = 0; s < z0.size(); ++s) {
      acc += sq_dist(forward(model, z0[s], {}, false, false).z_out, ref[s]);
    }
    return acc / static_cast<double>(z0.size());
  });
}

std::vector<SweepRow> run_inversion(const SweepConfig& cfg) {
  return sweep(cfg, [](const FlowModel& model, const std::vector<Vector>& z0, std::size_t) {
    double acc = 0.0;
    for (const Vector& z : z0) {
      const Vector zk = forward(model, z, {}, false, false).z_out;
      acc += sq_dist(inverse(model, zk, {}, false, false).z_out, z);
    }
    return acc / static_cast<double>(z0.size());
  });
}

double loglog_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ConfigError("slope: need two or more matching points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw NumericalError("slope: log of a non-positive value");
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

FitKind parse_fit_kind(const std::string& s) {
  if (s == "energy-u1") return FitKind::energy_u1;
  if (s == "energy-u2") return FitKind::energy_u2;
  if (s == "posterior") return FitKind::posterior;
  throw ConfigError("unknown fit kind '" + s + "' (expected energy-u1, energy-u2 or posterior)");
}

const char* to_string(FitKind k) {
  switch (k) {
    case FitKind::energy_u1: return "energy-u1";
    case FitKind::energy_u2: return "energy-u2";
    case FitKind::posterior: return "posterior";
  }
  return "unknown";
}

std::vector<Vector> GridSpec::points() const {
  validate();
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(resolution) * resolution);
  const double h = step();
  for (int i = 0; i < resolution; ++i)
    for (int j = 0; j < resolution; ++j) out.push_back({lo + i * h, lo + j * h});
  return out;
}

void GridSpec::validate() const {
  if (!(hi > lo)) throw ConfigError("grid: range must satisfy lo < hi");
  if (resolution < 2) throw ConfigError("grid: resolution must be >= 2");
}

void FitConfig::validate() const {
  train.validate();
  if (flow.dim != 2) throw ConfigError("fit: targets are two-dimensional");
  if (flow.context_dim != 0) throw ConfigError("fit: context-conditioned flows are not trainable here");
  if (flow_kind == FlowKind::planar && planar_layers < 1) throw ConfigError("fit: planar_layers must be >= 1");
  if (kind == FitKind::posterior) data.validate();
  if (sample_count < 0 || eval_samples < 1) throw ConfigError("fit: sample counts must be positive");
  if (base_mean && base_mean->size() != 2) throw ConfigError("fit: base mean must have 2 entries");
  heat.validate();
}

Vector posterior_initial_mean(const BetaBinomialModel& data) {
  double ys = 0.0, ns = 0.0;
  for (const auto& r : data.data) {
    ys += static_cast<double>(r.y);
    ns += static_cast<double>(r.n);
  }
  const double rate = std::clamp(ys / ns, 1e-6, 1.0 - 1e-6);
  return {std::log(rate / (1.0 - rate)), std::log(100.0)};
}

FitOutput run_fit(const FitConfig& cfg) {
  cfg.validate();
  std::unique_ptr<TargetDensity> target;
  if (cfg.kind == FitKind::posterior) {
    target = std::make_unique<BetaBinomialTarget>(cfg.data);
  } else {
    target = std::make_unique<EnergyTarget>(cfg.kind == FitKind::energy_u1 ? EnergyName::u1 : EnergyName::u2,
                                            cfg.ring);
  }
  const bool posterior = cfg.kind == FitKind::posterior;
  BaseDistribution base = BaseDistribution::standard(2, cfg.learn_base.value_or(posterior));
  if (cfg.base_mean) {
    base.mu = *cfg.base_mean;
  } else if (posterior) {
    base.mu = posterior_initial_mean(cfg.data);
  }
  if (cfg.base_log_sigma) base.log_sigma.assign(2, *cfg.base_log_sigma);

  const std::uint64_t init_seed = Rng(cfg.train.seed, kStreamInit).next_u64();
  VariationalModel init;
  if (cfg.flow_kind == FlowKind::ddnf) {
    FlowSpec spec = cfg.flow;
    spec.normalize();
    init = make_ddnf_model(init_flow(spec, init_seed), base);
  } else {
    init = make_planar_model(init_planar(2, cfg.planar_layers, init_seed), base);
  }

  FitOutput out;
  out.train = train(std::move(init), *target, cfg.train);
  const VariationalModel& model = out.train.model;

  Rng eval_rng(cfg.train.seed, kStreamEval);
  const auto eval_eps = draw_standard_normal(eval_rng, cfg.eval_samples, 2);
  try {
    out.final_neg_elbo = evaluate_objective(model, *target, eval_eps, RegWeights{}).data_term;
  } catch (const NumericalError&) {
    out.final_neg_elbo = std::numeric_limits<double>::infinity();
  }
  if (out.train.diverged) return out;

  Rng sample_rng(cfg.train.seed, kStreamSamples);
  for (int s = 0; s < cfg.sample_count; ++s) {
    Vector z = push_forward(model, model.base.sample(sample_rng));
    if (posterior) {
      const auto [m, big_l] = betabinom_constrain(z);
      z = {m, big_l};
    }
    out.samples.push_back(std::move(z));
  }

  if (!posterior && cfg.flow_kind == FlowKind::ddnf) {
    out.heat_points = cfg.heat.points();
    const double h = cfg.heat.step();
    for (const Vector& p : out.heat_points) {
      const double ld = log_density(model.flow, model.base, p);
      out.heat_log_density.push_back(ld);
      out.heat_integral += std::exp(ld) * h * h;
    }
  }
  return out;
}

McmcRunOutput run_mcmc(const McmcRunConfig& cfg) {
  McmcRunOutput out;
  if (cfg.standard_normal) {
    if (cfg.dim < 1) throw ConfigError("mcmc: dimension must be >= 1");
    const Vector init = cfg.init.value_or(Vector(cfg.dim, 0.0));
    if (init.size() != static_cast<std::size_t>(cfg.dim)) throw ConfigError("mcmc: init has the wrong dimension");
    out.chain = mh_sample(
        [](std::span<const double> x) {
          double s = 0.0;
          for (double v : x) s += v * v;
          return -0.5 * s;
        },
        init, cfg.options);
  } else {
    const BetaBinomialTarget target(cfg.data);
    const Vector init = cfg.init.value_or(posterior_initial_mean(cfg.data));
    if (init.size() != 2) throw ConfigError("mcmc: posterior init must have 2 entries");
    out.chain = mh_sample([&](std::span<const double> z) { return target.log_unnorm(z); }, init, cfg.options);
    std::vector<Vector> ml;
    ml.reserve(out.chain.samples.size());
    for (const Vector& z : out.chain.samples) {
      const auto [m, big_l] = betabinom_constrain(z);
      ml.push_back({m, big_l});
    }
    out.constrained = sample_moments(ml);
  }
  out.moments = sample_moments(out.chain.samples);
  return out;
}

double mean_inverse_residual(const FlowModel& flow, const GridSpec& grid) {
  const auto pts = grid.points();
  double acc = 0.0;
  for (const Vector& p : pts) {
    const Vector back = inverse(flow, forward(flow, p, {}, false, false).z_out, {}, false, false).z_out;
    acc += std::sqrt(sq_dist(back, p));
  }
  return acc / static_cast<double>(pts.size());
}

GridExport export_grid(const VariationalModel& model, const GridSpec& deform, const GridSpec& heat) {
  if (model.kind != FlowKind::ddnf) throw ConfigError("export-grid needs a DDNF model (planar flows have no inverse)");
  if (model.flow.spec.dim != 2) throw ConfigError("export-grid needs a two-dimensional flow");
  if (model.flow.spec.context_dim != 0) throw ConfigError("export-grid does not support context-conditioned flows");
  GridExport out;
  out.points = deform.points();
  for (const Vector& p : out.points) {
    Vector q = forward(model.flow, p, {}, false, false).z_out;
    out.displacement.push_back({q[0] - p[0], q[1] - p[1]});
    out.deformed.push_back(std::move(q));
  }
  out.heat_points = heat.points();
  for (const Vector& p : out.heat_points) out.heat_log_density.push_back(log_density(model.flow, model.base, p));
  out.mean_inverse_residual = mean_inverse_residual(model.flow, deform);
  return out;
}

}  // namespace ddnf
