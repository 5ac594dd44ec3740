#include "ddnf/flow.hpp"

#include <cmath>

namespace ddnf {
namespace {

std::vector<std::span<const double>> block_spans(const FlowModel& model) {
  std::vector<std::span<const double>> spans;
  spans.reserve(model.fields.size());
  for (const VelocityField& f : model.fields) spans.emplace_back(f.params.values);
  return spans;
}

FlowResult run_pass(const FlowModel& model, std::span<const double> z,
                    std::span<const double> context, bool inverse, bool want_trajectory,
                    bool with_logdet, Rng* probe_rng) {
  check_inputs(model.spec.velocity, z.size(), context.size());
  Rng fallback(0);
  Rng* rng = probe_rng != nullptr ? probe_rng : &fallback;
  const auto spans = block_spans(model);
  detail::PassOptions opt;
  opt.inverse = inverse;
  opt.logdet = with_logdet;
  opt.trajectory = want_trajectory;
  auto pass = detail::integrate<double>(model.spec, spans, z, context, opt, rng);
  return {std::move(pass.z), pass.logdet, std::move(pass.trajectory)};
}

}  // namespace

LogdetMethod parse_logdet_method(const std::string& s) {
  if (s == "first_order") return LogdetMethod::first_order;
  if (s == "second_order_paper") return LogdetMethod::second_order_paper;
  if (s == "second_order_series") return LogdetMethod::second_order_series;
  if (s == "exact") return LogdetMethod::exact;
  throw ConfigError("unknown logdet method '" + s + "'");
}

const char* to_string(LogdetMethod m) {
  switch (m) {
    case LogdetMethod::first_order: return "first_order";
    case LogdetMethod::second_order_paper: return "second_order_paper";
    case LogdetMethod::second_order_series: return "second_order_series";
    case LogdetMethod::exact: return "exact";
  }
  return "unknown";
}

LogdetMethod FlowSpec::default_method(int dim) {
  return dim <= 4 ? LogdetMethod::exact : LogdetMethod::second_order_series;
}

void FlowSpec::normalize() {
  velocity.dim = dim;
  velocity.context_dim = context_dim;
}

void FlowSpec::validate() const {
  if (dim <= 0) throw ConfigError("flow: dimension must be positive");
  if (blocks <= 0) throw ConfigError("flow: number of blocks must be positive");
  if (cells_per_block <= 0) throw ConfigError("flow: cells per block must be positive");
  if (probes < 0) throw ConfigError("flow: probe count must be non-negative");
  if (logdet == LogdetMethod::exact && probes != 0) {
    throw ConfigError("flow: exact log-determinant excludes Hutchinson probes");
  }
  if (velocity.dim != dim || velocity.context_dim != context_dim) {
    throw ConfigError("flow: velocity spec does not match flow dimension/context");
  }
  velocity.validate();
}

std::size_t FlowModel::param_count() const {
  std::size_t n = 0;
  for (const auto& f : fields) n += f.params.values.size();
  return n;
}

Vector FlowModel::flat_params() const {
  Vector out;
  out.reserve(param_count());
  for (const auto& f : fields) out.insert(out.end(), f.params.values.begin(), f.params.values.end());
  return out;
}

void FlowModel::set_flat_params(std::span<const double> values) {
  if (values.size() != param_count()) throw ConfigError("flow: parameter count mismatch");
  std::size_t off = 0;
  for (auto& f : fields) {
    std::copy(values.begin() + off, values.begin() + off + f.params.values.size(),
              f.params.values.begin());
    off += f.params.values.size();
  }
}

FlowModel init_flow(FlowSpec spec, std::uint64_t seed) {
  spec.normalize();
  spec.validate();
  FlowModel model{spec, {}};
  const Rng root(seed);
  for (int k = 0; k < spec.blocks; ++k) {
    Rng stream = root.split(static_cast<std::uint64_t>(k));
    model.fields.push_back(init_velocity(spec.velocity, stream.next_u64()));
  }
  return model;
}

FlowModel make_flow(FlowSpec spec, const VelocityField& field) {
  spec.velocity = field.spec;
  spec.dim = field.spec.dim;
  spec.context_dim = field.spec.context_dim;
  spec.validate();
  return FlowModel{spec, std::vector<VelocityField>(spec.blocks, field)};
}

FlowModel with_context(const FlowModel& model, int context_dim) {
  FlowModel out;
  out.spec = model.spec;
  out.spec.context_dim = context_dim;
  for (const VelocityField& f : model.fields) out.fields.push_back(with_context_inputs(f, context_dim));
  out.spec.normalize();
  out.spec.validate();
  return out;
}

Vector euler_step(const VelocityField& field, std::span<const double> z, double dt,
                  std::span<const double> context) {
  if (!(dt > 0.0)) throw ConfigError("euler_step: dt must be positive");
  const Vector v = eval(field, z, context);
  Vector out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = z[i] + dt * v[i];
    if (!std::isfinite(out[i])) throw NumericalError("euler_step: non-finite output");
  }
  return out;
}

FlowResult forward(const FlowModel& model, std::span<const double> z0,
                   std::span<const double> context, bool want_trajectory, bool with_logdet,
                   Rng* probe_rng) {
  return run_pass(model, z0, context, false, want_trajectory, with_logdet, probe_rng);
}

FlowResult inverse(const FlowModel& model, std::span<const double> zk,
                   std::span<const double> context, bool want_trajectory, bool with_logdet,
                   Rng* probe_rng) {
  return run_pass(model, zk, context, true, want_trajectory, with_logdet, probe_rng);
}

double cell_logdet_from_jacobian(const Mat& j, double dt, LogdetMethod method) {
  if (method == LogdetMethod::exact) {
    Mat a = Mat::identity(j.rows);
    for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += dt * j.data[i];
    try {
      return lu_log_abs_det(std::move(a)).log_abs;
    } catch (const NumericalError&) {
      throw NumericalError("non-invertible cell: I + dt J is singular");
    }
  }
  return detail::taylor_logdet(method, dt, trace(j), trace_of_square(j), trace_of_gram(j));
}

double cell_logdet(const VelocityField& field, std::span<const double> z, double dt,
                   LogdetMethod method, std::span<const double> context) {
  return cell_logdet_from_jacobian(jacobian(field, z, context), dt, method);
}

double hutchinson_estimate(const VelocityField& field, std::span<const double> z,
                           std::span<const Vector> probes, std::span<const double> context) {
  if (probes.empty()) throw ConfigError("hutchinson: at least one probe is required");
  double acc = 0.0;
  for (const Vector& w : probes) {
    const Vector jw = velocity_jvp(field, z, w, context);
    for (std::size_t i = 0; i < z.size(); ++i) acc += w[i] * jw[i];
  }
  return acc / static_cast<double>(probes.size());
}

double hutchinson_trace(const VelocityField& field, std::span<const double> z, int probes,
                        Rng& rng, std::span<const double> context) {
  if (probes < 1) throw ConfigError("hutchinson: at least one probe is required");
  std::vector<Vector> w(probes, Vector(z.size()));
  for (auto& row : w)
    for (double& x : row) x = rng.normal();
  return hutchinson_estimate(field, z, w, context);
}

double log_density(const FlowModel& model, const BaseDistribution& base,
                   std::span<const double> z, std::span<const double> context) {
  const FlowResult back = inverse(model, z, context);
  return base.log_density(back.z_out) + back.sum_logdet;
}

}  // namespace ddnf
