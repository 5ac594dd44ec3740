#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ddnf/autodiff.hpp"
#include "ddnf/linalg.hpp"
#include "ddnf/rng.hpp"
#include "ddnf/targets.hpp"
#include "ddnf/velocity.hpp"

namespace ddnf {

enum class LogdetMethod { first_order, second_order_paper, second_order_series, exact };

LogdetMethod parse_logdet_method(const std::string& s);
const char* to_string(LogdetMethod m);

/// K blocks of T Euler cells over the unit interval, dt = 1 / (K T).
struct FlowSpec {
  int dim = 2;
  int blocks = 1;
  int cells_per_block = 8;
  LogdetMethod logdet = LogdetMethod::exact;
  int probes = 0;  // Hutchinson probes for the Taylor methods; 0 uses exact traces
  int context_dim = 0;
  VelocitySpec velocity;  // dim and context_dim are kept in sync by validate()

  double dt() const { return 1.0 / (static_cast<double>(blocks) * cells_per_block); }
  int cells() const { return blocks * cells_per_block; }
  /// Syncs velocity.dim / velocity.context_dim and checks ranges.
  void normalize();
  void validate() const;

  /// Exact for d <= 4, second_order_series above.
  static LogdetMethod default_method(int dim);
};

struct FlowModel {
  FlowSpec spec;
  std::vector<VelocityField> fields;  // one per block

  std::size_t param_count() const;
  Vector flat_params() const;
  void set_flat_params(std::span<const double> values);
};

/// Block k is initialized from an independent stream of `seed`.
FlowModel init_flow(FlowSpec spec, std::uint64_t seed);
/// Every block uses the given field (for example a linear or constant field).
FlowModel make_flow(FlowSpec spec, const VelocityField& field);
/// Every block widened by `context_dim` zero-weighted context inputs.
FlowModel with_context(const FlowModel& model, int context_dim);

struct FlowResult {
  Vector z_out;
  double sum_logdet = 0.0;
  std::vector<Vector> trajectory;  // entry point of every cell plus the final point
};

Vector euler_step(const VelocityField& field, std::span<const double> z, double dt,
                  std::span<const double> context = {});

/// `probe_rng` feeds Hutchinson probes when spec.probes > 0; a fixed-seed
/// generator is used when it is null.
FlowResult forward(const FlowModel& model, std::span<const double> z0,
                   std::span<const double> context = {}, bool want_trajectory = false,
                   bool with_logdet = true, Rng* probe_rng = nullptr);
/// Integrates -v through the blocks in reverse order.
FlowResult inverse(const FlowModel& model, std::span<const double> zk,
                   std::span<const double> context = {}, bool want_trajectory = false,
                   bool with_logdet = true, Rng* probe_rng = nullptr);

double cell_logdet(const VelocityField& field, std::span<const double> z, double dt,
                   LogdetMethod method, std::span<const double> context = {});
/// Same formulas from an explicit cell Jacobian.
double cell_logdet_from_jacobian(const Mat& j, double dt, LogdetMethod method);

/// (1/M) sum_m w_m^T J w_m with standard-normal probes and J w by jvp.
double hutchinson_trace(const VelocityField& field, std::span<const double> z, int probes,
                        Rng& rng, std::span<const double> context = {});
/// The same estimator over caller-supplied probe vectors.
double hutchinson_estimate(const VelocityField& field, std::span<const double> z,
                           std::span<const Vector> probes, std::span<const double> context = {});

/// log q1(z) = log q0(inverse(z)) + sum of backward cell log-determinants.
double log_density(const FlowModel& model, const BaseDistribution& base,
                   std::span<const double> z, std::span<const double> context = {});

namespace detail {

template <class T>
T taylor_logdet(LogdetMethod method, double dt, const T& tr, const T& tr_sq, const T& tr_gram) {
  switch (method) {
    case LogdetMethod::first_order: return dt * tr;
    case LogdetMethod::second_order_paper: return dt * tr - (0.5 * dt * dt) * tr_gram;
    case LogdetMethod::second_order_series: return dt * tr - (0.5 * dt * dt) * tr_sq;
    case LogdetMethod::exact: break;
  }
  throw ConfigError("taylor_logdet: exact is not a Taylor method");
}

template <class T>
struct CellEval {
  std::vector<T> velocity;  // already multiplied by the direction sign
  T logdet;
};

/// Velocity of one cell and, if requested, its log-determinant. `direction`
/// is +1 for the forward flow and -1 for the inverse flow (field -v).
template <class T>
CellEval<T> eval_cell(const VelocitySpec& vs, std::span<const T> params, std::span<const T> z,
                      std::span<const T> ctx, double dt, double direction, LogdetMethod method,
                      int probes, Rng* rng, bool need_logdet) {
  CellEval<T> out{{}, T(0.0)};
  if (!need_logdet) {
    out.velocity = mlp_eval<T, T>(vs, params, z, ctx);
    if (direction < 0) for (T& x : out.velocity) x = -x;
    return out;
  }
  const std::size_t d = z.size();
  if (method == LogdetMethod::exact || probes <= 0) {
    auto vj = mlp_eval_jacobian<T>(vs, params, z, ctx);
    if (direction < 0) {
      for (T& x : vj.velocity) x = -x;
      for (T& x : vj.jacobian.data) x = -x;
    }
    out.velocity = std::move(vj.velocity);
    if (method == LogdetMethod::exact) {
      Matrix<T> a(d, d);
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t k = 0; k < d; ++k)
          a(i, k) = (i == k ? T(1.0) : T(0.0)) + dt * vj.jacobian(i, k);
      out.logdet = lu_log_abs_det(std::move(a)).log_abs;
    } else {
      const T tr = trace(vj.jacobian);
      const T tr_sq = method == LogdetMethod::second_order_series ? trace_of_square(vj.jacobian) : T(0.0);
      const T tr_gram = method == LogdetMethod::second_order_paper ? trace_of_gram(vj.jacobian) : T(0.0);
      out.logdet = taylor_logdet(method, dt, tr, tr_sq, tr_gram);
    }
    return out;
  }
  if (rng == nullptr) throw ConfigError("Hutchinson probes need a random generator");
  // Hutchinson: E[w^T J w] = Tr J, E[w^T J (J w)] = Tr J^2, E[|J w|^2] = Tr J^T J.
  using D = ad::Dual<T>;
  std::vector<D> dctx(ctx.size());
  for (std::size_t i = 0; i < ctx.size(); ++i) dctx[i] = {ctx[i], T(0.0)};
  auto jv = [&](std::span<const T> dir) {
    std::vector<D> dz(d);
    for (std::size_t i = 0; i < d; ++i) dz[i] = {z[i], dir[i]};
    const auto o = mlp_eval<D, T>(vs, params, std::span<const D>(dz), std::span<const D>(dctx));
    std::vector<T> t(d);
    for (std::size_t i = 0; i < d; ++i) t[i] = o[i].tan;
    return t;
  };
  out.velocity = mlp_eval<T, T>(vs, params, z, ctx);
  T tr(0.0), tr_sq(0.0), tr_gram(0.0);
  for (int m = 0; m < probes; ++m) {
    std::vector<T> w(d);
    for (std::size_t i = 0; i < d; ++i) w[i] = T(rng->normal());
    const std::vector<T> jw = jv(std::span<const T>(w));
    for (std::size_t i = 0; i < d; ++i) tr = tr + w[i] * jw[i];
    if (method == LogdetMethod::second_order_series) {
      const std::vector<T> jjw = jv(std::span<const T>(jw));
      for (std::size_t i = 0; i < d; ++i) tr_sq = tr_sq + w[i] * jjw[i];
    } else if (method == LogdetMethod::second_order_paper) {
      for (std::size_t i = 0; i < d; ++i) tr_gram = tr_gram + jw[i] * jw[i];
    }
  }
  const double inv_m = 1.0 / probes;
  tr = tr * inv_m;
  tr_sq = tr_sq * inv_m;
  tr_gram = tr_gram * inv_m;
  if (direction < 0) {
    tr = -tr;
    for (T& x : out.velocity) x = -x;
  }
  out.logdet = taylor_logdet(method, dt, tr, tr_sq, tr_gram);
  return out;
}

template <class T>
struct PassResult {
  std::vector<T> z;
  T logdet;
  T geodesic;  // sum over cells of dt |v|^2
  std::vector<std::vector<T>> trajectory;
};

struct PassOptions {
  bool inverse = false;
  bool logdet = true;
  bool geodesic = false;
  bool trajectory = false;
};

/// Runs all K T Euler cells. `blocks[k]` holds the flat parameters of block k.
template <class T>
PassResult<T> integrate(const FlowSpec& spec, std::span<const std::span<const T>> blocks,
                        std::span<const T> z0, std::span<const T> ctx, const PassOptions& opt,
                        Rng* rng) {
  using ad::value_of;
  const double dt = spec.dt();
  const int nblocks = spec.blocks;
  PassResult<T> out{std::vector<T>(z0.begin(), z0.end()), T(0.0), T(0.0), {}};
  std::vector<T>& z = out.z;
  for (int kk = 0; kk < nblocks; ++kk) {
    const int k = opt.inverse ? nblocks - 1 - kk : kk;
    for (int c = 0; c < spec.cells_per_block; ++c) {
      if (opt.trajectory) out.trajectory.push_back(z);
      try {
        CellEval<T> cell =
            eval_cell<T>(spec.velocity, blocks[k], std::span<const T>(z), ctx, dt,
                         opt.inverse ? -1.0 : 1.0, spec.logdet, spec.probes, rng, opt.logdet);
        if (opt.geodesic) {
          T sq(0.0);
          for (const T& v : cell.velocity) sq = sq + v * v;
          out.geodesic = out.geodesic + dt * sq;
        }
        for (std::size_t i = 0; i < z.size(); ++i) {
          z[i] = z[i] + dt * cell.velocity[i];
          if (!std::isfinite(value_of(z[i]))) throw NumericalError("non-finite point");
        }
        if (opt.logdet) out.logdet = out.logdet + cell.logdet;
      } catch (const NumericalError& e) {
        throw NumericalError(std::string(opt.inverse ? "inverse" : "forward") + " pass, block " +
                             std::to_string(k) + " cell " + std::to_string(c) + ": " + e.what());
      }
    }
  }
  if (opt.trajectory) out.trajectory.push_back(z);
  return out;
}

}  // namespace detail
}  // namespace ddnf
