#pragma once

#include <span>
#include <vector>

#include "ddnf/flow.hpp"

namespace ddnf {

/// Penalty weights; a zero weight skips the penalty entirely.
struct RegWeights {
  double gamma_geodesic = 0.0;
  double gamma_inverse = 0.0;
  void validate() const;
};

/// Sum over all K T cells of dt * mean_batch |v_k(z_cell)|^2, with z_cell the
/// point each sample's forward trajectory enters the cell at.
double geodesic_penalty(const FlowModel& model, std::span<const Vector> batch,
                        std::span<const double> context = {});

/// mean_batch |z0 - inverse(forward(z0))|_2 (Euclidean norm, not squared).
double inverse_consistency_penalty(const FlowModel& model, std::span<const Vector> batch,
                                   std::span<const double> context = {});

namespace detail {

/// |z0 - inverse(zk)|_2 for one sample, differentiable in the parameters.
template <class T>
T inverse_residual(const FlowSpec& spec, std::span<const std::span<const T>> blocks,
                   std::span<const T> z0, std::span<const T> zk, std::span<const T> ctx) {
  using std::sqrt;
  PassOptions opt;
  opt.inverse = true;
  opt.logdet = false;
  const auto back = integrate<T>(spec, blocks, zk, ctx, opt, nullptr);
  T sq(0.0);
  for (std::size_t i = 0; i < z0.size(); ++i) {
    const T r = z0[i] - back.z[i];
    sq = sq + r * r;
  }
  return sqrt(sq);
}

}  // namespace detail
}  // namespace ddnf
