#include "ddnf/regularize.hpp"

#include <cmath>

namespace ddnf {
namespace {

std::vector<std::span<const double>> spans_of(const FlowModel& model) {
  std::vector<std::span<const double>> s;
  for (const auto& f : model.fields) s.emplace_back(f.params.values);
  return s;
}

void check_batch(const FlowModel& model, std::span<const Vector> batch,
                 std::span<const double> context) {
  if (batch.empty()) throw ConfigError("penalty: batch must be nonempty");
  for (const Vector& z : batch) check_inputs(model.spec.velocity, z.size(), context.size());
}

}  // namespace

void RegWeights::validate() const {
  if (!(gamma_geodesic >= 0.0) || !(gamma_inverse >= 0.0)) {
    throw ConfigError("regularization weights must be non-negative");
  }
}

double geodesic_penalty(const FlowModel& model, std::span<const Vector> batch,
                        std::span<const double> context) {
  check_batch(model, batch, context);
  const auto blocks = spans_of(model);
  detail::PassOptions opt;
  opt.logdet = false;
  opt.geodesic = true;
  double acc = 0.0;
  for (const Vector& z : batch) {
    acc += detail::integrate<double>(model.spec, blocks, z, context, opt, nullptr).geodesic;
  }
  return acc / static_cast<double>(batch.size());
}

double inverse_consistency_penalty(const FlowModel& model, std::span<const Vector> batch,
                                   std::span<const double> context) {
  check_batch(model, batch, context);
  const auto blocks = spans_of(model);
  detail::PassOptions opt;
  opt.logdet = false;
  double acc = 0.0;
  for (const Vector& z : batch) {
    const auto fwd = detail::integrate<double>(model.spec, blocks, z, context, opt, nullptr);
    acc += detail::inverse_residual<double>(model.spec, blocks, z, fwd.z, context);
  }
  return acc / static_cast<double>(batch.size());
}

}  // namespace ddnf
