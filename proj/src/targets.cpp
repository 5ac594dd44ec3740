#include "ddnf/targets.hpp"

#include <cmath>

namespace ddnf {

BaseDistribution BaseDistribution::standard(int dim, bool learnable) {
  if (dim <= 0) throw ConfigError("base distribution dimension must be positive");
  return {dim, Vector(dim, 0.0), Vector(dim, 0.0), learnable};
}

double BaseDistribution::log_density(std::span<const double> z) const {
  if (z.size() != static_cast<std::size_t>(dim)) throw ConfigError("base: dimension mismatch");
  double acc = 0.0;
  for (int i = 0; i < dim; ++i) {
    const double u = (z[i] - mu[i]) * std::exp(-log_sigma[i]);
    acc += -0.5 * u * u - log_sigma[i] - kHalfLog2Pi;
  }
  return acc;
}

Vector BaseDistribution::transform(std::span<const double> eps) const {
  Vector z(dim);
  for (int i = 0; i < dim; ++i) z[i] = mu[i] + std::exp(log_sigma[i]) * eps[i];
  return z;
}

Vector BaseDistribution::sample(Rng& rng) const {
  Vector eps(dim);
  for (double& e : eps) e = rng.normal();
  return transform(eps);
}

EnergyName parse_energy_name(const std::string& s) {
  if (s == "u1") return EnergyName::u1;
  if (s == "u2") return EnergyName::u2;
  throw ConfigError("unknown energy '" + s + "' (expected u1 or u2)");
}

const char* to_string(EnergyName name) { return name == EnergyName::u1 ? "u1" : "u2"; }

void BetaBinomialModel::validate() const {
  if (data.empty()) throw ConfigError("beta-binomial model has no data records");
  for (const auto& r : data) {
    if (r.n <= 0 || r.y < 0 || r.y > r.n) {
      throw ConfigError("beta-binomial record requires n > 0 and 0 <= y <= n");
    }
  }
}

double betabinom_log_prior(double m, double big_l) {
  return -std::log(m) - std::log1p(-m) - 2.0 * std::log1p(big_l);
}

std::pair<double, double> betabinom_constrain(std::span<const double> z) {
  return {1.0 / (1.0 + std::exp(-z[0])), std::exp(z[1])};
}

BetaBinomialTarget::BetaBinomialTarget(BetaBinomialModel model) : model_(std::move(model)) {
  model_.validate();
}

Vector PlanarFlow::flat() const {
  Vector out;
  out.reserve(param_count());
  for (const PlanarLayer& l : layers) {
    out.insert(out.end(), l.u.begin(), l.u.end());
    out.insert(out.end(), l.w.begin(), l.w.end());
    out.push_back(l.b);
  }
  return out;
}

PlanarFlow PlanarFlow::from_flat(int dim, std::span<const double> values) {
  const std::size_t per = 2 * static_cast<std::size_t>(dim) + 1;
  if (values.size() % per != 0) throw ConfigError("planar: parameter count mismatch");
  PlanarFlow f{dim, {}};
  for (std::size_t off = 0; off < values.size(); off += per) {
    PlanarLayer l;
    l.u.assign(values.begin() + off, values.begin() + off + dim);
    l.w.assign(values.begin() + off + dim, values.begin() + off + 2 * dim);
    l.b = values[off + 2 * dim];
    f.layers.push_back(std::move(l));
  }
  return f;
}

PlanarFlow init_planar(int dim, int layers, std::uint64_t seed) {
  if (dim <= 0 || layers <= 0) throw ConfigError("planar: dim and layer count must be positive");
  Rng rng(seed);
  PlanarFlow f{dim, {}};
  for (int k = 0; k < layers; ++k) {
    PlanarLayer l{Vector(dim), Vector(dim), 0.0};
    for (double& x : l.u) x = 0.1 * rng.normal();
    for (double& x : l.w) x = 0.1 * rng.normal();
    l.b = 0.1 * rng.normal();
    f.layers.push_back(std::move(l));
  }
  return f;
}

std::pair<Vector, double> planar_forward(const PlanarLayer& layer, std::span<const double> z) {
  if (layer.u.size() != z.size() || layer.w.size() != z.size()) {
    throw ConfigError("planar: dimension mismatch");
  }
  Vector params(layer.u);
  params.insert(params.end(), layer.w.begin(), layer.w.end());
  params.push_back(layer.b);
  auto step = planar_apply<double>(std::span<const double>(params), z, false);
  return {std::move(step.z), step.logdet};
}

}  // namespace ddnf
