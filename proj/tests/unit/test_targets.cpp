#include <algorithm>
#include <cmath>

#include "ddnf/oracles.hpp"
#include "ddnf/rng.hpp"
#include "ddnf/targets.hpp"
#include "doctest.h"

using namespace ddnf;
using ad::Var;

TEST_CASE("base distribution") {
  const BaseDistribution q = BaseDistribution::standard(2);
  CHECK(q.log_density(Vector{0.0, 0.0}) == doctest::Approx(-1.8378770664093453).epsilon(1e-14));
  const int n = 400;
  const double h = 16.0 / n;
  double acc = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) acc += std::exp(q.log_density(Vector{-8.0 + (i + 0.5) * h, -8.0 + (j + 0.5) * h}));
  CHECK(std::abs(acc * h * h - 1.0) <= 1e-3);

  BaseDistribution shifted = q;
  shifted.mu = {1.0, -2.0};
  shifted.log_sigma = {std::log(2.0), 0.0};
  const Vector z = shifted.transform(Vector{0.5, 1.0});
  CHECK(z == Vector{2.0, -1.0});
  CHECK(shifted.log_density(z) == doctest::Approx(-0.125 - 0.5 - std::log(2.0) - 2 * kHalfLog2Pi));
}

TEST_CASE("energy examples") {
  CHECK(std::abs(energy<double>(EnergyName::u1, Vector{2.0, 0.0})) < 1e-5);
  CHECK(energy<double>(EnergyName::u1, Vector{0.0, 0.0}) == doctest::Approx(50.0 + 3.125 - std::log(2.0)).epsilon(1e-13));
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const double a = 3 * rng.normal(), b = 3 * rng.normal();
    for (auto name : {EnergyName::u1, EnergyName::u2}) {
      for (auto ring : {RingNorm::squared, RingNorm::plain}) {
        const double l = energy<double>(name, Vector{a, b}, ring);
        const double r = energy<double>(name, Vector{-a, b}, ring);
        CHECK(std::isfinite(l));
        CHECK(std::abs(l - r) <= 1e-12 * std::max(1.0, std::abs(l)));
      }
    }
  }
  CHECK(parse_energy_name("u2") == EnergyName::u2);
  CHECK_THROWS_AS(parse_energy_name("u9"), ConfigError);
}

TEST_CASE("energy mass is split evenly between the modes") {
  for (auto name : {EnergyName::u1, EnergyName::u2}) {
    const int n = 400;
    const double h = 12.0 / n;
    double left = 0, right = 0, total = 0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const double x = -6.0 + (i + 0.5) * h, y = -6.0 + (j + 0.5) * h;
        const double p = std::exp(-energy<double>(name, Vector{x, y}));
        total += p;
        if (x > 0.5) right += p;
        if (x < -0.5) left += p;
      }
    CHECK(std::isfinite(total));
    CHECK(total > 0.0);
    CHECK(std::abs(left - right) <= 0.01 * std::max(left, right));
  }
}

TEST_CASE("log_gamma against the standard library") {
  for (double x : {1e-3, 0.1, 0.5, 1.0, 1.5, 2.0, 3.7, 10.0, 123.4, 1e4, 1e6}) {
    CAPTURE(x);
    CHECK(std::abs(log_gamma(x) - std::lgamma(x)) <= 1e-12 * std::max(1.0, std::abs(std::lgamma(x))));
  }
  CHECK(log_beta(2.0, 3.0) == doctest::Approx(std::log(1.0 / 12.0)).epsilon(1e-13));
}

TEST_CASE("beta-binomial posterior") {
  CHECK(betabinom_log_prior(0.5, 1.0) == doctest::Approx(0.0).epsilon(1e-15));
  BetaBinomialModel one{{{1, 1}}};
  CHECK(betabinom_log_likelihood<double>(0.3, 2.0, one) == doctest::Approx(std::log(0.3)).epsilon(1e-12));

  BetaBinomialModel data{{{20, 3}, {1000, 5}, {150, 2}, {7, 0}, {500, 500}}};
  Rng rng(6);
  for (int t = 0; t < 10; ++t) {
    const Vector z{rng.normal() - 2.0, rng.normal() + 1.0};
    const Vector g = ad::grad([&](std::span<const Var> v) { return betabinom_log_unnorm_posterior<Var>(v, data); }, z);
    const Vector fd = finite_diff_grad(
        [&](std::span<const double> v) { return betabinom_log_unnorm_posterior<double>(v, data); }, z, 1e-6);
    for (int i = 0; i < 2; ++i) CHECK(std::abs(g[i] - fd[i]) <= 1e-5 * std::max(1.0, std::abs(fd[i])));
  }

  // posterior = prior + likelihood + log-Jacobian
  const Vector z{-1.2, 0.7};
  const auto [m, big_l] = betabinom_constrain(z);
  const double want = betabinom_log_prior(m, big_l) + betabinom_log_likelihood<double>(m, big_l, data) +
                      std::log(m * (1 - m)) + z[1];
  CHECK(betabinom_log_unnorm_posterior<double>(z, data) == doctest::Approx(want).epsilon(1e-12));

  BetaBinomialModel perm = data;
  std::reverse(perm.data.begin(), perm.data.end());
  std::swap(perm.data[0], perm.data[2]);
  CHECK(betabinom_log_unnorm_posterior<double>(z, perm) ==
        doctest::Approx(betabinom_log_unnorm_posterior<double>(z, data)).epsilon(1e-13));

  CHECK_THROWS_AS(betabinom_log_unnorm_posterior<double>(z, BetaBinomialModel{}), ConfigError);
  CHECK_THROWS_AS(BetaBinomialTarget(BetaBinomialModel{{{3, 4}}}), ConfigError);
  CHECK_THROWS_AS(BetaBinomialTarget(BetaBinomialModel{{{0, 0}}}), ConfigError);
  CHECK(std::isfinite(betabinom_log_unnorm_posterior<double>(Vector{-30.0, 15.0}, data)));
}

TEST_CASE("planar constraint") {
  const Vector w{1.0, 2.0};
  const Vector u0{2.0, -1.0};  // w^T u = 0
  const auto uh = planar_constrain<double>(u0, w);
  const double k = -1.0 + std::log(2.0);
  CHECK(uh[0] == doctest::Approx(2.0 + k / 5.0).epsilon(1e-14));
  CHECK(uh[1] == doctest::Approx(-1.0 + 2.0 * k / 5.0).epsilon(1e-14));

  const Vector big{20.0, 0.0};  // w^T u = 20
  const auto ub = planar_constrain<double>(big, w);
  CHECK(ub[0] == doctest::Approx(20.0 - 1.0 / 5.0).epsilon(1e-8));
  CHECK(ub[1] == doctest::Approx(-2.0 / 5.0).epsilon(1e-8));

  Rng rng(2);
  for (int t = 0; t < 100; ++t) {
    const Vector u{3 * rng.normal(), 3 * rng.normal()}, ww{rng.normal(), rng.normal()};
    const auto c = planar_constrain<double>(u, ww);
    CHECK(ww[0] * c[0] + ww[1] * c[1] > -1.0);
  }
  CHECK_THROWS_AS(planar_constrain<double>(u0, Vector{0.0, 0.0}), ConfigError);
}

TEST_CASE("planar layer") {
  const auto [z, ld] = planar_forward(PlanarLayer{{0.0, 0.0}, {1.0, -1.0}, 0.3}, Vector{0.4, 0.2});
  CHECK(z == Vector{0.4, 0.2});
  CHECK(ld == 0.0);
  const auto [z1, ld1] = planar_forward(PlanarLayer{{0.5}, {1.0}, 0.0}, Vector{0.0});
  CHECK(z1[0] == 0.0);
  CHECK(ld1 == doctest::Approx(std::log(1.5)).epsilon(1e-15));

  Rng rng(4);
  for (int t = 0; t < 20; ++t) {
    const Vector w{rng.normal(), rng.normal()};
    const auto u = planar_constrain<double>(Vector{rng.normal(), rng.normal()}, w);
    const PlanarLayer layer{u, w, rng.normal()};
    const Vector p{rng.normal(), rng.normal()};
    const Mat j = finite_diff_jacobian([&](std::span<const double> x) { return planar_forward(layer, x).first; }, p,
                                       1e-6);
    const double want = std::log(std::abs(j(0, 0) * j(1, 1) - j(0, 1) * j(1, 0)));
    CHECK(std::abs(planar_forward(layer, p).second - want) <= 1e-5 * std::max(1.0, std::abs(want)));
  }

  const PlanarFlow f = init_planar(2, 3, 9);
  CHECK(PlanarFlow::from_flat(2, f.flat()).flat() == f.flat());
  CHECK(f.param_count() == 15);
}
