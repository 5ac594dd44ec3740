#include <cmath>

#include "ddnf/oracles.hpp"
#include "ddnf/rng.hpp"
#include "ddnf/targets.hpp"
#include "doctest.h"

using namespace ddnf;

namespace {

Mat mat2(double a, double b, double c, double d) {
  Mat m(2, 2);
  m(0, 0) = a;
  m(0, 1) = b;
  m(1, 0) = c;
  m(1, 1) = d;
  return m;
}

double det2(const Mat& m) { return m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0); }

}  // namespace

TEST_CASE("rk45 closed forms") {
  SUBCASE("exponential growth") {
    const Vector z0{1.0};
    const RkResult r = rk45_integrate([](std::span<const double> z, std::span<double> dz) { dz[0] = z[0]; },
                                      z0, 1.0, 1e-10, 1e-12);
    CHECK(std::abs(r.z_final[0] - std::exp(1.0)) <= 1e-8);
    CHECK(r.max_error_estimate <= 1.0);
    CHECK(r.steps_accepted > 1);
  }
  SUBCASE("zero field") {
    const VelocityField f = make_constant_field(Vector{0.0, 0.0});
    const Vector z0{0.3, -1.2};
    const RkResult r = rk45_integrate(f, z0, 1.0, 1e-10, 1e-12);
    CHECK(r.z_final == z0);
    CHECK(r.steps_accepted == 1);
    CHECK(r.steps_rejected == 0);
  }
  SUBCASE("rotation") {
    const VelocityField f = make_affine_field(mat2(0, -1, 1, 0), Vector{0.0, 0.0});
    const RkResult r = rk45_integrate(f, Vector{1.0, 0.0}, 1.0, 1e-10, 1e-12);
    CHECK(std::abs(r.z_final[0] - std::cos(1.0)) <= 1e-8);
    CHECK(std::abs(r.z_final[1] - std::sin(1.0)) <= 1e-8);
  }
  SUBCASE("error scales with tolerance") {
    const VelocityField f = make_affine_field(mat2(0, -1, 1, 0), Vector{0.0, 0.0});
    auto err = [&](double rtol) {
      const Vector z = rk45_integrate(f, Vector{1.0, 0.0}, 1.0, rtol, rtol * 1e-2).z_final;
      return std::hypot(z[0] - std::cos(1.0), z[1] - std::sin(1.0));
    };
    CHECK(err(1e-8) * 10.0 <= err(1e-6));
    const Vector z0{1.0};
    auto err_exp = [&](double rtol) {
      const auto r = rk45_integrate([](std::span<const double> z, std::span<double> dz) { dz[0] = z[0]; },
                                    z0, 1.0, rtol, rtol * 1e-2);
      return std::abs(r.z_final[0] - std::exp(1.0));
    };
    CHECK(err_exp(1e-8) * 10.0 <= err_exp(1e-6));
  }
  SUBCASE("bad input") {
    const Vector z0{1.0};
    auto rhs = [](std::span<const double> z, std::span<double> dz) { dz[0] = z[0]; };
    CHECK_THROWS_AS(rk45_integrate(rhs, z0, 1.0, 0.0, 1e-6), ConfigError);
    auto blowup = [](std::span<const double> z, std::span<double> dz) { dz[0] = z[0] * z[0]; };
    CHECK_THROWS_AS(rk45_integrate(blowup, Vector{1.0}, 2.0, 1e-8, 1e-10), NumericalError);
  }
}

TEST_CASE("exact_cell_logdet") {
  CHECK(exact_cell_logdet(Mat(2, 2), 0.1).log_abs == 0.0);
  const auto d = exact_cell_logdet(mat2(1, 0, 0, 2), 0.1);
  CHECK(d.log_abs == doctest::Approx(0.27763173659827955).epsilon(1e-14));
  CHECK(d.sign == 1.0);
  const auto neg = exact_cell_logdet(mat2(-30, 0, 0, 0), 0.1);
  CHECK(neg.log_abs == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  CHECK(neg.sign == -1.0);
  CHECK_THROWS_AS(exact_cell_logdet(mat2(-10, 0, 0, 0), 0.1), NumericalError);

  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    Mat j(3, 3);
    for (double& x : j.data) x = rng.normal();
    const double tr = j(0, 0) + j(1, 1) + j(2, 2);
    if (std::abs(tr) < 0.1) continue;
    const double dt = 1e-5;
    CHECK(exact_cell_logdet(j, dt).log_abs / (dt * tr) == doctest::Approx(1.0).epsilon(0.01));
  }
}

TEST_CASE("matrix_exp") {
  CHECK(matrix_exp(Mat(2, 2)).data == Mat::identity(2).data);
  const Mat r = matrix_exp(mat2(0, -1, 1, 0));
  CHECK(r(0, 0) == doctest::Approx(std::cos(1.0)).epsilon(1e-14));
  CHECK(r(0, 1) == doctest::Approx(-std::sin(1.0)).epsilon(1e-14));
  CHECK(r(1, 0) == doctest::Approx(std::sin(1.0)).epsilon(1e-14));
  CHECK(r(1, 1) == doctest::Approx(std::cos(1.0)).epsilon(1e-14));
  Rng rng(12);
  for (int t = 0; t < 20; ++t) {
    const Mat a = mat2(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    const double want = std::exp(a(0, 0) + a(1, 1));
    CHECK(std::abs(det2(matrix_exp(a)) - want) <= 1e-10 * want);
  }
  // diagonal matrices with large norm
  const Mat big = matrix_exp(mat2(8.0, 0, 0, -6.0));
  CHECK(big(0, 0) == doctest::Approx(std::exp(8.0)).epsilon(1e-12));
  CHECK(big(1, 1) == doctest::Approx(std::exp(-6.0)).epsilon(1e-12));
}

TEST_CASE("finite differences") {
  const Vector x3{3.0};
  CHECK(std::abs(finite_diff_grad([](std::span<const double> x) { return x[0] * x[0]; }, x3, 1e-6)[0] - 6.0) <= 1e-6);
  const Vector x0{0.0};
  CHECK(std::abs(finite_diff_grad([](std::span<const double> x) { return std::tanh(x[0]); }, x0, 1e-6)[0] - 1.0) <=
        1e-9);
  CHECK_THROWS_AS(finite_diff_grad([](std::span<const double> x) { return x[0]; }, x0, 0.0), ConfigError);
  const Mat j = finite_diff_jacobian([](std::span<const double> x) { return Vector{x[0] * x[1], x[0]}; },
                                     Vector{2.0, 5.0}, 1e-6);
  CHECK(j(0, 0) == doctest::Approx(5.0));
  CHECK(j(0, 1) == doctest::Approx(2.0));
  CHECK(j(1, 0) == doctest::Approx(1.0));
  CHECK(j(1, 1) == doctest::Approx(0.0));
}

TEST_CASE("Metropolis sampler") {
  auto std_normal = [](std::span<const double> x) { return -0.5 * x[0] * x[0]; };
  SUBCASE("standard normal moments") {
    McmcOptions opt;
    opt.steps = 100000;
    opt.burn_in = 10000;
    opt.proposal_scale = {2.4};
    opt.seed = 7;
    const McmcChain c = mh_sample(std_normal, Vector{0.0}, opt);
    CHECK(c.samples.size() == 90000);
    const Moments m = sample_moments(c.samples);
    CHECK(std::abs(m.mean[0]) <= 0.05);
    CHECK(m.variance[0] >= 0.9);
    CHECK(m.variance[0] <= 1.1);
    CHECK(c.acceptance_rate > 0.0);
    CHECK(c.acceptance_rate < 1.0);
    CHECK(c.warning.empty());
  }
  SUBCASE("deterministic per seed") {
    McmcOptions opt;
    opt.steps = 2000;
    opt.burn_in = 500;
    opt.adapt_steps = 500;
    opt.seed = 3;
    const McmcChain a = mh_sample(std_normal, Vector{1.0}, opt);
    const McmcChain b = mh_sample(std_normal, Vector{1.0}, opt);
    CHECK(a.samples == b.samples);
    opt.seed = 4;
    CHECK(mh_sample(std_normal, Vector{1.0}, opt).samples != a.samples);
  }
  SUBCASE("identical proposal is always accepted") {
    CHECK(mh_acceptance_probability(-3.2, -3.2) == 1.0);
    CHECK(mh_acceptance_probability(-1.0, -2.0) == doctest::Approx(std::exp(-1.0)));
  }
  SUBCASE("mistuned scale raises a warning") {
    McmcOptions opt;
    opt.steps = 2000;
    opt.burn_in = 100;
    opt.proposal_scale = {1e-9};
    const McmcChain c = mh_sample(std_normal, Vector{0.0}, opt);
    CHECK(!c.warning.empty());
  }
  SUBCASE("bimodal target visits both modes") {
    const EnergyTarget u1(EnergyName::u1);
    McmcOptions opt;
    opt.steps = 1000000;
    opt.burn_in = 10000;
    opt.adapt_steps = 5000;
    opt.seed = 11;
    const McmcChain c = mh_sample([&](std::span<const double> z) { return u1.log_unnorm(z); },
                                  Vector{2.0, 0.0}, opt);
    double right = 0;
    for (const Vector& s : c.samples) right += s[0] > 0.0 ? 1.0 : 0.0;
    const double frac = right / static_cast<double>(c.samples.size());
    CHECK(frac >= 0.25);
    CHECK(frac <= 0.75);
  }
  SUBCASE("invalid options") {
    McmcOptions opt;
    opt.steps = 10;
    opt.burn_in = 10;
    CHECK_THROWS_AS(mh_sample(std_normal, Vector{0.0}, opt), ConfigError);
  }
}
