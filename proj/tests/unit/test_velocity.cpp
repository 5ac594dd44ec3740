#include <cmath>

#include "ddnf/oracles.hpp"
#include "ddnf/rng.hpp"
#include "ddnf/velocity.hpp"
#include "doctest.h"

using namespace ddnf;

namespace {

Mat rotation_generator() {
  Mat a(2, 2);
  a(0, 1) = -1.0;
  a(1, 0) = 1.0;
  return a;
}

// Largest singular value by power iteration on W^T W.
double operator_norm(const Mat& w) {
  Vector x(w.cols, 1.0);
  double s = 0.0;
  for (int it = 0; it < 200; ++it) {
    const Vector y = matvec<double, double>(w, x);
    Vector z(w.cols, 0.0);
    for (std::size_t r = 0; r < w.rows; ++r)
      for (std::size_t c = 0; c < w.cols; ++c) z[c] += w(r, c) * y[r];
    double n = 0.0;
    for (double v : z) n += v * v;
    n = std::sqrt(n);
    if (n == 0.0) return 0.0;
    for (std::size_t c = 0; c < w.cols; ++c) x[c] = z[c] / n;
    s = std::sqrt(n);
  }
  return s;
}

}  // namespace

TEST_CASE("init") {
  VelocitySpec spec;
  spec.zero_init_output = true;
  SUBCASE("zero output layer gives the zero field") {
    const VelocityField f = init_velocity(spec, 123);
    Rng rng(1);
    for (int i = 0; i < 10; ++i) {
      const Vector z{5.0 * rng.normal(), 5.0 * rng.normal()};
      CHECK(eval(f, z) == Vector{0.0, 0.0});
    }
    const Vector z{5.0, -3.0};
    CHECK(eval(f, z) == Vector{0.0, 0.0});
    const Mat j = jacobian(f, z);
    CHECK(j.data == Vector(4, 0.0));
  }
  SUBCASE("deterministic per seed") {
    spec.zero_init_output = false;
    CHECK(init_velocity(spec, 7).params.values == init_velocity(spec, 7).params.values);
    CHECK(init_velocity(spec, 7).params.values != init_velocity(spec, 8).params.values);
  }
  SUBCASE("zero-width layer rejected") {
    spec.hidden = {2, 0};
    CHECK_THROWS_AS(init_velocity(spec, 1), ConfigError);
  }
}

TEST_CASE("eval and jacobian of a linear field") {
  const Vector b{0.0, 0.0};
  const VelocityField f = make_affine_field(rotation_generator(), b);
  const Vector z{1.0, 0.0};
  CHECK(eval(f, z) == Vector{0.0, 1.0});
  CHECK(jacobian(f, z).data == rotation_generator().data);
}

TEST_CASE("eval is pure") {
  const VelocityField f = init_velocity(VelocitySpec{}, 99);
  const Vector z{0.3, -0.8};
  const Vector a = eval(f, z), b = eval(f, z);
  CHECK(a == b);
}

TEST_CASE("jacobian matches finite differences and jvp") {
  Rng rng(17);
  for (int t = 0; t < 10; ++t) {
    const VelocityField f = init_velocity(VelocitySpec{}, 100 + t);
    const Vector z{rng.normal(), rng.normal()};
    const Mat j = jacobian(f, z);
    const Mat fd = finite_diff_jacobian([&](std::span<const double> x) { return eval(f, x); }, z, 1e-6);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(std::abs(j.data[i] - fd.data[i]) <= 1e-5 * std::max(1.0, std::abs(fd.data[i])));
    }
    const Vector w{rng.normal(), rng.normal()};
    const Vector jw = matvec<double, double>(j, w);
    const Vector dual = velocity_jvp(f, z, w);
    for (int i = 0; i < 2; ++i) CHECK(std::abs(jw[i] - dual[i]) <= 1e-12);
  }
}

TEST_CASE("velocity magnitude bounded by output layer") {
  Rng rng(5);
  for (int t = 0; t < 10; ++t) {
    VelocitySpec spec;
    spec.hidden = {3, 4};
    spec.init_scale = 2.0;
    const VelocityField f = init_velocity(spec, 200 + t);
    const DenseLayer out = f.params.unflatten().back();
    double bnorm = 0.0;
    for (double x : out.bias) bnorm += x * x;
    const double bound = operator_norm(out.weight) * std::sqrt(4.0) + std::sqrt(bnorm);
    for (int s = 0; s < 50; ++s) {
      const Vector z{10.0 * rng.normal(), 10.0 * rng.normal()};
      const Vector v = eval(f, z);
      CHECK(std::hypot(v[0], v[1]) <= bound + 1e-12);
    }
  }
}

TEST_CASE("context handling") {
  VelocitySpec spec;
  spec.context_dim = 3;
  const VelocityField f = init_velocity(spec, 4);
  const Vector z{0.1, 0.2};
  const Vector ctx{1.0, 0.0, -1.0};
  CHECK_THROWS_AS(eval(f, z), ConfigError);
  CHECK_THROWS_AS(eval(f, z, Vector{1.0}), ConfigError);
  CHECK_NOTHROW(eval(f, z, ctx));
  const VelocityField plain = init_velocity(VelocitySpec{}, 4);
  CHECK_THROWS_AS(eval(plain, z, ctx), ConfigError);
  CHECK_THROWS_AS(eval(plain, Vector{1.0, 2.0, 3.0}), ConfigError);
}

TEST_CASE("parameter layout round-trips") {
  Rng rng(8);
  for (int t = 0; t < 20; ++t) {
    VelocitySpec spec;
    spec.dim = 1 + static_cast<int>(rng.uniform() * 4);
    spec.context_dim = static_cast<int>(rng.uniform() * 3);
    spec.hidden.assign(static_cast<int>(rng.uniform() * 3), 1 + static_cast<int>(rng.uniform() * 5));
    const VelocityField f = init_velocity(spec, t);
    const auto layers = f.params.unflatten();
    const ParamVector back = ParamVector::flatten(f.params.layout, layers);
    CHECK(back.values == f.params.values);
    const auto& ls = f.params.layout.layers();
    CHECK(ls.front().in == spec.dim + spec.context_dim);
    CHECK(ls.back().out == spec.dim);
    CHECK(f.params.layout.weight_index(0, 0, 0) == 0);
    CHECK(f.params.layout.bias_index(0, 0) == static_cast<std::size_t>(ls[0].in * ls[0].out));
  }
}
