#include <cmath>

#include "ddnf/experiments.hpp"
#include "doctest.h"

using namespace ddnf;

TEST_CASE("sweeps") {
  SweepConfig cfg;
  cfg.t_list = {1, 2, 4, 8};
  cfg.trials = 3;
  cfg.samples = 10;

  SUBCASE("zero fields give zero error") {
    cfg.field = FieldKind::zero;
    for (const auto& rows : {run_ode_accuracy(cfg), run_inversion(cfg)}) {
      REQUIRE(rows.size() == cfg.t_list.size());
      for (const SweepRow& r : rows) {
        CHECK(r.mse == 0.0);
        CHECK(r.std == 0.0);
      }
    }
  }
  SUBCASE("constant fields invert up to rounding") {
    cfg.field = FieldKind::constant;
    for (const SweepRow& r : run_inversion(cfg)) CHECK(r.mse < 1e-28);
    for (const SweepRow& r : run_ode_accuracy(cfg)) CHECK(r.mse < 1e-24);
  }
  SUBCASE("random fields") {
    const auto rows = run_ode_accuracy(cfg);
    REQUIRE(rows.size() == 4);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      CHECK(rows[i].cells == cfg.t_list[i]);
      CHECK(rows[i].rmse == doctest::Approx(std::sqrt(rows[i].mse)));
      if (i > 0) CHECK(rows[i].mse < rows[i - 1].mse);
    }
    const auto again = run_ode_accuracy(cfg);
    CHECK(again[3].mse == rows[3].mse);
    cfg.seed = 1;
    CHECK(run_ode_accuracy(cfg)[3].mse != rows[3].mse);
  }
  SUBCASE("validation") {
    cfg.t_list.clear();
    CHECK_THROWS_AS(run_inversion(cfg), ConfigError);
    cfg.t_list = {0};
    CHECK_THROWS_AS(run_inversion(cfg), ConfigError);
  }
}

TEST_CASE("log-log slope") {
  const Vector x{1, 2, 4, 8};
  const Vector y{3, 0.75, 0.1875, 0.046875};
  CHECK(loglog_slope(x, y) == doctest::Approx(-2.0).epsilon(1e-12));
  CHECK_THROWS_AS(loglog_slope(x, Vector{1, 0, 1, 1}), NumericalError);
}

TEST_CASE("grid points are row-major with x outer") {
  const GridSpec g{-1.0, 1.0, 3};
  const auto p = g.points();
  REQUIRE(p.size() == 9);
  CHECK(p[1] == Vector{-1.0, 0.0});
  CHECK(p[3] == Vector{0.0, -1.0});
  CHECK_THROWS_AS((GridSpec{1.0, 1.0, 3}.points()), ConfigError);
  CHECK_THROWS_AS((GridSpec{0.0, 1.0, 1}.points()), ConfigError);
}

TEST_CASE("grid export") {
  const GridSpec deform;
  const GridSpec heat{-3.0, 3.0, 15};
  FlowSpec s;
  s.blocks = 2;
  s.cells_per_block = 4;

  SUBCASE("identity model") {
    s.velocity.zero_init_output = true;
    const VariationalModel m = make_ddnf_model(init_flow(s, 1), BaseDistribution::standard(2));
    const GridExport g = export_grid(m, deform, heat);
    REQUIRE(g.points.size() == 400);
    CHECK(g.deformed == g.points);
    for (const Vector& d : g.displacement) CHECK(d == Vector{0.0, 0.0});
    REQUIRE(g.heat_log_density.size() == 225);
    for (std::size_t i = 0; i < g.heat_points.size(); ++i) {
      CHECK(std::abs(g.heat_log_density[i] - m.base.log_density(g.heat_points[i])) <= 1e-12);
    }
    CHECK(g.mean_inverse_residual == 0.0);
  }
  SUBCASE("constant field is a translation") {
    const Vector c{0.75, -0.5};
    const VariationalModel m = make_ddnf_model(make_flow(s, make_constant_field(c)), BaseDistribution::standard(2));
    const GridExport g = export_grid(m, deform, heat);
    for (const Vector& d : g.displacement) {
      CHECK(std::abs(d[0] - c[0]) <= 1e-14);
      CHECK(std::abs(d[1] - c[1]) <= 1e-14);
    }
    CHECK(g.mean_inverse_residual <= 1e-14);
  }
  SUBCASE("random model") {
    s.velocity.init_scale = 2.0;
    const FlowModel flow = init_flow(s, 4);
    const GridExport g = export_grid(make_ddnf_model(flow, BaseDistribution::standard(2)), deform, heat);
    CHECK(g.mean_inverse_residual > 0.0);
    CHECK(g.mean_inverse_residual == mean_inverse_residual(flow, deform));
  }
  SUBCASE("planar models are rejected") {
    const VariationalModel m = make_planar_model(init_planar(2, 2, 0), BaseDistribution::standard(2));
    CHECK_THROWS_AS(export_grid(m, deform, heat), ConfigError);
  }
}

TEST_CASE("fit") {
  FitConfig cfg;
  cfg.flow.blocks = 2;
  cfg.flow.cells_per_block = 2;
  cfg.train.iterations = 20;
  cfg.train.batch_size = 16;
  cfg.train.eval_every = 5;
  cfg.sample_count = 50;
  cfg.eval_samples = 100;
  cfg.heat = {-4.0, 4.0, 10};

  SUBCASE("energy") {
    const FitOutput a = run_fit(cfg);
    const FitOutput b = run_fit(cfg);
    CHECK(!a.train.diverged);
    CHECK(a.train.history.size() == 4);
    CHECK(a.samples.size() == 50);
    CHECK(a.heat_log_density.size() == 100);
    CHECK(std::isfinite(a.final_neg_elbo));
    CHECK(a.samples == b.samples);
    CHECK(a.final_neg_elbo == b.final_neg_elbo);
  }
  SUBCASE("planar has no heatmap") {
    cfg.flow_kind = FlowKind::planar;
    cfg.planar_layers = 3;
    const FitOutput a = run_fit(cfg);
    CHECK(a.heat_points.empty());
    CHECK(a.samples.size() == 50);
  }
  SUBCASE("posterior samples are constrained") {
    cfg.kind = FitKind::posterior;
    CHECK_THROWS_AS(run_fit(cfg), ConfigError);
    cfg.data = {{{1000, 5}, {2000, 12}, {500, 2}}};
    const FitOutput a = run_fit(cfg);
    CHECK(a.train.model.base.learnable);
    for (const Vector& p : a.samples) {
      CHECK(p[0] > 0.0);
      CHECK(p[0] < 1.0);
      CHECK(p[1] > 0.0);
    }
  }
}

TEST_CASE("mcmc runner") {
  McmcRunConfig cfg;
  cfg.standard_normal = true;
  cfg.dim = 2;
  cfg.options.steps = 2000;
  cfg.options.burn_in = 200;
  cfg.options.proposal_scale = {1.5};
  const McmcRunOutput a = run_mcmc(cfg);
  CHECK(a.chain.samples.size() == 1800);
  CHECK(a.moments.mean.size() == 2);
  CHECK(!a.constrained);
  CHECK(run_mcmc(cfg).chain.samples == a.chain.samples);

  cfg.standard_normal = false;
  cfg.data = {{{1000, 5}, {2000, 12}, {500, 2}}};
  cfg.options.proposal_scale = {0.1};
  cfg.options.adapt_steps = 100;
  const McmcRunOutput p = run_mcmc(cfg);
  REQUIRE(p.constrained);
  CHECK(p.constrained->mean[0] > 0.0);
  CHECK(p.constrained->mean[0] < 1.0);
}
