#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ddnf/error.hpp"
#include "ddnf/experiments.hpp"
#include "ddnf/io.hpp"

using namespace ddnf;
namespace fs = std::filesystem;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;
constexpr int kExitIo = 4;

struct Common {
  std::uint64_t seed = 0;
  std::string out = ".";
};

void add_common(CLI::App* sub, Common& c) {
  sub->fallthrough();
  sub->add_option("--seed", c.seed, "Seed for every random stream")->capture_default_str();
  sub->add_option("--out", c.out, "Output directory")->capture_default_str();
}

fs::path prepare_out(const Common& c) {
  const fs::path dir(c.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + c.out + "': " + ec.message());
  return dir;
}

ManifestEntries resolved_options(const CLI::App* sub) {
  ManifestEntries entries;
  for (const CLI::Option* opt : sub->get_options()) {
    if (opt->get_lnames().empty()) continue;
    const std::string name = opt->get_lnames().front();
    if (name == "help" || name == "config") continue;
    std::vector<std::string> values = opt->results();
    if (opt->get_expected_max() == 0) {
      values = {opt->count() > 0 && opt->as<bool>() ? "true" : "false"};
    } else if (values.empty()) {
      const std::string def = opt->get_default_str();
      if (!def.empty()) values.push_back(def);
    }
    entries.emplace_back(name, values);
  }
  return entries;
}

void add_velocity_options(CLI::App* sub, VelocitySpec& v) {
  sub->add_option("--hidden", v.hidden, "Hidden layer widths of each velocity MLP")->capture_default_str();
  sub->add_option("--init-scale", v.init_scale, "Weight initialization scale")->capture_default_str();
  sub->add_flag("--zero-init", v.zero_init_output, "Zero the output layer (identity flow)")->capture_default_str();
}

void add_sweep_options(CLI::App* sub, SweepConfig& cfg) {
  sub->add_option("--t-list", cfg.t_list, "Cells per block to sweep")->capture_default_str();
  sub->add_option("--trials", cfg.trials, "Random fields per T")->capture_default_str();
  sub->add_option("--samples", cfg.samples, "Points per field")->capture_default_str();
  sub->add_option("--blocks", cfg.blocks, "Blocks K")->capture_default_str();
  sub->add_option_function<std::string>(
         "--field", [&cfg](const std::string& s) { cfg.field = parse_field_kind(s); }, "random, zero or constant")
      ->check(CLI::IsMember({"random", "zero", "constant"}))
      ->default_str("random");
  sub->add_option("--rtol", cfg.rtol, "Reference solver relative tolerance")->capture_default_str();
  sub->add_option("--atol", cfg.atol, "Reference solver absolute tolerance")->capture_default_str();
  add_velocity_options(sub, cfg.velocity);
}

void write_sweep(const std::vector<SweepRow>& rows, const fs::path& csv, const fs::path& summary) {
  CsvWriter w(csv, {"T", "mse", "std", "rmse"});
  std::vector<double> t, rmse;
  for (const SweepRow& r : rows) {
    w.row(r.cells, {r.mse, r.std, r.rmse});
    t.push_back(r.cells);
    rmse.push_back(r.rmse);
  }
  w.flush();
  std::vector<std::pair<std::string, double>> numbers{{"rows", static_cast<double>(rows.size())}};
  bool positive = rows.size() >= 2;
  for (const SweepRow& r : rows) positive = positive && r.rmse > 0.0;
  if (positive) numbers.emplace_back("rmse_slope_vs_T", loglog_slope(t, rmse));
  write_summary(summary, numbers);
}

void write_points(const fs::path& path, const std::vector<std::string>& header, const std::vector<Vector>& a,
                  const std::vector<Vector>* b = nullptr, const Vector* c = nullptr) {
  CsvWriter w(path, header);
  for (std::size_t i = 0; i < a.size(); ++i) {
    std::vector<double> row(a[i].begin(), a[i].end());
    if (b) row.insert(row.end(), (*b)[i].begin(), (*b)[i].end());
    if (c) row.push_back((*c)[i]);
    w.row(row);
  }
  w.flush();
}

void add_flow_options(CLI::App* sub, FlowSpec& spec) {
  sub->add_option("--blocks", spec.blocks, "Blocks K")->capture_default_str();
  sub->add_option("--cells", spec.cells_per_block, "Euler cells per block T")->capture_default_str();
  sub->add_option_function<std::string>(
         "--logdet", [&spec](const std::string& s) { spec.logdet = parse_logdet_method(s); },
         "first_order, second_order_paper, second_order_series or exact")
      ->check(CLI::IsMember({"first_order", "second_order_paper", "second_order_series", "exact"}))
      ->default_str(to_string(spec.logdet));
  sub->add_option("--probes", spec.probes, "Hutchinson probes (0 uses exact traces)")->capture_default_str();
  sub->add_option("--context-dim", spec.context_dim, "Context input width")->capture_default_str();
  add_velocity_options(sub, spec.velocity);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diffeomorphic normalizing flows: experiments and model tools"};
  app.require_subcommand(1);
  app.set_version_flag("--version", DDNF_VERSION);
  app.set_config("--config", "", "TOML file with one [section] per subcommand; flags override it");
  app.allow_config_extras(CLI::config_extras_mode::error);

  Common common;
  std::function<int()> action;

  SweepConfig ode_cfg;
  ode_cfg.samples = 100;
  auto* ode = app.add_subcommand("ode-accuracy", "Euler forward pass against the adaptive reference solver");
  add_common(ode, common);
  add_sweep_options(ode, ode_cfg);

  SweepConfig inv_cfg;
  inv_cfg.samples = 1000;
  auto* inv = app.add_subcommand("inversion", "Forward then inverse reconstruction error");
  add_common(inv, common);
  add_sweep_options(inv, inv_cfg);

  FitConfig fit_cfg;
  std::string fit_kind = "energy-u1";
  std::string flow_kind = "ddnf";
  std::string data_path;
  std::string learn_base = "auto";
  std::vector<double> base_mean;
  double base_log_sigma = 0.0;
  std::string ring = "squared";
  auto* fit = app.add_subcommand("fit", "Train a flow on an energy or the beta-binomial posterior");
  add_common(fit, common);
  fit->add_option("--kind", fit_kind, "energy-u1, energy-u2 or posterior")
      ->check(CLI::IsMember({"energy-u1", "energy-u2", "posterior"}))
      ->capture_default_str();
  fit->add_option("--flow", flow_kind, "ddnf or planar")->check(CLI::IsMember({"ddnf", "planar"}))->capture_default_str();
  add_flow_options(fit, fit_cfg.flow);
  fit->add_option("--layers", fit_cfg.planar_layers, "Planar layers")->capture_default_str();
  fit->add_option("--iterations", fit_cfg.train.iterations)->capture_default_str();
  fit->add_option("--batch", fit_cfg.train.batch_size)->capture_default_str();
  fit->add_option("--lr", fit_cfg.train.learning_rate)->capture_default_str();
  fit->add_option_function<std::string>(
         "--optimizer", [&fit_cfg](const std::string& s) { fit_cfg.train.optimizer = parse_optimizer(s); }, "adam or sgd")
      ->check(CLI::IsMember({"adam", "sgd"}))
      ->default_str(fit_cfg.train.optimizer == OptimizerKind::adam ? "adam" : "sgd");
  fit->add_option("--beta1", fit_cfg.train.beta1)->capture_default_str();
  fit->add_option("--beta2", fit_cfg.train.beta2)->capture_default_str();
  fit->add_option("--adam-eps", fit_cfg.train.epsilon)->capture_default_str();
  fit->add_option("--gamma-geo", fit_cfg.train.reg.gamma_geodesic)->capture_default_str();
  fit->add_option("--gamma-inv", fit_cfg.train.reg.gamma_inverse)->capture_default_str();
  fit->add_option("--eval-every", fit_cfg.train.eval_every)->capture_default_str();
  fit->add_option("--data", data_path, "CSV with header n,y (posterior)");
  fit->add_option("--ring", ring, "squared or plain ring term")
      ->check(CLI::IsMember({"squared", "plain"}))
      ->capture_default_str();
  fit->add_option("--learn-base", learn_base, "auto, true or false")
      ->check(CLI::IsMember({"auto", "true", "false"}))
      ->capture_default_str();
  fit->add_option("--base-mean", base_mean, "Initial base mean")->expected(2);
  auto* sigma_opt = fit->add_option("--base-log-sigma", base_log_sigma, "Initial base log-scale");
  fit->add_option("--sample-count", fit_cfg.sample_count)->capture_default_str();
  fit->add_option("--eval-samples", fit_cfg.eval_samples)->capture_default_str();
  fit->add_option("--heat-lo", fit_cfg.heat.lo)->capture_default_str();
  fit->add_option("--heat-hi", fit_cfg.heat.hi)->capture_default_str();
  fit->add_option("--heat-resolution", fit_cfg.heat.resolution)->capture_default_str();

  McmcRunConfig mcmc_cfg;
  std::string mcmc_data;
  std::vector<double> mcmc_init;
  auto* mcmc = app.add_subcommand("mcmc", "Random-walk Metropolis reference chain");
  add_common(mcmc, common);
  mcmc->add_option("--data", mcmc_data, "CSV with header n,y");
  mcmc->add_flag("--standard-normal", mcmc_cfg.standard_normal, "Sample a standard normal instead")->capture_default_str();
  mcmc->add_option("--dim", mcmc_cfg.dim, "Standard-normal dimension")->capture_default_str();
  mcmc->add_option("--steps", mcmc_cfg.options.steps)->capture_default_str();
  mcmc->add_option("--burn-in", mcmc_cfg.options.burn_in)->capture_default_str();
  mcmc->add_option("--scale", mcmc_cfg.options.proposal_scale, "Proposal standard deviations")->capture_default_str();
  mcmc->add_option("--adapt-steps", mcmc_cfg.options.adapt_steps)->capture_default_str();
  mcmc->add_option("--init", mcmc_init, "Initial point");

  std::string model_path;
  GridSpec deform;
  GridSpec heat{-4.0, 4.0, 200};
  auto* grid = app.add_subcommand("export-grid", "Deformed grid, displacement and log-density tables");
  add_common(grid, common);
  grid->add_option("--model", model_path, "Model file")->required();
  grid->add_option("--lo", deform.lo)->capture_default_str();
  grid->add_option("--hi", deform.hi)->capture_default_str();
  grid->add_option("--resolution", deform.resolution)->capture_default_str();
  grid->add_option("--heat-lo", heat.lo)->capture_default_str();
  grid->add_option("--heat-hi", heat.hi)->capture_default_str();
  grid->add_option("--heat-resolution", heat.resolution)->capture_default_str();

  FlowSpec init_spec;
  std::string init_field = "random";
  std::vector<double> constant;
  auto* init = app.add_subcommand("init-model", "Write a freshly initialized flow");
  add_common(init, common);
  add_flow_options(init, init_spec);
  init->add_option("--dim", init_spec.dim)->capture_default_str();
  init->add_option("--field", init_field, "random or constant")
      ->check(CLI::IsMember({"random", "constant"}))
      ->capture_default_str();
  init->add_option("--constant", constant, "Velocity of the constant field");

  ode->callback([&] {
    action = [&] {
      ode_cfg.seed = common.seed;
      const fs::path dir = prepare_out(common);
      write_manifest(dir / "manifest.json", "ode-accuracy", resolved_options(ode));
      write_sweep(run_ode_accuracy(ode_cfg), dir / "ode_accuracy.csv", dir / "summary.json");
      return 0;
    };
  });

  inv->callback([&] {
    action = [&] {
      inv_cfg.seed = common.seed;
      const fs::path dir = prepare_out(common);
      write_manifest(dir / "manifest.json", "inversion", resolved_options(inv));
      write_sweep(run_inversion(inv_cfg), dir / "inversion.csv", dir / "summary.json");
      return 0;
    };
  });

  fit->callback([&] {
    action = [&] {
      fit_cfg.kind = parse_fit_kind(fit_kind);
      fit_cfg.flow_kind = parse_flow_kind(flow_kind);
      fit_cfg.ring = ring == "plain" ? RingNorm::plain : RingNorm::squared;
      fit_cfg.train.seed = common.seed;
      if (learn_base != "auto") fit_cfg.learn_base = learn_base == "true";
      if (!base_mean.empty()) fit_cfg.base_mean = base_mean;
      if (sigma_opt->count() > 0) fit_cfg.base_log_sigma = base_log_sigma;
      if (fit_cfg.kind == FitKind::posterior) {
        if (data_path.empty()) throw ConfigError("fit --kind posterior requires --data");
        fit_cfg.data = read_betabinom_csv(data_path);
      }
      const fs::path dir = prepare_out(common);
      write_manifest(dir / "manifest.json", "fit", resolved_options(fit));
      fit_cfg.validate();

      const FitOutput out = run_fit(fit_cfg);
      write_history_csv(out.train.history, dir / "history.csv");
      save_model(out.train.model, dir / "model.json");
      std::vector<std::pair<std::string, double>> numbers{
          {"iterations_completed", static_cast<double>(out.train.iterations_completed)},
          {"diverged", out.train.diverged ? 1.0 : 0.0},
          {"final_neg_elbo", out.final_neg_elbo}};
      std::vector<std::pair<std::string, std::string>> strings;
      if (out.train.diverged) strings.emplace_back("message", out.train.message);
      if (!out.samples.empty()) {
        const bool posterior = fit_cfg.kind == FitKind::posterior;
        write_points(dir / "samples.csv", posterior ? std::vector<std::string>{"m", "L"} : std::vector<std::string>{"z0", "z1"},
                     out.samples);
        const Moments mom = sample_moments(out.samples);
        numbers.emplace_back(posterior ? "mean_m" : "mean_z0", mom.mean[0]);
        numbers.emplace_back(posterior ? "mean_L" : "mean_z1", mom.mean[1]);
        numbers.emplace_back(posterior ? "sd_m" : "sd_z0", std::sqrt(mom.variance[0]));
        numbers.emplace_back(posterior ? "sd_L" : "sd_z1", std::sqrt(mom.variance[1]));
      }
      if (!out.heat_points.empty()) {
        write_points(dir / "density.csv", {"x", "y", "log_density"}, out.heat_points, nullptr, &out.heat_log_density);
        numbers.emplace_back("density_integral", out.heat_integral);
      }
      write_summary(dir / "summary.json", numbers, strings);
      if (out.train.diverged) {
        std::fprintf(stderr, "ddnf: training diverged: %s\n", out.train.message.c_str());
        return kExitDiverged;
      }
      return 0;
    };
  });

  mcmc->callback([&] {
    action = [&] {
      mcmc_cfg.options.seed = common.seed;
      if (!mcmc_init.empty()) mcmc_cfg.init = mcmc_init;
      if (!mcmc_cfg.standard_normal) {
        if (mcmc_data.empty()) throw ConfigError("mcmc requires --data or --standard-normal");
        mcmc_cfg.data = read_betabinom_csv(mcmc_data);
      }
      const fs::path dir = prepare_out(common);
      write_manifest(dir / "manifest.json", "mcmc", resolved_options(mcmc));
      const McmcRunOutput out = run_mcmc(mcmc_cfg);
      write_chain_csv(out.chain.samples, out.chain.burn_in, dir / "chain.csv");
      std::vector<std::pair<std::string, double>> numbers{{"acceptance_rate", out.chain.acceptance_rate},
                                                          {"burn_in", static_cast<double>(out.chain.burn_in)},
                                                          {"samples", static_cast<double>(out.chain.samples.size())}};
      for (std::size_t i = 0; i < out.moments.mean.size(); ++i) {
        numbers.emplace_back("mean_z" + std::to_string(i), out.moments.mean[i]);
        numbers.emplace_back("var_z" + std::to_string(i), out.moments.variance[i]);
      }
      if (out.constrained) {
        numbers.emplace_back("mean_m", out.constrained->mean[0]);
        numbers.emplace_back("sd_m", std::sqrt(out.constrained->variance[0]));
        numbers.emplace_back("mean_L", out.constrained->mean[1]);
        numbers.emplace_back("sd_L", std::sqrt(out.constrained->variance[1]));
      }
      std::vector<std::pair<std::string, std::string>> strings;
      if (!out.chain.warning.empty()) {
        strings.emplace_back("warning", out.chain.warning);
        std::fprintf(stderr, "ddnf: %s\n", out.chain.warning.c_str());
      }
      write_summary(dir / "summary.json", numbers, strings);
      return 0;
    };
  });

  grid->callback([&] {
    action = [&] {
      const fs::path dir = prepare_out(common);
      write_manifest(dir / "manifest.json", "export-grid", resolved_options(grid));
      const VariationalModel model = load_model(model_path);
      const GridExport g = export_grid(model, deform, heat);
      write_points(dir / "deformed.csv", {"x", "y", "phi_x", "phi_y"}, g.points, &g.deformed);
      write_points(dir / "displacement.csv", {"x", "y", "dx", "dy"}, g.points, &g.displacement);
      write_points(dir / "density.csv", {"x", "y", "log_density"}, g.heat_points, nullptr, &g.heat_log_density);
      write_summary(dir / "summary.json", {{"mean_inverse_residual", g.mean_inverse_residual},
                                           {"grid_points", static_cast<double>(g.points.size())}});
      return 0;
    };
  });

  init->callback([&] {
    action = [&] {
      init_spec.normalize();
      init_spec.validate();
      const fs::path dir = prepare_out(common);
      write_manifest(dir / "manifest.json", "init-model", resolved_options(init));
      FlowModel flow;
      if (init_field == "constant") {
        if (static_cast<int>(constant.size()) != init_spec.dim)
          throw ConfigError("--constant needs one value per dimension");
        if (init_spec.context_dim != 0) throw ConfigError("constant fields take no context");
        flow = make_flow(init_spec, make_constant_field(constant));
      } else {
        flow = init_flow(init_spec, common.seed);
      }
      save_flow(flow, dir / "model.json");
      return 0;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    return action();
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "ddnf: configuration error: %s\n", e.what());
    return kExitConfig;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "ddnf: numerical error: %s\n", e.what());
    return kExitDiverged;
  } catch (const IoError& e) {
    std::fprintf(stderr, "ddnf: i/o error: %s\n", e.what());
    return kExitIo;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "ddnf: %s\n", e.what());
    return 1;
  }
}
