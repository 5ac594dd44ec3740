#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "ddnf/experiments.hpp"
#include "ddnf/io.hpp"

namespace py = pybind11;
using namespace ddnf;

namespace {

Mat to_mat(const std::vector<Vector>& rows) {
  if (rows.empty()) throw ConfigError("matrix must have at least one row");
  Mat a(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != a.cols) throw ConfigError("matrix rows differ in length");
    for (std::size_t j = 0; j < a.cols; ++j) a(i, j) = rows[i][j];
  }
  return a;
}

BaseDistribution base_for(const FlowModel& m, const std::optional<BaseDistribution>& base) {
  return base.value_or(BaseDistribution::standard(m.spec.dim));
}

py::dict record_dict(const TrainRecord& r) {
  py::dict d;
  d["iter"] = r.iteration;
  d["loss"] = r.loss;
  d["elbo"] = r.elbo;
  d["geo"] = r.geodesic;
  d["invc"] = r.inverse_consistency;
  d["seconds"] = r.seconds;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Diffeomorphic normalizing flows";
  m.attr("__version__") = DDNF_VERSION;

  py::register_exception<Error>(m, "Error");
  py::register_exception<ConfigError>(m, "ConfigError", m.attr("Error"));
  py::register_exception<NumericalError>(m, "NumericalError", m.attr("Error"));
  py::register_exception<IoError>(m, "IoError", m.attr("Error"));

  py::enum_<LogdetMethod>(m, "LogdetMethod")
      .value("first_order", LogdetMethod::first_order)
      .value("second_order_paper", LogdetMethod::second_order_paper)
      .value("second_order_series", LogdetMethod::second_order_series)
      .value("exact", LogdetMethod::exact);

  py::enum_<RingNorm>(m, "RingNorm").value("squared", RingNorm::squared).value("plain", RingNorm::plain);

  py::class_<VelocitySpec>(m, "VelocitySpec")
      .def(py::init<>())
      .def_readwrite("dim", &VelocitySpec::dim)
      .def_readwrite("hidden", &VelocitySpec::hidden)
      .def_readwrite("context_dim", &VelocitySpec::context_dim)
      .def_readwrite("init_scale", &VelocitySpec::init_scale)
      .def_readwrite("zero_init_output", &VelocitySpec::zero_init_output);

  py::class_<FlowSpec>(m, "FlowSpec")
      .def(py::init<>())
      .def_readwrite("dim", &FlowSpec::dim)
      .def_readwrite("blocks", &FlowSpec::blocks)
      .def_readwrite("cells_per_block", &FlowSpec::cells_per_block)
      .def_readwrite("logdet", &FlowSpec::logdet)
      .def_readwrite("probes", &FlowSpec::probes)
      .def_readwrite("context_dim", &FlowSpec::context_dim)
      .def_readwrite("velocity", &FlowSpec::velocity)
      .def_property_readonly("dt", &FlowSpec::dt);

  py::class_<BaseDistribution>(m, "BaseDistribution")
      .def(py::init([](int dim, bool learnable) { return BaseDistribution::standard(dim, learnable); }),
           py::arg("dim") = 2, py::arg("learnable") = false)
      .def_readwrite("mu", &BaseDistribution::mu)
      .def_readwrite("log_sigma", &BaseDistribution::log_sigma)
      .def_readwrite("learnable", &BaseDistribution::learnable)
      .def_readonly("dim", &BaseDistribution::dim)
      .def("log_density", [](const BaseDistribution& b, const Vector& z) { return b.log_density(z); });

  py::class_<FlowModel>(m, "FlowModel")
      .def_readonly("spec", &FlowModel::spec)
      .def_property_readonly("param_count", &FlowModel::param_count)
      .def("flat_params", &FlowModel::flat_params)
      .def("set_flat_params", [](FlowModel& f, const Vector& p) { f.set_flat_params(p); });

  m.def("init_flow", &init_flow, py::arg("spec"), py::arg("seed") = 0);
  m.def(
      "constant_flow", [](FlowSpec spec, const Vector& c) { return make_flow(spec, make_constant_field(c)); },
      py::arg("spec"), py::arg("velocity"));
  m.def(
      "affine_flow",
      [](FlowSpec spec, const std::vector<Vector>& a, const Vector& b) {
        return make_flow(spec, make_affine_field(to_mat(a), b));
      },
      py::arg("spec"), py::arg("a"), py::arg("b"));

  m.def(
      "forward",
      [](const FlowModel& f, const Vector& z, const Vector& context) {
        FlowResult r = forward(f, z, context);
        return py::make_tuple(r.z_out, r.sum_logdet);
      },
      py::arg("model"), py::arg("z"), py::arg("context") = Vector{},
      "Returns (z_K, sum of cell log-determinants).");
  m.def(
      "inverse",
      [](const FlowModel& f, const Vector& z, const Vector& context) {
        FlowResult r = inverse(f, z, context);
        return py::make_tuple(r.z_out, r.sum_logdet);
      },
      py::arg("model"), py::arg("z"), py::arg("context") = Vector{});
  m.def(
      "log_density",
      [](const FlowModel& f, const Vector& z, const std::optional<BaseDistribution>& base, const Vector& context) {
        return log_density(f, base_for(f, base), z, context);
      },
      py::arg("model"), py::arg("z"), py::arg("base") = py::none(), py::arg("context") = Vector{});
  m.def(
      "cell_logdet",
      [](const std::vector<Vector>& j, double dt, LogdetMethod method) {
        return cell_logdet_from_jacobian(to_mat(j), dt, method);
      },
      py::arg("jacobian"), py::arg("dt"), py::arg("method"));

  m.def(
      "energy",
      [](const std::string& name, const Vector& z, RingNorm ring) {
        return energy<double>(parse_energy_name(name), z, ring);
      },
      py::arg("name"), py::arg("z"), py::arg("ring") = RingNorm::squared);
  m.def(
      "betabinom_log_posterior",
      [](const Vector& z, const std::vector<std::pair<std::int64_t, std::int64_t>>& data) {
        BetaBinomialModel bb;
        for (auto [n, y] : data) bb.data.push_back({n, y});
        bb.validate();
        return betabinom_log_unnorm_posterior<double>(z, bb);
      },
      py::arg("z"), py::arg("data"));

  m.def("save_flow", &save_flow, py::arg("model"), py::arg("path"));
  m.def("load_flow", &load_flow, py::arg("path"));

  m.def(
      "ode_accuracy",
      [](const std::vector<int>& t_list, int trials, int samples, std::uint64_t seed) {
        SweepConfig cfg;
        cfg.t_list = t_list;
        cfg.trials = trials;
        cfg.samples = samples;
        cfg.seed = seed;
        std::vector<std::tuple<int, double, double>> out;
        for (const SweepRow& r : run_ode_accuracy(cfg)) out.emplace_back(r.cells, r.mse, r.std);
        return out;
      },
      py::arg("t_list"), py::arg("trials") = 50, py::arg("samples") = 100, py::arg("seed") = 0,
      "Rows of (T, mse, std) against the adaptive reference solver.");

  m.def(
      "fit_energy",
      [](const std::string& name, const FlowSpec& spec, int iterations, int batch_size, double learning_rate,
         double gamma_geodesic, double gamma_inverse, std::uint64_t seed) {
        FitConfig cfg;
        cfg.kind = name == "u2" ? FitKind::energy_u2 : FitKind::energy_u1;
        if (name != "u1" && name != "u2") throw ConfigError("energy must be u1 or u2");
        cfg.flow = spec;
        cfg.train.iterations = iterations;
        cfg.train.batch_size = batch_size;
        cfg.train.learning_rate = learning_rate;
        cfg.train.reg = {gamma_geodesic, gamma_inverse};
        cfg.train.seed = seed;
        cfg.sample_count = 0;
        cfg.heat = {-4.0, 4.0, 2};
        const FitOutput out = run_fit(cfg);
        py::list history;
        for (const TrainRecord& r : out.train.history) history.append(record_dict(r));
        py::dict d;
        d["model"] = out.train.model.flow;
        d["history"] = history;
        d["diverged"] = out.train.diverged;
        d["final_neg_elbo"] = out.final_neg_elbo;
        return d;
      },
      py::arg("energy"), py::arg("spec"), py::arg("iterations") = 500, py::arg("batch_size") = 64,
      py::arg("learning_rate") = 1e-3, py::arg("gamma_geodesic") = 0.0, py::arg("gamma_inverse") = 0.0,
      py::arg("seed") = 0);

  m.def(
      "mh_standard_normal",
      [](int dim, int steps, int burn_in, double scale, std::uint64_t seed) {
        McmcRunConfig cfg;
        cfg.standard_normal = true;
        cfg.dim = dim;
        cfg.options.steps = steps;
        cfg.options.burn_in = burn_in;
        cfg.options.proposal_scale = {scale};
        cfg.options.seed = seed;
        const McmcRunOutput out = run_mcmc(cfg);
        return py::make_tuple(out.chain.samples, out.chain.acceptance_rate);
      },
      py::arg("dim"), py::arg("steps"), py::arg("burn_in"), py::arg("scale") = 2.4, py::arg("seed") = 0);
}
