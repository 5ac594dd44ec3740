#include "ddnf/io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace ddnf {
namespace {

using nlohmann::json;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed for '" + path.string() + "'");
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  out.flush();
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

json finite_array(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericalError(std::string("refusing to save non-finite ") + what);
  }
  return json(std::vector<double>(v.begin(), v.end()));
}

// Typed field access that reports the missing or mistyped key.
template <class T>
T field(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw IoError("model file: missing '" + std::string(key) + "' in " + where);
  }
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw IoError("model file: '" + std::string(key) + "' in " + where + " has the wrong type");
  }
}

json base_to_json(const BaseDistribution& b) {
  return {{"dim", b.dim},
          {"mu", finite_array(b.mu, "base mean")},
          {"log_sigma", finite_array(b.log_sigma, "base scale")},
          {"learnable", b.learnable}};
}

BaseDistribution base_from_json(const json& j) {
  BaseDistribution b;
  b.dim = field<int>(j, "dim", "base");
  b.mu = field<Vector>(j, "mu", "base");
  b.log_sigma = field<Vector>(j, "log_sigma", "base");
  b.learnable = field<bool>(j, "learnable", "base");
  if (b.dim <= 0 || b.mu.size() != static_cast<std::size_t>(b.dim) ||
      b.log_sigma.size() != static_cast<std::size_t>(b.dim)) {
    throw ConfigError("model file: base dimension does not match its parameters");
  }
  return b;
}

json flow_to_json(const FlowModel& m) {
  const FlowSpec& s = m.spec;
  json blocks = json::array();
  for (const auto& f : m.fields) blocks.push_back(finite_array(f.params.values, "flow parameters"));
  return {{"dim", s.dim},
          {"blocks", s.blocks},
          {"cells_per_block", s.cells_per_block},
          {"logdet", to_string(s.logdet)},
          {"probes", s.probes},
          {"context_dim", s.context_dim},
          {"velocity",
           {{"hidden", s.velocity.hidden},
            {"init_scale", s.velocity.init_scale},
            {"zero_init_output", s.velocity.zero_init_output}}},
          {"params", blocks}};
}

FlowModel flow_from_json(const json& j) {
  FlowSpec s;
  s.dim = field<int>(j, "dim", "flow");
  s.blocks = field<int>(j, "blocks", "flow");
  s.cells_per_block = field<int>(j, "cells_per_block", "flow");
  s.logdet = parse_logdet_method(field<std::string>(j, "logdet", "flow"));
  s.probes = field<int>(j, "probes", "flow");
  s.context_dim = field<int>(j, "context_dim", "flow");
  const json v = field<json>(j, "velocity", "flow");
  s.velocity.hidden = field<std::vector<int>>(v, "hidden", "flow.velocity");
  s.velocity.init_scale = field<double>(v, "init_scale", "flow.velocity");
  s.velocity.zero_init_output = field<bool>(v, "zero_init_output", "flow.velocity");
  s.normalize();
  s.validate();
  const auto params = field<std::vector<Vector>>(j, "params", "flow");
  if (params.size() != static_cast<std::size_t>(s.blocks)) {
    throw ConfigError("model file: " + std::to_string(params.size()) + " parameter blocks for " +
                      std::to_string(s.blocks) + " flow blocks");
  }
  const ParamLayout layout = s.velocity.layout();
  FlowModel m{s, {}};
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].size() != layout.size()) {
      throw ConfigError("model file: block " + std::to_string(k) + " has " +
                        std::to_string(params[k].size()) + " parameters, the spec requires " +
                        std::to_string(layout.size()));
    }
    m.fields.push_back(VelocityField{s.velocity, ParamVector{layout, params[k]}});
  }
  return m;
}

json planar_to_json(const PlanarFlow& p) {
  json layers = json::array();
  for (const auto& l : p.layers) {
    if (!std::isfinite(l.b)) throw NumericalError("refusing to save non-finite planar bias");
    layers.push_back({{"u", finite_array(l.u, "planar u")}, {"w", finite_array(l.w, "planar w")}, {"b", l.b}});
  }
  return {{"dim", p.dim}, {"layers", layers}};
}

PlanarFlow planar_from_json(const json& j) {
  PlanarFlow p;
  p.dim = field<int>(j, "dim", "planar");
  if (p.dim <= 0) throw ConfigError("model file: planar dimension must be positive");
  for (const json& l : field<json>(j, "layers", "planar")) {
    PlanarLayer layer{field<Vector>(l, "u", "planar layer"), field<Vector>(l, "w", "planar layer"),
                      field<double>(l, "b", "planar layer")};
    if (layer.u.size() != static_cast<std::size_t>(p.dim) || layer.w.size() != static_cast<std::size_t>(p.dim)) {
      throw ConfigError("model file: planar layer size does not match the dimension");
    }
    p.layers.push_back(std::move(layer));
  }
  return p;
}

std::string json_string(const std::string& s) { return json(s).dump(); }

}  // namespace

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string model_to_string(const VariationalModel& model) {
  json doc = {{"format", "ddnf-model"},
              {"version", kModelFormatVersion},
              {"kind", to_string(model.kind)},
              {"base", base_to_json(model.base)}};
  if (model.kind == FlowKind::ddnf) {
    doc["flow"] = flow_to_json(model.flow);
  } else {
    doc["planar"] = planar_to_json(model.planar);
  }
  return doc.dump(2) + "\n";
}

VariationalModel model_from_string(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw IoError(std::string("model file: parse error: ") + e.what());
  }
  if (field<std::string>(doc, "format", "document") != "ddnf-model") {
    throw IoError("model file: not a ddnf model document");
  }
  const int version = field<int>(doc, "version", "document");
  if (version != kModelFormatVersion) {
    throw IoError("model file: unsupported version " + std::to_string(version));
  }
  const FlowKind kind = parse_flow_kind(field<std::string>(doc, "kind", "document"));
  const BaseDistribution base = base_from_json(field<json>(doc, "base", "document"));
  if (kind == FlowKind::ddnf) {
    return make_ddnf_model(flow_from_json(field<json>(doc, "flow", "document")), base);
  }
  return make_planar_model(planar_from_json(field<json>(doc, "planar", "document")), base);
}

void save_model(const VariationalModel& model, const std::filesystem::path& path) {
  write_file(path, model_to_string(model));
}

VariationalModel load_model(const std::filesystem::path& path) {
  return model_from_string(read_file(path));
}

void save_flow(const FlowModel& flow, const std::filesystem::path& path) {
  VariationalModel m;
  m.kind = FlowKind::ddnf;
  m.flow = flow;
  m.base = BaseDistribution::standard(flow.spec.dim);
  save_model(m, path);
}

FlowModel load_flow(const std::filesystem::path& path) {
  VariationalModel m = load_model(path);
  if (m.kind != FlowKind::ddnf) throw ConfigError("'" + path.string() + "' holds a planar model");
  return std::move(m.flow);
}

BetaBinomialModel read_betabinom_csv(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  int lineno = 0;
  bool header_seen = false;
  BetaBinomialModel model;
  auto fail = [&](const std::string& msg) {
    throw IoError(path.string() + ":" + std::to_string(lineno) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string compact;
    for (char c : line) {
      if (c != ' ' && c != '\t') compact += c;
    }
    if (compact.empty() || compact[0] == '#') continue;
    if (!header_seen) {
      if (compact != "n,y") fail("expected header 'n,y'");
      header_seen = true;
      continue;
    }
    const auto comma = compact.find(',');
    if (comma == std::string::npos || compact.find(',', comma + 1) != std::string::npos) {
      fail("expected two comma-separated integers");
    }
    BetaBinomialRecord r;
    try {
      std::size_t used = 0;
      const std::string a = compact.substr(0, comma), b = compact.substr(comma + 1);
      r.n = std::stoll(a, &used);
      if (used != a.size()) fail("malformed n");
      r.y = std::stoll(b, &used);
      if (used != b.size()) fail("malformed y");
    } catch (const std::logic_error&) {
      fail("malformed integer");
    }
    if (r.n <= 0 || r.y < 0 || r.y > r.n) fail("record requires n > 0 and 0 <= y <= n");
    model.data.push_back(r);
  }
  if (!header_seen) throw IoError(path.string() + ": empty data file");
  if (model.data.empty()) throw ConfigError(path.string() + ": no data records");
  return model;
}

void write_betabinom_csv(const BetaBinomialModel& model, const std::filesystem::path& path) {
  std::string out = "n,y\n";
  for (const auto& r : model.data) out += std::to_string(r.n) + "," + std::to_string(r.y) + "\n";
  write_file(path, out);
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
    : path_(path), columns_(header.size()) {
  file_.reset(std::fopen(path.string().c_str(), "w"));
  if (!file_) throw IoError("cannot open '" + path.string() + "' for writing");
  std::string line;
  for (std::size_t i = 0; i < header.size(); ++i) line += (i ? "," : "") + header[i];
  line += '\n';
  if (std::fputs(line.c_str(), file_.get()) < 0) throw IoError("write failed for '" + path.string() + "'");
}

void CsvWriter::row(const std::vector<double>& values) {
  if (values.size() != columns_) throw ConfigError("csv: row width does not match the header");
  std::string line;
  for (std::size_t i = 0; i < values.size(); ++i) line += (i ? "," : "") + format_double(values[i]);
  line += '\n';
  if (std::fputs(line.c_str(), file_.get()) < 0) throw IoError("write failed for '" + path_.string() + "'");
}

void CsvWriter::row(long long key, const std::vector<double>& values) {
  if (values.size() + 1 != columns_) throw ConfigError("csv: row width does not match the header");
  std::string line = std::to_string(key);
  for (double v : values) line += "," + format_double(v);
  line += '\n';
  if (std::fputs(line.c_str(), file_.get()) < 0) throw IoError("write failed for '" + path_.string() + "'");
}

void CsvWriter::flush() {
  if (std::fflush(file_.get()) != 0) throw IoError("write failed for '" + path_.string() + "'");
}

void write_history_csv(const std::vector<TrainRecord>& history, const std::filesystem::path& path) {
  CsvWriter w(path, {"iter", "loss", "elbo", "geo", "invc", "seconds"});
  for (const auto& r : history) {
    w.row(r.iteration, {r.loss, r.elbo, r.geodesic, r.inverse_consistency, r.seconds});
  }
  w.flush();
}

void write_chain_csv(const std::vector<Vector>& samples, int first_step,
                     const std::filesystem::path& path) {
  const std::size_t d = samples.empty() ? 0 : samples[0].size();
  std::vector<std::string> header{"step"};
  for (std::size_t i = 0; i < d; ++i) header.push_back("z" + std::to_string(i));
  CsvWriter w(path, header);
  for (std::size_t s = 0; s < samples.size(); ++s) w.row(first_step + static_cast<long long>(s), samples[s]);
  w.flush();
}

void write_manifest(const std::filesystem::path& path, const std::string& command,
                    const ManifestEntries& config) {
  json cfg = json::object();
  for (const auto& [key, values] : config) {
    if (values.size() == 1) {
      cfg[key] = values[0];
    } else {
      cfg[key] = values;
    }
  }
  const json doc = {{"tool", "ddnf"}, {"version", DDNF_VERSION}, {"command", command}, {"config", cfg}};
  write_file(path, doc.dump(2) + "\n");
}

void write_summary(const std::filesystem::path& path,
                   const std::vector<std::pair<std::string, double>>& numbers,
                   const std::vector<std::pair<std::string, std::string>>& strings) {
  std::string out = "{\n";
  bool first = true;
  auto sep = [&] {
    if (!first) out += ",\n";
    first = false;
  };
  for (const auto& [k, v] : strings) {
    sep();
    out += "  " + json_string(k) + ": " + json_string(v);
  }
  for (const auto& [k, v] : numbers) {
    sep();
    // JSON has no inf/nan literals
    out += "  " + json_string(k) + ": " + (std::isfinite(v) ? format_double(v) : json_string(format_double(v)));
  }
  out += "\n}\n";
  write_file(path, out);
}

}  // namespace ddnf
