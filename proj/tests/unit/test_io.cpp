#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ddnf/io.hpp"
#include "ddnf/rng.hpp"
#include "doctest.h"

using namespace ddnf;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
  const fs::path dir = fs::temp_directory_path() / "ddnf_unit_io";
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

FlowModel random_flow(int k, int t, std::uint64_t seed) {
  FlowSpec s;
  s.blocks = k;
  s.cells_per_block = t;
  s.velocity.hidden = {3, 2};
  s.velocity.init_scale = 1.3;
  return init_flow(s, seed);
}

}  // namespace

TEST_CASE("model round trip is bit-exact") {
  const fs::path path = scratch_dir() / "model.json";
  const FlowModel flow = random_flow(3, 4, 11);
  BaseDistribution base = BaseDistribution::standard(2, true);
  base.mu = {0.1 / 3.0, -std::acos(-1.0)};
  base.log_sigma = {1e-300, -2.5};
  const VariationalModel model = make_ddnf_model(flow, base);
  save_model(model, path);
  const VariationalModel back = load_model(path);

  CHECK(back.kind == FlowKind::ddnf);
  CHECK(back.pack() == model.pack());
  CHECK(back.base.mu == base.mu);
  CHECK(back.base.log_sigma == base.log_sigma);
  CHECK(back.base.learnable);
  CHECK(back.flow.spec.blocks == 3);
  CHECK(back.flow.spec.cells_per_block == 4);
  CHECK(back.flow.spec.velocity == flow.spec.velocity);

  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    const Vector z{rng.normal() * 2.0, rng.normal() * 2.0};
    const FlowResult a = forward(flow, z);
    const FlowResult b = forward(back.flow, z);
    CHECK(a.z_out == b.z_out);
    CHECK(a.sum_logdet == b.sum_logdet);
  }
  CHECK(model_to_string(back) == model_to_string(model));
}

TEST_CASE("planar and bare-flow documents") {
  const fs::path dir = scratch_dir();
  const VariationalModel planar = make_planar_model(init_planar(2, 3, 8), BaseDistribution::standard(2));
  save_model(planar, dir / "planar.json");
  const VariationalModel back = load_model(dir / "planar.json");
  CHECK(back.kind == FlowKind::planar);
  CHECK(back.pack() == planar.pack());
  CHECK_THROWS_AS(load_flow(dir / "planar.json"), ConfigError);

  const FlowModel flow = random_flow(2, 2, 3);
  save_flow(flow, dir / "flow.json");
  CHECK(load_flow(dir / "flow.json").flat_params() == flow.flat_params());
}

TEST_CASE("malformed model documents") {
  const fs::path dir = scratch_dir();
  const std::string text = model_to_string(make_ddnf_model(random_flow(2, 2, 5), BaseDistribution::standard(2)));

  spit(dir / "truncated.json", text.substr(0, text.size() / 2));
  CHECK_THROWS_AS(load_model(dir / "truncated.json"), IoError);
  CHECK_THROWS_AS(load_model(dir / "does_not_exist.json"), IoError);
  CHECK_THROWS_AS(model_from_string("{\"format\":\"something-else\",\"version\":1}"), IoError);

  std::string bad_version = text;
  const auto pos = bad_version.find("\"version\": 1");
  REQUIRE(pos != std::string::npos);
  bad_version.replace(pos, 12, "\"version\": 99");
  CHECK_THROWS_AS(model_from_string(bad_version), IoError);

  std::string bad_dim = text;
  const auto dpos = bad_dim.find("\"dim\": 2", bad_dim.find("\"flow\""));
  REQUIRE(dpos != std::string::npos);
  bad_dim.replace(dpos, 8, "\"dim\": 3");
  CHECK_THROWS_AS(model_from_string(bad_dim), ConfigError);

  std::string bad_blocks = text;
  const auto bpos = bad_blocks.find("\"blocks\": 2");
  REQUIRE(bpos != std::string::npos);
  bad_blocks.replace(bpos, 11, "\"blocks\": 3");
  CHECK_THROWS_AS(model_from_string(bad_blocks), ConfigError);

  FlowModel nan_flow = random_flow(1, 1, 2);
  Vector p = nan_flow.flat_params();
  p[0] = std::nan("");
  nan_flow.set_flat_params(p);
  CHECK_THROWS_AS(save_flow(nan_flow, dir / "nan.json"), NumericalError);
}

TEST_CASE("beta-binomial csv") {
  const fs::path dir = scratch_dir();
  spit(dir / "ok.csv", "# comment\r\nn,y\r\n1000, 5\r\n\r\n 250 ,0\n");
  const BetaBinomialModel m = read_betabinom_csv(dir / "ok.csv");
  REQUIRE(m.data.size() == 2);
  CHECK(m.data[0].n == 1000);
  CHECK(m.data[0].y == 5);
  CHECK(m.data[1].n == 250);
  CHECK(m.data[1].y == 0);

  write_betabinom_csv(m, dir / "again.csv");
  const BetaBinomialModel again = read_betabinom_csv(dir / "again.csv");
  CHECK(again.data.size() == 2);
  CHECK(again.data[1].n == 250);

  spit(dir / "header.csv", "y,n\n1,2\n");
  CHECK_THROWS_AS(read_betabinom_csv(dir / "header.csv"), IoError);
  spit(dir / "junk.csv", "n,y\n10,2\n10,abc\n");
  try {
    read_betabinom_csv(dir / "junk.csv");
    FAIL("expected an error");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find(":3:") != std::string::npos);
  }
  spit(dir / "columns.csv", "n,y\n10,2,3\n");
  CHECK_THROWS_AS(read_betabinom_csv(dir / "columns.csv"), IoError);
  spit(dir / "empty.csv", "n,y\n");
  CHECK_THROWS_AS(read_betabinom_csv(dir / "empty.csv"), ConfigError);
  spit(dir / "bad_count.csv", "n,y\n10,11\n");
  CHECK_THROWS_AS(read_betabinom_csv(dir / "bad_count.csv"), IoError);
}

TEST_CASE("csv writers") {
  const fs::path dir = scratch_dir();
  std::vector<TrainRecord> h(2);
  h[0] = {10, 1.5, -1.25, 0.1, 0.2, 0.5};
  h[1] = {20, 0.1, -0.1, 0.0, 0.0, 1.0};
  write_history_csv(h, dir / "history.csv");
  CHECK(slurp(dir / "history.csv") ==
        "iter,loss,elbo,geo,invc,seconds\n10,1.5,-1.25,0.10000000000000001,0.20000000000000001,0.5\n"
        "20,0.10000000000000001,-0.10000000000000001,0,0,1\n");

  write_chain_csv({{1.0, 2.0}, {3.0, -4.0}}, 100, dir / "chain.csv");
  CHECK(slurp(dir / "chain.csv") == "step,z0,z1\n100,1,2\n101,3,-4\n");

  CsvWriter w(dir / "w.csv", {"a", "b"});
  CHECK_THROWS_AS(w.row({1.0, 2.0, 3.0}), ConfigError);
  CHECK_THROWS_AS(CsvWriter(dir / "no_such_dir" / "x.csv", {"a"}), IoError);
  CHECK(format_double(0.1) == "0.10000000000000001");
  CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("summary and manifest") {
  const fs::path dir = scratch_dir();
  write_summary(dir / "s.json", {{"x", 1.5}, {"bad", INFINITY}}, {{"note", "hi"}});
  const std::string s = slurp(dir / "s.json");
  CHECK(s.find("\"x\": 1.5") != std::string::npos);
  CHECK(s.find("\"bad\": \"inf\"") != std::string::npos);
  CHECK(s.find("\"note\": \"hi\"") != std::string::npos);

  write_manifest(dir / "m.json", "fit", {{"seed", {"3"}}, {"hidden", {"2", "2"}}});
  const std::string m = slurp(dir / "m.json");
  CHECK(m.find("\"command\": \"fit\"") != std::string::npos);
  CHECK(m.find("\"version\": \"" DDNF_VERSION "\"") != std::string::npos);
  CHECK(m.find("\"seed\": \"3\"") != std::string::npos);
}
