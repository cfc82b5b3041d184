#include <doctest.h>

#include <algorithm>
#include <cstdint>
#include <set>
#include <sstream>
#include <string>

#include "qloss/experiment.hpp"

using namespace qloss::experiment;

namespace {

ExperimentConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

ConfigError parse_error(const std::string& text) {
  try {
    parse(text);
  } catch (const ConfigError& e) {
    return e;
  }
  FAIL("expected a ConfigError");
  return ConfigError("unreachable");
}

std::uint64_t fnv1a_oracle(const std::string& s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string body_without_timestamp(const ExperimentConfig& cfg, const Table& table) {
  std::ostringstream out;
  write_table(out, cfg, table, "qloss test");
  std::istringstream in(out.str());
  std::string kept, line;
  while (std::getline(in, line))
    if (line.rfind("# generated:", 0) != 0) kept += line + "\n";
  return kept;
}

const char* kDiscrete = R"(
[experiment]
model = discrete
seed = 9
replicas = 2

[discrete]
p = 0.5, 0.6
L = 10
N = 100
windows = 200
)";

}  // namespace

TEST_CASE("parse a discrete config") {
  const auto cfg = parse(kDiscrete);
  CHECK(cfg.model == Model::discrete);
  CHECK(cfg.p == std::vector<double>{0.5, 0.6});
  CHECK(cfg.L == std::vector<int>{10});
  CHECK(cfg.N == std::vector<std::size_t>{100});
  CHECK(cfg.windows == 200);
  CHECK(cfg.replicas == 2);
  CHECK(cfg.replica_seeds().size() == 2);
  CHECK(cfg.replica_seeds()[0] != cfg.replica_seeds()[1]);
}

TEST_CASE("logspace lists") {
  const auto cfg = parse("[continuous]\na = 0\nsigma2 = 1\nt = logspace:1e-2,1e2,5\n[experiment]\nmodel = continuous\n");
  REQUIRE(cfg.t.size() == 5);
  CHECK(cfg.t.front() == doctest::Approx(1e-2));
  CHECK(cfg.t[2] == doctest::Approx(1.0));
  CHECK(cfg.t.back() == doctest::Approx(1e2));
  CHECK(parse_error("[continuous]\na = 0\nsigma2 = 1\nt = logspace:1,0.1,3\n[experiment]\nmodel = continuous\n")
            .key() == "continuous.t");
}

TEST_CASE("config errors name the key and line") {
  const auto unknown = parse_error("[experiment]\nmodel = discrete\n\n[discrete]\np = 0.5\nwindow = 3\n");
  CHECK(unknown.key() == "discrete.window");
  CHECK(unknown.line() == 6);
  CHECK(std::string(unknown.what()).find("line 6") != std::string::npos);

  const auto section = parse_error("[experimnt]\nmodel = discrete\n");
  CHECK(section.key() == "experimnt");
  CHECK(section.line() == 1);

  const auto number = parse_error("[discrete]\np = 0.5\nL = ten\nN = 10\n");
  CHECK(number.key() == "discrete.L");
  CHECK(number.line() == 3);

  const auto range = parse_error("[discrete]\np = 1.5\nL = 10\nN = 10\n");
  CHECK(range.key() == "discrete.p");
  CHECK(range.line() == 2);

  const auto syntax = parse_error("[discrete]\np 0.5\n");
  CHECK(syntax.line() == 2);

  const auto model = parse_error("[experiment]\nmodel = quantum\n");
  CHECK(model.key() == "experiment.model");

  const auto traffic = parse_error(
      "[experiment]\nmodel = continuous\n[continuous]\nt = 1\n[traffic]\ninterarrival = gamma:1\nduration = 10\n");
  CHECK(traffic.key() == "traffic");
}

TEST_CASE("empty grids are rejected") {
  CHECK(parse_error("[discrete]\np = 0.5\nL = 10\n").key() == "discrete");
  CHECK(parse_error("[experiment]\nmodel = continuous\n[continuous]\na = 0\nsigma2 = 1\n").key() == "continuous.t");
  CHECK(parse_error("[experiment]\nmodel = continuous\n[continuous]\nt = 1\n").key() == "continuous");
  ExperimentConfig cfg;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("presets are valid") {
  const auto names = preset_names();
  CHECK(names.size() == 4);
  for (const auto& n : names) CHECK_NOTHROW(preset(n).validate());
  const auto fig = preset("fig2-desk");
  CHECK(fig.N.size() == 21);
  CHECK(fig.N.front() == 10);
  CHECK(fig.N.back() == 1000000);
  CHECK(preset("bridge").traffic.has_value());
  CHECK_THROWS_AS(preset("nope"), ConfigError);
}

TEST_CASE("config hash is FNV-1a of the canonical form") {
  const auto a = parse(kDiscrete);
  const auto b = parse(kDiscrete);
  CHECK(a.canonical() == b.canonical());
  CHECK(a.hash() == fnv1a_oracle(a.canonical()));
  CHECK(a.hash() == b.hash());
  auto c = a;
  c.seed += 1;
  CHECK(c.hash() != a.hash());
  // output location does not change what is computed
  auto d = a;
  d.output = "elsewhere";
  CHECK(d.hash() == a.hash());
  std::set<std::uint64_t> hashes;
  for (const auto& n : preset_names()) hashes.insert(preset(n).hash());
  CHECK(hashes.size() == 4);
}

TEST_CASE("discrete runs are reproducible and ordered independently of threads") {
  const auto cfg = parse(kDiscrete);
  const auto one = run_experiment(cfg, 1);
  const auto four = run_experiment(cfg, 4);
  CHECK_FALSE(one.hard_failure);
  REQUIRE(one.table.rows.size() == 4);  // 2 grid points x 2 replicas
  CHECK(one.table.rows == four.table.rows);
  CHECK(one.table.rows[0][0] == "0.5");
  CHECK(one.table.rows[1][3] == "1");
  CHECK(one.table.rows[2][0] == "0.6");
  CHECK(body_without_timestamp(cfg, one.table) == body_without_timestamp(cfg, run_experiment(cfg, 3).table));
}

TEST_CASE("table metadata") {
  const auto cfg = parse(kDiscrete);
  Table t;
  t.columns = {"x", "note"};
  t.rows = {{"1", "a,b"}};
  std::ostringstream out;
  write_table(out, cfg, t, "qloss exact-discrete");
  const auto text = out.str();
  CHECK(text.rfind("# qloss ", 0) == 0);
  CHECK(text.find("# command: qloss exact-discrete\n") != std::string::npos);
  CHECK(text.find("# config_hash: ") != std::string::npos);
  CHECK(text.find("# seeds: ") != std::string::npos);
  CHECK(text.find("# generated: ") != std::string::npos);
  CHECK(text.find("x,note\n1,\"a,b\"\n") != std::string::npos);
}

TEST_CASE("continuous grid rows") {
  auto cfg = parse("[experiment]\nmodel = continuous\n[continuous]\na = -1, 1\nsigma2 = 2\nt = 0.1, 20\n");
  const auto r = run_experiment(cfg, 2);
  CHECK_FALSE(r.hard_failure);
  REQUIRE(r.table.rows.size() == 4);
  for (const auto& row : r.table.rows) CHECK(row.back() == "ok");
  CHECK(r.table.rows == run_experiment(cfg, 1).table.rows);
}

TEST_CASE("format_double is round-trip stable") {
  CHECK(format_double(0.5) == "0.5");
  CHECK(format_double(std::nan("")) == "nan");
  CHECK(std::stod(format_double(1.0 / 3.0)) == doctest::Approx(1.0 / 3.0).epsilon(1e-11));
}
