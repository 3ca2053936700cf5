#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "helpers.hpp"
#include "spdyn/commands.hpp"

using json = nlohmann::json;
namespace fs = std::filesystem;
using namespace testing;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(const std::vector<std::string>& args) {
  std::ostringstream o, e;
  int code = spdyn::cli::run(args, o, e);
  return {code, o.str(), e.str()};
}

json read_json(const fs::path& p) {
  std::ifstream f(p);
  return json::parse(f);
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

}  // namespace

TEST_CASE("missing input exits 2 with an error naming the path") {
  auto dir = temp_dir("cli_missing");
  auto r = run({"--out", dir.string(), "estimate", "--panel", "/nonexistent/panel.csv", "--weights", "/nonexistent/w.csv"});
  CHECK(r.code == 2);
  auto j = json::parse(r.err);
  CHECK(j["error"] == "IoError");
  CHECK(j["message"].get<std::string>().find("/nonexistent/panel.csv") != std::string::npos);
  CHECK(read_json(dir / "error.json")["category"] == "input");
}

TEST_CASE("bad option values exit 2") {
  auto dir = temp_dir("cli_badopt");
  CHECK(run({"--out", dir.string(), "frobnicate"}).code == 2);
  write_text(dir / "spec.json", R"({"n": 10, "t": 40, "bogus": 1})");
  CHECK(run({"--out", dir.string(), "simulate", "--spec", (dir / "spec.json").string()}).code == 2);
}

TEST_CASE("four covariates report 24 instruments") {
  auto dir = temp_dir("cli_q24");
  write_text(dir / "spec.json", R"({"n": 40, "t": 60, "k": 4, "beta_mean": [1, 0.5, -0.5, 0.2]})");
  REQUIRE(run({"--seed", "3", "--out", (dir / "sim").string(), "simulate", "--spec", (dir / "spec.json").string()}).code == 0);
  auto r = run({"--out", (dir / "est").string(), "estimate", "--panel", (dir / "sim/panel.csv").string(), "--weights",
                (dir / "sim/w_true.csv").string()});
  REQUIRE(r.code == 0);
  auto e = read_json(dir / "est/estimates.json");
  CHECK(e["instrument_count"] == 24);
  CHECK(e["pooled_2siv"]["instrument_count"] == 24);
  CHECK(e["pooled_2siv"]["j_dof"] == 18);
  CHECK(fs::exists(dir / "est/unit_coefficients.csv"));
  auto m = read_json(dir / "est/manifest.json");
  CHECK(m["inputs"].size() == 2);
  CHECK(m["inputs"][0]["sha256"] == spdyn::cli::sha256_file(dir / "sim/panel.csv"));
}

TEST_CASE("zero psi gives zero indirect effects") {
  auto dir = temp_dir("cli_psi0");
  write_text(dir / "est.json", R"({"coefficient_names": ["delta", "psi", "x1", "x2"],
    "pooled_2siv": {"theta": {"delta": -0.1, "psi": 0.0, "x1": 0.5, "x2": -1.0},
                    "vcov": [[0.01, 0, 0, 0], [0, 0.01, 0, 0], [0, 0, 0.01, 0], [0, 0, 0, 0.01]]}})");
  write_text(dir / "w.csv", "a,b,c\n0,1,0\n0.5,0,0.5\n0,1,0\n");
  auto r = run({"--out", (dir / "eff").string(), "effects", "--estimates", (dir / "est.json").string(), "--weights",
                (dir / "w.csv").string()});
  REQUIRE(r.code == 0);
  auto j = read_json(dir / "eff/effects.json");
  for (const auto& row : j["rows"]) {
    CHECK(row["indirect"].get<double>() == 0.0);
    CHECK(row["direct"].get<double>() == row["total"].get<double>());
  }
}

TEST_CASE("homophily output is reproducible") {
  auto dir = temp_dir("cli_hom");
  write_text(dir / "spec.json", R"({"n": 30, "t": 40, "groups": 3})");
  REQUIRE(run({"--seed", "11", "--out", (dir / "sim").string(), "simulate", "--spec", (dir / "spec.json").string()}).code == 0);
  std::vector<std::string> args = {"homophily", "--weights", (dir / "sim/w_true.csv").string(), "--groups",
                                   (dir / "sim/groups.csv").string(), "--b", "10000"};
  auto a = args, b = args;
  a.insert(a.begin(), {"--seed", "5", "--out", (dir / "a").string()});
  b.insert(b.begin(), {"--seed", "5", "--out", (dir / "b").string()});
  REQUIRE(run(a).code == 0);
  REQUIRE(run(b).code == 0);
  CHECK(slurp(dir / "a/homophily.json") == slurp(dir / "b/homophily.json"));
}

TEST_CASE("simulate then estimate recovers the mean-group coefficients") {
  auto dir = temp_dir("cli_round");
  write_text(dir / "spec.json", R"({"n": 100, "t": 200, "delta": {"mean": -0.2, "spread": 0.1},
    "psi": {"mean": 0.3, "spread": 0.1}, "beta_sd": 0.3, "network": {"type": "random_sparse", "max_links": 4}})");
  const int runs = 50;
  std::vector<int> inside(4, 0);
  for (int s = 0; s < runs; ++s) {
    const auto sim = dir / ("sim" + std::to_string(s)), est = dir / ("est" + std::to_string(s));
    REQUIRE(run({"--seed", std::to_string(100 + s), "--out", sim.string(), "simulate", "--spec",
                 (dir / "spec.json").string()}).code == 0);
    REQUIRE(run({"--out", est.string(), "estimate", "--estimator", "mgiv", "--panel", (sim / "panel.csv").string(),
                 "--weights", (sim / "w_true.csv").string()}).code == 0);
    auto truth = read_json(sim / "truth.json");
    auto mg = read_json(est / "estimates.json")["mgiv"];
    int p = 0;
    for (const auto& name : truth["coefficient_names"]) {
      const double th = mg["theta"][name.get<std::string>()], se = mg["se"][name.get<std::string>()];
      const double tr = truth["theta_mean"][name.get<std::string>()];
      inside[static_cast<std::size_t>(p++)] += std::fabs(th - tr) <= 1.959964 * se;
    }
  }
  MESSAGE("inside " << inside[0] << " " << inside[1] << " " << inside[2] << " " << inside[3] << " of " << runs);
  for (int c : inside) CHECK(c >= 0.9 * runs);
}
