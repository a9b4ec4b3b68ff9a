#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gammamix/data_pipeline.hpp"
#include "gammamix/mixture.hpp"

using namespace gammamix;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kDir = fs::temp_directory_path() / "gammamix_test_cli";

// Start every run from an empty scratch directory.
const bool kFresh = [] {
  fs::remove_all(kDir);
  return fs::create_directories(kDir);
}();

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

// Runs the CLI and returns its exit code; stdout goes to `stdout_file`.
int run(const std::string& args, const fs::path& stdout_file = "/dev/null") {
  const std::string cmd = std::string("'") + GAMMAMIX_CLI + "' " + args + " > " + q(stdout_file) +
                          " 2> " + q(kDir / "stderr.txt");
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

json report(const fs::path& p) { return json::parse(slurp(p)); }

json without_runtime(json j) {
  j.erase("runtime_s");
  return j;
}

const MixtureModel kTruth({{0.5, 30.0, 10.0}, {0.3, 60.0, 8.0}, {0.2, 200.0, 20.0}});

// Three-component data set shared by the tests.
fs::path data(std::size_t n = 2000, std::uint64_t seed = 7) {
  fs::create_directories(kDir);
  const fs::path p = kDir / ("data_" + std::to_string(n) + "_" + std::to_string(seed) + ".csv");
  if (!fs::exists(p)) write_power_csv(p, sample(kTruth, n, seed));
  return p;
}

fs::path model_file() {
  const fs::path p = kDir / "model.json";
  std::ofstream(p) << R"({"components":[
    {"weight":0.5,"shape":30,"rate":10},
    {"weight":0.3,"shape":60,"scale":0.125},
    {"weight":0.2,"shape":200,"rate":20}]})";
  return p;
}

fs::path em_report(std::size_t k = 3) {
  const fs::path out = kDir / ("em_k" + std::to_string(k) + ".json");
  if (!fs::exists(out)) {
    REQUIRE(run("fit-em " + q(data()) + " --k " + std::to_string(k) +
                " --max-iters 5000 --seed 3 --out " + q(out)) == 0);
  }
  return out;
}

fs::path dpgmm_report() {
  const fs::path out = kDir / "dpgmm.json";
  if (!fs::exists(out)) {
    REQUIRE(run("fit-dpgmm " + q(data()) +
                " --truncation 8 --warmup 200 --draws 150 --seed 4 --out " + q(out)) == 0);
  }
  return out;
}

}  // namespace

TEST_CASE("synth writes the requested samples deterministically") {
  const fs::path a = kDir / "synth_a.csv", b = kDir / "synth_b.csv", c = kDir / "synth_c.csv";
  fs::create_directories(kDir);
  REQUIRE(run("synth " + q(model_file()) + " --n 500 --seed 11 --out " + q(a)) == 0);
  REQUIRE(run("synth " + q(model_file()) + " --n 500 --seed 11 --out " + q(b)) == 0);
  REQUIRE(run("synth " + q(model_file()) + " --n 500 --seed 12 --out " + q(c)) == 0);
  CHECK(slurp(a) == slurp(b));
  CHECK(slurp(a) != slurp(c));
  const auto values = load_power_csv(a).values;
  CHECK(values.size() == 500);
  CHECK(values == sample(kTruth, 500, 11));

  CHECK(run("synth " + q(kDir / "missing.json") + " --out " + q(a)) == 1);
  CHECK(run("synth " + q(model_file()) + " --n 0 --out " + q(a)) == 64);
  CHECK(run("synth " + q(model_file())) == 64);
}

TEST_CASE("fit-em report, exit codes and determinism") {
  const fs::path out = em_report();
  const json r = report(out);
  CHECK(r["schema"] == 1);
  CHECK(r["method"] == "EM");
  CHECK(r["k_configured"] == 3);
  CHECK(r["k_effective"].get<int>() <= 3);
  CHECK(r["kl_divergence"].get<double>() < 0.05);
  CHECK(r["binning"]["bins"] == 100);
  CHECK(r["binning"]["samples"] == 2000);

  const fs::path again = kDir / "em_again.json";
  REQUIRE(run("fit-em " + q(data()) + " --k 3 --max-iters 5000 --seed 3 --out " + q(again)) == 0);
  CHECK(without_runtime(report(again)) == without_runtime(r));

  CHECK(run("fit-em " + q(kDir / "nope.csv") + " --k 3 --out " + q(again)) == 1);
  CHECK(run("fit-em " + q(data()) + " --k 0 --out " + q(again)) == 64);
  CHECK(run("fit-em " + q(data()) + " --k 3") == 64);
  CHECK(run("fit-em --out " + q(again)) == 64);
  CHECK(run("fit-em " + q(data()) + " --k 3 --bogus 1 --out " + q(again)) == 64);
  CHECK(run("") == 64);
}

TEST_CASE("fit-em exits 2 when it runs out of iterations") {
  const fs::path out = kDir / "em_short.json";
  fs::remove(out);
  CHECK(run("fit-em " + q(data()) + " --k 3 --max-iters 2 --out " + q(out)) == 2);
  REQUIRE(fs::exists(out));
  CHECK_FALSE(report(out)["warnings"].empty());
}

TEST_CASE("several inputs need --merge") {
  const fs::path out = kDir / "em_merged.json";
  const std::string inputs = q(data(2000, 7)) + " " + q(data(1000, 8));
  CHECK(run("fit-em " + inputs + " --k 3 --out " + q(out)) == 64);
  REQUIRE(run("fit-em " + inputs + " --merge --k 3 --out " + q(out)) == 0);
  CHECK(report(out)["binning"]["samples"] == 3000);
}

TEST_CASE("synth then fit-em round trip") {
  const fs::path d = kDir / "round_trip.csv", out = kDir / "round_trip.json";
  REQUIRE(run("synth " + q(model_file()) + " --n 5000 --seed 21 --out " + q(d)) == 0);
  REQUIRE(run("fit-em " + q(d) + " --k 3 --out " + q(out)) == 0);
  CHECK(report(out)["kl_divergence"].get<double>() < 0.05);
}

TEST_CASE("fit-dpgmm report, trace and determinism") {
  const fs::path out = dpgmm_report();
  const json r = report(out);
  CHECK(r["method"] == "DPGMM");
  CHECK(r["k_configured"] == 8);
  CHECK(std::abs(r["k_effective"].get<int>() - 3) <= 1);
  CHECK(r["kl_divergence"].get<double>() < 0.05);
  CHECK(r["details"]["chains"] == 2);
  CHECK(r["details"].contains("r_hat_log_posterior"));
  CHECK(r["details"].contains("divergences"));
  CHECK(r["details"]["summary"] == "matched");

  const fs::path again = kDir / "dpgmm_again.json", trace = kDir / "trace.csv";
  REQUIRE(run("fit-dpgmm " + q(data()) + " --truncation 8 --warmup 200 --draws 150 --seed 4 --out " +
              q(again) + " --trace " + q(trace)) == 0);
  CHECK(without_runtime(report(again)) == without_runtime(r));
  std::ifstream in(trace);
  std::string header;
  std::getline(in, header);
  CHECK(header.rfind("chain,draw,log_posterior,divergent,a,", 0) == 0);
  int rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  CHECK(rows == 300);
}

TEST_CASE("fit-dpgmm with one chain warns that R-hat is omitted") {
  const fs::path out = kDir / "dpgmm_one.json";
  REQUIRE(run("fit-dpgmm " + q(data(500, 9)) +
              " --chains 1 --truncation 5 --warmup 150 --draws 100 --out " + q(out)) == 0);
  const json r = report(out);
  bool found = false;
  for (const auto& w : r["warnings"]) found = found || w.get<std::string>().find("R-hat omitted") != std::string::npos;
  CHECK(found);
  CHECK(r["details"]["r_hat_log_posterior"].is_null());
}

TEST_CASE("fit-dpgmm flags a saturated truncation") {
  const fs::path out = kDir / "dpgmm_two.json";
  REQUIRE(run("fit-dpgmm " + q(data(500, 9)) +
              " --truncation 2 --warmup 150 --draws 100 --out " + q(out)) == 0);
  const json r = report(out);
  CHECK(r["details"]["truncation_saturated"] == true);
  bool found = false;
  for (const auto& w : r["warnings"]) found = found || w.get<std::string>().find("truncation saturated") != std::string::npos;
  CHECK(found);
}

TEST_CASE("fit-dpgmm --summary canonical") {
  const fs::path out = kDir / "dpgmm_canonical.json";
  REQUIRE(run("fit-dpgmm " + q(data(500, 9)) +
              " --truncation 5 --warmup 150 --draws 100 --summary canonical --out " + q(out)) == 0);
  const json r = report(out);
  CHECK(r["details"]["summary"] == "canonical");
  CHECK(r["details"]["mean_weights"].size() == 5);
}

TEST_CASE("fit-dpgmm usage and input errors") {
  const fs::path out = kDir / "dpgmm_bad.json";
  CHECK(run("fit-dpgmm " + q(data()) + " --truncation 1 --out " + q(out)) == 64);
  CHECK(run("fit-dpgmm " + q(data()) + " --target-accept 1.5 --out " + q(out)) == 64);
  CHECK(run("fit-dpgmm " + q(kDir / "nope.csv") + " --out " + q(out)) == 1);
  CHECK(run("fit-dpgmm " + q(data()) + " --init-k 40 --out " + q(out)) == 64);
  CHECK(run("fit-dpgmm " + q(data()) + " --summary median --out " + q(out)) == 64);
}

TEST_CASE("eval renders text and CSV, deterministically") {
  const fs::path em3 = em_report(3), em4 = em_report(4), dp = dpgmm_report();
  const fs::path text = kDir / "eval.txt", csv = kDir / "eval.csv", csv2 = kDir / "eval2.csv";
  REQUIRE(run("eval " + q(em3) + " " + q(em4) + " " + q(dp) + " --data " + q(data()), text) == 0);
  const std::string t = slurp(text);
  CHECK(t.find("em_k3.json") != std::string::npos);
  CHECK(t.find("dpgmm.json") != std::string::npos);

  REQUIRE(run("eval " + q(em3) + " " + q(em4) + " --csv-stdout", csv) == 0);
  REQUIRE(run("eval " + q(em3) + " " + q(em4) + " --csv " + q(csv2)) == 0);
  CHECK(slurp(csv) == slurp(csv2));
  std::istringstream lines(slurp(csv));
  std::string header, row;
  std::getline(lines, header);
  CHECK(header == "label,method,k_configured,k_effective,kl_divergence,log_likelihood,runtime_s,bins,low,high,samples");
  int rows = 0;
  while (std::getline(lines, row)) ++rows;
  CHECK(rows == 2);

  const fs::path again = kDir / "eval_again.txt";
  REQUIRE(run("eval " + q(em3) + " " + q(em4) + " " + q(dp) + " --data " + q(data()), again) == 0);
  CHECK(slurp(again) == t);
}

TEST_CASE("eval errors") {
  const fs::path em3 = em_report(3), em4 = em_report(4);
  CHECK(run("eval " + q(em3)) == 1);
  CHECK(run("eval " + q(em3) + " " + q(em4) + " --data " + q(data(500, 9))) == 1);
  json bad = report(em4);
  bad["schema"] = 2;
  const fs::path b = kDir / "bad_schema.json";
  std::ofstream(b) << bad.dump();
  CHECK(run("eval " + q(em3) + " " + q(b)) == 1);
  CHECK(run("eval") == 64);

  const fs::path other = kDir / "em_other.json";
  REQUIRE(run("fit-em " + q(data(500, 9)) + " --k 3 --out " + q(other)) == 0);
  CHECK(run("eval " + q(em3) + " " + q(other)) == 1);
}

TEST_CASE("plot writes an overlay whose curves integrate to about one") {
  const fs::path prefix = kDir / "overlay";
  REQUIRE(run("plot " + q(em_report(3)) + " " + q(dpgmm_report()) + " --data " + q(data()) +
              " --out " + q(prefix)) == 0);
  REQUIRE(fs::exists(kDir / "overlay.svg"));
  CHECK(slurp(kDir / "overlay.svg").find("<svg") != std::string::npos);
  CHECK(slurp(kDir / "overlay_pdf.csv").rfind("edge_low,edge_high,density\n", 0) == 0);

  std::istringstream csv(slurp(kDir / "overlay.csv"));
  std::string header;
  std::getline(csv, header);
  CHECK(header == "x_mw,EM K=3,DPGMM K=8");
  std::vector<double> x, em, dp;
  for (std::string line; std::getline(csv, line);) {
    std::istringstream f(line);
    std::string a, b, c;
    std::getline(f, a, ',');
    std::getline(f, b, ',');
    std::getline(f, c, ',');
    x.push_back(std::stod(a));
    em.push_back(std::stod(b));
    dp.push_back(std::stod(c));
  }
  REQUIRE(x.size() == 512);
  double ie = 0.0, id = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) {
    ie += 0.5 * (em[i] + em[i - 1]) * (x[i] - x[i - 1]);
    id += 0.5 * (dp[i] + dp[i - 1]) * (x[i] - x[i - 1]);
  }
  CHECK(ie == doctest::Approx(1.0).epsilon(0.02));
  CHECK(id == doctest::Approx(1.0).epsilon(0.02));

  const std::string first = slurp(kDir / "overlay.csv") + slurp(kDir / "overlay.svg");
  REQUIRE(run("plot " + q(em_report(3)) + " " + q(dpgmm_report()) + " --data " + q(data()) +
              " --out " + q(prefix)) == 0);
  CHECK(slurp(kDir / "overlay.csv") + slurp(kDir / "overlay.svg") == first);

  CHECK(run("plot " + q(em_report(3)) + " --out " + q(prefix)) == 64);
}

TEST_CASE("config files: values, overrides and unknown keys") {
  const fs::path cfg = kDir / "em_config.json", out = kDir / "em_config_out.json";
  std::ofstream(cfg) << json{{"inputs", {data().string()}}, {"k", 4}, {"max_iters", 5000},
                             {"seed", 3}, {"out", out.string()}}.dump();
  REQUIRE(run("fit-em --config " + q(cfg)) == 0);
  CHECK(report(out)["k_configured"] == 4);
  REQUIRE(run("fit-em --config " + q(cfg) + " --k 2") == 0);
  CHECK(report(out)["k_configured"] == 2);

  const fs::path bad = kDir / "em_bad_config.json";
  std::ofstream(bad) << R"({"k": 3, "colour": "blue"})";
  CHECK(run("fit-em --config " + q(bad) + " " + q(data()) + " --out " + q(out)) == 1);
  std::ofstream(bad) << "{ nope";
  CHECK(run("fit-em --config " + q(bad) + " " + q(data()) + " --out " + q(out)) == 1);
  CHECK(run("fit-em --config " + q(kDir / "absent.json") + " " + q(data()) + " --out " + q(out)) == 1);

  const fs::path dcfg = kDir / "dp_config.json", dout = kDir / "dp_config_out.json";
  std::ofstream(dcfg) << json{{"truncation", 4}, {"warmup", 150}, {"draws", 50},
                              {"hyperpriors", {{"kappa_rate", 0.01}}}}.dump();
  REQUIRE(run("fit-dpgmm --config " + q(dcfg) + " " + q(data(500, 9)) + " --out " + q(dout)) == 0);
  const json r = report(dout);
  CHECK(r["k_configured"] == 4);
  CHECK(r["details"]["hyperpriors"]["kappa_rate"] == 0.01);
  std::ofstream(dcfg) << json{{"hyperpriors", {{"kappa", 0.01}}}}.dump();
  CHECK(run("fit-dpgmm --config " + q(dcfg) + " " + q(data(500, 9)) + " --out " + q(dout)) == 1);
}

TEST_CASE("recipes load and run") {
  const fs::path recipes = fs::path(GAMMAMIX_SOURCE_DIR) / "recipes";
  REQUIRE(fs::is_directory(recipes));
  int em = 0, dp = 0;
  for (const auto& entry : fs::recursive_directory_iterator(recipes)) {
    const fs::path p = entry.path();
    if (p.extension() != ".json" || p.parent_path().filename() == "synthetic") continue;
    const json cfg = json::parse(slurp(p));
    INFO(p.string());
    REQUIRE(cfg.contains("inputs"));
    for (const auto& in : cfg["inputs"]) CHECK(in.get<std::string>().rfind("data/", 0) == 0);
    const fs::path out = kDir / "recipes" / p.filename();
    // The measurement files are not part of the repository, so the input
    // and output are overridden and the run shortened.
    if (cfg.contains("k")) {
      const int rc = run("fit-em --config " + q(p) + " " + q(data(2048, 5)) +
                         " --max-iters 200 --out " + q(out));
      CHECK((rc == 0 || rc == 2));
      CHECK(report(out)["k_configured"] == cfg["k"]);
      ++em;
    } else {
      CHECK(run("fit-dpgmm --config " + q(p) + " " + q(data(300, 6)) +
                " --chains 1 --warmup 0 --draws 2 --init-k 3 --out " + q(out) + " --trace " +
                q(kDir / "recipes" / "trace.csv")) == 0);
      CHECK(report(out)["k_configured"] == cfg["truncation"]);
      ++dp;
    }
  }
  CHECK(em == 11);
  CHECK(dp == 6);

  const fs::path synth = kDir / "recipe_synth.csv";
  CHECK(run("synth " + q(recipes / "synthetic" / "table2_20cm_dpgmm.json") + " --n 100 --out " +
            q(synth)) == 0);
}
