// gammamix: fit Gamma mixtures to received-power measurements.
//
// Exit codes: 0 success, 1 input or schema error, 2 EM convergence failure,
// 3 sampler initialization failure, 64 usage error.

#include <fstream>
#include <iostream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "commands.hpp"
#include "gammamix/error.hpp"

namespace {

using namespace gammamix;
using namespace gammamix::cli;
using nlohmann::json;

std::string json_scalar(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number()) return v.dump();
  throw InputError("config values must be strings, numbers, booleans or arrays of those");
}

// Fills options of `sub` that were not given on the command line from a
// JSON object whose keys are long option names ("max_iters" or
// "max-iters") or positional names. Unknown keys are rejected.
// `special` may consume keys that have no matching option.
template <typename Special>
void apply_config(CLI::App* sub, const std::string& path, Special special) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open config " + path);
  json cfg;
  try {
    cfg = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError(path + ": " + e.what());
  }
  if (!cfg.is_object()) throw InputError(path + ": config must be a JSON object");
  for (const auto& [key, value] : cfg.items()) {
    if (special(key, value)) continue;
    std::string name = key;
    for (char& c : name) {
      if (c == '_') c = '-';
    }
    CLI::Option* opt = sub->get_option_no_throw("--" + name);
    if (opt == nullptr) opt = sub->get_option_no_throw(key);
    if (opt == nullptr || name == "config") {
      throw InputError(path + ": unknown key \"" + key + "\" for " + sub->get_name());
    }
    if (opt->count() > 0) continue;  // the command line wins
    std::vector<std::string> results;
    if (value.is_array()) {
      for (const auto& v : value) results.push_back(json_scalar(v));
    } else {
      results.push_back(json_scalar(value));
    }
    try {
      opt->add_result(results);
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw InputError(path + ": \"" + key + "\": " + e.what());
    }
  }
}

void apply_config(CLI::App* sub, const std::string& path) {
  apply_config(sub, path, [](const std::string&, const json&) { return false; });
}

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw UsageError(what);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fit Gamma mixtures (EM and Dirichlet-process) to received-power data"};
  app.set_version_flag("--version", "gammamix 0.1.0");
  app.require_subcommand(1);

  FitEmArgs em;
  std::string em_config;
  auto* fit_em = app.add_subcommand("fit-em", "Fit a K-component mixture by EM");
  fit_em->add_option("inputs", em.inputs, "Power or S21 CSV file(s)");
  fit_em->add_flag("--merge", em.merge, "Pool several input files in the given order");
  fit_em->add_option("--k", em.k, "Number of components")->check(CLI::PositiveNumber);
  fit_em->add_option("--max-iters", em.max_iters, "EM iteration cap")->check(CLI::PositiveNumber);
  fit_em->add_option("--tol", em.tol, "Relative log-likelihood tolerance")->check(CLI::PositiveNumber);
  fit_em->add_option("--restarts", em.restarts, "Random restarts")->check(CLI::PositiveNumber);
  fit_em->add_option("--bins", em.bins, "Histogram bins")->check(CLI::Range(2, 1000000));
  fit_em->add_option("--ptx-mw", em.ptx_mw, "Transmit power for S21 input")->check(CLI::PositiveNumber);
  fit_em->add_option("--threshold", em.threshold, "Weight threshold for K_eff")->check(CLI::Range(0.0, 1.0));
  fit_em->add_option("--seed", em.seed, "Master seed");
  fit_em->add_option("--out", em.out, "Report JSON path");
  fit_em->add_option("--config", em_config, "JSON file with option values");

  FitDpgmmArgs dp;
  std::string dp_config;
  auto* fit_dp = app.add_subcommand("fit-dpgmm", "Fit a truncated Dirichlet-process Gamma mixture");
  fit_dp->add_option("inputs", dp.inputs, "Power or S21 CSV file(s)");
  fit_dp->add_flag("--merge", dp.merge, "Pool several input files in the given order");
  fit_dp->add_option("--truncation", dp.truncation, "Truncation level K")->check(CLI::Range(2, 1000));
  fit_dp->add_option("--chains", dp.chains, "Number of chains")->check(CLI::PositiveNumber);
  fit_dp->add_option("--warmup", dp.warmup, "Warmup iterations per chain");
  fit_dp->add_option("--draws", dp.draws, "Retained draws per chain")->check(CLI::PositiveNumber);
  fit_dp->add_option("--target-accept", dp.target_accept, "Step-size adaptation target");
  fit_dp->add_option("--max-tree-depth", dp.max_tree_depth, "NUTS tree depth cap")->check(CLI::PositiveNumber);
  fit_dp->add_option("--threshold", dp.threshold, "Weight threshold for K_eff")->check(CLI::Range(0.0, 1.0));
  const std::map<std::string, LabelAlignment> alignments = {{"matched", LabelAlignment::Matched},
                                                             {"canonical", LabelAlignment::Canonical}};
  fit_dp->add_option("--summary", dp.alignment, "How draws are aligned before averaging: matched or canonical")
      ->transform(CLI::CheckedTransformer(alignments, CLI::ignore_case));
  fit_dp->add_option("--init-k", dp.init_k, "Components of the seeding EM fit (0 = BIC)");
  fit_dp->add_option("--bins", dp.bins, "Histogram bins")->check(CLI::Range(2, 1000000));
  fit_dp->add_option("--ptx-mw", dp.ptx_mw, "Transmit power for S21 input")->check(CLI::PositiveNumber);
  fit_dp->add_option("--seed", dp.seed, "Master seed");
  fit_dp->add_option("--out", dp.out, "Report JSON path");
  fit_dp->add_option("--trace", dp.trace, "Write the posterior draws as CSV");
  fit_dp->add_flag("--fallback-rwm", dp.fallback_rwm, "Use random-walk Metropolis instead of NUTS");
  fit_dp->add_option("--config", dp_config, "JSON file with option values and \"hyperpriors\"");

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Compare fit reports side by side");
  eval->add_option("reports", ev.reports, "Report JSON files");
  eval->add_option("--data", ev.data, "Check the reports against these measurement files");
  eval->add_flag("--merge", ev.merge, "Pool several --data files in the given order");
  eval->add_option("--ptx-mw", ev.ptx_mw, "Transmit power for S21 input")->check(CLI::PositiveNumber);
  eval->add_option("--csv", ev.csv, "Also write the table as CSV");
  eval->add_flag("--csv-stdout", ev.csv_stdout, "Print CSV instead of aligned text");

  SynthArgs sy;
  auto* synth = app.add_subcommand("synth", "Draw synthetic power samples from a mixture");
  synth->add_option("model", sy.model, "Mixture JSON or fit report");
  synth->add_option("--n", sy.n, "Number of samples")->check(CLI::PositiveNumber);
  synth->add_option("--seed", sy.seed, "Seed");
  synth->add_option("--out", sy.out, "Power CSV path");

  PlotArgs pl;
  auto* plot = app.add_subcommand("plot", "Overlay fitted densities on the empirical PDF");
  plot->add_option("reports", pl.reports, "Report JSON files");
  plot->add_option("--data", pl.data, "Measurement files the reports were fitted to");
  plot->add_flag("--merge", pl.merge, "Pool several --data files in the given order");
  plot->add_option("--ptx-mw", pl.ptx_mw, "Transmit power for S21 input")->check(CLI::PositiveNumber);
  plot->add_option("--out", pl.out, "Output prefix; writes <prefix>.svg, <prefix>.csv and <prefix>_pdf.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (fit_em->parsed()) {
      if (!em_config.empty()) apply_config(fit_em, em_config);
      require(!em.inputs.empty(), "fit-em needs at least one input file");
      require(!em.out.empty(), "fit-em needs --out");
      require(em.merge || em.inputs.size() == 1, "several inputs need --merge");
      return run_fit_em(em, std::cerr);
    }
    if (fit_dp->parsed()) {
      if (!dp_config.empty()) {
        apply_config(fit_dp, dp_config, [&](const std::string& key, const json& value) {
          if (key != "hyperpriors") return false;
          try {
            dp.hyperpriors = hyperpriors_from_json(value);
          } catch (const std::exception& e) {
            throw InputError(dp_config + ": hyperpriors: " + e.what());
          }
          return true;
        });
      }
      require(!dp.inputs.empty(), "fit-dpgmm needs at least one input file");
      require(!dp.out.empty(), "fit-dpgmm needs --out");
      require(dp.merge || dp.inputs.size() == 1, "several inputs need --merge");
      return run_fit_dpgmm(dp, std::cerr);
    }
    if (eval->parsed()) {
      require(!ev.reports.empty(), "eval needs report files");
      require(ev.merge || ev.data.size() <= 1, "several --data files need --merge");
      return run_eval(ev, std::cout, std::cerr);
    }
    if (synth->parsed()) {
      require(!sy.model.empty(), "synth needs a model file");
      require(!sy.out.empty(), "synth needs --out");
      return run_synth(sy, std::cerr);
    }
    if (plot->parsed()) {
      require(!pl.reports.empty(), "plot needs report files");
      require(!pl.data.empty(), "plot needs --data");
      require(!pl.out.empty(), "plot needs --out");
      require(pl.merge || pl.data.size() == 1, "several --data files need --merge");
      return run_plot(pl, std::cerr);
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kInputError;
  } catch (const FitError& e) {
    std::cerr << "fit error: " << e.what() << "\n";
    return kConvergence;
  } catch (const InitializationError& e) {
    std::cerr << "fit error: " << e.what() << "\n";
    return kConvergence;
  } catch (const SamplerInitError& e) {
    std::cerr << "sampler initialization error: " << e.what() << "\n";
    return kSamplerInit;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  }
  return kUsage;
}
