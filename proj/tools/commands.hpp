#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gammamix/dpgmm_fit.hpp"
#include "gammamix/dpgmm_model.hpp"
#include "gammamix/mixture.hpp"
#include "gammamix/report.hpp"

namespace gammamix::cli {

enum ExitCode : int {
  kOk = 0,
  kInputError = 1,
  kConvergence = 2,
  kSamplerInit = 3,
  kUsage = 64,
};

struct FitEmArgs {
  std::vector<std::filesystem::path> inputs;
  bool merge = false;  // required when more than one input is given
  std::size_t k = 3;
  std::size_t max_iters = 1000;
  double tol = 1e-8;
  std::size_t restarts = 1;
  std::size_t bins = 100;
  double ptx_mw = 1.0;
  double threshold = kDefaultEffectiveThreshold;
  std::uint64_t seed = 0;
  std::filesystem::path out;
};

struct FitDpgmmArgs {
  std::vector<std::filesystem::path> inputs;
  bool merge = false;
  std::size_t truncation = kDefaultTruncation;
  std::size_t chains = 2;
  std::size_t warmup = 1000;
  std::size_t draws = 1000;
  double target_accept = 0.8;
  std::size_t max_tree_depth = 10;
  double threshold = kDefaultEffectiveThreshold;
  LabelAlignment alignment = LabelAlignment::Matched;
  std::size_t init_k = 0;
  std::size_t bins = 100;
  double ptx_mw = 1.0;
  std::uint64_t seed = 0;
  std::filesystem::path out;
  std::filesystem::path trace;
  bool fallback_rwm = false;
  HyperPriors hyperpriors;
};

struct EvalArgs {
  std::vector<std::filesystem::path> reports;
  std::vector<std::filesystem::path> data;
  bool merge = false;
  double ptx_mw = 1.0;
  std::filesystem::path csv;
  bool csv_stdout = false;
};

struct SynthArgs {
  std::filesystem::path model;
  std::size_t n = 5000;
  std::uint64_t seed = 0;
  std::filesystem::path out;
};

struct PlotArgs {
  std::vector<std::filesystem::path> reports;
  std::vector<std::filesystem::path> data;
  bool merge = false;
  double ptx_mw = 1.0;
  std::filesystem::path out;  // prefix; writes .svg, .csv and _pdf.csv
};

inline constexpr std::size_t kCurvePoints = 512;

// Each returns a process exit code. Library exceptions propagate; main()
// maps them to codes.
int run_fit_em(const FitEmArgs& args, std::ostream& log);
int run_fit_dpgmm(const FitDpgmmArgs& args, std::ostream& log);
int run_eval(const EvalArgs& args, std::ostream& out, std::ostream& log);
int run_synth(const SynthArgs& args, std::ostream& log);
int run_plot(const PlotArgs& args, std::ostream& log);

/// Reads {"components":[...]} where each component has weight, shape and
/// either rate or scale, or a FitReport. Weights are renormalized.
MixtureModel load_model_file(const std::filesystem::path& path, std::ostream& log);

/// x grid of kCurvePoints points across [low, high] and one density column
/// per model.
struct Curves {
  std::vector<double> x;
  std::vector<std::vector<double>> density;
};
Curves mixture_curves(const std::vector<MixtureModel>& models, double low, double high);

std::string render_overlay_svg(const EmpiricalPdf& pdf, const Curves& curves,
                               const std::vector<std::string>& labels);

}  // namespace gammamix::cli
