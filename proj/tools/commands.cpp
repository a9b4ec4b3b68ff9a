#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "gammamix/data_pipeline.hpp"
#include "gammamix/dpgmm_fit.hpp"
#include "gammamix/em.hpp"
#include "gammamix/error.hpp"
#include "gammamix/evaluation.hpp"

namespace gammamix::cli {

namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string source_name(const std::vector<std::filesystem::path>& inputs) {
  std::string s;
  for (const auto& p : inputs) {
    if (!s.empty()) s += ';';
    s += p.generic_string();
  }
  return s;
}

// NaN diagnostics become JSON null.
json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

// Output directories are created on demand.
const std::filesystem::path& prepared(const std::filesystem::path& path) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  return path;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(prepared(path), std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
  if (!out) throw InputError("failed writing " + path.string());
}

std::string label_of(const FitReport& r) {
  return r.method + " K=" + std::to_string(r.k_configured);
}

}  // namespace

int run_fit_em(const FitEmArgs& args, std::ostream& log) {
  const PowerSamples samples = load_merged(args.inputs, args.ptx_mw);
  const EmpiricalPdf pdf = build_empirical_pdf(samples.values, args.bins);

  EmOptions eo;
  eo.k = args.k;
  eo.max_iters = args.max_iters;
  eo.tol = args.tol;
  eo.restarts = args.restarts;
  eo.seed = args.seed;
  eo.validate();

  const auto t0 = Clock::now();
  const EmFitResult fit = fit_em(samples.values, eo);
  FitReport report;
  report.kl_divergence = kl_divergence(pdf, fit.model);
  report.runtime_seconds = seconds_since(t0);

  report.method = "EM";
  report.k_configured = args.k;
  report.k_effective = effective_components(fit.model, args.threshold);
  report.model = fit.model;
  report.log_likelihood = fit.log_likelihood;
  report.seed = args.seed;
  report.binning = Binning::of(pdf, samples.values.size());
  report.data_source = source_name(args.inputs);
  report.details = {{"iterations", fit.iterations},
                    {"converged", fit.converged},
                    {"max_iters", args.max_iters},
                    {"tol", args.tol},
                    {"restarts", args.restarts},
                    {"guarded_updates", fit.guarded_updates},
                    {"threshold", args.threshold},
                    {"ptx_mw", args.ptx_mw}};
  report.warnings = samples.warnings;
  if (!fit.converged) {
    report.warnings.push_back("EM stopped at max_iters=" + std::to_string(args.max_iters) +
                              " before reaching tol");
  }
  write_report(prepared(args.out), report);
  log << "EM K=" << args.k << ": KL=" << format_double(report.kl_divergence)
      << " nats, log-lik=" << format_double(report.log_likelihood)
      << ", iterations=" << fit.iterations << "\n";
  if (!fit.converged) {
    log << "error: EM did not converge within " << args.max_iters << " iterations\n";
    return kConvergence;
  }
  return kOk;
}

int run_fit_dpgmm(const FitDpgmmArgs& args, std::ostream& log) {
  const PowerSamples samples = load_merged(args.inputs, args.ptx_mw);
  const EmpiricalPdf pdf = build_empirical_pdf(samples.values, args.bins);

  DpgmmOptions opts;
  opts.truncation = args.truncation;
  opts.hyperpriors = args.hyperpriors;
  opts.sampler.chains = args.chains;
  opts.sampler.warmup = args.warmup;
  opts.sampler.draws = args.draws;
  opts.sampler.target_accept = args.target_accept;
  opts.sampler.max_tree_depth = args.max_tree_depth;
  opts.sampler.seed = args.seed;
  opts.method = args.fallback_rwm ? DpgmmMethod::Rwm : DpgmmMethod::Nuts;
  opts.threshold = args.threshold;
  opts.alignment = args.alignment;
  opts.init_k = args.init_k;
  opts.validate();

  const auto t0 = Clock::now();
  const DpgmmFit fit = fit_dpgmm(samples.values, opts);
  FitReport report;
  report.kl_divergence = kl_divergence(pdf, fit.summary.model);
  report.runtime_seconds = seconds_since(t0);

  report.method = "DPGMM";
  report.k_configured = args.truncation;
  report.k_effective = fit.summary.k_effective;
  report.model = fit.summary.model;
  report.log_likelihood = log_likelihood(fit.summary.model, samples.values);
  report.seed = args.seed;
  report.binning = Binning::of(pdf, samples.values.size());
  report.data_source = source_name(args.inputs);

  const auto& d = fit.diagnostics;
  const auto total = fit.trace.total_draws();
  json steps = json::array();
  for (const auto& c : fit.trace.chains) steps.push_back(c.step_size);
  const ComponentTrace counts = component_trace(fit.trace, args.threshold);
  report.details = {
      {"sampler", args.fallback_rwm ? "rwm" : "nuts"},
      {"chains", args.chains},
      {"warmup", args.warmup},
      {"draws", args.draws},
      {"target_accept", args.target_accept},
      {"max_tree_depth", args.max_tree_depth},
      {"threshold", args.threshold},
      {"summary", args.alignment == LabelAlignment::Matched ? "matched" : "canonical"},
      {"init_k", fit.init_model.k()},
      {"ptx_mw", args.ptx_mw},
      {"hyperpriors", to_json(args.hyperpriors)},
      {"divergences", d.divergence_count},
      {"divergence_rate", static_cast<double>(d.divergence_count) / static_cast<double>(total)},
      {"r_hat_log_posterior", args.chains > 1 ? number_or_null(d.r_hat_log_density) : json(nullptr)},
      {"ess_log_posterior", number_or_null(d.ess_log_density)},
      {"step_sizes", steps},
      {"mean_weights", fit.summary.mean_weights},
      {"component_count_histogram", counts.histogram},
      {"truncation_saturated", fit.summary.truncation_saturated}};
  report.warnings = samples.warnings;
  report.warnings.insert(report.warnings.end(), fit.warnings.begin(), fit.warnings.end());

  write_report(prepared(args.out), report);
  if (!args.trace.empty()) write_trace_csv(prepared(args.trace), fit.trace);
  log << "DPGMM K=" << args.truncation << ": K_eff=" << report.k_effective
      << ", KL=" << format_double(report.kl_divergence) << " nats, divergences="
      << d.divergence_count << "/" << total;
  if (args.chains > 1) log << ", R-hat(lp)=" << format_double(d.r_hat_log_density);
  log << "\n";
  for (const auto& w : fit.warnings) log << "warning: " << w << "\n";
  return kOk;
}

int run_eval(const EvalArgs& args, std::ostream& out, std::ostream& log) {
  std::vector<FitReport> reports;
  for (const auto& p : args.reports) reports.push_back(read_report(p));
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < args.reports.size(); ++i) {
    labels.push_back(args.reports[i].filename().string());
  }
  if (!args.data.empty()) {
    const PowerSamples samples = load_merged(args.data, args.ptx_mw);
    for (std::size_t i = 0; i < reports.size(); ++i) {
      const auto pdf = build_empirical_pdf(samples.values, reports[i].binning.bins);
      if (!(Binning::of(pdf, samples.values.size()) == reports[i].binning)) {
        throw InputError(args.reports[i].string() + " was not fitted to the given data");
      }
    }
  }
  const Comparison table = compare(reports, labels);
  if (!args.csv.empty()) write_text(args.csv, to_csv(table));
  out << (args.csv_stdout ? to_csv(table) : to_text(table));
  (void)log;
  return kOk;
}

MixtureModel load_model_file(const std::filesystem::path& path, std::ostream& log) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  if (j.is_object() && j.contains("schema")) return report_from_json(j).model;
  if (!j.is_object() || !j.contains("components") || !j["components"].is_array()) {
    throw InputError(path.string() + ": expected a \"components\" array or a fit report");
  }
  std::vector<GammaComponent> comps;
  for (const auto& c : j["components"]) {
    if (!c.is_object()) throw InputError(path.string() + ": components must be objects");
    for (const auto& [key, value] : c.items()) {
      if (key != "weight" && key != "shape" && key != "rate" && key != "scale") {
        throw InputError(path.string() + ": unknown component field \"" + key + "\"");
      }
      if (!value.is_number()) throw InputError(path.string() + ": \"" + key + "\" must be a number");
    }
    if (!c.contains("weight") || !c.contains("shape") || c.contains("rate") == c.contains("scale")) {
      throw InputError(path.string() + ": each component needs weight, shape and one of rate or scale");
    }
    const double rate = c.contains("rate") ? c["rate"].get<double>() : 1.0 / c["scale"].get<double>();
    comps.push_back({c["weight"].get<double>(), c["shape"].get<double>(), rate});
  }
  double total = 0.0;
  for (const auto& c : comps) total += c.weight;
  if (std::abs(total - 1.0) > MixtureModel::kWeightSumTolerance) {
    log << "note: weights in " << path.string() << " sum to " << format_double(total)
        << "; renormalized\n";
  }
  try {
    return MixtureModel::normalized(std::move(comps));
  } catch (const std::invalid_argument& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

int run_synth(const SynthArgs& args, std::ostream& log) {
  const MixtureModel model = load_model_file(args.model, log);
  const SyntheticSet set = synth_generate(model, args.n, args.seed);
  write_power_csv(prepared(args.out), set.samples.values);
  log << "wrote " << args.n << " samples to " << args.out.string() << "\n";
  return kOk;
}

Curves mixture_curves(const std::vector<MixtureModel>& models, double low, double high) {
  Curves c;
  c.x.resize(kCurvePoints);
  for (std::size_t i = 0; i < kCurvePoints; ++i) {
    c.x[i] = low + (high - low) * static_cast<double>(i) / static_cast<double>(kCurvePoints - 1);
  }
  for (const auto& m : models) {
    std::vector<double> d(kCurvePoints);
    for (std::size_t i = 0; i < kCurvePoints; ++i) d[i] = std::exp(mixture_log_pdf(m, c.x[i]));
    c.density.push_back(std::move(d));
  }
  return c;
}

std::string render_overlay_svg(const EmpiricalPdf& pdf, const Curves& curves,
                               const std::vector<std::string>& labels) {
  constexpr double W = 720, H = 440, left = 70, right = 20, top = 20, bottom = 50;
  const double pw = W - left - right, ph = H - top - bottom;
  double ymax = 0.0;
  for (double d : pdf.densities) ymax = std::max(ymax, d);
  for (const auto& col : curves.density) {
    for (double d : col) ymax = std::max(ymax, d);
  }
  if (!(ymax > 0.0)) ymax = 1.0;
  ymax *= 1.05;
  const double x0 = pdf.low(), x1 = pdf.high();
  auto sx = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto sy = [&](double y) { return top + ph - y / ymax * ph; };
  static constexpr const char* kColors[] = {"#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e"};

  std::ostringstream s;
  s << std::setprecision(6);
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t b = 0; b < pdf.bins(); ++b) {
    const double y = sy(pdf.densities[b]);
    s << "<rect x=\"" << sx(pdf.edges[b]) << "\" y=\"" << y << "\" width=\""
      << sx(pdf.edges[b + 1]) - sx(pdf.edges[b]) << "\" height=\"" << top + ph - y
      << "\" fill=\"#c7c7c7\" stroke=\"#8c8c8c\" stroke-width=\"0.3\"/>\n";
  }
  for (std::size_t m = 0; m < curves.density.size(); ++m) {
    s << "<polyline fill=\"none\" stroke-width=\"1.8\" stroke=\"" << kColors[m % 5] << "\" points=\"";
    for (std::size_t i = 0; i < curves.x.size(); ++i) {
      s << (i ? " " : "") << sx(curves.x[i]) << "," << sy(curves.density[m][i]);
    }
    s << "\"/>\n";
  }
  s << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\""
    << top + ph << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
    << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 5; ++t) {
    const double xv = x0 + (x1 - x0) * t / 5.0, yv = ymax * t / 5.0;
    s << "<text x=\"" << sx(xv) << "\" y=\"" << top + ph + 16 << "\" text-anchor=\"middle\">"
      << std::setprecision(3) << xv << "</text>\n";
    s << "<text x=\"" << left - 6 << "\" y=\"" << sy(yv) + 4 << "\" text-anchor=\"end\">" << yv
      << "</text>\n" << std::setprecision(6);
  }
  s << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 10
    << "\" text-anchor=\"middle\">received power (mW)</text>\n";
  s << "<text transform=\"translate(16," << top + ph / 2
    << ") rotate(-90)\" text-anchor=\"middle\">density</text>\n";
  for (std::size_t m = 0; m < labels.size(); ++m) {
    const double y = top + 14 + 16 * static_cast<double>(m);
    s << "<line x1=\"" << left + pw - 170 << "\" y1=\"" << y - 4 << "\" x2=\"" << left + pw - 145
      << "\" y2=\"" << y - 4 << "\" stroke-width=\"1.8\" stroke=\"" << kColors[m % 5] << "\"/>\n";
    s << "<text x=\"" << left + pw - 140 << "\" y=\"" << y << "\">" << labels[m] << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

int run_plot(const PlotArgs& args, std::ostream& log) {
  std::vector<FitReport> reports;
  for (const auto& p : args.reports) reports.push_back(read_report(p));
  const PowerSamples samples = load_merged(args.data, args.ptx_mw);
  const EmpiricalPdf pdf = build_empirical_pdf(samples.values, reports.front().binning.bins);
  std::vector<MixtureModel> models;
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    if (!(Binning::of(pdf, samples.values.size()) == reports[i].binning)) {
      log << "warning: " << args.reports[i].string() << " was scored on a different binning\n";
    }
    models.push_back(reports[i].model);
    labels.push_back(label_of(reports[i]));
  }
  const Curves curves = mixture_curves(models, pdf.low(), pdf.high());

  std::ostringstream csv;
  csv << "x_mw";
  for (const auto& l : labels) csv << ',' << l;
  csv << '\n';
  for (std::size_t i = 0; i < curves.x.size(); ++i) {
    csv << format_double(curves.x[i]);
    for (const auto& col : curves.density) csv << ',' << format_double(col[i]);
    csv << '\n';
  }
  std::filesystem::path prefix = args.out;
  if (prefix.extension() == ".svg" || prefix.extension() == ".csv") prefix.replace_extension();
  const auto svg_path = std::filesystem::path(prefix.string() + ".svg");
  const auto csv_path = std::filesystem::path(prefix.string() + ".csv");
  const auto pdf_path = std::filesystem::path(prefix.string() + "_pdf.csv");
  write_text(svg_path, render_overlay_svg(pdf, curves, labels));
  write_text(csv_path, csv.str());
  write_empirical_pdf_csv(pdf_path, pdf);
  log << "wrote " << svg_path.string() << ", " << csv_path.string() << " and " << pdf_path.string()
      << "\n";
  return kOk;
}

}  // namespace gammamix::cli
