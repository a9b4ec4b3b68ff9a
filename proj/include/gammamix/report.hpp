#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gammamix/data_pipeline.hpp"
#include "gammamix/mixture.hpp"

namespace gammamix {

inline constexpr int kReportSchema = 1;

/// Identifies the histogram a report was scored against.
struct Binning {
  std::size_t bins = 0;
  double low = 0.0;
  double high = 0.0;
  std::size_t samples = 0;

  static Binning of(const EmpiricalPdf& pdf, std::size_t samples);
  friend bool operator==(const Binning&, const Binning&) = default;
};

struct FitReport {
  std::string method;  // "EM" or "DPGMM"
  std::size_t k_configured = 0;
  std::size_t k_effective = 0;
  MixtureModel model{{GammaComponent{}}};
  double kl_divergence = 0.0;  // nats
  double log_likelihood = 0.0;
  double runtime_seconds = 0.0;
  std::uint64_t seed = 0;
  Binning binning;
  std::string data_source;
  /// Method-specific settings and diagnostics; always a JSON object.
  nlohmann::json details = nlohmann::json::object();
  std::vector<std::string> warnings;
};

/// Serializes with `"schema": 1`. Keys come out sorted, so equal reports
/// produce identical text.
nlohmann::json to_json(const FitReport& report);
/// Throws InputError on a schema version mismatch or a field that is
/// missing, mistyped or violates the report invariants.
FitReport report_from_json(const nlohmann::json& j);

void write_report(const std::filesystem::path& path, const FitReport& report);
FitReport read_report(const std::filesystem::path& path);

struct ComparisonRow {
  std::string label;
  std::string method;
  std::size_t k_configured = 0;
  std::size_t k_effective = 0;
  double kl_divergence = 0.0;
  double log_likelihood = 0.0;
  double runtime_seconds = 0.0;

  friend bool operator==(const ComparisonRow&, const ComparisonRow&) = default;
};

struct Comparison {
  Binning binning;
  std::vector<ComparisonRow> rows;

  friend bool operator==(const Comparison&, const Comparison&) = default;
};

/// Side-by-side table of at least two reports scored on the same binning.
/// Labels default to "<method> K=<k_configured>". Throws InputError when
/// fewer than two reports are given or their binning differs.
Comparison compare(std::span<const FitReport> reports, std::span<const std::string> labels = {});

/// Header `label,method,k_configured,k_effective,kl_divergence,log_likelihood,
/// runtime_s,bins,low,high,samples`; numbers in shortest round-trip form.
std::string to_csv(const Comparison& table);
/// Inverse of to_csv. Throws InputError on malformed text.
Comparison comparison_from_csv(std::string_view csv);
/// Column-aligned plain text for terminals.
std::string to_text(const Comparison& table);

}  // namespace gammamix
