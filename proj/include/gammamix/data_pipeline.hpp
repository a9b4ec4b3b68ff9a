#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gammamix/mixture.hpp"

namespace gammamix {

/// One point of a vector-network-analyzer sweep.
struct S21Record {
  double frequency_hz = 0.0;
  std::complex<double> s21;
};

/// Received powers in milliwatts, all strictly positive.
struct PowerSamples {
  std::vector<double> values;
  std::string source;
  std::vector<std::string> warnings;
};

/// Normalized histogram; densities are per milliwatt.
struct EmpiricalPdf {
  std::vector<double> edges;      // B + 1 strictly increasing edges
  std::vector<double> densities;  // B non-negative densities

  [[nodiscard]] std::size_t bins() const noexcept { return densities.size(); }
  [[nodiscard]] double width(std::size_t b) const { return edges[b + 1] - edges[b]; }
  [[nodiscard]] double mass(std::size_t b) const { return densities[b] * width(b); }
  [[nodiscard]] double low() const { return edges.front(); }
  [[nodiscard]] double high() const { return edges.back(); }
};

inline constexpr std::size_t kDefaultBins = 100;
inline constexpr double kDefaultTxPowerMw = 1.0;

/// Reads a CSV with header `freq_hz,s21_real,s21_imag`. Throws InputError
/// naming the offending line for malformed, non-finite or missing fields.
std::vector<S21Record> load_s21_csv(const std::filesystem::path& path);

/// Reads a single-column CSV with header `power_mw`.
PowerSamples load_power_csv(const std::filesystem::path& path);

/// Dispatches on the header: S21 sweeps are converted with p_tx_mw,
/// power files are read as-is.
PowerSamples load_measurements(const std::filesystem::path& path,
                               double p_tx_mw = kDefaultTxPowerMw);

/// Concatenates several measurement files in the given order.
PowerSamples load_merged(std::span<const std::filesystem::path> paths,
                         double p_tx_mw = kDefaultTxPowerMw);

/// P_rx = |S21|^2 * P_tx. Zero-magnitude points are dropped with a warning.
PowerSamples s21_to_power(std::span<const S21Record> records, double p_tx_mw);

/// Equal-width bins over [min, max], right-most edge inclusive,
/// density = count / (N * width). Throws InputError when all samples are equal.
EmpiricalPdf build_empirical_pdf(std::span<const double> samples, std::size_t bins = kDefaultBins);

/// Synthetic measurements drawn from a known mixture.
struct SyntheticSet {
  PowerSamples samples;
  MixtureModel truth;
};
SyntheticSet synth_generate(const MixtureModel& model, std::size_t n, std::uint64_t seed);

void write_power_csv(const std::filesystem::path& path, std::span<const double> values);
void write_empirical_pdf_csv(const std::filesystem::path& path, const EmpiricalPdf& pdf);
/// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

}  // namespace gammamix
