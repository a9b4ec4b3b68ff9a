#include "gammamix/data_pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "gammamix/error.hpp"

namespace gammamix {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

[[noreturn]] void fail(const std::filesystem::path& path, std::size_t line, const std::string& why) {
  std::ostringstream msg;
  msg << path.string() << ":" << line << ": " << why;
  throw InputError(msg.str());
}

double parse_field(const std::string& text, const std::filesystem::path& path, std::size_t line,
                   const char* column) {
  double v = 0.0;
  const auto* begin = text.data();
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(begin, end, v);
  if (text.empty() || ec != std::errc() || ptr != end) {
    fail(path, line, std::string("column ") + column + " is not a number: \"" + text + "\"");
  }
  if (!std::isfinite(v)) {
    fail(path, line, std::string("column ") + column + " is not finite: \"" + text + "\"");
  }
  return v;
}

struct CsvFile {
  std::string header;
  std::vector<std::pair<std::size_t, std::string>> rows;  // (line number, text)
};

CsvFile read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  CsvFile file;
  std::string line;
  std::size_t number = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++number;
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (!have_header) {
      file.header = t;
      have_header = true;
    } else {
      file.rows.emplace_back(number, t);
    }
  }
  if (!have_header) throw InputError(path.string() + ": file is empty");
  return file;
}

constexpr const char* kS21Header = "freq_hz,s21_real,s21_imag";
constexpr const char* kPowerHeader = "power_mw";

std::string normalized_header(const std::string& header) {
  std::string out;
  for (const auto& f : split_csv(header)) {
    if (!out.empty()) out += ',';
    out += f;
  }
  return out;
}

}  // namespace

std::vector<S21Record> load_s21_csv(const std::filesystem::path& path) {
  const CsvFile file = read_csv(path);
  if (normalized_header(file.header) != kS21Header) {
    fail(path, 1, std::string("expected header \"") + kS21Header + "\"");
  }
  if (file.rows.empty()) throw InputError(path.string() + ": no data rows");
  std::vector<S21Record> records;
  records.reserve(file.rows.size());
  for (const auto& [line, text] : file.rows) {
    const auto fields = split_csv(text);
    if (fields.size() != 3) fail(path, line, "expected 3 fields");
    S21Record r;
    r.frequency_hz = parse_field(fields[0], path, line, "freq_hz");
    r.s21 = {parse_field(fields[1], path, line, "s21_real"),
             parse_field(fields[2], path, line, "s21_imag")};
    if (!(r.frequency_hz > 0.0)) fail(path, line, "frequency must be > 0");
    records.push_back(r);
  }
  return records;
}

PowerSamples load_power_csv(const std::filesystem::path& path) {
  const CsvFile file = read_csv(path);
  if (normalized_header(file.header) != kPowerHeader) {
    fail(path, 1, std::string("expected header \"") + kPowerHeader + "\"");
  }
  if (file.rows.empty()) throw InputError(path.string() + ": no data rows");
  PowerSamples out;
  out.source = path.string();
  out.values.reserve(file.rows.size());
  for (const auto& [line, text] : file.rows) {
    const auto fields = split_csv(text);
    if (fields.size() != 1) fail(path, line, "expected 1 field");
    const double v = parse_field(fields[0], path, line, "power_mw");
    if (!(v > 0.0)) fail(path, line, "power must be > 0");
    out.values.push_back(v);
  }
  return out;
}

PowerSamples load_measurements(const std::filesystem::path& path, double p_tx_mw) {
  const CsvFile file = read_csv(path);
  const std::string header = normalized_header(file.header);
  if (header == kS21Header) {
    const auto records = load_s21_csv(path);
    PowerSamples out = s21_to_power(records, p_tx_mw);
    out.source = path.string();
    return out;
  }
  if (header == kPowerHeader) return load_power_csv(path);
  fail(path, 1,
       std::string("unrecognized header; expected \"") + kS21Header + "\" or \"" + kPowerHeader +
           "\"");
}

PowerSamples load_merged(std::span<const std::filesystem::path> paths, double p_tx_mw) {
  if (paths.empty()) throw InputError("no input files");
  PowerSamples out;
  for (const auto& p : paths) {
    PowerSamples part = load_measurements(p, p_tx_mw);
    out.values.insert(out.values.end(), part.values.begin(), part.values.end());
    out.warnings.insert(out.warnings.end(), part.warnings.begin(), part.warnings.end());
    if (!out.source.empty()) out.source += "+";
    out.source += part.source;
  }
  return out;
}

PowerSamples s21_to_power(std::span<const S21Record> records, double p_tx_mw) {
  if (!std::isfinite(p_tx_mw) || !(p_tx_mw > 0.0)) {
    throw std::invalid_argument("transmit power must be finite and > 0");
  }
  PowerSamples out;
  out.values.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const double p = std::norm(records[i].s21) * p_tx_mw;
    if (!(p > 0.0)) {
      out.warnings.push_back("dropped zero-magnitude S21 sample at index " + std::to_string(i));
      continue;
    }
    out.values.push_back(p);
  }
  return out;
}

EmpiricalPdf build_empirical_pdf(std::span<const double> samples, std::size_t bins) {
  if (bins < 2) throw std::invalid_argument("empirical PDF needs at least 2 bins");
  if (samples.empty()) throw InputError("empirical PDF needs at least one sample");
  const auto [lo_it, hi_it] = std::minmax_element(samples.begin(), samples.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) throw InputError("empirical PDF: all samples are equal");

  EmpiricalPdf pdf;
  pdf.edges.resize(bins + 1);
  const double width = (hi - lo) / static_cast<double>(bins);
  for (std::size_t b = 0; b <= bins; ++b) pdf.edges[b] = lo + width * static_cast<double>(b);
  pdf.edges.back() = hi;

  std::vector<std::size_t> counts(bins, 0);
  for (double x : samples) {
    auto b = static_cast<std::size_t>((x - lo) / width);
    b = std::min(b, bins - 1);
    // Correct for rounding against the stored edges.
    while (b > 0 && x < pdf.edges[b]) --b;
    while (b + 1 < bins && x >= pdf.edges[b + 1]) ++b;
    ++counts[b];
  }
  const double n = static_cast<double>(samples.size());
  pdf.densities.resize(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    pdf.densities[b] = static_cast<double>(counts[b]) / (n * pdf.width(b));
  }
  return pdf;
}

SyntheticSet synth_generate(const MixtureModel& model, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("synthetic set needs n >= 1");
  SyntheticSet out{{sample(model, n, seed), "synthetic", {}}, model};
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) return std::to_string(v);
  return std::string(buf, ptr);
}

void write_power_csv(const std::filesystem::path& path, std::span<const double> values) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << kPowerHeader << "\n";
  for (double v : values) out << format_double(v) << "\n";
}

void write_empirical_pdf_csv(const std::filesystem::path& path, const EmpiricalPdf& pdf) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << "edge_low,edge_high,density\n";
  for (std::size_t b = 0; b < pdf.bins(); ++b) {
    out << format_double(pdf.edges[b]) << "," << format_double(pdf.edges[b + 1]) << ","
        << format_double(pdf.densities[b]) << "\n";
  }
}

}  // namespace gammamix
