#include "gammamix/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "gammamix/error.hpp"

namespace gammamix {

namespace {

using nlohmann::json;

const json& field(const json& j, const char* key) {
  if (!j.contains(key)) throw InputError(std::string("report is missing \"") + key + "\"");
  return j.at(key);
}

double number_field(const json& j, const char* key) {
  const json& v = field(j, key);
  if (!v.is_number()) throw InputError(std::string("report field \"") + key + "\" must be a number");
  return v.get<double>();
}

std::uint64_t count_field(const json& j, const char* key) {
  const json& v = field(j, key);
  if (!v.is_number_unsigned()) {
    throw InputError(std::string("report field \"") + key + "\" must be a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

std::string string_field(const json& j, const char* key) {
  const json& v = field(j, key);
  if (!v.is_string()) throw InputError(std::string("report field \"") + key + "\" must be a string");
  return v.get<std::string>();
}

json to_json(const Binning& b) {
  return {{"bins", b.bins}, {"low", b.low}, {"high", b.high}, {"samples", b.samples}};
}

Binning binning_from_json(const json& j) {
  if (!j.is_object()) throw InputError("report field \"binning\" must be an object");
  Binning b;
  b.bins = count_field(j, "bins");
  b.low = number_field(j, "low");
  b.high = number_field(j, "high");
  b.samples = count_field(j, "samples");
  return b;
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

// Splits one CSV record, honouring double-quoted fields.
std::vector<std::string> csv_fields(std::string_view line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else {
      out.back() += c;
    }
  }
  if (quoted) throw InputError("comparison CSV: unterminated quote");
  return out;
}

template <typename T>
T parse_number(const std::string& s, std::size_t line) {
  T v{};
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw InputError("comparison CSV line " + std::to_string(line) + ": bad number \"" + s + "\"");
  }
  return v;
}

constexpr const char* kCsvHeader =
    "label,method,k_configured,k_effective,kl_divergence,log_likelihood,runtime_s,bins,low,high,"
    "samples";

}  // namespace

Binning Binning::of(const EmpiricalPdf& pdf, std::size_t samples) {
  return {pdf.bins(), pdf.low(), pdf.high(), samples};
}

nlohmann::json to_json(const FitReport& r) {
  json warnings = json::array();
  for (const auto& w : r.warnings) warnings.push_back(w);
  return {{"schema", kReportSchema},
          {"method", r.method},
          {"k_configured", r.k_configured},
          {"k_effective", r.k_effective},
          {"components", to_json(r.model)["components"]},
          {"kl_divergence", r.kl_divergence},
          {"log_likelihood", r.log_likelihood},
          {"runtime_s", r.runtime_seconds},
          {"seed", r.seed},
          {"binning", to_json(r.binning)},
          {"data_source", r.data_source},
          {"details", r.details},
          {"warnings", warnings}};
}

FitReport report_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InputError("report must be a JSON object");
  const json& schema = field(j, "schema");
  if (!schema.is_number_integer() || schema.get<long long>() != kReportSchema) {
    throw InputError("unsupported report schema " + schema.dump() + ", expected " +
                     std::to_string(kReportSchema));
  }
  static const std::set<std::string> known = {
      "schema",  "method", "k_configured", "k_effective", "components", "kl_divergence",
      "log_likelihood", "runtime_s", "seed", "binning", "data_source", "details", "warnings"};
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw InputError("unknown report field \"" + key + "\"");
  }

  FitReport r;
  r.method = string_field(j, "method");
  if (r.method != "EM" && r.method != "DPGMM") {
    throw InputError("report method must be EM or DPGMM, got " + r.method);
  }
  r.k_configured = count_field(j, "k_configured");
  r.k_effective = count_field(j, "k_effective");
  try {
    r.model = mixture_from_json(json{{"components", field(j, "components")}});
  } catch (const std::invalid_argument& e) {
    throw InputError(std::string("report components: ") + e.what());
  }
  r.kl_divergence = number_field(j, "kl_divergence");
  if (!(r.kl_divergence >= 0.0)) throw InputError("report kl_divergence must be >= 0");
  r.log_likelihood = number_field(j, "log_likelihood");
  r.runtime_seconds = number_field(j, "runtime_s");
  r.seed = count_field(j, "seed");
  r.binning = binning_from_json(field(j, "binning"));
  r.data_source = string_field(j, "data_source");
  r.details = field(j, "details");
  if (!r.details.is_object()) throw InputError("report field \"details\" must be an object");
  const json& warnings = field(j, "warnings");
  if (!warnings.is_array()) throw InputError("report field \"warnings\" must be an array");
  for (const auto& w : warnings) {
    if (!w.is_string()) throw InputError("report warnings must be strings");
    r.warnings.push_back(w.get<std::string>());
  }
  return r;
}

void write_report(const std::filesystem::path& path, const FitReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << to_json(report).dump(2) << '\n';
  if (!out) throw InputError("failed writing " + path.string());
}

FitReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  try {
    return report_from_json(j);
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

Comparison compare(std::span<const FitReport> reports, std::span<const std::string> labels) {
  if (reports.size() < 2) throw InputError("comparison needs at least two reports");
  if (!labels.empty() && labels.size() != reports.size()) {
    throw InputError("comparison needs one label per report");
  }
  Comparison table;
  table.binning = reports.front().binning;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    if (!(r.binning == table.binning)) {
      throw InputError("reports were scored on different binnings; compare needs the same data");
    }
    ComparisonRow row;
    row.label = labels.empty() ? r.method + " K=" + std::to_string(r.k_configured) : labels[i];
    row.method = r.method;
    row.k_configured = r.k_configured;
    row.k_effective = r.k_effective;
    row.kl_divergence = r.kl_divergence;
    row.log_likelihood = r.log_likelihood;
    row.runtime_seconds = r.runtime_seconds;
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string to_csv(const Comparison& table) {
  std::ostringstream out;
  out << kCsvHeader << '\n';
  const auto& b = table.binning;
  for (const auto& r : table.rows) {
    out << csv_quote(r.label) << ',' << csv_quote(r.method) << ',' << r.k_configured << ','
        << r.k_effective << ',' << format_double(r.kl_divergence) << ','
        << format_double(r.log_likelihood) << ',' << format_double(r.runtime_seconds) << ','
        << b.bins << ',' << format_double(b.low) << ',' << format_double(b.high) << ','
        << b.samples << '\n';
  }
  return out.str();
}

Comparison comparison_from_csv(std::string_view csv) {
  Comparison table;
  std::size_t line_no = 0;
  bool first_row = true;
  while (!csv.empty()) {
    const auto nl = csv.find('\n');
    std::string_view line = csv.substr(0, nl);
    csv = nl == std::string_view::npos ? std::string_view{} : csv.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line_no == 1) {
      if (line != kCsvHeader) throw InputError("comparison CSV: unexpected header");
      continue;
    }
    if (line.empty()) continue;
    const auto f = csv_fields(line);
    if (f.size() != 11) {
      throw InputError("comparison CSV line " + std::to_string(line_no) + ": expected 11 fields");
    }
    ComparisonRow row;
    row.label = f[0];
    row.method = f[1];
    row.k_configured = parse_number<std::size_t>(f[2], line_no);
    row.k_effective = parse_number<std::size_t>(f[3], line_no);
    row.kl_divergence = parse_number<double>(f[4], line_no);
    row.log_likelihood = parse_number<double>(f[5], line_no);
    row.runtime_seconds = parse_number<double>(f[6], line_no);
    const Binning b{parse_number<std::size_t>(f[7], line_no), parse_number<double>(f[8], line_no),
                    parse_number<double>(f[9], line_no), parse_number<std::size_t>(f[10], line_no)};
    if (first_row) {
      table.binning = b;
      first_row = false;
    } else if (!(b == table.binning)) {
      throw InputError("comparison CSV line " + std::to_string(line_no) + ": binning differs");
    }
    table.rows.push_back(std::move(row));
  }
  if (line_no == 0) throw InputError("comparison CSV is empty");
  return table;
}

std::string to_text(const Comparison& table) {
  const std::vector<std::string> header = {"label", "method", "K", "K_eff", "KL (nats)",
                                           "log-lik", "runtime (s)"};
  std::vector<std::vector<std::string>> cells;
  for (const auto& r : table.rows) {
    std::ostringstream kl, ll, rt;
    kl << std::fixed << std::setprecision(5) << r.kl_divergence;
    ll << std::fixed << std::setprecision(2) << r.log_likelihood;
    rt << std::fixed << std::setprecision(3) << r.runtime_seconds;
    cells.push_back({r.label, r.method, std::to_string(r.k_configured),
                     std::to_string(r.k_effective), kl.str(), ll.str(), rt.str()});
  }
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& row : cells) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream out;
  auto emit = [&](const std::vector<std::string>& row) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      // Text columns flush left, numeric columns flush right.
      if (c < 2) {
        out << std::left << std::setw(static_cast<int>(width[c])) << row[c];
      } else {
        out << std::right << std::setw(static_cast<int>(width[c])) << row[c];
      }
      out << (c + 1 < row.size() ? "  " : "\n");
    }
  };
  emit(header);
  std::size_t total = 2 * (header.size() - 1);
  for (auto w : width) total += w;
  out << std::string(total, '-') << '\n';
  for (const auto& row : cells) emit(row);
  out << "binning: " << table.binning.bins << " bins over [" << format_double(table.binning.low)
      << ", " << format_double(table.binning.high) << "] mW, " << table.binning.samples
      << " samples\n";
  return out.str();
}

}  // namespace gammamix
