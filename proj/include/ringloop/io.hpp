#pragma once

// Serialization: CSV traces and parametric datasets, JSON configuration
// parsing, JSON result records, the run manifest, and the FNV-1a digest that
// stamps it.  All writers are deterministic — fixed "%.17g" number formatting
// and sorted JSON keys — so byte-identical inputs give byte-identical files.

#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "ringloop/cavity.hpp"
#include "ringloop/core.hpp"
#include "ringloop/emulator.hpp"
#include "ringloop/errors.hpp"
#include "ringloop/estimation.hpp"
#include "ringloop/loop.hpp"
#include "ringloop/synthesis.hpp"

namespace ringloop {

using Json = nlohmann::json;

// Shortest round-trippable decimal form; infinities print as inf/-inf.
inline std::string format_double(double value) {
  char buffer[40];
  std::snprintf(buffer, sizeof buffer, "%.17g", value);
  return buffer;
}

// JSON has no literal for infinity, so infinite results serialize as the
// strings "inf" / "-inf" rather than null.
inline Json json_number(double value) {
  if (std::isinf(value)) return Json(value > 0.0 ? "inf" : "-inf");
  return Json(value);
}

// --- digests -----------------------------------------------------------

// 64-bit FNV-1a; pass the previous hash back in to chain several buffers.
inline std::uint64_t fnv1a64(std::string_view bytes,
                             std::uint64_t hash = 14695981039346656037ull) {
  for (unsigned char c : bytes) {
    hash ^= static_cast<std::uint64_t>(c);
    hash *= 1099511628211ull;
  }
  return hash;
}

inline std::string digest_hex(std::uint64_t hash) {
  char buffer[17];
  std::snprintf(buffer, sizeof buffer, "%016llx",
                static_cast<unsigned long long>(hash));
  return buffer;
}

// --- files -------------------------------------------------------------

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return std::move(buffer).str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot open file for writing: " + path);
  out << content;
  if (!out) throw ValidationError("failed while writing file: " + path);
}

// --- CSV ---------------------------------------------------------------

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace detail

inline std::string to_csv(const std::vector<std::string>& header,
                          const std::vector<std::vector<double>>& rows) {
  std::ostringstream out;
  for (std::size_t i = 0; i < header.size(); ++i)
    out << header[i] << (i + 1 < header.size() ? "," : "");
  out << "\n";
  for (const std::vector<double>& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i)
      out << format_double(row[i]) << (i + 1 < row.size() ? "," : "");
    out << "\n";
  }
  return std::move(out).str();
}

inline void write_csv(const std::string& path, const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows) {
  write_file(path, to_csv(header, rows));
}

// Parses a numeric CSV with a single header line.  Tolerates CRLF endings
// and blank trailing lines; anything non-numeric or ragged is an error.
inline CsvTable read_csv(const std::string& path) {
  const std::string content = read_file(path);
  CsvTable table;
  std::istringstream in(content);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (table.header.empty()) {
      table.header = detail::split_csv_line(line);
      continue;
    }
    const std::vector<std::string> cells = detail::split_csv_line(line);
    if (cells.size() != table.header.size())
      throw ValidationError("CSV row width does not match header in " + path);
    std::vector<double> row;
    row.reserve(cells.size());
    for (const std::string& cell : cells) {
      try {
        std::size_t used = 0;
        const double value = std::stod(cell, &used);
        while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used])))
          ++used;
        if (used != cell.size()) throw std::invalid_argument(cell);
        row.push_back(value);
      } catch (const std::exception&) {
        throw ValidationError("non-numeric CSV cell '" + cell + "' in " + path);
      }
    }
    table.rows.push_back(std::move(row));
  }
  if (table.header.empty())
    throw ValidationError("CSV file is empty: " + path);
  return table;
}

inline void write_trace_csv(const std::string& path, const FrequencyTrace& trace) {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  rows.reserve(trace.size());
  switch (trace.kind()) {
    case TraceKind::complex_tf:
      header = {"detuning_mhz", "re", "im"};
      for (std::size_t i = 0; i < trace.size(); ++i)
        rows.push_back({trace.grid()[i], trace.values()[i].real(),
                        trace.values()[i].imag()});
      break;
    case TraceKind::power_ratio:
      header = {"detuning_mhz", "power_ratio"};
      for (std::size_t i = 0; i < trace.size(); ++i)
        rows.push_back({trace.grid()[i], trace.real_value(i)});
      break;
    case TraceKind::power:
      header = {"detuning_mhz", "power"};
      for (std::size_t i = 0; i < trace.size(); ++i)
        rows.push_back({trace.grid()[i], trace.real_value(i)});
      break;
  }
  write_csv(path, header, rows);
}

inline constexpr const char* parametric_csv_header = "eta_K,ratio_max,ratio_min";

inline void write_parametric_csv(const std::string& path,
                                 const std::vector<ParametricPoint>& points) {
  std::vector<std::vector<double>> rows;
  rows.reserve(points.size());
  for (const ParametricPoint& p : points)
    rows.push_back({p.eta_k, p.ratio_max, p.ratio_min});
  write_csv(path, {"eta_K", "ratio_max", "ratio_min"}, rows);
}

inline std::vector<ParametricPoint> read_parametric_csv(const std::string& path) {
  const CsvTable table = read_csv(path);
  if (table.header != std::vector<std::string>{"eta_K", "ratio_max", "ratio_min"})
    throw ValidationError("parametric CSV needs header '" +
                          std::string(parametric_csv_header) + "' in " + path);
  if (table.rows.empty())
    throw ValidationError("parametric CSV has no data rows: " + path);
  std::vector<ParametricPoint> points;
  points.reserve(table.rows.size());
  for (const std::vector<double>& row : table.rows)
    points.push_back({row[0], row[1], row[2]});
  return points;
}

// --- JSON configuration ------------------------------------------------

// Plant from either explicit rates {gamma_p, k1, k4} or a "geometry" object
// {t_sq: [t1^2, t2^2, t3^2, t4^2], l_sq, length_m}.
inline PlantModel plant_from_json(const Json& j) {
  if (j.contains("geometry")) {
    const Json& g = j.at("geometry");
    const Json& t = g.at("t_sq");
    if (!t.is_array() || t.size() != 4)
      throw ValidationError("plant geometry t_sq must be an array of 4 values");
    const std::array<double, 4> t_sq = {t.at(0).get<double>(), t.at(1).get<double>(),
                                        t.at(2).get<double>(), t.at(3).get<double>()};
    const RingCavityGeometry geometry(t_sq, g.value("l_sq", 0.0),
                                      g.at("length_m").get<double>());
    return PlantModel::from_geometry(geometry);
  }
  return PlantModel(j.at("gamma_p").get<double>(), j.at("k1").get<double>(),
                    j.at("k4").get<double>());
}

inline CompensatorModel compensator_from_json(const Json& j, const PlantModel& plant) {
  return CompensatorModel(j.at("eta_K").get<double>(), j.at("eta_gamma").get<double>(),
                          plant);
}

inline LoopEnvironment environment_from_json(const Json& j) {
  return LoopEnvironment(j.at("mu").get<double>(), j.value("phi", 0.0));
}

inline EmulationConfig emulation_config_from_json(const Json& j) {
  EmulationConfig cfg;
  cfg.noise_floor = j.value("noise_floor", 0.0);
  cfg.sideband_offset = j.value("sideband_offset", 0.0);
  cfg.sideband_depth = j.value("sideband_depth", 0.0);
  cfg.detector_noise_rel = j.value("detector_noise_rel", 0.0);
  cfg.detector_noise_seed = j.value("seed", std::uint64_t{0});
  cfg.sample_count = j.value("sample_count", std::size_t{1001});
  cfg.grid_min = j.value("grid_min", cfg.grid_min);
  cfg.grid_max = j.value("grid_max", cfg.grid_max);
  validate(cfg);
  return cfg;
}

inline FitBounds fit_bounds_from_json(const Json& j) {
  const auto interval = [&](const char* name) {
    const Json& b = j.at(name);
    if (!b.is_array() || b.size() != 2)
      throw ValidationError(std::string("fit bounds for ") + name +
                            " must be a [lo, hi] pair");
    return Interval{b.at(0).get<double>(), b.at(1).get<double>()};
  };
  FitBounds bounds;
  bounds.eta_gamma = interval("eta_gamma");
  bounds.mu = interval("mu");
  bounds.k1 = interval("k1");
  bounds.k4 = interval("k4");
  return bounds;
}

// --- JSON results ------------------------------------------------------

inline Json to_json(const SynthesisResult& result) {
  return Json{{"eta_K_opt", json_number(result.eta_k_opt)},
              {"phi_opt", json_number(result.phi_opt)},
              {"ratio_at_zero", json_number(result.ratio_at_zero)},
              {"rejection_db", json_number(result.rejection_db)},
              {"band_metric", json_number(result.band_metric)}};
}

inline Json to_json(const FitResult& fit, double gamma_p, bool equal_couplers) {
  Json covariance = Json::array();
  for (double sigma : fit.covariance_proxy) covariance.push_back(json_number(sigma));
  return Json{{"eta_gamma", json_number(fit.eta_gamma)},
              {"mu", json_number(fit.mu)},
              {"k1", json_number(fit.k1)},
              {"k4", json_number(fit.k4)},
              {"gamma_p", json_number(gamma_p)},
              {"residual", json_number(fit.residual)},
              {"covariance_proxy", covariance},
              {"rank_deficient", fit.rank_deficient},
              {"equal_couplers", equal_couplers},
              {"note", fit.note}};
}

inline Json to_json(const ConsistencyReport& report) {
  Json checks = Json::array();
  for (const ConsistencyCheck& c : report.checks)
    checks.push_back(Json{{"name", c.name},
                          {"value", json_number(c.value)},
                          {"reference", json_number(c.reference)},
                          {"tolerance", json_number(c.tolerance)},
                          {"pass", c.pass}});
  return Json{{"checks", checks}, {"all_pass", report.all_pass()}};
}

// --- run manifest ------------------------------------------------------

// Written next to every command's outputs: which subcommand ran, a digest of
// everything that influenced it, the files it produced, and the resolved
// configuration for reproducibility.
struct RunManifest {
  std::string command;
  std::string config_digest;
  std::vector<std::string> outputs;
  std::string tool_version = version;
  Json config = Json::object();
};

inline Json to_json(const RunManifest& manifest) {
  return Json{{"command", manifest.command},
              {"config_digest", manifest.config_digest},
              {"outputs", manifest.outputs},
              {"version", manifest.tool_version},
              {"config", manifest.config}};
}

inline std::string to_pretty_json(const Json& j) { return j.dump(2) + "\n"; }

}  // namespace ringloop
