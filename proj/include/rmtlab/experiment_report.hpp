#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rmtlab/common.hpp"

namespace rmtlab {

struct FittedExponent {
  std::string name;
  double value = 0.0;
  double std_error = 0.0;
};

// Every flag carries the observed statistic, the threshold it was held
// against, and the signed distance to that threshold (positive = pass).
struct PassFlag {
  std::string name;
  bool pass = false;
  double observed = 0.0;
  double threshold = 0.0;
  double margin = 0.0;
  std::string detail;
};

struct ReportTable {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

struct ExperimentReport {
  std::string experiment;
  std::string name;
  nlohmann::json statistics = nlohmann::json::object();
  std::vector<FittedExponent> exponents;
  std::vector<PassFlag> flags;
  nlohmann::json provenance = nlohmann::json::object();
  std::vector<ReportTable> tables;

  bool all_pass() const {
    for (const auto& f : flags)
      if (!f.pass) return false;
    return true;
  }
};

inline PassFlag upper_bound_flag(const std::string& name, double observed,
                                 double threshold,
                                 const std::string& detail = "") {
  PassFlag f;
  f.name = name;
  f.observed = observed;
  f.threshold = threshold;
  f.margin = threshold - observed;
  f.pass = observed <= threshold;
  f.detail = detail;
  return f;
}

inline PassFlag lower_bound_flag(const std::string& name, double observed,
                                 double threshold,
                                 const std::string& detail = "") {
  PassFlag f;
  f.name = name;
  f.observed = observed;
  f.threshold = threshold;
  f.margin = observed - threshold;
  f.pass = observed >= threshold;
  f.detail = detail;
  return f;
}

inline PassFlag interval_flag(const std::string& name, double observed,
                              double lo, double hi,
                              const std::string& detail = "") {
  PassFlag f;
  f.name = name;
  f.observed = observed;
  f.threshold = observed <= 0.5 * (lo + hi) ? lo : hi;
  f.margin = std::min(observed - lo, hi - observed);
  f.pass = f.margin >= 0;
  f.detail = detail;
  return f;
}

inline nlohmann::json report_to_json(const ExperimentReport& r) {
  nlohmann::json j;
  j["experiment"] = r.experiment;
  j["name"] = r.name;
  j["statistics"] = r.statistics;
  nlohmann::json exps = nlohmann::json::array();
  for (const auto& e : r.exponents)
    exps.push_back({{"name", e.name}, {"value", e.value},
                    {"stderr", e.std_error}});
  j["fitted_exponents"] = exps;
  nlohmann::json flags = nlohmann::json::array();
  for (const auto& f : r.flags) {
    nlohmann::json fj = {{"name", f.name},
                         {"pass", f.pass},
                         {"observed", f.observed},
                         {"threshold", f.threshold},
                         {"margin", f.margin}};
    if (!f.detail.empty()) fj["detail"] = f.detail;
    flags.push_back(fj);
  }
  j["pass_flags"] = flags;
  j["all_pass"] = r.all_pass();
  j["provenance"] = r.provenance;
  nlohmann::json tables = nlohmann::json::array();
  for (const auto& t : r.tables)
    tables.push_back({{"name", t.name},
                      {"columns", t.columns},
                      {"rows", t.rows.size()}});
  j["tables"] = tables;
  return j;
}

namespace detail {

inline std::string format_cell(double x) {
  std::ostringstream out;
  out << std::setprecision(17) << x;
  return out.str();
}

}  // namespace detail

inline std::string table_to_csv(const ReportTable& t) {
  std::ostringstream out;
  for (std::size_t c = 0; c < t.columns.size(); ++c)
    out << (c ? "," : "") << t.columns[c];
  out << "\n";
  for (const auto& row : t.rows) {
    if (row.size() != t.columns.size())
      throw Error("table_to_csv: row width mismatch in table " + t.name);
    for (std::size_t c = 0; c < row.size(); ++c)
      out << (c ? "," : "") << detail::format_cell(row[c]);
    out << "\n";
  }
  return out.str();
}

inline void write_report(const ExperimentReport& r,
                         const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / (r.name + ".json"));
    if (!out) throw Error("write_report: cannot write to " + dir.string());
    out << report_to_json(r).dump(2) << "\n";
  }
  for (const auto& t : r.tables) {
    std::ofstream out(dir / (r.name + "_" + t.name + ".csv"));
    if (!out) throw Error("write_report: cannot write table " + t.name);
    out << table_to_csv(t);
  }
}

}  // namespace rmtlab
