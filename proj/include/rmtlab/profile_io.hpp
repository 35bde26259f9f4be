#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rmtlab/common.hpp"
#include "rmtlab/profile.hpp"

namespace rmtlab {

namespace detail {

inline void write_matrix_binary(const Matrix& s, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("profile io: cannot open " + path.string() + " for writing");
  // Row-major little-endian f64; Eigen stores column-major, so go row by row.
  std::vector<double> row(static_cast<std::size_t>(s.cols()));
  for (Index i = 0; i < s.rows(); ++i) {
    for (Index j = 0; j < s.cols(); ++j) row[static_cast<std::size_t>(j)] = s(i, j);
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(double)));
  }
  if (!out) throw Error("profile io: write failed for " + path.string());
}

inline Matrix read_matrix_binary(const std::filesystem::path& path, Index n) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("profile io: cannot open " + path.string());
  Matrix s(n, n);
  std::vector<double> row(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(double)));
    if (!in) throw Error("profile io: truncated matrix data in " + path.string());
    for (Index j = 0; j < n; ++j) s(i, j) = row[static_cast<std::size_t>(j)];
  }
  return s;
}

inline void write_matrix_csv(const Matrix& s, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("profile io: cannot open " + path.string() + " for writing");
  out.precision(17);
  for (Index i = 0; i < s.rows(); ++i) {
    for (Index j = 0; j < s.cols(); ++j) {
      if (j) out << ',';
      out << s(i, j);
    }
    out << '\n';
  }
}

inline Matrix read_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("profile io: cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(std::move(row));
  }
  const Index n = static_cast<Index>(rows.size());
  if (n == 0) throw Error("profile io: empty csv " + path.string());
  Matrix s(n, n);
  for (Index i = 0; i < n; ++i) {
    if (static_cast<Index>(rows[static_cast<std::size_t>(i)].size()) != n)
      throw Error("profile io: csv is not square in " + path.string());
    for (Index j = 0; j < n; ++j) s(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  return s;
}

inline nlohmann::json geometry_to_json(const Geometry& g) {
  nlohmann::json j;
  j["kind"] = to_string(g.kind);
  j["circulant"] = g.circulant;
  if (g.kind == ProfileKind::mixture) j["nu"] = g.nu;
  if (g.band) {
    j["band"] = {{"dim", g.band->dim},
                 {"side", g.band->side},
                 {"width", g.band->width},
                 {"shape", g.band->shape}};
  }
  return j;
}

inline Geometry geometry_from_json(const nlohmann::json& j) {
  Geometry g;
  const std::string kind = j.value("kind", "custom");
  if (kind == "mean_field") g.kind = ProfileKind::mean_field;
  else if (kind == "band") g.kind = ProfileKind::band;
  else if (kind == "mixture") g.kind = ProfileKind::mixture;
  else if (kind == "custom") g.kind = ProfileKind::custom;
  else throw Error("profile io: unknown geometry kind '" + kind + "'");
  g.circulant = j.value("circulant", false);
  g.nu = j.value("nu", 0.0);
  if (j.contains("band")) {
    const auto& b = j.at("band");
    g.band = BandSpec{b.value("dim", 1), b.at("side").get<Index>(),
                      b.at("width").get<Index>(), b.value("shape", "custom")};
  }
  return g;
}

}  // namespace detail

// Writes <path> (a .json header) plus a sibling payload file holding S.
inline void save_profile(const VarianceProfile& profile, const std::filesystem::path& json_path,
                         const std::string& format = "binary") {
  require(format == "binary" || format == "csv", "save_profile: format must be binary or csv");
  std::filesystem::path payload = json_path;
  payload.replace_extension(format == "binary" ? ".bin" : ".csv");

  nlohmann::json header;
  header["n"] = profile.n();
  header["m_param"] = profile.m_param();
  header["geometry"] = detail::geometry_to_json(profile.geometry());
  header["data"] = {{"format", format}, {"file", payload.filename().string()}};

  std::ofstream out(json_path);
  if (!out) throw Error("profile io: cannot open " + json_path.string() + " for writing");
  out << header.dump(2) << '\n';
  if (format == "binary")
    detail::write_matrix_binary(profile.s(), payload);
  else
    detail::write_matrix_csv(profile.s(), payload);
}

// Loads either a .json header written by save_profile or a raw CSV matrix.
// Raw CSV input is treated as an unnormalized variance matrix and passed
// through Sinkhorn normalization.
inline VarianceProfile load_profile(const std::filesystem::path& path) {
  if (path.extension() == ".csv") return custom_profile(detail::read_matrix_csv(path));

  std::ifstream in(path);
  if (!in) throw Error("profile io: cannot open " + path.string());
  nlohmann::json header;
  try {
    in >> header;
  } catch (const nlohmann::json::exception& e) {
    throw Error("profile io: bad header in " + path.string() + ": " + e.what());
  }
  Index n = 0;
  std::string format;
  std::filesystem::path payload;
  nlohmann::json geometry;
  try {
    n = header.at("n").get<Index>();
    const auto& data = header.at("data");
    format = data.at("format").get<std::string>();
    payload = path.parent_path() / data.at("file").get<std::string>();
    geometry = header.at("geometry");
  } catch (const nlohmann::json::exception& e) {
    throw Error("profile io: bad header in " + path.string() + ": " + e.what());
  }

  Matrix s;
  if (format == "binary") {
    s = detail::read_matrix_binary(payload, n);
  } else if (format == "csv") {
    s = detail::read_matrix_csv(payload);
    if (s.rows() != n) throw Error("profile io: csv dimension disagrees with header");
  } else {
    throw Error("profile io: unknown data format '" + format + "'");
  }
  try {
    return {std::move(s), detail::geometry_from_json(geometry)};
  } catch (const nlohmann::json::exception& e) {
    throw Error("profile io: bad header in " + path.string() + ": " + e.what());
  }
}

}  // namespace rmtlab
