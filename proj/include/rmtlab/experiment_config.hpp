#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rmtlab/common.hpp"
#include "rmtlab/profile.hpp"
#include "rmtlab/profile_io.hpp"
#include "rmtlab/rng.hpp"

namespace rmtlab {

enum class ExperimentKind {
  local_law,
  counting,
  rigidity,
  extremes,
  fluct_avg,
  universality,
  domination,
  lde,
};

inline std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::local_law: return "local_law";
    case ExperimentKind::counting: return "counting";
    case ExperimentKind::rigidity: return "rigidity";
    case ExperimentKind::extremes: return "extremes";
    case ExperimentKind::fluct_avg: return "fluct_avg";
    case ExperimentKind::universality: return "universality";
    case ExperimentKind::domination: return "domination";
    case ExperimentKind::lde: return "lde";
  }
  throw Error("to_string: unknown experiment kind");
}

inline const std::vector<ExperimentKind>& all_experiment_kinds() {
  static const std::vector<ExperimentKind> kinds = {
      ExperimentKind::local_law,  ExperimentKind::counting,
      ExperimentKind::rigidity,   ExperimentKind::extremes,
      ExperimentKind::fluct_avg,  ExperimentKind::universality,
      ExperimentKind::domination, ExperimentKind::lde,
  };
  return kinds;
}

inline ExperimentKind experiment_kind_from_string(const std::string& tag) {
  for (ExperimentKind k : all_experiment_kinds())
    if (to_string(k) == tag) return k;
  std::string valid;
  for (ExperimentKind k : all_experiment_kinds()) {
    if (!valid.empty()) valid += ", ";
    valid += to_string(k);
  }
  throw ConfigError("unknown experiment tag \"" + tag + "\" (valid tags: " +
                    valid + ")");
}

// Recipe for building a variance profile at a given dimension N.
struct ProfileSpec {
  std::string kind = "mean_field";  // mean_field | band | mixture | identity | custom
  int dim = 1;
  Index width = 0;
  std::string shape = "box";
  double nu = 0.0;        // mixture weight of the mean-field part
  std::string file;       // custom profiles are loaded from disk
};

struct GridSpec {
  double e_min = 0.0;
  double e_max = 0.0;
  int n_e = 1;
  double eta_min = 0.1;
  double eta_max = 0.1;
  int n_eta = 1;
  bool log_eta = true;

  std::vector<double> energies() const {
    std::vector<double> out(static_cast<std::size_t>(n_e));
    for (int i = 0; i < n_e; ++i)
      out[static_cast<std::size_t>(i)] =
          n_e == 1 ? e_min : e_min + (e_max - e_min) * i / double(n_e - 1);
    return out;
  }

  std::vector<double> etas() const {
    std::vector<double> out(static_cast<std::size_t>(n_eta));
    for (int i = 0; i < n_eta; ++i) {
      const double t = n_eta == 1 ? 0.0 : i / double(n_eta - 1);
      out[static_cast<std::size_t>(i)] =
          log_eta ? eta_min * std::pow(eta_max / eta_min, t)
                  : eta_min + (eta_max - eta_min) * t;
    }
    return out;
  }
};

struct ExperimentConfig {
  std::string name;
  ExperimentKind kind = ExperimentKind::local_law;
  ProfileSpec profile;
  EntryLaw entry_law = EntryLaw::gaussian;
  Symmetry symmetry = Symmetry::real_symmetric;
  double complex_second_moment = 0.0;
  std::vector<Index> n_values;
  int samples = 1;
  double gamma_exponent = 0.1;
  GridSpec grid;
  bool has_grid = false;
  std::optional<std::uint64_t> explicit_seed;
  std::uint64_t seed = 0;
  // domination probe parameters
  std::string x_name;
  std::string y_name;
  double epsilon = 0.0;
  double order_d = 1.0;
  // universality: "match" compares against the Gaussian reference,
  // "poisson" asserts separation from it
  std::string expect = "match";
  std::filesystem::path base_dir;
  nlohmann::json raw;
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::string output;
  std::vector<ExperimentConfig> experiments;
  nlohmann::json raw;
  std::string hash;
};

namespace detail {

inline std::string fnv1a_hex(const std::string& data) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

[[noreturn]] inline void config_fail(const std::string& path,
                                     const std::string& what) {
  throw ConfigError("config error at " + path + ": " + what);
}

inline void check_known_keys(const nlohmann::json& j, const std::string& path,
                             const std::vector<std::string>& known) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const auto& k : known)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok) config_fail(path + "." + it.key(), "unknown field");
  }
}

template <typename T>
T get_field(const nlohmann::json& j, const std::string& path,
            const std::string& key) {
  if (!j.contains(key)) config_fail(path + "." + key, "missing required field");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    config_fail(path + "." + key, e.what());
  }
}

template <typename T>
T get_field_or(const nlohmann::json& j, const std::string& path,
               const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    config_fail(path + "." + key, e.what());
  }
}

inline EntryLaw entry_law_from_string(const std::string& s,
                                      const std::string& path) {
  if (s == "gaussian") return EntryLaw::gaussian;
  if (s == "rademacher") return EntryLaw::rademacher;
  if (s == "uniform_pm_sqrt3") return EntryLaw::uniform_pm_sqrt3;
  config_fail(path, "unknown entry law \"" + s + "\"");
}

inline Symmetry symmetry_from_string(const std::string& s,
                                     const std::string& path) {
  if (s == "real_symmetric") return Symmetry::real_symmetric;
  if (s == "complex_hermitian") return Symmetry::complex_hermitian;
  config_fail(path, "unknown symmetry class \"" + s + "\"");
}

inline ProfileSpec parse_profile_spec(const nlohmann::json& j,
                                      const std::string& path) {
  if (!j.is_object()) config_fail(path, "profile must be an object");
  check_known_keys(j, path, {"kind", "dim", "width", "shape", "nu", "band", "file"});
  ProfileSpec spec;
  spec.kind = get_field_or<std::string>(j, path, "kind", "mean_field");
  if (spec.kind == "mean_field" || spec.kind == "identity") {
    check_known_keys(j, path, {"kind"});
    return spec;
  }
  if (spec.kind == "band") {
    spec.dim = get_field_or<int>(j, path, "dim", 1);
    spec.width = get_field<Index>(j, path, "width");
    spec.shape = get_field_or<std::string>(j, path, "shape", "box");
    if (spec.dim < 1 || spec.dim > 3) config_fail(path + ".dim", "must be 1, 2, or 3");
    if (spec.width < 1) config_fail(path + ".width", "must be >= 1");
    return spec;
  }
  if (spec.kind == "mixture") {
    spec.nu = get_field<double>(j, path, "nu");
    if (!(spec.nu >= 0.0 && spec.nu <= 1.0))
      config_fail(path + ".nu", "must lie in [0, 1]");
    if (!j.contains("band") || !j.at("band").is_object())
      config_fail(path + ".band", "missing band part of the mixture");
    const nlohmann::json& band = j.at("band");
    check_known_keys(band, path + ".band", {"dim", "width", "shape"});
    spec.dim = get_field_or<int>(band, path + ".band", "dim", 1);
    spec.width = get_field<Index>(band, path + ".band", "width");
    spec.shape = get_field_or<std::string>(band, path + ".band", "shape", "box");
    if (spec.dim < 1 || spec.dim > 3)
      config_fail(path + ".band.dim", "must be 1, 2, or 3");
    if (spec.width < 1) config_fail(path + ".band.width", "must be >= 1");
    return spec;
  }
  if (spec.kind == "custom") {
    spec.file = get_field<std::string>(j, path, "file");
    return spec;
  }
  config_fail(path + ".kind", "unknown profile kind \"" + spec.kind + "\"");
}

inline Index integer_root(Index n, int dim) {
  Index side = static_cast<Index>(std::llround(std::pow(double(n), 1.0 / dim)));
  for (Index c = std::max<Index>(1, side - 1); c <= side + 1; ++c) {
    Index p = 1;
    for (int k = 0; k < dim; ++k) p *= c;
    if (p == n) return c;
  }
  return -1;
}

inline GridSpec parse_grid_spec(const nlohmann::json& j, const std::string& path) {
  if (!j.is_object()) config_fail(path, "z_grid must be an object");
  check_known_keys(j, path,
                   {"e_min", "e_max", "n_e", "eta_min", "eta_max", "n_eta",
                    "eta_scale"});
  GridSpec g;
  g.e_min = get_field_or<double>(j, path, "e_min", 0.0);
  g.e_max = get_field_or<double>(j, path, "e_max", g.e_min);
  g.n_e = get_field_or<int>(j, path, "n_e", 1);
  g.eta_min = get_field<double>(j, path, "eta_min");
  g.eta_max = get_field_or<double>(j, path, "eta_max", g.eta_min);
  g.n_eta = get_field_or<int>(j, path, "n_eta", 1);
  const std::string scale =
      get_field_or<std::string>(j, path, "eta_scale", "log");
  if (scale == "log")
    g.log_eta = true;
  else if (scale == "linear")
    g.log_eta = false;
  else
    config_fail(path + ".eta_scale", "must be \"log\" or \"linear\"");
  if (g.n_e < 1) config_fail(path + ".n_e", "must be >= 1");
  if (g.n_eta < 1) config_fail(path + ".n_eta", "must be >= 1");
  if (!(g.eta_min > 0)) config_fail(path + ".eta_min", "must be positive");
  if (g.eta_max < g.eta_min)
    config_fail(path + ".eta_max", "must be >= eta_min");
  if (g.e_max < g.e_min) config_fail(path + ".e_max", "must be >= e_min");
  if (g.n_e > 1 && g.e_max == g.e_min)
    config_fail(path + ".n_e", "needs e_max > e_min");
  if (g.n_eta > 1 && g.eta_max == g.eta_min)
    config_fail(path + ".n_eta", "needs eta_max > eta_min");
  return g;
}

}  // namespace detail

inline std::shared_ptr<const VarianceProfile> make_profile(
    const ExperimentConfig& cfg, Index n) {
  const ProfileSpec& spec = cfg.profile;
  if (spec.kind == "mean_field")
    return std::make_shared<VarianceProfile>(mean_field_profile(n));
  if (spec.kind == "identity") {
    Geometry geom;
    geom.kind = ProfileKind::custom;
    return std::make_shared<VarianceProfile>(
        VarianceProfile(Matrix::Identity(n, n), geom));
  }
  if (spec.kind == "band" || spec.kind == "mixture") {
    const Index side = detail::integer_root(n, spec.dim);
    if (side < 0)
      throw ConfigError("config error at n_values: " + std::to_string(n) +
                        " is not a perfect power for band dim " +
                        std::to_string(spec.dim));
    VarianceProfile band = band_profile(spec.dim, side, spec.width,
                                        band_shape(spec.shape), spec.shape);
    if (spec.kind == "band")
      return std::make_shared<VarianceProfile>(std::move(band));
    return std::make_shared<VarianceProfile>(
        mixture_profile(band, mean_field_profile(n), spec.nu));
  }
  if (spec.kind == "custom") {
    std::filesystem::path p = spec.file;
    if (p.is_relative()) p = cfg.base_dir / p;
    auto loaded = std::make_shared<VarianceProfile>(load_profile(p));
    if (loaded->n() != n)
      throw ConfigError("config error at n_values: profile file has N = " +
                        std::to_string(loaded->n()) + ", config asks for N = " +
                        std::to_string(n));
    return loaded;
  }
  throw ConfigError("config error at ensemble.profile.kind: unknown kind \"" +
                    spec.kind + "\"");
}

inline EnsembleSpec make_ensemble(const ExperimentConfig& cfg, Index n) {
  EnsembleSpec spec;
  spec.profile = make_profile(cfg, n);
  spec.entry_law = cfg.entry_law;
  spec.symmetry = cfg.symmetry;
  spec.complex_second_moment = cfg.complex_second_moment;
  spec.seed = cfg.seed;
  return spec;
}

inline ExperimentConfig parse_experiment_config(
    const nlohmann::json& j, const std::string& path,
    const std::filesystem::path& base_dir) {
  using detail::config_fail;
  using detail::get_field;
  using detail::get_field_or;
  if (!j.is_object()) config_fail(path, "experiment entry must be an object");
  detail::check_known_keys(
      j, path,
      {"name", "experiment", "ensemble", "n_values", "samples",
       "gamma_exponent", "z_grid", "seed", "x_name", "y_name", "epsilon", "d",
       "expect"});

  ExperimentConfig cfg;
  cfg.base_dir = base_dir;
  cfg.raw = j;
  const std::string tag = get_field<std::string>(j, path, "experiment");
  try {
    cfg.kind = experiment_kind_from_string(tag);
  } catch (const ConfigError& e) {
    config_fail(path + ".experiment", e.what());
  }
  cfg.name = get_field_or<std::string>(j, path, "name", tag);

  const nlohmann::json ens =
      j.contains("ensemble") ? j.at("ensemble") : nlohmann::json::object();
  if (!ens.is_object()) config_fail(path + ".ensemble", "must be an object");
  detail::check_known_keys(
      ens, path + ".ensemble",
      {"profile", "entry_law", "symmetry", "complex_second_moment"});
  cfg.profile = detail::parse_profile_spec(
      ens.contains("profile") ? ens.at("profile") : nlohmann::json::object(),
      path + ".ensemble.profile");
  cfg.entry_law = detail::entry_law_from_string(
      get_field_or<std::string>(ens, path + ".ensemble", "entry_law",
                                "gaussian"),
      path + ".ensemble.entry_law");
  cfg.symmetry = detail::symmetry_from_string(
      get_field_or<std::string>(ens, path + ".ensemble", "symmetry",
                                "real_symmetric"),
      path + ".ensemble.symmetry");
  cfg.complex_second_moment = get_field_or<double>(
      ens, path + ".ensemble", "complex_second_moment", 0.0);
  if (!(cfg.complex_second_moment >= 0.0 && cfg.complex_second_moment <= 1.0))
    config_fail(path + ".ensemble.complex_second_moment", "must lie in [0, 1]");

  cfg.n_values = get_field<std::vector<Index>>(j, path, "n_values");
  if (cfg.n_values.empty()) config_fail(path + ".n_values", "must be nonempty");
  for (Index n : cfg.n_values)
    if (n < 1) config_fail(path + ".n_values", "entries must be >= 1");
  cfg.samples = get_field<int>(j, path, "samples");
  if (cfg.samples < 1) config_fail(path + ".samples", "must be >= 1");
  cfg.gamma_exponent = get_field_or<double>(j, path, "gamma_exponent", 0.1);
  if (!(cfg.gamma_exponent > 0.0 && cfg.gamma_exponent < 0.5))
    config_fail(path + ".gamma_exponent", "must lie in (0, 1/2)");
  if (j.contains("seed"))
    cfg.explicit_seed = get_field<std::uint64_t>(j, path, "seed");

  cfg.has_grid = j.contains("z_grid");
  if (cfg.has_grid)
    cfg.grid = detail::parse_grid_spec(j.at("z_grid"), path + ".z_grid");

  switch (cfg.kind) {
    case ExperimentKind::local_law:
      if (!cfg.has_grid) config_fail(path + ".z_grid", "missing required field");
      break;
    case ExperimentKind::fluct_avg:
      if (!cfg.has_grid) config_fail(path + ".z_grid", "missing required field");
      if (cfg.grid.n_e != 1)
        config_fail(path + ".z_grid.n_e",
                    "fluct_avg sweeps eta at a single energy");
      break;
    case ExperimentKind::universality:
      for (Index n : cfg.n_values)
        if (n < 64)
          config_fail(path + ".n_values",
                      "universality requires N >= 64 for stable gap statistics");
      cfg.expect = get_field_or<std::string>(j, path, "expect", "match");
      if (cfg.expect != "match" && cfg.expect != "poisson")
        config_fail(path + ".expect", "must be \"match\" or \"poisson\"");
      break;
    case ExperimentKind::domination: {
      cfg.x_name = get_field<std::string>(j, path, "x_name");
      static const std::vector<std::pair<std::string, std::string>> menu = {
          {"theta", "inv_m_eta"}, {"lambda", "pi"}, {"entry", "sqrt_s"}};
      std::string implied;
      for (const auto& [x, y] : menu)
        if (x == cfg.x_name) implied = y;
      if (implied.empty())
        config_fail(path + ".x_name",
                    "must be \"theta\", \"lambda\", or \"entry\"");
      cfg.y_name = get_field_or<std::string>(j, path, "y_name", implied);
      if (cfg.y_name != implied)
        config_fail(path + ".y_name", "statistic \"" + cfg.x_name +
                                          "\" is compared against \"" +
                                          implied + "\"");
      cfg.epsilon = get_field<double>(j, path, "epsilon");
      if (!(cfg.epsilon > 0)) config_fail(path + ".epsilon", "must be positive");
      cfg.order_d = get_field_or<double>(j, path, "d", 1.0);
      if (!(cfg.order_d > 0)) config_fail(path + ".d", "must be positive");
      if ((cfg.x_name == "theta" || cfg.x_name == "lambda") &&
          (!cfg.has_grid || cfg.grid.n_e != 1 || cfg.grid.n_eta != 1))
        config_fail(path + ".z_grid",
                    "domination of resolvent statistics needs a single z point");
      break;
    }
    default:
      break;
  }
  return cfg;
}

inline RunConfig parse_run_config(const nlohmann::json& j,
                                  const std::filesystem::path& base_dir) {
  using detail::config_fail;
  if (!j.is_object()) config_fail("$", "top level must be an object");
  detail::check_known_keys(j, "$", {"schema", "seed", "output", "experiments"});
  RunConfig run;
  run.raw = j;
  run.hash = detail::fnv1a_hex(j.dump());
  if (detail::get_field_or<int>(j, "$", "schema", 1) != 1)
    config_fail("$.schema", "this build understands schema version 1");
  run.seed = detail::get_field_or<std::uint64_t>(j, "$", "seed", 1);
  run.output = detail::get_field_or<std::string>(j, "$", "output", "");
  if (!j.contains("experiments") || !j.at("experiments").is_array() ||
      j.at("experiments").empty())
    config_fail("$.experiments", "must be a nonempty array");
  const auto& arr = j.at("experiments");
  for (std::size_t i = 0; i < arr.size(); ++i)
    run.experiments.push_back(parse_experiment_config(
        arr[i], "$.experiments[" + std::to_string(i) + "]", base_dir));

  std::vector<std::string> names;
  for (std::size_t i = 0; i < run.experiments.size(); ++i) {
    std::string base = run.experiments[i].name;
    std::string name = base;
    int suffix = 1;
    while (std::find(names.begin(), names.end(), name) != names.end())
      name = base + "_" + std::to_string(++suffix);
    names.push_back(name);
    run.experiments[i].name = name;
  }
  return run;
}

inline void resolve_seeds(RunConfig& run,
                          std::optional<std::uint64_t> master_override =
                              std::nullopt) {
  if (master_override) run.seed = *master_override;
  for (std::size_t i = 0; i < run.experiments.size(); ++i) {
    ExperimentConfig& e = run.experiments[i];
    e.seed = e.explicit_seed ? *e.explicit_seed
                             : derive_seed(run.seed, i + 1, 0x657870ull);
  }
}

inline RunConfig parse_run_config_text(const std::string& text,
                                       const std::filesystem::path& base_dir) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config error: ") + e.what());
  }
  RunConfig run = parse_run_config(j, base_dir);
  resolve_seeds(run);
  return run;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config error: cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config_text(buf.str(), path.parent_path());
}

struct ExperimentInfo {
  std::string tag;
  std::string required;
  std::string description;
};

inline std::vector<ExperimentInfo> list_experiments() {
  return {
      {"local_law",
       "ensemble, n_values, samples, z_grid, gamma_exponent",
       "sweeps the spectral domain and checks |m_N - m| and the entrywise "
       "resolvent error against their deterministic control parameters"},
      {"counting",
       "ensemble, n_values, samples",
       "compares the empirical eigenvalue counting function with the "
       "semicircle counting function uniformly in E"},
      {"rigidity",
       "ensemble, n_values, samples",
       "measures |lambda_alpha - gamma_alpha| against index-dependent bulk "
       "and edge bounds built from the profile constants"},
      {"extremes",
       "ensemble, n_values, samples",
       "records (||H|| - 2)_+ across N and fits its decay exponent"},
      {"fluct_avg",
       "ensemble, n_values, samples, z_grid",
       "contrasts averaged fluctuation terms [Q_k 1/G_kk] with the "
       "single-index size to exhibit the quadratic averaging gain"},
      {"universality",
       "ensemble, n_values (>= 64), samples, expect",
       "compares bulk gap-ratio statistics against a matching Gaussian "
       "reference ensemble, or checks separation for independent diagonals"},
      {"domination",
       "ensemble, n_values, samples, x_name, epsilon, d [, z_grid]",
       "estimates P(X > N^eps * Y) for a chosen statistic pair and checks "
       "the exceedance probabilities decay in N"},
      {"lde",
       "ensemble (entry_law), n_values, samples",
       "measures normalized linear, bilinear, and diagonal-free quadratic "
       "forms in independent variables against their l2 coefficient norms"},
  };
}

}  // namespace rmtlab
