#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "rmtlab/experiment_config.hpp"
#include "rmtlab/experiment_report.hpp"
#include "rmtlab/experiments.hpp"
#include "rmtlab/profile_io.hpp"
#include "rmtlab/resolvent.hpp"
#include "rmtlab/sc.hpp"
#include "rmtlab/stability.hpp"

namespace {

constexpr const char* kVersion = "1.0.0";

std::string iso_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(
      std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::optional<std::uint64_t> env_seed() {
  const char* raw = std::getenv("RMT_LAB_SEED");
  if (!raw) return std::nullopt;
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(raw, &end, 10);
  if (errno != 0 || end == raw || *end != '\0')
    throw rmtlab::ConfigError(
        "config error: RMT_LAB_SEED must be an unsigned integer, got \"" +
        std::string(raw) + "\"");
  return v;
}

void write_json_file(const std::filesystem::path& path,
                     const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw rmtlab::Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

int cmd_run(const std::string& config_arg, const std::string& out_arg,
            unsigned threads, bool validate_only) {
  namespace fs = std::filesystem;
  const fs::path config_path(config_arg);
  rmtlab::RunConfig run = rmtlab::load_run_config(config_path);
  rmtlab::resolve_seeds(run, env_seed());

  if (validate_only) {
    std::cout << "config ok: " << run.experiments.size()
              << " experiment(s), hash " << run.hash << '\n';
    return 0;
  }

  fs::path out_dir;
  if (!out_arg.empty())
    out_dir = out_arg;
  else if (!run.output.empty())
    out_dir = config_path.parent_path() / run.output;
  else
    out_dir = config_path.stem().string() + "_out";
  fs::create_directories(out_dir);

  nlohmann::json manifest;
  manifest["schema"] = 1;
  manifest["tool"] = std::string("rmt_lab ") + kVersion;
  manifest["config"] = config_path.string();
  manifest["config_hash"] = run.hash;
  manifest["master_seed"] = run.seed;
  manifest["threads"] = threads;
  manifest["started"] = iso_now();
  manifest["finished"] = nullptr;
  manifest["all_pass"] = nullptr;
  manifest["experiments"] = nlohmann::json::array();
  for (const auto& cfg : run.experiments)
    manifest["experiments"].push_back({{"name", cfg.name},
                                       {"experiment", to_string(cfg.kind)},
                                       {"seed", cfg.seed},
                                       {"status", nullptr}});
  write_json_file(out_dir / "manifest.json", manifest);

  bool all = true;
  for (std::size_t i = 0; i < run.experiments.size(); ++i) {
    const auto& cfg = run.experiments[i];
    std::string status;
    try {
      const rmtlab::ExperimentReport rep = rmtlab::run_experiment(cfg, threads);
      rmtlab::write_report(rep, out_dir);
      status = rep.all_pass() ? "pass" : "fail";
    } catch (const rmtlab::Error& err) {
      std::cerr << cfg.name << ": " << err.what() << '\n';
      status = "error";
    }
    all = all && status == "pass";
    manifest["experiments"][i]["status"] = status;
    std::cout << cfg.name << " [" << to_string(cfg.kind) << "] " << status
              << '\n';
  }

  manifest["finished"] = iso_now();
  manifest["all_pass"] = all;
  write_json_file(out_dir / "manifest.json", manifest);
  std::cout << (all ? "all experiments passed" : "some experiments failed")
            << "; reports in " << out_dir.string() << '\n';
  return all ? 0 : 1;
}

int cmd_list() {
  for (const auto& info : rmtlab::list_experiments())
    std::cout << info.tag << "\n  fields: " << info.required << "\n  "
              << info.description << "\n\n";
  return 0;
}

int cmd_sc_eval(double e, double eta, std::optional<double> m_param) {
  const rmtlab::ScReference ref =
      rmtlab::edge_params(rmtlab::SpectralPoint{e, eta}, m_param);
  nlohmann::json out;
  out["e"] = e;
  out["eta"] = eta;
  out["m_re"] = ref.m.real();
  out["m_im"] = ref.m.imag();
  out["rho"] = ref.rho;
  out["im_m"] = ref.im_m;
  out["kappa"] = ref.kappa;
  out["theta"] = ref.theta;
  if (m_param) out["pi"] = ref.pi_bound;
  std::cout << out.dump(2) << '\n';
  return 0;
}

int cmd_stability_map(const std::string& profile_path, const std::string& out,
                      double gamma_exponent, const rmtlab::GridSpec& grid) {
  const rmtlab::VarianceProfile profile = rmtlab::load_profile(profile_path);
  const auto [delta_minus, delta_plus] = rmtlab::spectral_gaps(profile);

  rmtlab::ReportTable table;
  table.name = "stability";
  table.columns = {"e",           "eta",   "gamma",       "gamma_tilde",
                   "eta_tilde_e", "eta_e", "delta_minus", "delta_plus"};
  for (const double e : grid.energies()) {
    const rmtlab::DomainThresholds th =
        rmtlab::eta_thresholds(profile, e, gamma_exponent);
    for (const double eta : grid.etas()) {
      const rmtlab::StabilityParams p =
          rmtlab::gamma_norms(profile, rmtlab::SpectralPoint{e, eta});
      table.rows.push_back({e, eta, p.gamma, p.gamma_tilde, th.eta_tilde,
                            th.eta, delta_minus, delta_plus});
    }
  }

  std::ofstream file(out);
  if (!file) throw rmtlab::Error("cannot write " + out);
  file << rmtlab::table_to_csv(table);
  std::cout << "wrote " << out << " (" << table.rows.size() << " rows)\n";
  return 0;
}

int cmd_resolvent_probe(rmtlab::Index n, std::uint64_t seed, double e,
                        double eta, bool hermitian, const std::string& law) {
  rmtlab::EnsembleSpec spec;
  spec.profile =
      std::make_shared<rmtlab::VarianceProfile>(rmtlab::mean_field_profile(n));
  spec.entry_law = rmtlab::detail::entry_law_from_string(law, "--law");
  spec.symmetry = hermitian ? rmtlab::Symmetry::complex_hermitian
                            : rmtlab::Symmetry::real_symmetric;
  spec.seed = seed;

  const rmtlab::SampleMatrix h = rmtlab::sample(spec, 0);
  const rmtlab::SpectralPoint z{e, eta};
  const rmtlab::ResolventBundle bundle = rmtlab::green(h, z);
  const rmtlab::ScReference ref =
      rmtlab::edge_params(z, spec.profile->m_param());
  const rmtlab::ControlParams ctrl = rmtlab::control(bundle, ref);

  double worst = 0;
  for (const rmtlab::Index i :
       {rmtlab::Index{0}, n / 4, n / 2, 3 * n / 4, n - 1})
    worst = std::max(
        worst, std::abs(rmtlab::schur_terms(h, bundle, ref, i).residual));

  nlohmann::json out;
  out["n"] = n;
  out["seed"] = seed;
  out["e"] = e;
  out["eta"] = eta;
  out["symmetry"] = to_string(spec.symmetry);
  out["entry_law"] = to_string(spec.entry_law);
  out["lambda"] = ctrl.lambda;
  out["lambda_o"] = ctrl.lambda_o;
  out["lambda_d"] = ctrl.lambda_d;
  out["theta"] = ctrl.theta_param;
  out["pi"] = ref.pi_bound;
  out["m_n_re"] = bundle.m_n.real();
  out["m_n_im"] = bundle.m_n.imag();
  out["worst_schur_residual"] = worst;
  std::cout << out.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"random matrix laboratory: variance profiles, semicircle "
               "references, Monte Carlo experiments"};
  app.set_version_flag("--version", std::string("rmt_lab ") + kVersion);
  app.require_subcommand(1);

  unsigned threads = std::max(1u, std::thread::hardware_concurrency());

  auto* run = app.add_subcommand("run", "run every experiment in a config");
  std::string config_arg, out_arg;
  bool validate_only = false;
  run->add_option("config", config_arg, "JSON run configuration")->required();
  run->add_option("--out", out_arg, "output directory (default: from config)");
  run->add_option("--threads", threads, "worker threads");
  run->add_flag("--validate", validate_only, "parse and check only");

  auto* list = app.add_subcommand("list", "describe available experiments");

  auto* sc = app.add_subcommand("sc", "semicircle reference quantities");
  sc->require_subcommand(1);
  auto* sc_eval = sc->add_subcommand("eval", "evaluate at one spectral point");
  double sc_e = 0, sc_eta = 0.1, sc_m = 0;
  sc_eval->add_option("--e", sc_e, "energy E")->required();
  sc_eval->add_option("--eta", sc_eta, "imaginary part eta")->required();
  auto* sc_m_opt = sc_eval->add_option("--m", sc_m, "M = 1/max s_ij, enables pi");

  auto* stability = app.add_subcommand("stability", "stability constants");
  stability->require_subcommand(1);
  auto* map = stability->add_subcommand("map", "Gamma maps over a z grid");
  std::string map_profile, map_out = "stability.csv";
  double map_gamma = 0.1;
  rmtlab::GridSpec map_grid;
  map_grid.e_min = -3.0;
  map_grid.e_max = 3.0;
  map_grid.n_e = 13;
  map_grid.eta_min = 1e-3;
  map_grid.eta_max = 1.0;
  map_grid.n_eta = 13;
  map->add_option("--profile", map_profile, "variance profile JSON")
      ->required();
  map->add_option("--out", map_out, "CSV output path");
  map->add_option("--gamma", map_gamma, "domain exponent in (0, 1/2)");
  map->add_option("--e-min", map_grid.e_min, "lowest energy");
  map->add_option("--e-max", map_grid.e_max, "highest energy");
  map->add_option("--n-e", map_grid.n_e, "energy count");
  map->add_option("--eta-min", map_grid.eta_min, "lowest eta");
  map->add_option("--eta-max", map_grid.eta_max, "highest eta");
  map->add_option("--n-eta", map_grid.n_eta, "eta count");

  auto* resolvent = app.add_subcommand("resolvent", "single-sample resolvent");
  resolvent->require_subcommand(1);
  auto* probe = resolvent->add_subcommand("probe", "control parameters of one draw");
  rmtlab::Index probe_n = 256;
  std::uint64_t probe_seed = 1;
  double probe_e = 0.0, probe_eta = 0.1;
  bool probe_herm = false;
  std::string probe_law = "gaussian";
  probe->add_option("--n", probe_n, "matrix size")->required();
  probe->add_option("--seed", probe_seed, "ensemble seed");
  probe->add_option("--e", probe_e, "energy E");
  probe->add_option("--eta", probe_eta, "imaginary part eta");
  probe->add_flag("--hermitian", probe_herm, "complex Hermitian symmetry");
  probe->add_option("--law", probe_law, "entry law");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run)
      return cmd_run(config_arg, out_arg, std::max(1u, threads),
                     validate_only);
    if (*list) return cmd_list();
    if (*sc_eval)
      return cmd_sc_eval(sc_e, sc_eta,
                         sc_m_opt->count() ? std::optional<double>(sc_m)
                                           : std::nullopt);
    if (*map) return cmd_stability_map(map_profile, map_out, map_gamma, map_grid);
    if (*probe)
      return cmd_resolvent_probe(probe_n, probe_seed, probe_e, probe_eta,
                                 probe_herm, probe_law);
  } catch (const rmtlab::ConfigError& err) {
    std::cerr << err.what() << '\n';
    return 2;
  } catch (const rmtlab::Error& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  }
  return 0;
}
