#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rmtlab/experiment_config.hpp"
#include "rmtlab/experiment_report.hpp"
#include "rmtlab/profile_io.hpp"

using namespace rmtlab;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

nlohmann::json base_config() {
  return nlohmann::json::parse(R"({
    "seed": 7,
    "experiments": [
      {
        "experiment": "counting",
        "ensemble": {"profile": {"kind": "mean_field"}},
        "n_values": [32, 64],
        "samples": 3
      }
    ]
  })");
}

RunConfig parse(const nlohmann::json& j) {
  return parse_run_config_text(j.dump(), ".");
}

}  // namespace

TEST_CASE("pass flag constructors record signed margins") {
  const PassFlag up = upper_bound_flag("u", 3.0, 10.0);
  CHECK(up.pass);
  CHECK(up.margin == 7.0);
  CHECK(up.observed == 3.0);
  CHECK(up.threshold == 10.0);
  const PassFlag up_bad = upper_bound_flag("u", 11.0, 10.0);
  CHECK_FALSE(up_bad.pass);
  CHECK(up_bad.margin == -1.0);

  const PassFlag lo = lower_bound_flag("l", 0.97, 0.95);
  CHECK(lo.pass);
  CHECK(lo.margin == Catch::Approx(0.02));
  CHECK_FALSE(lower_bound_flag("l", 0.90, 0.95).pass);

  const PassFlag in = interval_flag("i", -0.7, -0.8, -0.55);
  CHECK(in.pass);
  CHECK(in.margin == Catch::Approx(0.1));
  const PassFlag out = interval_flag("i", -0.9, -0.8, -0.55);
  CHECK_FALSE(out.pass);
  CHECK(out.margin == Catch::Approx(-0.1));
  CHECK(out.threshold == -0.8);
}

TEST_CASE("report json carries a margin for every pass flag") {
  ExperimentReport rep;
  rep.experiment = "counting";
  rep.name = "demo";
  rep.statistics["k"] = 1.5;
  rep.exponents.push_back({"slope", -1.02, 0.03});
  rep.flags.push_back(upper_bound_flag("a", 1.0, 2.0, "detail text"));
  rep.flags.push_back(lower_bound_flag("b", 0.3, 0.5));
  rep.provenance["config_hash"] = "abc";
  rep.provenance["seed"] = 7;
  ReportTable t;
  t.name = "grid";
  t.columns = {"x", "y"};
  t.rows = {{1.0, 2.0}, {3.0, 4.0}};
  rep.tables.push_back(t);

  const nlohmann::json j = report_to_json(rep);
  for (const char* key :
       {"experiment", "name", "statistics", "fitted_exponents", "pass_flags",
        "all_pass", "provenance", "tables"})
    CHECK(j.contains(key));
  CHECK(j["all_pass"] == false);
  CHECK(j["fitted_exponents"][0]["name"] == "slope");
  CHECK(j["fitted_exponents"][0].contains("stderr"));
  REQUIRE(j["pass_flags"].size() == 2);
  for (const auto& f : j["pass_flags"]) {
    CHECK(f.contains("name"));
    CHECK(f["pass"].is_boolean());
    REQUIRE(f.contains("margin"));
    REQUIRE(f["margin"].is_number());
    CHECK(std::isfinite(f["margin"].get<double>()));
    CHECK(f.contains("observed"));
    CHECK(f.contains("threshold"));
  }
  CHECK(j["pass_flags"][0]["detail"] == "detail text");
  CHECK(j["tables"][0]["name"] == "grid");
  CHECK(j["tables"][0]["rows"] == 2);

  rep.flags[1] = lower_bound_flag("b", 0.7, 0.5);
  CHECK(rep.all_pass());
  CHECK(report_to_json(rep)["all_pass"] == true);
}

TEST_CASE("csv writer round trips at full precision") {
  ReportTable t;
  t.name = "vals";
  t.columns = {"a", "b"};
  const double third = 1.0 / 3.0;
  t.rows = {{third, 1e-17}, {2.0, -4.5}};
  const std::string csv = table_to_csv(t);
  std::istringstream in(csv);
  std::string header;
  std::getline(in, header);
  CHECK(header == "a,b");
  std::string cell;
  std::getline(in, cell, ',');
  CHECK(std::stod(cell) == third);
  std::getline(in, cell);
  CHECK(std::stod(cell) == 1e-17);

  ReportTable bad = t;
  bad.rows.push_back({1.0});
  CHECK_THROWS_AS(table_to_csv(bad), Error);
}

TEST_CASE("write_report emits byte identical files") {
  ExperimentReport rep;
  rep.experiment = "lde";
  rep.name = "probe";
  rep.flags.push_back(upper_bound_flag("a", 0.2, 1.0));
  ReportTable t;
  t.name = "data";
  t.columns = {"x"};
  t.rows = {{0.1234567890123456}};
  rep.tables.push_back(t);

  const auto dir = std::filesystem::temp_directory_path() / "rmtlab_rep_test";
  std::filesystem::remove_all(dir);
  write_report(rep, dir / "one");
  write_report(rep, dir / "two");
  CHECK(slurp(dir / "one" / "probe.json") == slurp(dir / "two" / "probe.json"));
  CHECK(slurp(dir / "one" / "probe_data.csv") ==
        slurp(dir / "two" / "probe_data.csv"));
  CHECK_NOTHROW(nlohmann::json::parse(slurp(dir / "one" / "probe.json")));
  std::filesystem::remove_all(dir);
}

TEST_CASE("run config happy path") {
  nlohmann::json j = nlohmann::json::parse(R"({
    "seed": 99,
    "output": "runs/demo",
    "experiments": [
      {
        "name": "ll",
        "experiment": "local_law",
        "ensemble": {
          "profile": {"kind": "band", "dim": 2, "width": 3, "shape": "gaussian"},
          "entry_law": "rademacher",
          "symmetry": "complex_hermitian",
          "complex_second_moment": 0.5
        },
        "n_values": [64],
        "samples": 4,
        "gamma_exponent": 0.2,
        "z_grid": {"e_min": -1.0, "e_max": 1.0, "n_e": 3,
                   "eta_min": 0.1, "eta_max": 1.0, "n_eta": 4},
        "seed": 1234
      },
      {
        "experiment": "counting",
        "ensemble": {"profile": {"kind": "mixture", "nu": 0.25,
                                  "band": {"width": 5}}},
        "n_values": [128],
        "samples": 2
      }
    ]
  })");
  RunConfig run = parse(j);
  CHECK(run.seed == 99);
  CHECK(run.output == "runs/demo");
  REQUIRE(run.experiments.size() == 2);
  const ExperimentConfig& a = run.experiments[0];
  CHECK(a.name == "ll");
  CHECK(a.kind == ExperimentKind::local_law);
  CHECK(a.profile.kind == "band");
  CHECK(a.profile.dim == 2);
  CHECK(a.profile.width == 3);
  CHECK(a.profile.shape == "gaussian");
  CHECK(a.entry_law == EntryLaw::rademacher);
  CHECK(a.symmetry == Symmetry::complex_hermitian);
  CHECK(a.complex_second_moment == 0.5);
  CHECK(a.n_values == std::vector<Index>{64});
  CHECK(a.samples == 4);
  CHECK(a.gamma_exponent == 0.2);
  CHECK(a.grid.n_e == 3);
  CHECK(a.grid.n_eta == 4);
  CHECK(a.seed == 1234);

  const ExperimentConfig& b = run.experiments[1];
  CHECK(b.profile.kind == "mixture");
  CHECK(b.profile.nu == 0.25);
  CHECK(b.profile.width == 5);
  CHECK(b.seed == derive_seed(99, 2, 0x657870ull));

  SECTION("grids enumerate deterministically") {
    const auto es = a.grid.energies();
    REQUIRE(es.size() == 3);
    CHECK(es[0] == -1.0);
    CHECK(es[1] == 0.0);
    CHECK(es[2] == 1.0);
    const auto etas = a.grid.etas();
    REQUIRE(etas.size() == 4);
    CHECK(etas.front() == Catch::Approx(0.1));
    CHECK(etas.back() == Catch::Approx(1.0));
    CHECK(etas[1] / etas[0] == Catch::Approx(etas[2] / etas[1]));
  }

  SECTION("hash is stable and content sensitive") {
    CHECK(run.hash == parse(j).hash);
    nlohmann::json j2 = j;
    j2["seed"] = 100;
    CHECK(run.hash != parse(j2).hash);
  }

  SECTION("seed override rederives only implicit seeds") {
    RunConfig other = parse(j);
    resolve_seeds(other, 555);
    CHECK(other.seed == 555);
    CHECK(other.experiments[0].seed == 1234);
    CHECK(other.experiments[1].seed == derive_seed(555, 2, 0x657870ull));
  }
}

TEST_CASE("config validation reports the failing field") {
  auto expect_error = [](nlohmann::json j, const std::string& needle) {
    try {
      parse(j);
      FAIL("expected ConfigError for " + needle);
    } catch (const ConfigError& e) {
      INFO(e.what());
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
  };

  nlohmann::json j = base_config();
  j["experiments"][0]["experiment"] = "teh_law";
  expect_error(j, "experiments[0].experiment");
  try {
    parse(j);
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("local_law") != std::string::npos);
    CHECK(std::string(e.what()).find("lde") != std::string::npos);
  }

  j = base_config();
  j["experiments"][0]["samples"] = 0;
  expect_error(j, "experiments[0].samples");

  j = base_config();
  j["experiments"][0].erase("samples");
  expect_error(j, "samples");

  j = base_config();
  j["experiments"][0]["n_values"] = nlohmann::json::array();
  expect_error(j, "n_values");

  j = base_config();
  j["experiments"][0]["n_values"] = {16, -2};
  expect_error(j, "n_values");

  j = base_config();
  j["experiments"][0]["gamma_exponent"] = 0.6;
  expect_error(j, "gamma_exponent");

  j = base_config();
  j["experiments"][0]["experiment"] = "local_law";
  expect_error(j, "z_grid");

  j = base_config();
  j["experiments"][0]["z_grid"] = {{"eta_min", 0.0}};
  expect_error(j, "eta_min");

  j = base_config();
  j["experiments"][0]["z_grid"] = {{"eta_min", 0.5}, {"eta_max", 0.1}};
  expect_error(j, "eta_max");

  j = base_config();
  j["experiments"][0]["typo_field"] = 1;
  expect_error(j, "typo_field");

  j = base_config();
  j["experiments"][0]["experiment"] = "universality";
  expect_error(j, "n_values");

  j = base_config();
  j["experiments"][0]["experiment"] = "domination";
  expect_error(j, "x_name");

  j = base_config();
  j["experiments"][0]["experiment"] = "domination";
  j["experiments"][0]["x_name"] = "norm";
  j["experiments"][0]["epsilon"] = 0.5;
  expect_error(j, "x_name");

  j = base_config();
  j["experiments"][0]["experiment"] = "domination";
  j["experiments"][0]["x_name"] = "entry";
  expect_error(j, "epsilon");

  j = base_config();
  j["experiments"][0]["experiment"] = "domination";
  j["experiments"][0]["x_name"] = "theta";
  j["experiments"][0]["y_name"] = "sqrt_s";
  j["experiments"][0]["epsilon"] = 0.5;
  expect_error(j, "y_name");

  j = base_config();
  j["experiments"][0]["experiment"] = "domination";
  j["experiments"][0]["x_name"] = "theta";
  j["experiments"][0]["epsilon"] = 0.5;
  j["experiments"][0]["z_grid"] = {{"eta_min", 0.1}, {"eta_max", 1.0},
                                   {"n_eta", 3}};
  expect_error(j, "z_grid");

  j = base_config();
  j["experiments"][0]["ensemble"]["profile"] = {{"kind", "mixture"},
                                                {"nu", 1.5}};
  expect_error(j, "nu");

  j = base_config();
  j["experiments"][0]["ensemble"]["profile"] = {{"kind", "mixture"},
                                                {"nu", 0.5}};
  expect_error(j, "band");

  j = base_config();
  j["experiments"][0]["ensemble"]["profile"] = {{"kind", "band"},
                                                {"width", 0}};
  expect_error(j, "width");

  j = base_config();
  j["experiments"][0]["ensemble"]["profile"] = {{"kind", "custom"}};
  expect_error(j, "file");

  j = base_config();
  j["experiments"][0]["ensemble"]["profile"] = {{"kind", "banded"}};
  expect_error(j, "kind");

  j = base_config();
  j["experiments"][0]["ensemble"]["complex_second_moment"] = 1.5;
  expect_error(j, "complex_second_moment");

  j = base_config();
  j["experiments"][0]["ensemble"]["entry_law"] = "cauchy";
  expect_error(j, "entry_law");

  j = base_config();
  j["experiments"][0]["ensemble"]["symmetry"] = "quaternion";
  expect_error(j, "symmetry");

  j = base_config();
  j["schema"] = 2;
  expect_error(j, "schema");

  j = base_config();
  j["experiments"] = nlohmann::json::array();
  expect_error(j, "experiments");

  j = base_config();
  j.erase("experiments");
  expect_error(j, "experiments");

  CHECK_THROWS_AS(parse_run_config_text("{not json", "."), ConfigError);
  try {
    parse_run_config_text("{\"seed\": }", ".");
    FAIL("expected parse error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("parse") != std::string::npos);
  }
}

TEST_CASE("duplicate experiment names get unique suffixes") {
  nlohmann::json j = base_config();
  j["experiments"].push_back(j["experiments"][0]);
  j["experiments"].push_back(j["experiments"][0]);
  RunConfig run = parse(j);
  CHECK(run.experiments[0].name == "counting");
  CHECK(run.experiments[1].name == "counting_2");
  CHECK(run.experiments[2].name == "counting_3");
}

TEST_CASE("profile construction from specs") {
  nlohmann::json j = base_config();

  SECTION("mean field") {
    RunConfig run = parse(j);
    auto p = make_profile(run.experiments[0], 32);
    CHECK(p->n() == 32);
    CHECK(p->geometry().kind == ProfileKind::mean_field);
  }

  SECTION("identity") {
    j["experiments"][0]["ensemble"]["profile"] = {{"kind", "identity"}};
    RunConfig run = parse(j);
    auto p = make_profile(run.experiments[0], 8);
    CHECK(p->s().isApprox(Matrix::Identity(8, 8)));
    CHECK(p->m_param() == 1.0);
  }

  SECTION("band side is derived from N") {
    j["experiments"][0]["ensemble"]["profile"] = {
        {"kind", "band"}, {"dim", 2}, {"width", 2}};
    RunConfig run = parse(j);
    auto p = make_profile(run.experiments[0], 49);
    CHECK(p->n() == 49);
    CHECK(p->geometry().band.has_value());
    CHECK(p->geometry().band->side == 7);
    CHECK_THROWS_AS(make_profile(run.experiments[0], 50), ConfigError);
  }

  SECTION("mixture combines band and mean field") {
    j["experiments"][0]["ensemble"]["profile"] = {
        {"kind", "mixture"}, {"nu", 0.3}, {"band", {{"width", 4}}}};
    RunConfig run = parse(j);
    auto p = make_profile(run.experiments[0], 32);
    const Matrix expect =
        0.7 * band_profile(1, 32, 4, band_shape("box"), "box").s() +
        0.3 * mean_field_profile(32).s();
    CHECK((p->s() - expect).cwiseAbs().maxCoeff() < 1e-15);
  }

  SECTION("custom profiles load from disk and pin N") {
    const auto dir =
        std::filesystem::temp_directory_path() / "rmtlab_cfg_profile";
    std::filesystem::create_directories(dir);
    save_profile(band_profile(1, 24, 3, band_shape("box"), "box"), dir / "p.json");
    j["experiments"][0]["ensemble"]["profile"] = {{"kind", "custom"},
                                                  {"file", "p.json"}};
    j["experiments"][0]["n_values"] = {24};
    RunConfig run = parse_run_config_text(j.dump(), dir);
    auto p = make_profile(run.experiments[0], 24);
    CHECK(p->n() == 24);
    CHECK_THROWS_AS(make_profile(run.experiments[0], 32), ConfigError);
    std::filesystem::remove_all(dir);
  }
}

TEST_CASE("experiment catalogue is complete and self describing") {
  const auto infos = list_experiments();
  REQUIRE(infos.size() == all_experiment_kinds().size());
  for (std::size_t i = 0; i < infos.size(); ++i) {
    CHECK(infos[i].tag == to_string(all_experiment_kinds()[i]));
    CHECK_FALSE(infos[i].required.empty());
    CHECK(infos[i].description.size() > 20);
    CHECK_NOTHROW(experiment_kind_from_string(infos[i].tag));
  }
}
