#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <memory>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rmtlab/common.hpp"
#include "rmtlab/experiment_config.hpp"
#include "rmtlab/experiment_report.hpp"
#include "rmtlab/linalg.hpp"
#include "rmtlab/parallel.hpp"
#include "rmtlab/profile.hpp"
#include "rmtlab/resolvent.hpp"
#include "rmtlab/rng.hpp"
#include "rmtlab/sc.hpp"
#include "rmtlab/stability.hpp"
#include "rmtlab/stats.hpp"

namespace rmtlab {

namespace detail {

inline constexpr double kSlackC = 10.0;
inline constexpr double kEdgeEpsilon = 0.3;

inline Vector sample_eigenvalues(const EnsembleSpec& spec,
                                 std::int64_t sample_index) {
  SampleMatrix h = sample(spec, sample_index);
  if (h.is_real()) return sym_eig(h.h.real(), false).values;
  return herm_eig(h.h, false).values;
}

inline EnsembleSpec ensemble_with_profile(
    const ExperimentConfig& cfg,
    std::shared_ptr<const VarianceProfile> profile) {
  EnsembleSpec spec;
  spec.profile = std::move(profile);
  spec.entry_law = cfg.entry_law;
  spec.symmetry = cfg.symmetry;
  spec.complex_second_moment = cfg.complex_second_moment;
  spec.seed = cfg.seed;
  return spec;
}

inline nlohmann::json provenance_json(const ExperimentConfig& cfg) {
  nlohmann::json p;
  p["config_hash"] = fnv1a_hex(cfg.raw.dump());
  p["seed"] = cfg.seed;
  p["samples"] = cfg.samples;
  nlohmann::json ns = nlohmann::json::array();
  for (Index n : cfg.n_values) ns.push_back(n);
  p["n_values"] = ns;
  p["experiment"] = to_string(cfg.kind);
  return p;
}

// Control constants of the profile entering the eigenvalue-location and
// extreme-eigenvalue bounds.
struct ProfileConstants {
  double m_param = 0;
  double delta_minus = 0;
  double delta_plus = 0;
  double x = 0;
  double y = 0;
};

inline ProfileConstants profile_constants(const VarianceProfile& profile) {
  ProfileConstants out;
  out.m_param = profile.m_param();
  std::tie(out.delta_minus, out.delta_plus) = spectral_gaps(profile);
  const double nn = static_cast<double>(profile.n());
  const double m = out.m_param;
  out.y = (1.0 / m) * std::pow(1.0 / (out.delta_plus + std::pow(m, -0.2)), 3.5);
  const double nm2 = nn / (m * m);
  out.x = nn * nn / std::pow(m, 8.0 / 3.0) +
          nm2 * nm2 * std::pow(out.delta_plus + std::pow(nm2, 1.0 / 7.0), -12.0);
  return out;
}

inline double counting_sup_error(const Vector& lambda) {
  const Index n = lambda.size();
  double sup = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double f = n_sc(lambda(i));
    const double hi = (i + 1) / static_cast<double>(n) - f;
    const double lo = f - i / static_cast<double>(n);
    sup = std::max({sup, hi, lo});
  }
  return sup;
}

inline std::string format_energy(double e) {
  std::ostringstream out;
  out << std::setprecision(6) << e;
  return out.str();
}

inline CVector real_times_complex(const Matrix& a, const CVector& v) {
  CVector out(a.rows());
  out.real() = a * v.real();
  out.imag() = a * v.imag();
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Local law sweep: Theta and Lambda against their deterministic controls over
// the admissible (E, eta) domain.
// ---------------------------------------------------------------------------

inline ExperimentReport local_law_sweep(const ExperimentConfig& cfg,
                                        unsigned threads = 1) {
  ExperimentReport rep;
  rep.experiment = to_string(ExperimentKind::local_law);
  rep.name = cfg.name;
  rep.provenance = detail::provenance_json(cfg);

  ReportTable table;
  table.name = "grid";
  table.columns = {"n",          "e",
                   "eta",        "eta_tilde",
                   "pi",         "med_theta",
                   "med_theta_m_eta", "med_lambda",
                   "med_lambda_over_pi", "med_lambda_o",
                   "med_lambda_d"};

  double worst_theta_meta = 0.0;
  double worst_lambda_pi = 0.0;
  double worst_outside = 0.0;
  bool have_outside = false;
  double worst_bulk_dev = 0.0;
  bool have_bulk_fit = false;

  for (Index n : cfg.n_values) {
    auto profile = make_profile(cfg, n);
    const EnsembleSpec spec = detail::ensemble_with_profile(cfg, profile);
    const double m_param = profile->m_param();

    const std::vector<double> energies = cfg.grid.energies();
    const std::vector<double> etas = cfg.grid.etas();

    struct Point {
      SpectralPoint z;
      double eta_tilde = 0;
      ScReference ref;
    };
    std::vector<Point> points;
    for (double e : energies) {
      const DomainThresholds th =
          eta_thresholds(*profile, e, cfg.gamma_exponent);
      if (th.empty_tilde) continue;
      for (double eta : etas) {
        if (eta < th.eta_tilde) continue;
        Point pt;
        pt.z = SpectralPoint{e, eta};
        pt.eta_tilde = th.eta_tilde;
        pt.ref = edge_params(pt.z, m_param);
        points.push_back(pt);
      }
    }
    if (points.empty())
      throw Error("local_law_sweep: empty admissible domain for N = " +
                  std::to_string(n));

    struct PointObs {
      double theta = 0, lambda = 0, lambda_o = 0, lambda_d = 0;
    };
    const auto samples = static_cast<std::size_t>(cfg.samples);
    std::vector<std::vector<PointObs>> obs(
        samples, std::vector<PointObs>(points.size()));
    parallel_for(samples, threads, [&](std::size_t s) {
      const SampleMatrix h = sample(spec, static_cast<std::int64_t>(s));
      ResolventBundle bundle = green(h, points.front().z);
      for (std::size_t p = 0; p < points.size(); ++p) {
        bundle.move_to(points[p].z);
        const ControlParams c = control(bundle, points[p].ref);
        obs[s][p] = {c.theta_param, c.lambda, c.lambda_o, c.lambda_d};
      }
    });

    std::vector<double> fit_e, fit_eta, fit_theta;
    for (std::size_t p = 0; p < points.size(); ++p) {
      std::vector<double> th(samples), la(samples), lo(samples), ld(samples);
      for (std::size_t s = 0; s < samples; ++s) {
        th[s] = obs[s][p].theta;
        la[s] = obs[s][p].lambda;
        lo[s] = obs[s][p].lambda_o;
        ld[s] = obs[s][p].lambda_d;
      }
      const Point& pt = points[p];
      const double med_theta = median(th);
      const double med_lambda = median(la);
      const double meta = m_param * pt.z.eta;
      const double theta_meta = med_theta * meta;
      const double lambda_pi = med_lambda / pt.ref.pi_bound;
      worst_theta_meta = std::max(worst_theta_meta, theta_meta);
      worst_lambda_pi = std::max(worst_lambda_pi, lambda_pi);
      if (std::abs(pt.z.e) >= 2.0) {
        const double ke = pt.ref.kappa + pt.z.eta;
        const double bound =
            1.0 / (m_param * ke) + 1.0 / (meta * meta * std::sqrt(ke));
        worst_outside = std::max(worst_outside, med_theta / bound);
        have_outside = true;
      }
      table.rows.push_back({static_cast<double>(n), pt.z.e, pt.z.eta,
                            pt.eta_tilde, pt.ref.pi_bound, med_theta,
                            theta_meta, med_lambda, lambda_pi, median(lo),
                            median(ld)});
      fit_e.push_back(pt.z.e);
      fit_eta.push_back(pt.z.eta);
      fit_theta.push_back(med_theta);
    }

    for (double e : energies) {
      std::vector<double> xs, ys;
      for (std::size_t p = 0; p < fit_e.size(); ++p)
        if (fit_e[p] == e) {
          xs.push_back(fit_eta[p]);
          ys.push_back(fit_theta[p]);
        }
      if (xs.size() < 4) continue;
      const LineFit fit = fit_loglog(xs, ys);
      FittedExponent exp;
      exp.name = "theta_eta_slope_n" + std::to_string(n) + "_e" +
                 detail::format_energy(e);
      exp.value = fit.slope;
      exp.std_error = fit.slope_stderr;
      rep.exponents.push_back(exp);
      if (std::abs(e) <= 1.5) {
        worst_bulk_dev = std::max(worst_bulk_dev, std::abs(fit.slope + 1.0));
        have_bulk_fit = true;
      }
    }
  }

  rep.tables.push_back(std::move(table));
  rep.flags.push_back(upper_bound_flag(
      "theta_mass_bound", worst_theta_meta, detail::kSlackC,
      "max over the grid of median Theta * M * eta"));
  rep.flags.push_back(upper_bound_flag(
      "lambda_vs_pi", worst_lambda_pi, detail::kSlackC,
      "max over the grid of median Lambda / Pi"));
  if (have_bulk_fit)
    rep.flags.push_back(upper_bound_flag(
        "bulk_theta_slope_dev", worst_bulk_dev, 0.2,
        "max over bulk energies of |eta-slope of median Theta + 1|"));
  if (have_outside)
    rep.flags.push_back(upper_bound_flag(
        "outside_error", worst_outside, detail::kSlackC,
        "median Theta against 1/(M(kappa+eta)) + 1/((M eta)^2 sqrt(kappa+eta)) "
        "for |E| >= 2"));
  rep.statistics["grid_points"] = table.rows.size();
  rep.statistics["worst_theta_m_eta"] = worst_theta_meta;
  rep.statistics["worst_lambda_over_pi"] = worst_lambda_pi;
  return rep;
}

// ---------------------------------------------------------------------------
// Counting function: sup_E |n_N(E) - n_sc(E)| against Y log N.
// ---------------------------------------------------------------------------

inline ExperimentReport counting_experiment(const ExperimentConfig& cfg,
                                            unsigned threads = 1) {
  ExperimentReport rep;
  rep.experiment = to_string(ExperimentKind::counting);
  rep.name = cfg.name;
  rep.provenance = detail::provenance_json(cfg);

  ReportTable table;
  table.name = "counting";
  table.columns = {"n",   "median_sup", "mean_sup", "q95_sup",
                   "bound", "ratio"};

  double worst_ratio = 0.0;
  std::vector<double> med_by_n;
  for (Index n : cfg.n_values) {
    auto profile = make_profile(cfg, n);
    const EnsembleSpec spec = detail::ensemble_with_profile(cfg, profile);
    const detail::ProfileConstants pc = detail::profile_constants(*profile);
    const auto samples = static_cast<std::size_t>(cfg.samples);
    std::vector<double> sups(samples);
    parallel_for(samples, threads, [&](std::size_t s) {
      sups[s] = detail::counting_sup_error(
          detail::sample_eigenvalues(spec, static_cast<std::int64_t>(s)));
    });
    const double med = median(sups);
    const double bound =
        detail::kSlackC * pc.y * std::log(static_cast<double>(n));
    const double ratio = med / bound;
    worst_ratio = std::max(worst_ratio, ratio);
    med_by_n.push_back(med);
    table.rows.push_back({static_cast<double>(n), med, mean(sups),
                          quantile(sups, 0.95), bound, ratio});
  }
  rep.tables.push_back(std::move(table));
  rep.flags.push_back(upper_bound_flag(
      "counting_error", worst_ratio, 1.0,
      "max over N of median sup-error / (10 Y log N)"));

  nlohmann::json ratios = nlohmann::json::array();
  for (std::size_t i = 0; i + 1 < med_by_n.size(); ++i)
    ratios.push_back(med_by_n[i] / med_by_n[i + 1]);
  rep.statistics["median_sup_by_n"] = med_by_n;
  rep.statistics["consecutive_ratios"] = ratios;
  if (cfg.n_values.size() == 2 &&
      cfg.n_values[1] == 4 * cfg.n_values[0]) {
    const double factor = med_by_n[0] / med_by_n[1];
    rep.flags.push_back(interval_flag(
        "error_scaling", factor, 2.8, 5.7,
        "shrink factor of the median sup-error from N to 4N"));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Rigidity: |lambda_alpha - gamma_alpha| against the index-dependent bounds.
// ---------------------------------------------------------------------------

inline ExperimentReport rigidity_experiment(const ExperimentConfig& cfg,
                                            unsigned threads = 1) {
  ExperimentReport rep;
  rep.experiment = to_string(ExperimentKind::rigidity);
  rep.name = cfg.name;
  rep.provenance = detail::provenance_json(cfg);

  ReportTable table;
  table.name = "rigidity";
  table.columns = {"n",
                   "alpha0",
                   "frac_bulk_ok",
                   "frac_edge_ok",
                   "med_bulk_ratio",
                   "med_edge_ratio",
                   "med_window_max",
                   "med_sumsq",
                   "sumsq_ref",
                   "x",
                   "y"};

  double worst_bulk_frac = 1.0;
  double worst_edge_frac = 1.0;
  double worst_quad = 0.0;
  nlohmann::json per_n = nlohmann::json::array();

  for (Index n : cfg.n_values) {
    auto profile = make_profile(cfg, n);
    const EnsembleSpec spec = detail::ensemble_with_profile(cfg, profile);
    const detail::ProfileConstants pc = detail::profile_constants(*profile);
    const double nn = static_cast<double>(n);
    const double logn = std::log(nn);

    Vector gamma(n);
    for (Index a = 1; a <= n; ++a) gamma(a - 1) = gamma_alpha(n, a);

    const double alpha0 =
        std::pow(pc.m_param, detail::kEdgeEpsilon) * nn * pc.y;
    const double edge_bound =
        pc.x + std::pow(std::pow(pc.m_param, detail::kEdgeEpsilon) * pc.y,
                        2.0 / 3.0);
    Vector bulk_bound(n);
    std::vector<bool> is_edge(static_cast<std::size_t>(n));
    for (Index a = 1; a <= n; ++a) {
      const double ahat = std::min<double>(a, n + 1 - a);
      is_edge[static_cast<std::size_t>(a - 1)] = ahat <= alpha0;
      bulk_bound(a - 1) = pc.y * std::cbrt(nn / ahat);
    }
    const Index win_lo = n / 4;
    const Index win_hi = (3 * n) / 4;

    const auto samples = static_cast<std::size_t>(cfg.samples);
    std::vector<double> bulk_ratio(samples), edge_ratio(samples),
        window_max(samples), sumsq(samples);
    parallel_for(samples, threads, [&](std::size_t s) {
      const Vector lambda =
          detail::sample_eigenvalues(spec, static_cast<std::int64_t>(s));
      double br = 0, er = 0, wm = 0, ss = 0;
      for (Index a = 0; a < n; ++a) {
        const double dev = std::abs(lambda(a) - gamma(a));
        ss += dev * dev;
        if (is_edge[static_cast<std::size_t>(a)])
          er = std::max(er, dev / edge_bound);
        else
          br = std::max(br, dev / bulk_bound(a));
        if (a + 1 >= win_lo && a + 1 <= win_hi) wm = std::max(wm, dev);
      }
      bulk_ratio[s] = br;
      edge_ratio[s] = er;
      window_max[s] = wm;
      sumsq[s] = ss;
    });

    std::size_t bulk_ok = 0, edge_ok = 0, window_ok = 0;
    for (std::size_t s = 0; s < samples; ++s) {
      if (bulk_ratio[s] <= detail::kSlackC * logn) ++bulk_ok;
      if (edge_ratio[s] <= detail::kSlackC) ++edge_ok;
      if (window_max[s] <= detail::kSlackC * logn / nn) ++window_ok;
    }
    const double frac_bulk = bulk_ok / static_cast<double>(samples);
    const double frac_edge = edge_ok / static_cast<double>(samples);
    worst_bulk_frac = std::min(worst_bulk_frac, frac_bulk);
    worst_edge_frac = std::min(worst_edge_frac, frac_edge);

    const double sumsq_ref = nn * pc.y * (pc.y + pc.x * pc.x);
    const double med_sumsq = median(sumsq);
    const double quad_loose = med_sumsq / (sumsq_ref * std::pow(nn, 0.5));
    worst_quad = std::max(worst_quad, quad_loose);

    table.rows.push_back({nn, alpha0, frac_bulk, frac_edge, median(bulk_ratio),
                          median(edge_ratio), median(window_max), med_sumsq,
                          sumsq_ref, pc.x, pc.y});
    nlohmann::json entry;
    entry["n"] = n;
    entry["window_fraction"] = window_ok / static_cast<double>(samples);
    entry["window_bound"] = detail::kSlackC * logn / nn;
    entry["quadratic_ratio"] = med_sumsq / sumsq_ref;
    entry["quadratic_ratio_strict_slack"] =
        med_sumsq / (sumsq_ref * std::pow(nn, 0.1));
    per_n.push_back(entry);
  }

  rep.tables.push_back(std::move(table));
  rep.statistics["per_n"] = per_n;
  rep.flags.push_back(lower_bound_flag(
      "bulk_rigidity_fraction", worst_bulk_frac, 0.95,
      "samples with every bulk index inside 10 log N times its bound"));
  rep.flags.push_back(lower_bound_flag(
      "edge_rigidity_fraction", worst_edge_frac, 0.95,
      "samples with every edge index inside 10 times X + (M^eps Y)^(2/3)"));
  rep.flags.push_back(upper_bound_flag(
      "quadratic_rigidity", worst_quad, detail::kSlackC,
      "median sum of squared deviations / (N Y (Y + X^2) sqrt(N))"));
  return rep;
}

// ---------------------------------------------------------------------------
// Extreme eigenvalues: (||H|| - 2)_+ across N.
// ---------------------------------------------------------------------------

inline ExperimentReport extremes_experiment(const ExperimentConfig& cfg,
                                            unsigned threads = 1) {
  ExperimentReport rep;
  rep.experiment = to_string(ExperimentKind::extremes);
  rep.name = cfg.name;
  rep.provenance = detail::provenance_json(cfg);

  ReportTable table;
  table.name = "extremes";
  table.columns = {"n",           "mean_excess",   "median_excess",
                   "q95_excess",  "mean_edge_dev", "x",
                   "mean_over_x", "frac_bounded"};

  std::vector<double> fit_n, fit_mean;
  double worst_frac = 1.0;
  for (Index n : cfg.n_values) {
    auto profile = make_profile(cfg, n);
    const EnsembleSpec spec = detail::ensemble_with_profile(cfg, profile);
    const detail::ProfileConstants pc = detail::profile_constants(*profile);
    const auto samples = static_cast<std::size_t>(cfg.samples);
    std::vector<double> excess(samples), edge_dev(samples);
    parallel_for(samples, threads, [&](std::size_t s) {
      const Vector lambda =
          detail::sample_eigenvalues(spec, static_cast<std::int64_t>(s));
      excess[s] = std::max(
          {lambda(lambda.size() - 1) - 2.0, -2.0 - lambda(0), 0.0});
      edge_dev[s] = lambda(lambda.size() - 1) - 2.0;
    });
    const double bound =
        detail::kSlackC * pc.x * std::log(static_cast<double>(n));
    std::size_t ok = 0;
    for (double e : excess)
      if (e <= bound) ++ok;
    const double frac = ok / static_cast<double>(samples);
    worst_frac = std::min(worst_frac, frac);
    const double mean_excess = mean(excess);
    const double mean_dev = mean(edge_dev);
    if (mean_dev != 0) {
      fit_n.push_back(static_cast<double>(n));
      fit_mean.push_back(std::abs(mean_dev));
    }
    table.rows.push_back({static_cast<double>(n), mean_excess, median(excess),
                          quantile(excess, 0.95), mean_dev, pc.x,
                          mean_excess / pc.x, frac});
  }
  rep.tables.push_back(std::move(table));

  rep.flags.push_back(lower_bound_flag(
      "extreme_bound", worst_frac, 0.95,
      "samples with (||H|| - 2)_+ <= 10 X log N"));
  if (fit_n.size() >= 2) {
    const LineFit fit = fit_loglog(fit_n, fit_mean);
    FittedExponent exp;
    exp.name = "edge_mean_slope";
    exp.value = fit.slope;
    exp.std_error = fit.slope_stderr;
    rep.exponents.push_back(exp);
    if (cfg.profile.kind == "mean_field")
      rep.flags.push_back(interval_flag(
          "extreme_slope", fit.slope, -0.8, -0.55,
          "log-log slope of |mean(lambda_max - 2)| across N"));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Fluctuation averaging: [Q_k 1/G_kk] against the single-index size.
// ---------------------------------------------------------------------------

inline ExperimentReport fluct_avg_experiment(const ExperimentConfig& cfg,
                                             unsigned threads = 1) {
  ExperimentReport rep;
  rep.experiment = to_string(ExperimentKind::fluct_avg);
  rep.name = cfg.name;
  rep.provenance = detail::provenance_json(cfg);

  ReportTable table;
  table.name = "sweep";
  table.columns = {"n",
                   "eta",
                   "mean_avg_uniform",
                   "mean_avg_profile",
                   "mean_single",
                   "mean_upsilon_avg",
                   "pi",
                   "pi_sq",
                   "uniform_over_pi_sq"};

  double worst_pi_ratio = 0.0;
  double worst_weight_ratio = 1.0;
  double worst_gain_dev = 0.0;
  bool have_gain = false;

  const double e = cfg.grid.e_min;
  const std::vector<double> etas = cfg.grid.etas();

  for (Index n : cfg.n_values) {
    auto profile = make_profile(cfg, n);
    const EnsembleSpec spec = detail::ensemble_with_profile(cfg, profile);
    const Matrix& s = profile->s();
    const double m_param = profile->m_param();

    struct EtaObs {
      double avg_uniform = 0, avg_profile = 0, single = 0, ups = 0;
    };
    const auto samples = static_cast<std::size_t>(cfg.samples);
    std::vector<std::vector<EtaObs>> obs(samples,
                                         std::vector<EtaObs>(etas.size()));
    parallel_for(samples, threads, [&](std::size_t si) {
      const SampleMatrix h = sample(spec, static_cast<std::int64_t>(si));
      ResolventBundle bundle = green(h, SpectralPoint{e, etas.front()});
      for (std::size_t ei = 0; ei < etas.size(); ++ei) {
        bundle.move_to(SpectralPoint{e, etas[ei]});
        const detail::SchurVectors sv = detail::all_schur_vectors(h, bundle);
        const CVector q_inv = h.h.diagonal() - sv.z;
        const CVector ups = sv.a + h.h.diagonal() - sv.z;
        EtaObs& o = obs[si][ei];
        o.avg_uniform = std::abs(q_inv.mean());
        o.avg_profile =
            detail::real_times_complex(s, q_inv).cwiseAbs().maxCoeff();
        o.single = q_inv.cwiseAbs().maxCoeff();
        o.ups = std::abs(ups.mean());
      }
    });

    std::vector<double> mean_avg_u(etas.size()), mean_single(etas.size());
    for (std::size_t ei = 0; ei < etas.size(); ++ei) {
      std::vector<double> au(samples), ap(samples), si_(samples), up(samples);
      for (std::size_t si = 0; si < samples; ++si) {
        au[si] = obs[si][ei].avg_uniform;
        ap[si] = obs[si][ei].avg_profile;
        si_[si] = obs[si][ei].single;
        up[si] = obs[si][ei].ups;
      }
      const ScReference ref = edge_params(SpectralPoint{e, etas[ei]}, m_param);
      const double pi2 = ref.pi_bound * ref.pi_bound;
      mean_avg_u[ei] = mean(au);
      mean_single[ei] = mean(si_);
      const double mean_ap = mean(ap);
      const double ratio = mean_avg_u[ei] / mean_ap;
      worst_weight_ratio =
          std::max(worst_weight_ratio, std::max(ratio, 1.0 / ratio));
      worst_pi_ratio = std::max(worst_pi_ratio, mean_avg_u[ei] / pi2);
      table.rows.push_back({static_cast<double>(n), etas[ei], mean_avg_u[ei],
                            mean_ap, mean_single[ei], mean(up), ref.pi_bound,
                            pi2, mean_avg_u[ei] / pi2});
    }

    if (etas.size() >= 2) {
      const LineFit favg = fit_loglog(etas, mean_avg_u);
      const LineFit fsingle = fit_loglog(etas, mean_single);
      FittedExponent ea;
      ea.name = "avg_eta_slope_n" + std::to_string(n);
      ea.value = favg.slope;
      ea.std_error = favg.slope_stderr;
      rep.exponents.push_back(ea);
      FittedExponent es;
      es.name = "single_eta_slope_n" + std::to_string(n);
      es.value = fsingle.slope;
      es.std_error = fsingle.slope_stderr;
      rep.exponents.push_back(es);
      worst_gain_dev = std::max(worst_gain_dev,
                                std::abs(favg.slope - 2.0 * fsingle.slope));
      have_gain = true;
    }
  }

  rep.tables.push_back(std::move(table));
  rep.flags.push_back(upper_bound_flag(
      "avg_vs_pi_sq", worst_pi_ratio, detail::kSlackC,
      "max over eta of mean |[Q_k 1/G_kk]| / Pi^2"));
  rep.flags.push_back(upper_bound_flag(
      "weights_same_order", worst_weight_ratio, detail::kSlackC,
      "uniform weights against profile-row weights, worst ratio either way"));
  if (have_gain)
    rep.flags.push_back(upper_bound_flag(
        "quadratic_gain", worst_gain_dev, 0.3,
        "|eta-slope of the average - 2 * eta-slope of the single index|"));
  return rep;
}

// ---------------------------------------------------------------------------
// Universality proxy: bulk gap-ratio statistics against a Gaussian reference.
// ---------------------------------------------------------------------------

namespace detail {

struct GapRatioStats {
  double mean_ratio = 0;
  double std_error = 0;
  std::vector<double> unfolded_gaps;
};

inline GapRatioStats gap_ratio_stats(const EnsembleSpec& spec, Index n,
                                     int samples, unsigned threads) {
  const Index lo = n / 4;
  const Index hi = (3 * n) / 4;
  const auto count = static_cast<std::size_t>(samples);
  std::vector<double> per_sample(count);
  std::vector<std::vector<double>> gaps(count);
  parallel_for(count, threads, [&](std::size_t s) {
    const Vector lambda =
        sample_eigenvalues(spec, static_cast<std::int64_t>(s));
    double sum = 0;
    std::size_t m = 0;
    std::vector<double> unfolded;
    unfolded.reserve(static_cast<std::size_t>(hi - lo + 1));
    for (Index a = lo; a <= hi; ++a) {
      const double g0 = lambda(a) - lambda(a - 1);
      const double g1 = lambda(a + 1) - lambda(a);
      const double lo_g = std::min(g0, g1);
      const double hi_g = std::max(g0, g1);
      sum += hi_g > 0 ? lo_g / hi_g : 1.0;
      ++m;
      unfolded.push_back(g0 * static_cast<double>(n) *
                         rho(gamma_alpha(n, a)));
    }
    per_sample[s] = sum / static_cast<double>(m);
    gaps[s] = std::move(unfolded);
  });
  GapRatioStats out;
  out.mean_ratio = mean(per_sample);
  double var = 0;
  for (double r : per_sample) var += (r - out.mean_ratio) * (r - out.mean_ratio);
  var /= std::max<std::size_t>(1, count - 1);
  out.std_error = std::sqrt(var / static_cast<double>(count));
  for (auto& g : gaps)
    out.unfolded_gaps.insert(out.unfolded_gaps.end(), g.begin(), g.end());
  return out;
}

inline std::vector<double> gap_histogram(const std::vector<double>& gaps,
                                         int bins, double hi) {
  std::vector<double> density(static_cast<std::size_t>(bins), 0.0);
  const double width = hi / bins;
  for (double g : gaps) {
    const auto b = static_cast<std::size_t>(g / width);
    if (b < density.size()) density[b] += 1.0;
  }
  const double total = static_cast<double>(gaps.size());
  for (double& d : density) d /= total * width;
  return density;
}

}  // namespace detail

inline ExperimentReport universality_experiment(const ExperimentConfig& cfg,
                                                unsigned threads = 1) {
  ExperimentReport rep;
  rep.experiment = to_string(ExperimentKind::universality);
  rep.name = cfg.name;
  rep.provenance = detail::provenance_json(cfg);

  nlohmann::json per_n = nlohmann::json::array();
  double worst_match = 0.0;
  double worst_separation = std::numeric_limits<double>::infinity();

  for (Index n : cfg.n_values) {
    require(n >= 64, "universality_experiment: N must be at least 64");
    auto profile = make_profile(cfg, n);
    const EnsembleSpec spec = detail::ensemble_with_profile(cfg, profile);

    EnsembleSpec ref_spec;
    ref_spec.profile = std::make_shared<VarianceProfile>(mean_field_profile(n));
    ref_spec.entry_law = EntryLaw::gaussian;
    ref_spec.symmetry = cfg.symmetry;
    ref_spec.complex_second_moment = 0.0;
    ref_spec.seed = derive_seed(cfg.seed, 0x726566ull, n);

    const detail::GapRatioStats ens =
        detail::gap_ratio_stats(spec, n, cfg.samples, threads);
    const detail::GapRatioStats ref =
        detail::gap_ratio_stats(ref_spec, n, cfg.samples, threads);
    const double diff = std::abs(ens.mean_ratio - ref.mean_ratio);
    worst_match = std::max(worst_match, diff);
    worst_separation = std::min(worst_separation, diff);

    nlohmann::json entry;
    entry["n"] = n;
    entry["mean_gap_ratio"] = ens.mean_ratio;
    entry["mean_gap_ratio_std_error"] = ens.std_error;
    entry["reference_gap_ratio"] = ref.mean_ratio;
    entry["reference_std_error"] = ref.std_error;
    entry["difference"] = diff;
    per_n.push_back(entry);

    constexpr int kBins = 40;
    constexpr double kHi = 4.0;
    const std::vector<double> de =
        detail::gap_histogram(ens.unfolded_gaps, kBins, kHi);
    const std::vector<double> dr =
        detail::gap_histogram(ref.unfolded_gaps, kBins, kHi);
    ReportTable hist;
    hist.name = "gap_histogram_n" + std::to_string(n);
    hist.columns = {"bin_left", "bin_right", "density", "reference_density"};
    for (int b = 0; b < kBins; ++b)
      hist.rows.push_back({b * kHi / kBins, (b + 1) * kHi / kBins,
                           de[static_cast<std::size_t>(b)],
                           dr[static_cast<std::size_t>(b)]});
    rep.tables.push_back(std::move(hist));
  }

  rep.statistics["per_n"] = per_n;
  rep.statistics["reference_values"] = {
      {"goe_gap_ratio", 0.5307}, {"gue_gap_ratio", 0.5996},
      {"poisson_gap_ratio", 0.3863}};
  if (cfg.expect == "match")
    rep.flags.push_back(upper_bound_flag(
        "gap_ratio_match", worst_match, 0.01,
        "worst |mean gap ratio - Gaussian reference| across N"));
  else
    rep.flags.push_back(lower_bound_flag(
        "gap_ratio_separation", worst_separation, 0.05,
        "worst |mean gap ratio - Gaussian reference| across N"));
  return rep;
}

// ---------------------------------------------------------------------------
// Stochastic domination probe: P(X > N^eps Y) across N.
// ---------------------------------------------------------------------------

inline ExperimentReport domination_probe(const ExperimentConfig& cfg,
                                         unsigned threads = 1) {
  ExperimentReport rep;
  rep.experiment = to_string(ExperimentKind::domination);
  rep.name = cfg.name;
  rep.provenance = detail::provenance_json(cfg);
  rep.provenance["x_name"] = cfg.x_name;
  rep.provenance["y_name"] = cfg.y_name;
  rep.provenance["epsilon"] = cfg.epsilon;
  rep.provenance["d"] = cfg.order_d;

  ReportTable table;
  table.name = "exceedance";
  table.columns = {"n", "samples", "exceed_count", "exceed_prob", "implied_d"};

  std::vector<Index> ns = cfg.n_values;
  std::sort(ns.begin(), ns.end());
  std::vector<double> probs;

  for (Index n : ns) {
    auto profile = make_profile(cfg, n);
    const EnsembleSpec spec = detail::ensemble_with_profile(cfg, profile);
    const double m_param = profile->m_param();
    const auto samples = static_cast<std::size_t>(cfg.samples);
    std::vector<double> xs(samples), ys(samples);

    if (cfg.x_name == "entry") {
      const Matrix& s = profile->s();
      require(n >= 2 && s(0, 1) > 0,
              "domination_probe: entry statistic needs s(0,1) > 0");
      parallel_for(samples, threads, [&](std::size_t k) {
        auto rng = make_engine(derive_seed(
            spec.seed, static_cast<std::uint64_t>(n), k));
        Complex h01{0, 0};
        for (Index j = 0; j <= 1; ++j) {
          if (s(0, j) == 0.0) continue;
          const Complex zeta = detail::draw_zeta(rng, spec, j == 0);
          if (j == 1) h01 = std::sqrt(s(0, 1)) * zeta;
        }
        xs[k] = std::abs(h01);
        ys[k] = std::sqrt(s(0, 1));
      });
    } else {
      const SpectralPoint z{cfg.grid.e_min, cfg.grid.eta_min};
      const ScReference ref = edge_params(z, m_param);
      if (cfg.x_name == "theta") {
        parallel_for(samples, threads, [&](std::size_t k) {
          const Vector lambda =
              detail::sample_eigenvalues(spec, static_cast<std::int64_t>(k));
          Complex m_n{0, 0};
          for (Index a = 0; a < n; ++a)
            m_n += 1.0 / (Complex(lambda(a), 0) - z.z());
          m_n /= static_cast<double>(n);
          xs[k] = std::abs(m_n - ref.m);
          ys[k] = 1.0 / (m_param * z.eta);
        });
      } else {
        parallel_for(samples, threads, [&](std::size_t k) {
          const SampleMatrix h = sample(spec, static_cast<std::int64_t>(k));
          const ResolventBundle bundle = green(h, z);
          const ControlParams c = control(bundle, ref);
          xs[k] = c.lambda;
          ys[k] = ref.pi_bound;
        });
      }
    }

    const double scale = std::pow(static_cast<double>(n), cfg.epsilon);
    std::size_t exceed = 0;
    for (std::size_t k = 0; k < samples; ++k)
      if (xs[k] > scale * ys[k]) ++exceed;
    const double p = exceed / static_cast<double>(samples);
    probs.push_back(p);
    const double implied_d =
        p > 0 ? -std::log(p) / std::log(static_cast<double>(n))
              : std::numeric_limits<double>::infinity();
    table.rows.push_back({static_cast<double>(n),
                          static_cast<double>(samples),
                          static_cast<double>(exceed), p, implied_d});
  }
  rep.tables.push_back(std::move(table));
  rep.statistics["exceed_prob_by_n"] = probs;

  if (probs.size() >= 2) {
    double min_drop = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < probs.size(); ++i)
      min_drop = std::min(min_drop, probs[i] - probs[i + 1]);
    rep.flags.push_back(lower_bound_flag(
        "exceedance_nonincreasing", min_drop, 0.0,
        "min over consecutive N of P_N(X > N^eps Y) - P_2N(...)"));
  }
  if (cfg.epsilon >= 2.0) {
    const double worst = *std::max_element(probs.begin(), probs.end());
    rep.flags.push_back(upper_bound_flag(
        "exceedance_zero", worst, 0.0,
        "exceedance probability at epsilon >= 2"));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Large deviation probe: normalized linear, bilinear, and quadratic forms.
// ---------------------------------------------------------------------------

inline ExperimentReport lde_probe(const ExperimentConfig& cfg,
                                  unsigned threads = 1) {
  ExperimentReport rep;
  rep.experiment = to_string(ExperimentKind::lde);
  rep.name = cfg.name;
  rep.provenance = detail::provenance_json(cfg);

  ReportTable table;
  table.name = "lde";
  table.columns = {"n",
                   "q99_linear_signed",
                   "q99_linear_abs",
                   "mean_linear_abs",
                   "med_bilinear",
                   "med_quadratic"};

  std::vector<double> fit_n, fit_q99;
  double worst_gaussian_dev = 0.0;
  double worst_order = 0.0;

  for (Index n : cfg.n_values) {
    require(n >= 2, "lde_probe: N must be at least 2");
    const auto samples = static_cast<std::size_t>(cfg.samples);
    std::vector<double> lin(samples), bil(samples), quad(samples);
    const double nn = static_cast<double>(n);
    parallel_for(samples, threads, [&](std::size_t s) {
      auto rng = make_engine(
          derive_seed(cfg.seed, static_cast<std::uint64_t>(n), s));
      double sum_x = 0, sum_x2 = 0, sum_y = 0;
      for (Index i = 0; i < n; ++i) {
        const double x = detail::draw_unit(rng, cfg.entry_law);
        sum_x += x;
        sum_x2 += x * x;
      }
      for (Index i = 0; i < n; ++i)
        sum_y += detail::draw_unit(rng, cfg.entry_law);
      lin[s] = sum_x / std::sqrt(nn);
      bil[s] = std::abs(sum_x * sum_y) / nn;
      quad[s] = std::abs(sum_x * sum_x - sum_x2) / std::sqrt(nn * (nn - 1.0));
    });

    std::vector<double> lin_abs(samples);
    for (std::size_t s = 0; s < samples; ++s) lin_abs[s] = std::abs(lin[s]);
    const double q99_signed = quantile(lin, 0.99);
    const double q99_abs = quantile(lin_abs, 0.99);
    const double med_bil = median(bil);
    const double med_quad = median(quad);
    worst_order = std::max({worst_order, med_bil, med_quad});
    if (cfg.entry_law == EntryLaw::gaussian)
      worst_gaussian_dev = std::max(worst_gaussian_dev,
                                    std::abs(q99_signed - 2.3263478740408408));
    fit_n.push_back(nn);
    fit_q99.push_back(q99_abs);
    table.rows.push_back({nn, q99_signed, q99_abs, mean(lin_abs), med_bil,
                          med_quad});
  }
  rep.tables.push_back(std::move(table));

  if (cfg.entry_law == EntryLaw::gaussian)
    rep.flags.push_back(upper_bound_flag(
        "gaussian_quantile_dev", worst_gaussian_dev, 0.15,
        "worst |0.99-quantile of the signed linear form - 2.3263| across N"));
  rep.flags.push_back(upper_bound_flag(
      "bilinear_order", worst_order, detail::kSlackC,
      "worst median of the normalized bilinear and quadratic forms"));
  if (fit_n.size() >= 2) {
    const LineFit fit = fit_loglog(fit_n, fit_q99);
    FittedExponent exp;
    exp.name = "linear_q99_slope";
    exp.value = fit.slope;
    exp.std_error = fit.slope_stderr;
    rep.exponents.push_back(exp);
    rep.flags.push_back(upper_bound_flag(
        "quantile_growth", fit.slope, 0.1,
        "log-log slope of the 0.99-quantile of |linear form| across N"));
  }
  return rep;
}

inline ExperimentReport run_experiment(const ExperimentConfig& cfg,
                                       unsigned threads = 1) {
  switch (cfg.kind) {
    case ExperimentKind::local_law: return local_law_sweep(cfg, threads);
    case ExperimentKind::counting: return counting_experiment(cfg, threads);
    case ExperimentKind::rigidity: return rigidity_experiment(cfg, threads);
    case ExperimentKind::extremes: return extremes_experiment(cfg, threads);
    case ExperimentKind::fluct_avg: return fluct_avg_experiment(cfg, threads);
    case ExperimentKind::universality:
      return universality_experiment(cfg, threads);
    case ExperimentKind::domination: return domination_probe(cfg, threads);
    case ExperimentKind::lde: return lde_probe(cfg, threads);
  }
  throw Error("run_experiment: unknown experiment kind");
}

}  // namespace rmtlab
