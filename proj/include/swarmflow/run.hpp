#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "swarmflow/config.hpp"
#include "swarmflow/diagnostics.hpp"
#include "swarmflow/heat_kernel.hpp"
#include "swarmflow/transport.hpp"

namespace swarmflow::run {

using config::SimConfig;
using spectral::GridField;
using spectral::SpectralField;
using json = nlohmann::json;

struct RunResult {
  std::string timeseries_path;
  std::string summary_path;
  bool blowup = false;
  double last_t = 0.0;
  json summary;
};

namespace detail {

inline std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline std::string order_label(double p) {
  if (std::isinf(p)) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", p);
  return buf;
}

struct SeriesStore {
  std::vector<double> t, mass, energy, lyapunov, dissipation, support, drag2, vort2, gap, w1, w1_bound,
      max_density;
  std::vector<Vec> momentum;
};

inline json fit_or_null(const std::vector<double>& ts, const std::vector<double>& ys, double t_min) {
  try {
    std::vector<double> clipped = ys;
    for (double& y : clipped) y = std::max(y, 1e-14);
    diagnostics::FitResult f = diagnostics::fit_decay_rate(ts, clipped, t_min);
    return json{{"rate", f.rate}, {"r_squared", f.r_squared}, {"samples", f.samples}};
  } catch (const std::invalid_argument&) {
    return json(nullptr);
  }
}

// Trapezoid of the sampled dissipation against the Lyapunov drop on [0, t_end].
inline json balance_window(const SeriesStore& s, double t_end) {
  std::size_t last = 0;
  for (std::size_t i = 0; i < s.t.size(); ++i)
    if (s.t[i] <= t_end + 1e-12) last = i;
  double integral = 0.0;
  for (std::size_t i = 1; i <= last; ++i)
    integral += 0.5 * (s.dissipation[i] + s.dissipation[i - 1]) * (s.t[i] - s.t[i - 1]);
  double delta = s.lyapunov[last] - s.lyapunov.front();
  double scale = std::max(std::abs(s.lyapunov.front()), 1e-30);
  return json{{"t_end", s.t[last]},
              {"delta_lyapunov", delta},
              {"integral_dissipation", integral},
              {"residual_rel", std::abs(delta + integral) / scale}};
}

}  // namespace detail

inline RunResult run(const SimConfig& cfg, const std::string& out_dir) {
  config::validate(cfg);
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw io_error("cannot create output directory: " + out_dir);
  const auto wall_start = std::chrono::steady_clock::now();

  const int d = cfg.dim;
  const double vol = std::pow(two_pi, d);
  Rng rng(cfg.seed);
  Rng wrng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

  kinetic::ParticleEnsemble ens =
      cfg.particles > 0 ? kinetic::sample_ensemble(d, cfg.particles, cfg.M0, cfg.init.v_mean, cfg.init.v_std,
                                                   cfg.init.center_velocities, rng)
                        : kinetic::ParticleEnsemble::empty(d, 0);
  const double mass0 = ens.mass();

  SpectralField u0;
  if (cfg.fluid.kind == "taylor_green")
    u0 = fluid::taylor_green(cfg.n, cfg.fluid.amplitude);
  else if (cfg.fluid.kind == "random_solenoidal")
    u0 = fluid::random_solenoidal(d, cfg.n, cfg.fluid.amplitude, cfg.fluid.max_mode, rng);
  else {
    u0 = SpectralField::zeros(d, cfg.n, d);
    u0.solenoidal = true;
  }
  if (cfg.init.balance_momentum && ens.N > 0) {
    Vec P = vzero();
    for (std::size_t i = 0; i < ens.N; ++i)
      for (int k = 0; k < d; ++k) P[k] += ens.w[i] * ens.v[i * d + k];
    for (int k = 0; k < d; ++k) u0.at(k, 0) -= cplx(P[k] / vol, 0.0);
  }
  fluid::FluidState fl{std::move(u0), cfg.mu, 0.0};
  const double initial_fluid_l2 = std::sqrt(vol * spectral::l2_norm_sq(fl.u));

  const kinetic::CommunicationWeight psi = cfg.psi.weight();
  const Vec vinf = [&] {
    Vec uc = spectral::mean_mode(fl.u);
    if (ens.N == 0) return uc;
    diagnostics::Centers c0 = diagnostics::centers(ens, fl.u);
    return diagnostics::v_infinity(c0.v_c, c0.u_c, c0.mass, d);
  }();
  std::optional<diagnostics::VelocityBox> vbox;
  if (ens.N > 0) vbox = diagnostics::velocity_box(ens);

  std::vector<std::string> header = {"t", "mass", "momentum_x", "momentum_y"};
  if (d == 3) header.push_back("momentum_z");
  header.insert(header.end(), {"energy", "lyapunov", "dissipation", "v_c_x", "v_c_y"});
  if (d == 3) header.push_back("v_c_z");
  header.insert(header.end(), {"u_c_x", "u_c_y"});
  if (d == 3) header.push_back("u_c_z");
  header.push_back("support_radius");
  for (double p : cfg.diagnostics.p_list) header.push_back("moment_" + detail::order_label(p));
  header.insert(header.end(), {"drag_l2", "drag_linf", "vorticity_l2", "u_minus_mean_linf"});
  for (double p : cfg.diagnostics.p_list) header.push_back("w_bound_" + detail::order_label(p));
  const bool with_w1 = cfg.diagnostics.wasserstein_subsample > 0 && ens.N > 0;
  if (with_w1) {
    header.push_back("w1_exact");
    header.push_back("w1_bound_sub");
  }
  header.push_back("max_cell_density");
  for (double q : cfg.diagnostics.q_list) header.push_back("fq_" + detail::order_label(q));

  const std::string csv_path = (fs::path(out_dir) / cfg.output.timeseries).string();
  const std::string summary_path = (fs::path(out_dir) / cfg.output.summary).string();
  std::ofstream csv(csv_path);
  if (!csv) throw io_error("cannot open timeseries file: " + csv_path);
  for (std::size_t i = 0; i < header.size(); ++i) csv << (i ? "," : "") << header[i];
  csv << "\n";

  detail::SeriesStore series;

  auto sample_row = [&](const kinetic::ParticleEnsemble& e, const fluid::FluidState& f) {
    const double mass = e.mass();
    Vec v_c = vzero();
    Vec u_c = spectral::mean_mode(f.u);
    if (e.N > 0) {
      diagnostics::Centers c = diagnostics::centers(e, f.u);
      v_c = c.v_c;
      u_c = c.u_c;
    }
    Vec P = vzero();
    for (int k = 0; k < d; ++k) P[k] = mass * v_c[k] + u_c[k];

    const double energy = diagnostics::total_energy(e, f.u);
    double lya;
    if (e.N > 0) {
      lya = diagnostics::lyapunov(e, f.u, v_c, u_c, mass);
    } else {
      double gap = 0.0;
      for (int k = 0; k < d; ++k) gap += u_c[k] * u_c[k];
      lya = 0.5 * spectral::fluctuation_l2_sq(f.u) + 0.5 * gap;
    }
    diagnostics::DissipationParts parts = diagnostics::dissipation_parts(
        e, f.u, psi, 4096, cfg.mu, cfg.toggles.drag, !cfg.toggles.freeze_fluid, cfg.toggles.alignment);
    const double diss = parts.total();

    const double support = e.N > 0 ? diagnostics::support_radius(e, vinf) : 0.0;
    std::vector<double> moments, wbounds;
    for (double p : cfg.diagnostics.p_list) {
      moments.push_back(e.N > 0 ? diagnostics::weighted_moment(e, p, vinf) : 0.0);
      wbounds.push_back(e.N > 0 ? diagnostics::wasserstein_bound(e, vinf, p) : 0.0);
    }
    const double drag2 = diagnostics::drag_norm(e, f.u, 2.0);
    const double draginf = diagnostics::drag_norm(e, f.u, std::numeric_limits<double>::infinity());
    const double vort2 = diagnostics::vorticity_norm(f.u, 2.0);
    const double ulinf = diagnostics::u_minus_mean_linf(f.u);

    double w1 = 0.0, w1b = 0.0;
    if (with_w1) {
      transport::WeightedSample sub = transport::subsample(e, cfg.diagnostics.wasserstein_subsample, wrng);
      transport::WeightedSample mono = transport::monokinetic(sub, vinf);
      w1 = transport::wasserstein_exact(sub, mono, 1.0);
      for (const transport::Atom& a : sub.atoms) {
        double dv = 0.0;
        for (int k = 0; k < d; ++k) dv += (a.v[k] - vinf[k]) * (a.v[k] - vinf[k]);
        w1b += a.w * std::sqrt(dv);
      }
    }

    double maxrho = 0.0;
    if (e.N > 0) {
      auto [rho, j] = kinetic::deposit_moments(e, f.u.n);
      maxrho = diagnostics::max_cell_density(rho);
    }
    std::vector<double> fqs;
    for (double q : cfg.diagnostics.q_list)
      fqs.push_back(e.N > 0 ? diagnostics::fq_histogram_norm(e, q, cfg.diagnostics.histogram_bins, *vbox)
                            : 0.0);

    std::vector<double> row;
    row.push_back(f.t);
    row.push_back(mass);
    for (int k = 0; k < d; ++k) row.push_back(P[k]);
    row.push_back(energy);
    row.push_back(lya);
    row.push_back(diss);
    for (int k = 0; k < d; ++k) row.push_back(v_c[k]);
    for (int k = 0; k < d; ++k) row.push_back(u_c[k]);
    row.push_back(support);
    for (double m : moments) row.push_back(m);
    row.push_back(drag2);
    row.push_back(draginf);
    row.push_back(vort2);
    row.push_back(ulinf);
    for (double m : wbounds) row.push_back(m);
    if (with_w1) {
      row.push_back(w1);
      row.push_back(w1b);
    }
    row.push_back(maxrho);
    for (double v : fqs) row.push_back(v);

    for (std::size_t i = 0; i < row.size(); ++i) csv << (i ? "," : "") << detail::fmt(row[i]);
    csv << "\n";

    series.t.push_back(f.t);
    series.mass.push_back(mass);
    series.momentum.push_back(P);
    series.energy.push_back(energy);
    series.lyapunov.push_back(lya);
    series.dissipation.push_back(diss);
    series.support.push_back(support);
    series.drag2.push_back(drag2);
    series.vort2.push_back(vort2);
    double g = 0.0;
    for (int k = 0; k < d; ++k) g += (u_c[k] - v_c[k]) * (u_c[k] - v_c[k]);
    series.gap.push_back(std::sqrt(g));
    if (with_w1) {
      series.w1.push_back(w1);
      series.w1_bound.push_back(w1b);
    }
    series.max_density.push_back(maxrho);
  };

  const std::size_t n_steps = static_cast<std::size_t>(std::llround(cfg.t_final / cfg.dt));
  const std::size_t steps = n_steps < 1 ? 1 : n_steps;

  auto step_energy = [&] { return diagnostics::total_energy(ens, fl.u); };

  sample_row(ens, fl);
  double prev_energy = series.energy.front();
  double max_step_increase = 0.0;
  bool blew = false;
  double blow_t = 0.0;
  std::string blow_msg;

  kinetic::StepWorkspace ws;
  std::optional<GridField> zero_source;
  if (ens.N == 0 && !cfg.toggles.freeze_fluid) zero_source = GridField::zeros(d, cfg.n, d);

  try {
    for (std::size_t s = 1; s <= steps; ++s) {
      if (ens.N > 0) {
        auto [e2, f2] = kinetic::step_coupled(ens, fl, psi, cfg.dt, cfg.toggles, &ws);
        ens = std::move(e2);
        fl = std::move(f2);
      } else if (!cfg.toggles.freeze_fluid) {
        fl = fluid::fluid_step(fl, *zero_source, cfg.dt);
      } else {
        fl.t += cfg.dt;
      }
      double e = step_energy();
      max_step_increase = std::max(max_step_increase, e - prev_energy);
      prev_energy = e;
      if (s % static_cast<std::size_t>(cfg.diagnostics.cadence) == 0 || s == steps) sample_row(ens, fl);
    }
  } catch (const blowup_error& b) {
    blew = true;
    blow_t = b.time;
    blow_msg = b.what();
  }

  csv.flush();
  csv.close();

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();

  json summary;
  summary["version"] = version_string();
  summary["config"] = config::config_echo(cfg);
  summary["steps"] = steps;
  summary["t_final_effective"] = static_cast<double>(steps) * cfg.dt;
  summary["rows"] = series.t.size();
  summary["wall_seconds"] = wall;
  summary["blowup"] = blew;
  summary["last_t"] = blew ? blow_t : series.t.back();
  if (blew) summary["blowup_message"] = blow_msg;
  json vj = json::array();
  for (int k = 0; k < d; ++k) vj.push_back(vinf[k]);
  summary["v_infinity"] = vj;

  json fits;
  fits["lyapunov"] = detail::fit_or_null(series.t, series.lyapunov, 1.0);
  fits["support_radius"] = detail::fit_or_null(series.t, series.support, 1.0);
  fits["drag_l2"] = detail::fit_or_null(series.t, series.drag2, 1.0);
  fits["vorticity_l2"] = detail::fit_or_null(series.t, series.vort2, 1.0);
  fits["uc_vc_gap"] = detail::fit_or_null(series.t, series.gap, 1.0);
  summary["fits"] = fits;

  double mass_drift = 0.0;
  for (double m : series.mass) mass_drift = std::max(mass_drift, std::abs(m - mass0));
  double velocity_scale = series.support.front();
  for (int k = 0; k < d; ++k) velocity_scale = std::max(velocity_scale, std::abs(vinf[k]));
  double momentum_scale = mass0 * velocity_scale + initial_fluid_l2;
  if (!(momentum_scale > 0.0)) momentum_scale = 1.0;
  double momentum_drift = 0.0;
  for (const Vec& P : series.momentum) {
    double dd = 0.0;
    for (int k = 0; k < d; ++k) dd += (P[k] - series.momentum.front()[k]) * (P[k] - series.momentum.front()[k]);
    momentum_drift = std::max(momentum_drift, std::sqrt(dd));
  }
  summary["conservation"] = {{"mass_drift_max", mass_drift},
                             {"momentum_drift_abs", momentum_drift},
                             {"momentum_scale", momentum_scale},
                             {"momentum_drift_rel", momentum_drift / momentum_scale}};
  summary["energy"] = {{"initial", series.energy.front()},
                       {"final", series.energy.back()},
                       {"max_step_increase", max_step_increase}};
  summary["balance"] = {
      {"short", detail::balance_window(series, std::min(1.0, series.t.back()))},
      {"full", detail::balance_window(series, series.t.back())}};
  double dmin = std::numeric_limits<double>::infinity(), dmax = 0.0;
  for (double m : series.max_density) {
    dmin = std::min(dmin, m);
    dmax = std::max(dmax, m);
  }
  summary["max_cell_density"] = {{"min", series.t.empty() ? 0.0 : dmin}, {"max", dmax}};
  if (with_w1) {
    summary["fits"]["w1_exact"] = detail::fit_or_null(series.t, series.w1, 1.0);
    summary["fits"]["w1_bound_sub"] = detail::fit_or_null(series.t, series.w1_bound, 1.0);
  }

  std::ofstream sj(summary_path);
  if (!sj) throw io_error("cannot open summary file: " + summary_path);
  sj << summary.dump(2) << "\n";
  sj.close();

  if (blew) throw blowup_error(blow_t);

  RunResult result;
  result.timeseries_path = csv_path;
  result.summary_path = summary_path;
  result.blowup = false;
  result.last_t = series.t.back();
  result.summary = std::move(summary);
  return result;
}

}  // namespace swarmflow::run
