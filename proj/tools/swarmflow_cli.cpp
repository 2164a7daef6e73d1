#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "swarmflow/run.hpp"

namespace {

constexpr int exit_ok = 0;
constexpr int exit_config = 2;
constexpr int exit_blowup = 3;
constexpr int exit_io = 4;

double parse_order(const std::string& s) {
  if (s == "inf" || s == "Inf" || s == "INF") return std::numeric_limits<double>::infinity();
  std::size_t pos = 0;
  double v = std::stod(s, &pos);
  if (pos != s.size()) throw swarmflow::config_error("not a number: " + s);
  return v;
}

std::string order_text(double p) {
  if (std::isinf(p)) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", p);
  return buf;
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(parse_order(tok));
  }
  if (out.empty()) throw swarmflow::config_error("empty list: " + s);
  return out;
}

int run_simulate(const std::string& config_path, const std::string& preset_name, const std::string& out_dir,
                 long long seed, int threads) {
  swarmflow::config::SimConfig cfg;
  if (!preset_name.empty()) cfg = swarmflow::config::preset(preset_name);
  if (!config_path.empty()) {
    cfg = swarmflow::config::load_config(config_path, cfg);
  } else if (preset_name.empty()) {
    throw swarmflow::config_error("simulate needs --config or --preset");
  }
  if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
  if (threads > 0) {
    cfg.threads = threads;
  } else if (const char* env = std::getenv("SWARMFLOW_THREADS")) {
    int t = std::atoi(env);
    if (t > 0) cfg.threads = t;
  }
  swarmflow::config::validate(cfg);

  swarmflow::run::RunResult result = swarmflow::run::run(cfg, out_dir);
  std::printf("wrote %s\n", result.timeseries_path.c_str());
  std::printf("wrote %s\n", result.summary_path.c_str());
  const nlohmann::json& fits = result.summary["fits"];
  for (auto it = fits.begin(); it != fits.end(); ++it) {
    if (it.value().is_null()) {
      std::printf("fit %-16s (window too short)\n", it.key().c_str());
    } else {
      std::printf("fit %-16s rate=%+.6f  r2=%.6f\n", it.key().c_str(), it.value()["rate"].get<double>(),
                  it.value()["r_squared"].get<double>());
    }
  }
  std::printf("balance residual (full window): %.3e\n",
              result.summary["balance"]["full"]["residual_rel"].get<double>());
  return exit_ok;
}

int run_heat_kernel(int dim, const std::string& p_list, const std::string& t_grid, double tolerance,
                    const std::string& out_path) {
  std::vector<double> ps = parse_list(p_list);
  std::vector<double> ts = parse_list(t_grid);
  swarmflow::heat_kernel::BoundReport report = swarmflow::heat_kernel::bound_check(ts, ps, dim, tolerance);

  std::ofstream out(out_path);
  if (!out) throw swarmflow::io_error("cannot open " + out_path);
  out << "quantity,t,p,measured,envelope,ratio\n";
  char buf[256];
  for (const auto& row : report.rows) {
    std::snprintf(buf, sizeof(buf), "%s,%.17g,%s,%.17g,%.17g,%.17g\n", row.quantity.c_str(), row.t,
                  order_text(row.p).c_str(), row.measured, row.envelope, row.ratio);
    out << buf;
  }
  if (!out.good()) throw swarmflow::io_error("write failed: " + out_path);

  for (const auto& s : report.per_p) {
    std::string label = order_text(s.p);
    std::printf("p=%-10s sup_ratio dist=%.4f grad=%.4f  trend dist=%+.4f grad=%+.4f  bounded=%s\n", label.c_str(),
                s.sup_ratio_distance, s.sup_ratio_gradient, s.trend_distance, s.trend_gradient,
                s.bounded ? "yes" : "no");
    if (s.fitted_rate_distance > 0.0)
      std::printf("p=%-10s fitted large-t decay rate=%.4f (expected about %.4f)\n", label.c_str(),
                  s.fitted_rate_distance, std::isinf(s.p) ? 1.0 : 1.0 - 1.0 / s.p);
  }
  std::printf("wrote %s\n", out_path.c_str());
  return exit_ok;
}

int run_wasserstein(const std::string& a_path, const std::string& b_path, const std::string& p_text) {
  double p = parse_order(p_text);
  swarmflow::transport::WeightedSample a = swarmflow::transport::load_atoms(a_path);
  swarmflow::transport::WeightedSample b = swarmflow::transport::load_atoms(b_path);
  double w = swarmflow::transport::wasserstein_exact(a, b, p);
  std::printf("%.12g\n", w);
  return exit_ok;
}

int run_fit(const std::string& csv_path, const std::string& column, double t_min) {
  std::ifstream in(csv_path);
  if (!in) throw swarmflow::io_error("cannot open " + csv_path);
  std::string line;
  if (!std::getline(in, line)) throw swarmflow::io_error("empty file: " + csv_path);

  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  std::size_t t_col = header.size(), y_col = header.size();
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "t") t_col = i;
    if (header[i] == column) y_col = i;
  }
  if (t_col == header.size()) throw swarmflow::config_error("no t column in " + csv_path);
  if (y_col == header.size()) throw swarmflow::config_error("no column named " + column);

  std::vector<double> ts, ys;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != header.size()) throw swarmflow::config_error("ragged csv row in " + csv_path);
    ts.push_back(std::stod(cells[t_col]));
    ys.push_back(std::stod(cells[y_col]));
  }
  swarmflow::diagnostics::FitResult fit = swarmflow::diagnostics::fit_decay_rate(ts, ys, t_min);
  std::printf("column=%s rate=%.10g r_squared=%.10g\n", column.c_str(), fit.rate, fit.r_squared);
  return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"swarmflow: coupled alignment-fluid simulation laboratory"};
  app.require_subcommand(1);
  app.set_version_flag("--version", swarmflow::version_string());

  std::string config_path, preset_name, out_dir = "out";
  long long seed = -1;
  int threads = 0;
  CLI::App* simulate = app.add_subcommand("simulate", "run a configured simulation");
  simulate->add_option("--config", config_path, "JSON config file");
  simulate->add_option("--preset", preset_name, "named preset");
  simulate->add_option("--out", out_dir, "output directory");
  simulate->add_option("--seed", seed, "override the RNG seed");
  simulate->add_option("--threads", threads, "worker thread count");

  int hk_dim = 2;
  std::string hk_p = "1,2,4,inf", hk_t = "0.25,0.5,1,2,4,8", hk_out = "heat_kernel.csv";
  double hk_tol = 1e-16;
  CLI::App* hk = app.add_subcommand("heat-kernel", "torus heat kernel decay report");
  hk->add_option("--d", hk_dim, "dimension (2 or 3)");
  hk->add_option("--p-list", hk_p, "comma-separated Lebesgue orders, inf allowed");
  hk->add_option("--t-grid", hk_t, "comma-separated times");
  hk->add_option("--tolerance", hk_tol, "series truncation tolerance");
  hk->add_option("--out", hk_out, "CSV output path");

  std::string w_a, w_b, w_p = "1";
  CLI::App* wass = app.add_subcommand("wasserstein", "exact transport distance between atom files");
  wass->add_option("--a", w_a, "first atom file")->required();
  wass->add_option("--b", w_b, "second atom file")->required();
  wass->add_option("--p", w_p, "order, inf allowed");

  std::string fit_csv, fit_column;
  double fit_tmin = 0.0;
  CLI::App* fit = app.add_subcommand("fit", "fit an exponential decay rate to a CSV column");
  fit->add_option("--csv", fit_csv, "timeseries CSV")->required();
  fit->add_option("--column", fit_column, "column name")->required();
  fit->add_option("--tmin", fit_tmin, "window start time");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return exit_config;
  }

  try {
    if (simulate->parsed()) return run_simulate(config_path, preset_name, out_dir, seed, threads);
    if (hk->parsed()) return run_heat_kernel(hk_dim, hk_p, hk_t, hk_tol, hk_out);
    if (wass->parsed()) return run_wasserstein(w_a, w_b, w_p);
    if (fit->parsed()) return run_fit(fit_csv, fit_column, fit_tmin);
  } catch (const swarmflow::blowup_error& e) {
    std::fprintf(stderr, "blow-up: %s\n", e.what());
    return exit_blowup;
  } catch (const swarmflow::io_error& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return exit_io;
  } catch (const swarmflow::config_error& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return exit_config;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return exit_config;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return exit_ok;
}
