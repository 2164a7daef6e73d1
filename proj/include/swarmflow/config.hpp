#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "swarmflow/kinetic.hpp"

namespace swarmflow::config {

using json = nlohmann::json;

inline constexpr int schema_version = 1;

struct PsiConfig {
  double kappa0 = 1.0;
  double kappa1 = 0.0;

  kinetic::CommunicationWeight weight() const { return {kappa0, kappa1}; }
};

struct FluidInitConfig {
  std::string kind = "zero";  // zero | taylor_green | random_solenoidal
  double amplitude = 1.0;
  int max_mode = 2;
};

struct ParticleInitConfig {
  std::string x_sampler = "uniform";
  Vec v_mean = vzero();
  double v_std = 1.0;
  bool center_velocities = false;
  bool balance_momentum = false;
};

struct DiagnosticsConfig {
  int cadence = 10;
  std::vector<double> p_list = {1.0, 2.0};
  std::vector<double> q_list = {2.0};
  int histogram_bins = 16;
  std::size_t wasserstein_subsample = 0;
};

struct OutputConfig {
  std::string timeseries = "timeseries.csv";
  std::string summary = "summary.json";
};

struct SimConfig {
  int dim = 2;
  int n = 64;
  std::size_t particles = 1000;
  double dt = 1e-3;
  double t_final = 1.0;
  double mu = 1.0;
  double M0 = 1.0;
  PsiConfig psi;
  ParticleInitConfig init;
  FluidInitConfig fluid;
  kinetic::Toggles toggles;
  DiagnosticsConfig diagnostics;
  std::uint64_t seed = 1;
  int threads = 1;
  OutputConfig output;
};

namespace detail {

inline void fail(const std::string& msg) { throw config_error(msg); }

inline void check_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) fail("config: " + (path.empty() ? std::string("top level") : path) + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known) fail("config: unknown key '" + (path.empty() ? it.key() : path + "." + it.key()) + "'");
  }
}

inline double number_at(const json& j, const std::string& path) {
  if (j.is_string() && j.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
  if (!j.is_number()) fail("config: " + path + " must be a number (or \"inf\")");
  return j.get<double>();
}

template <typename T>
void assign(const json& j, const char* key, const std::string& path, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    fail("config: bad value for '" + path + key + "'");
  }
}

inline void assign_vec(const json& j, const char* key, const std::string& path, int dim, Vec& out) {
  if (!j.contains(key)) return;
  const json& arr = j.at(key);
  if (!arr.is_array() || static_cast<int>(arr.size()) != dim)
    fail("config: '" + path + key + "' must be an array of length dim");
  for (int k = 0; k < dim; ++k) out[k] = number_at(arr[k], path + key);
}

inline void assign_plist(const json& j, const char* key, const std::string& path, std::vector<double>& out) {
  if (!j.contains(key)) return;
  const json& arr = j.at(key);
  if (!arr.is_array() || arr.empty()) fail("config: '" + path + key + "' must be a non-empty array");
  out.clear();
  for (const json& e : arr) out.push_back(number_at(e, path + key));
}

}  // namespace detail

inline void validate(const SimConfig& c) {
  using detail::fail;
  if (c.dim != 2 && c.dim != 3) fail("config: dim must be 2 or 3");
  if (c.n < 4 || c.n % 2 != 0) fail("config: n must be even and >= 4");
  if (!(c.dt > 0.0)) fail("config: dt must be positive");
  if (!(c.t_final >= c.dt)) fail("config: t_final must be at least dt");
  if (!(c.mu > 0.0)) fail("config: mu must be positive");
  if (!(c.M0 > 0.0)) fail("config: M0 must be positive");
  if (!std::isfinite(c.psi.kappa0) || !std::isfinite(c.psi.kappa1)) fail("config: psi coefficients must be finite");
  if (c.init.x_sampler != "uniform") fail("config: init.x_sampler must be 'uniform'");
  if (!(c.init.v_std >= 0.0)) fail("config: init.v_std must be nonnegative");
  if (c.fluid.kind != "zero" && c.fluid.kind != "taylor_green" && c.fluid.kind != "random_solenoidal")
    fail("config: fluid.kind must be one of zero, taylor_green, random_solenoidal");
  if (c.fluid.kind == "taylor_green" && c.dim != 2) fail("config: fluid.kind taylor_green needs dim=2");
  if (c.fluid.kind == "random_solenoidal" && (c.fluid.max_mode < 1 || 3 * c.fluid.max_mode >= c.n))
    fail("config: fluid.max_mode must lie inside the dealiased band");
  if (!std::isfinite(c.fluid.amplitude)) fail("config: fluid.amplitude must be finite");
  if (c.diagnostics.cadence < 1) fail("config: diagnostics.cadence must be >= 1");
  for (double p : c.diagnostics.p_list)
    if (!(p >= 1.0)) fail("config: diagnostics.p_list entries must be >= 1");
  for (double q : c.diagnostics.q_list)
    if (!(q >= 1.0) || std::isinf(q)) fail("config: diagnostics.q_list entries must be finite and >= 1");
  if (c.diagnostics.histogram_bins < 1 || c.diagnostics.histogram_bins > 1024)
    fail("config: diagnostics.histogram_bins must lie in [1, 1024]");
  if (c.diagnostics.wasserstein_subsample > 512)
    fail("config: diagnostics.wasserstein_subsample is capped at 512");
  if (c.particles > 0 && c.diagnostics.wasserstein_subsample > c.particles)
    fail("config: diagnostics.wasserstein_subsample cannot exceed particles");
  if (c.particles == 0 && c.diagnostics.wasserstein_subsample > 0)
    fail("config: diagnostics.wasserstein_subsample needs particles");
  if (c.threads < 1) fail("config: threads must be >= 1");
  if (c.output.timeseries.empty() || c.output.summary.empty()) fail("config: output names must be non-empty");
}

inline SimConfig parse_config(const json& j, SimConfig base = SimConfig{}) {
  using namespace detail;
  check_keys(j, "", {"schema_version", "dim", "n", "particles", "dt", "t_final", "mu", "M0", "psi", "init",
                     "fluid", "toggles", "diagnostics", "seed", "threads", "output"});
  if (j.contains("schema_version")) {
    int v = 0;
    assign(j, "schema_version", "", v);
    if (v != schema_version) fail("config: unsupported schema_version");
  }
  SimConfig c = base;
  assign(j, "dim", "", c.dim);
  assign(j, "n", "", c.n);
  if (j.contains("particles")) {
    double v = number_at(j.at("particles"), "particles");
    if (v < 0.0 || v != std::floor(v) || v > 1e9) fail("config: particles must be an integer in [0, 1e9]");
    c.particles = static_cast<std::size_t>(v);
  }
  assign(j, "dt", "", c.dt);
  assign(j, "t_final", "", c.t_final);
  assign(j, "mu", "", c.mu);
  assign(j, "M0", "", c.M0);
  if (j.contains("seed")) {
    double v = number_at(j.at("seed"), "seed");
    if (v < 0.0 || v != std::floor(v)) fail("config: seed must be a nonnegative integer");
    c.seed = static_cast<std::uint64_t>(v);
  }
  assign(j, "threads", "", c.threads);

  if (j.contains("psi")) {
    const json& p = j.at("psi");
    check_keys(p, "psi", {"kappa0", "kappa1"});
    assign(p, "kappa0", "psi.", c.psi.kappa0);
    assign(p, "kappa1", "psi.", c.psi.kappa1);
  }
  if (j.contains("init")) {
    const json& p = j.at("init");
    check_keys(p, "init", {"x_sampler", "v_mean", "v_std", "center_velocities", "balance_momentum"});
    assign(p, "x_sampler", "init.", c.init.x_sampler);
    if (c.dim != 2 && c.dim != 3) fail("config: dim must be 2 or 3");
    assign_vec(p, "v_mean", "init.", c.dim, c.init.v_mean);
    assign(p, "v_std", "init.", c.init.v_std);
    assign(p, "center_velocities", "init.", c.init.center_velocities);
    assign(p, "balance_momentum", "init.", c.init.balance_momentum);
  }
  if (j.contains("fluid")) {
    const json& p = j.at("fluid");
    check_keys(p, "fluid", {"kind", "amplitude", "max_mode"});
    assign(p, "kind", "fluid.", c.fluid.kind);
    assign(p, "amplitude", "fluid.", c.fluid.amplitude);
    assign(p, "max_mode", "fluid.", c.fluid.max_mode);
  }
  if (j.contains("toggles")) {
    const json& p = j.at("toggles");
    check_keys(p, "toggles", {"drag", "alignment", "freeze_fluid"});
    assign(p, "drag", "toggles.", c.toggles.drag);
    assign(p, "alignment", "toggles.", c.toggles.alignment);
    assign(p, "freeze_fluid", "toggles.", c.toggles.freeze_fluid);
  }
  if (j.contains("diagnostics")) {
    const json& p = j.at("diagnostics");
    check_keys(p, "diagnostics",
               {"cadence", "p_list", "q_list", "histogram_bins", "wasserstein_subsample"});
    assign(p, "cadence", "diagnostics.", c.diagnostics.cadence);
    assign_plist(p, "p_list", "diagnostics.", c.diagnostics.p_list);
    assign_plist(p, "q_list", "diagnostics.", c.diagnostics.q_list);
    assign(p, "histogram_bins", "diagnostics.", c.diagnostics.histogram_bins);
    if (p.contains("wasserstein_subsample")) {
      double v = number_at(p.at("wasserstein_subsample"), "diagnostics.wasserstein_subsample");
      if (v < 0.0 || v != std::floor(v)) fail("config: diagnostics.wasserstein_subsample must be a nonnegative integer");
      c.diagnostics.wasserstein_subsample = static_cast<std::size_t>(v);
    }
  }
  if (j.contains("output")) {
    const json& p = j.at("output");
    check_keys(p, "output", {"timeseries", "summary"});
    assign(p, "timeseries", "output.", c.output.timeseries);
    assign(p, "summary", "output.", c.output.summary);
  }
  validate(c);
  return c;
}

inline SimConfig load_config(const std::string& path, SimConfig base = SimConfig{}) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open config file: " + path);
  json j;
  try {
    j = json::parse(in, nullptr, true, true);  // allow comments
  } catch (const json::exception& e) {
    throw config_error("config: " + path + " is not valid JSON: " + e.what());
  }
  return parse_config(j, std::move(base));
}

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"aligned",     "misaligned_small_mass",
                                                 "pure_drag",   "pure_alignment",
                                                 "stokes3d",    "taylor_green_fluid_only"};
  return names;
}

inline SimConfig preset(const std::string& name) {
  SimConfig c;
  if (name == "pure_alignment") {
    c.dim = 2;
    c.n = 32;
    c.particles = 1000;
    c.dt = 1e-3;
    c.t_final = 5.0;
    c.M0 = 1.0;
    c.psi = {1.0, 0.0};
    c.toggles = {false, true, true};
    c.fluid.kind = "zero";
    c.init.v_mean = vzero();
    c.init.v_std = 1.0;
    c.init.center_velocities = true;
    c.diagnostics.cadence = 5;
    c.diagnostics.p_list = {1.0, 2.0};
  } else if (name == "pure_drag") {
    c.dim = 2;
    c.n = 32;
    c.particles = 1000;
    c.dt = 1e-3;
    c.t_final = 5.0;
    c.M0 = 1.0;
    c.psi = {0.0, 0.0};
    c.toggles = {true, false, true};
    c.fluid.kind = "zero";
    c.init.v_mean = vzero();
    c.init.v_std = 1.0;
    c.init.center_velocities = true;
    c.diagnostics.cadence = 5;
  } else if (name == "taylor_green_fluid_only") {
    c.dim = 2;
    c.n = 64;
    c.particles = 0;
    c.dt = 1e-3;
    c.t_final = 1.0;
    c.toggles = {false, false, false};
    c.fluid.kind = "taylor_green";
    c.fluid.amplitude = 1.0;
    c.diagnostics.cadence = 10;
  } else if (name == "aligned") {
    c.dim = 2;
    c.n = 64;
    c.particles = 20000;
    c.dt = 2e-3;
    c.t_final = 10.0;
    c.M0 = 1.0;
    c.psi = {1.0, 0.0};
    c.toggles = {true, true, false};
    c.fluid.kind = "taylor_green";
    c.fluid.amplitude = 0.5;
    c.init.v_mean = {0.1, 0.0, 0.0};
    c.init.v_std = 0.5;
    c.init.center_velocities = true;
    c.init.balance_momentum = true;
    c.diagnostics.cadence = 10;
    c.diagnostics.p_list = {1.0, 2.0};
    c.diagnostics.q_list = {2.0};
    c.diagnostics.wasserstein_subsample = 256;
  } else if (name == "misaligned_small_mass") {
    c.dim = 2;
    c.n = 64;
    c.particles = 20000;
    c.dt = 2e-3;
    c.t_final = 10.0;
    c.M0 = 0.1;
    c.psi = {0.0, -0.05};
    c.toggles = {true, true, false};
    c.fluid.kind = "taylor_green";
    c.fluid.amplitude = 0.5;
    c.init.v_mean = {0.1, 0.0, 0.0};
    c.init.v_std = 0.5;
    c.init.center_velocities = true;
    c.init.balance_momentum = true;
    c.diagnostics.cadence = 10;
  } else if (name == "stokes3d") {
    c.dim = 3;
    c.n = 32;
    c.particles = 10000;
    c.dt = 2e-3;
    c.t_final = 5.0;
    c.M0 = 1.0;
    c.psi = {1.0, 0.0};
    c.toggles = {true, true, false};
    c.fluid.kind = "random_solenoidal";
    c.fluid.amplitude = 0.1;
    c.fluid.max_mode = 2;
    c.init.v_mean = {0.1, 0.0, 0.0};
    c.init.v_std = 0.5;
    c.init.center_velocities = true;
    c.init.balance_momentum = true;
    c.diagnostics.cadence = 10;
  } else {
    std::string names;
    for (const std::string& s : preset_names()) names += (names.empty() ? "" : ", ") + s;
    detail::fail("unknown preset '" + name + "'; available: " + names);
  }
  validate(c);
  return c;
}

inline json p_to_json(double p) {
  if (std::isinf(p)) return json("inf");
  return json(p);
}

inline json config_echo(const SimConfig& c) {
  json j;
  j["schema_version"] = schema_version;
  j["dim"] = c.dim;
  j["n"] = c.n;
  j["particles"] = c.particles;
  j["dt"] = c.dt;
  j["t_final"] = c.t_final;
  j["mu"] = c.mu;
  j["M0"] = c.M0;
  j["psi"] = {{"kappa0", c.psi.kappa0},
              {"kappa1", c.psi.kappa1},
              {"psi_min", c.psi.weight().psi_min(c.dim)},
              {"psi_max", c.psi.weight().psi_max(c.dim)}};
  json vm = json::array();
  for (int k = 0; k < c.dim; ++k) vm.push_back(c.init.v_mean[k]);
  j["init"] = {{"x_sampler", c.init.x_sampler},
               {"v_mean", vm},
               {"v_std", c.init.v_std},
               {"center_velocities", c.init.center_velocities},
               {"balance_momentum", c.init.balance_momentum}};
  j["fluid"] = {{"kind", c.fluid.kind}, {"amplitude", c.fluid.amplitude}, {"max_mode", c.fluid.max_mode}};
  j["toggles"] = {{"drag", c.toggles.drag},
                  {"alignment", c.toggles.alignment},
                  {"freeze_fluid", c.toggles.freeze_fluid}};
  json pl = json::array();
  for (double p : c.diagnostics.p_list) pl.push_back(p_to_json(p));
  json ql = json::array();
  for (double q : c.diagnostics.q_list) ql.push_back(q);
  j["diagnostics"] = {{"cadence", c.diagnostics.cadence},
                      {"p_list", pl},
                      {"q_list", ql},
                      {"histogram_bins", c.diagnostics.histogram_bins},
                      {"wasserstein_subsample", c.diagnostics.wasserstein_subsample}};
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["output"] = {{"timeseries", c.output.timeseries}, {"summary", c.output.summary}};
  return j;
}

}  // namespace swarmflow::config
