#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "swarmflow/kinetic.hpp"

namespace swarmflow::transport {

using kinetic::ParticleEnsemble;

struct Atom {
  Vec x = vzero();
  Vec v = vzero();
  double w = 0.0;
};

struct WeightedSample {
  int dim = 2;
  std::vector<Atom> atoms;

  double mass() const {
    double m = 0.0;
    for (const Atom& a : atoms) m += a.w;
    return m;
  }
};

inline constexpr std::size_t atom_budget = 512;

// Ground metric: flat torus in position, Euclidean in velocity.
inline double phase_distance(const Atom& a, const Atom& b, int dim) {
  double acc = 0.0;
  for (int k = 0; k < dim; ++k) {
    double dx = std::abs(a.x[k] - b.x[k]);
    dx = std::min(dx, two_pi - dx);
    double dv = a.v[k] - b.v[k];
    acc += dx * dx + dv * dv;
  }
  return std::sqrt(acc);
}

namespace detail {

// Successive shortest augmenting paths with node potentials on the dense
// bipartite transportation graph; costs must be nonnegative.
inline double min_cost_transport(const std::vector<std::vector<double>>& cost, std::vector<double> supply,
                                 std::vector<double> demand) {
  const std::size_t na = supply.size();
  const std::size_t nb = demand.size();
  const std::size_t nodes = na + nb;
  const double inf = std::numeric_limits<double>::infinity();

  double total_supply = 0.0;
  for (double s : supply) total_supply += s;
  const double mass_eps = 1e-13 * std::max(total_supply, 1.0);

  std::vector<std::vector<double>> flow(na, std::vector<double>(nb, 0.0));
  std::vector<double> pot(nodes, 0.0);
  std::vector<double> dist(nodes, 0.0);
  std::vector<int> parent(nodes, -1);
  std::vector<char> done(nodes, 0);

  double remaining = total_supply;
  const std::size_t max_rounds = 64 * (nodes + 2);
  std::size_t rounds = 0;
  while (remaining > mass_eps) {
    if (++rounds > max_rounds) throw std::runtime_error("optimal transport failed to converge");

    std::fill(dist.begin(), dist.end(), inf);
    std::fill(parent.begin(), parent.end(), -1);
    std::fill(done.begin(), done.end(), 0);
    for (std::size_t i = 0; i < na; ++i)
      if (supply[i] > mass_eps) dist[i] = 0.0;

    for (std::size_t round = 0; round < nodes; ++round) {
      std::size_t best = nodes;
      double bd = inf;
      for (std::size_t v = 0; v < nodes; ++v)
        if (!done[v] && dist[v] < bd) {
          bd = dist[v];
          best = v;
        }
      if (best == nodes) break;
      done[best] = 1;
      if (best < na) {
        const std::size_t i = best;
        for (std::size_t j = 0; j < nb; ++j) {
          double rc = cost[i][j] + pot[i] - pot[na + j];
          if (rc < 0.0) rc = 0.0;  // clamp rounding of the slackness invariant
          if (dist[i] + rc < dist[na + j]) {
            dist[na + j] = dist[i] + rc;
            parent[na + j] = static_cast<int>(i);
          }
        }
      } else {
        const std::size_t j = best - na;
        for (std::size_t i = 0; i < na; ++i) {
          if (flow[i][j] <= 0.0) continue;
          double rc = -cost[i][j] + pot[na + j] - pot[i];
          if (rc < 0.0) rc = 0.0;
          if (dist[na + j] + rc < dist[i]) {
            dist[i] = dist[na + j] + rc;
            parent[i] = static_cast<int>(na + j);
          }
        }
      }
    }

    std::size_t target = nodes;
    double best = inf;
    for (std::size_t j = 0; j < nb; ++j)
      if (demand[j] > mass_eps && dist[na + j] < best) {
        best = dist[na + j];
        target = na + j;
      }
    if (target == nodes) throw std::runtime_error("optimal transport: no augmenting path");

    for (std::size_t v = 0; v < nodes; ++v)
      if (dist[v] < inf) pot[v] += std::min(dist[v], best);

    double push = demand[target - na];
    std::size_t v = target;
    while (true) {
      int pv = parent[v];
      if (pv < 0) {
        push = std::min(push, supply[v]);
        break;
      }
      if (v >= na)
        push = std::min(push, remaining);  // forward arcs are uncapacitated
      else
        push = std::min(push, flow[v][static_cast<std::size_t>(pv) - na]);
      v = static_cast<std::size_t>(pv);
    }

    v = target;
    while (true) {
      int pv = parent[v];
      if (pv < 0) {
        supply[v] -= push;
        break;
      }
      if (v >= na)
        flow[static_cast<std::size_t>(pv)][v - na] += push;
      else
        flow[v][static_cast<std::size_t>(pv) - na] -= push;
      v = static_cast<std::size_t>(pv);
    }
    demand[target - na] -= push;
    remaining -= push;
  }

  double total = 0.0;
  for (std::size_t i = 0; i < na; ++i)
    for (std::size_t j = 0; j < nb; ++j) total += flow[i][j] * cost[i][j];
  return total;
}

struct Dinic {
  struct Edge {
    int to;
    double cap;
    std::size_t rev;
  };
  std::vector<std::vector<Edge>> g;
  std::vector<int> level;
  std::vector<std::size_t> it;
  double eps;

  Dinic(int n, double eps) : g(n), level(n), it(n), eps(eps) {}

  void add_edge(int a, int b, double cap) {
    g[a].push_back({b, cap, g[b].size()});
    g[b].push_back({a, 0.0, g[a].size() - 1});
  }

  bool bfs(int s, int t) {
    std::fill(level.begin(), level.end(), -1);
    std::vector<int> q{s};
    level[s] = 0;
    for (std::size_t h = 0; h < q.size(); ++h) {
      int v = q[h];
      for (const Edge& e : g[v])
        if (e.cap > eps && level[e.to] < 0) {
          level[e.to] = level[v] + 1;
          q.push_back(e.to);
        }
    }
    return level[t] >= 0;
  }

  double dfs(int v, int t, double f) {
    if (v == t) return f;
    for (std::size_t& i = it[v]; i < g[v].size(); ++i) {
      Edge& e = g[v][i];
      if (e.cap <= eps || level[e.to] != level[v] + 1) continue;
      double d = dfs(e.to, t, std::min(f, e.cap));
      if (d > eps) {
        e.cap -= d;
        g[e.to][e.rev].cap += d;
        return d;
      }
    }
    return 0.0;
  }

  double run(int s, int t) {
    double total = 0.0;
    while (bfs(s, t)) {
      std::fill(it.begin(), it.end(), 0);
      while (true) {
        double f = dfs(s, t, std::numeric_limits<double>::infinity());
        if (f <= eps) break;
        total += f;
      }
    }
    return total;
  }
};

// Smallest threshold whose admissible-edge graph can route all the mass.
inline double bottleneck_threshold(const std::vector<std::vector<double>>& dist,
                                   const std::vector<double>& supply, const std::vector<double>& demand,
                                   double total_mass) {
  const std::size_t na = supply.size();
  const std::size_t nb = demand.size();
  std::vector<double> values;
  values.reserve(na * nb);
  for (const auto& row : dist)
    for (double d : row) values.push_back(d);
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());

  const double eps = 1e-13 * std::max(total_mass, 1.0);
  auto feasible = [&](double theta) {
    Dinic net(static_cast<int>(na + nb) + 2, eps);
    const int s = static_cast<int>(na + nb);
    const int t = s + 1;
    for (std::size_t i = 0; i < na; ++i) net.add_edge(s, static_cast<int>(i), supply[i]);
    for (std::size_t j = 0; j < nb; ++j) net.add_edge(static_cast<int>(na + j), t, demand[j]);
    for (std::size_t i = 0; i < na; ++i)
      for (std::size_t j = 0; j < nb; ++j)
        if (dist[i][j] <= theta) net.add_edge(static_cast<int>(i), static_cast<int>(na + j), total_mass);
    return net.run(s, t) >= total_mass - 1e-9 * std::max(total_mass, 1.0);
  };

  std::size_t lo = 0, hi = values.size() - 1;
  while (lo < hi) {
    std::size_t mid = (lo + hi) / 2;
    if (feasible(values[mid]))
      hi = mid;
    else
      lo = mid + 1;
  }
  return values[lo];
}

}  // namespace detail

// Exact W_p between weighted atom clouds: raw transport cost^{1/p} carrying
// the total mass (matching the raw moment bounds), torus-in-x ground metric;
// p may be infinity (bottleneck value).
inline double wasserstein_exact(const WeightedSample& a, const WeightedSample& b, double p) {
  require(a.dim == b.dim, "wasserstein_exact: dimension mismatch");
  require(p >= 1.0, "wasserstein_exact: p must be >= 1");
  if (a.atoms.size() > atom_budget || b.atoms.size() > atom_budget)
    throw std::invalid_argument("wasserstein_exact: too many atoms (max 512); subsample first");

  const double ma = a.mass();
  const double mb = b.mass();
  if (std::abs(ma - mb) > 1e-9 * std::max({ma, mb, 1.0}))
    throw std::invalid_argument("wasserstein_exact: total masses differ");
  if (a.atoms.empty() && b.atoms.empty()) return 0.0;
  require(!a.atoms.empty() && !b.atoms.empty(), "wasserstein_exact: one sample is empty");
  for (const Atom& at : a.atoms) require(at.w >= 0.0, "wasserstein_exact: negative weight");
  for (const Atom& at : b.atoms) require(at.w >= 0.0, "wasserstein_exact: negative weight");

  const std::size_t na = a.atoms.size();
  const std::size_t nb = b.atoms.size();
  std::vector<std::vector<double>> dist(na, std::vector<double>(nb, 0.0));
  double dmax = 0.0;
  for (std::size_t i = 0; i < na; ++i)
    for (std::size_t j = 0; j < nb; ++j) {
      dist[i][j] = phase_distance(a.atoms[i], b.atoms[j], a.dim);
      dmax = std::max(dmax, dist[i][j]);
    }
  if (dmax == 0.0) return 0.0;

  std::vector<double> supply(na), demand(nb);
  for (std::size_t i = 0; i < na; ++i) supply[i] = a.atoms[i].w;
  const double rescale = ma / mb;  // absorb the allowed mass tolerance
  for (std::size_t j = 0; j < nb; ++j) demand[j] = b.atoms[j].w * rescale;

  if (std::isinf(p)) return detail::bottleneck_threshold(dist, supply, demand, ma);

  std::vector<std::vector<double>> cost(na, std::vector<double>(nb, 0.0));
  for (std::size_t i = 0; i < na; ++i)
    for (std::size_t j = 0; j < nb; ++j) cost[i][j] = std::pow(dist[i][j] / dmax, p);
  double total = detail::min_cost_transport(cost, supply, demand);
  if (total < 0.0) total = 0.0;
  return dmax * std::pow(total, 1.0 / p);
}

inline WeightedSample from_ensemble(const ParticleEnsemble& ens) {
  WeightedSample s;
  s.dim = ens.dim;
  s.atoms.resize(ens.N);
  for (std::size_t i = 0; i < ens.N; ++i) {
    for (int k = 0; k < ens.dim; ++k) {
      s.atoms[i].x[k] = ens.x[i * ens.dim + k];
      s.atoms[i].v[k] = ens.v[i * ens.dim + k];
    }
    s.atoms[i].w = ens.w[i];
  }
  return s;
}

// Uniform draw of k distinct particles, reweighted equally so the subsample
// carries the full mass.
inline WeightedSample subsample(const ParticleEnsemble& ens, std::size_t k, Rng& rng) {
  require(k >= 1 && k <= ens.N, "subsample: need 1 <= k <= N");
  std::vector<std::size_t> idx(ens.N);
  for (std::size_t i = 0; i < ens.N; ++i) idx[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + rng.index(ens.N - i);
    std::swap(idx[i], idx[j]);
  }
  WeightedSample s;
  s.dim = ens.dim;
  s.atoms.resize(k);
  const double w = ens.mass() / static_cast<double>(k);
  for (std::size_t i = 0; i < k; ++i) {
    for (int kk = 0; kk < ens.dim; ++kk) {
      s.atoms[i].x[kk] = ens.x[idx[i] * ens.dim + kk];
      s.atoms[i].v[kk] = ens.v[idx[i] * ens.dim + kk];
    }
    s.atoms[i].w = w;
  }
  return s;
}

// The push-forward target: same spatial marginal, all velocities pinned.
inline WeightedSample monokinetic(const WeightedSample& s, const Vec& v) {
  WeightedSample out = s;
  for (Atom& a : out.atoms)
    for (int k = 0; k < s.dim; ++k) a.v[k] = v[k];
  return out;
}

// Atom files: one atom per line, "w x_1..x_d v_1..v_d", blank lines and
// #-comments skipped; d inferred from the first row.
inline WeightedSample load_atoms(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open atom file: " + path);
  WeightedSample s;
  s.dim = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream row(line);
    std::vector<double> cols;
    double val;
    while (row >> val) cols.push_back(val);
    if (!row.eof())
      throw std::invalid_argument("atom file " + path + ": malformed line " + std::to_string(lineno));
    if (cols.empty()) continue;
    if ((cols.size() < 5) || (cols.size() % 2 == 0))
      throw std::invalid_argument("atom file " + path + ": line " + std::to_string(lineno) +
                                  " needs columns w x_1..x_d v_1..v_d with d in {2,3}");
    int dim = static_cast<int>((cols.size() - 1) / 2);
    if (dim > 3)
      throw std::invalid_argument("atom file " + path + ": line " + std::to_string(lineno) +
                                  " implies dimension above 3");
    if (s.dim == 0) s.dim = dim;
    if (dim != s.dim)
      throw std::invalid_argument("atom file " + path + ": inconsistent column count at line " +
                                  std::to_string(lineno));
    Atom a;
    a.w = cols[0];
    if (!(a.w >= 0.0))
      throw std::invalid_argument("atom file " + path + ": negative weight at line " + std::to_string(lineno));
    for (int k = 0; k < dim; ++k) {
      a.x[k] = wrap_coordinate(cols[1 + k]);
      a.v[k] = cols[1 + dim + k];
    }
    for (double c : cols)
      if (!std::isfinite(c))
        throw std::invalid_argument("atom file " + path + ": non-finite value at line " +
                                    std::to_string(lineno));
    s.atoms.push_back(a);
  }
  if (s.atoms.empty()) throw std::invalid_argument("atom file " + path + ": no atoms");
  return s;
}

}  // namespace swarmflow::transport
