#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <utility>

#include "swarmflow/fluid.hpp"
#include "swarmflow/spectral.hpp"

namespace swarmflow::kinetic {

using spectral::GridField;
using spectral::SpectralField;

struct ParticleEnsemble {
  int dim = 2;
  std::size_t N = 0;
  std::vector<double> x;  // N * dim, particle-major, wrapped into [0, 2pi)
  std::vector<double> v;  // N * dim
  std::vector<double> w;  // N, nonnegative, constant over time

  static ParticleEnsemble empty(int dim, std::size_t N) {
    ParticleEnsemble e;
    e.dim = dim;
    e.N = N;
    e.x.assign(N * static_cast<std::size_t>(dim), 0.0);
    e.v.assign(N * static_cast<std::size_t>(dim), 0.0);
    e.w.assign(N, 0.0);
    return e;
  }

  double mass() const {
    double m = 0.0;
    for (double wi : w) m += wi;
    return m;
  }

  Vec position(std::size_t i) const {
    Vec p = vzero();
    for (int k = 0; k < dim; ++k) p[k] = x[i * dim + k];
    return p;
  }

  Vec velocity(std::size_t i) const {
    Vec p = vzero();
    for (int k = 0; k < dim; ++k) p[k] = v[i * dim + k];
    return p;
  }
};

// psi(x) = kappa0 + kappa1 sum_k cos(x_k): even, C-infinity, band-limited,
// with range [kappa0 - d|kappa1|, kappa0 + d|kappa1|].
struct CommunicationWeight {
  double kappa0 = 1.0;
  double kappa1 = 0.0;

  double psi_min(int dim) const { return kappa0 - dim * std::abs(kappa1); }
  double psi_max(int dim) const { return kappa0 + dim * std::abs(kappa1); }

  double operator()(const Vec& r, int dim) const {
    double s = 0.0;
    for (int k = 0; k < dim; ++k) s += std::cos(r[k]);
    return kappa0 + kappa1 * s;
  }

  bool vanishes() const { return kappa0 == 0.0 && kappa1 == 0.0; }

  GridField grid(int dim, int n) const {
    GridField g = GridField::zeros(dim, n, 1);
    const std::size_t total = g.points();
    for (std::size_t p = 0; p < total; ++p) {
      auto idx = spectral::unflatten(p, dim, n);
      double s = 0.0;
      for (int k = 0; k < dim; ++k) s += std::cos(spectral::grid_coord(idx[k], n));
      g.data[p] = kappa0 + kappa1 * s;
    }
    return g;
  }
};

namespace detail {

struct CicStencil {
  std::size_t corner[8];
  double weight[8];
  int count;
};

// Multilinear (cloud-in-cell) stencil of a position: 2^d corners with tensor
// weights that sum to one.
inline CicStencil cic_stencil(const double* xi, int dim, int n) {
  CicStencil st;
  st.count = 1 << dim;
  int base[3] = {0, 0, 0};
  double frac[3] = {0.0, 0.0, 0.0};
  const double h = two_pi / n;
  for (int k = 0; k < dim; ++k) {
    double s = xi[k] / h;
    int i0 = static_cast<int>(std::floor(s));
    if (i0 >= n) i0 = n - 1;  // guards x == 2pi up to rounding
    if (i0 < 0) i0 = 0;
    base[k] = i0;
    frac[k] = s - i0;
  }
  for (int corner = 0; corner < st.count; ++corner) {
    std::array<int, 3> idx{0, 0, 0};
    double wgt = 1.0;
    for (int k = 0; k < dim; ++k) {
      int up = (corner >> k) & 1;
      idx[k] = (base[k] + up) % n;
      wgt *= up ? frac[k] : 1.0 - frac[k];
    }
    st.corner[corner] = spectral::flat_index(idx, dim, n);
    st.weight[corner] = wgt;
  }
  return st;
}

}  // namespace detail

// Deposits per-particle values (comps per particle) onto the grid as a
// density: cell sums are divided by the cell volume, so
// cellvol * sum_cells deposit = sum_i w_i value_i exactly.
inline GridField deposit(const ParticleEnsemble& ens, int n, const double* values, int comps) {
  GridField g = GridField::zeros(ens.dim, n, comps);
  const std::size_t total = g.points();
  const double inv_vol = 1.0 / g.cell_volume();
  for (std::size_t i = 0; i < ens.N; ++i) {
    auto st = detail::cic_stencil(&ens.x[i * ens.dim], ens.dim, n);
    for (int c = 0; c < comps; ++c) {
      double val = ens.w[i] * values[i * comps + c] * inv_vol;
      double* block = g.data.data() + static_cast<std::size_t>(c) * total;
      for (int corner = 0; corner < st.count; ++corner) block[st.corner[corner]] += val * st.weight[corner];
    }
  }
  return g;
}

// rho = deposited mass density, j = deposited momentum density rho u_f.
inline std::pair<GridField, GridField> deposit_moments(const ParticleEnsemble& ens, int n) {
  std::vector<double> ones(ens.N, 1.0);
  GridField rho = deposit(ens, n, ones.data(), 1);
  GridField j = deposit(ens, n, ens.v.data(), ens.dim);
  return {std::move(rho), std::move(j)};
}

// Multilinear interpolation with the same stencil as deposit, giving the
// exact adjointness sum_i w_i interp[g](x_i) = cellvol sum_cells g deposit(1).
inline std::vector<double> interpolate_field(const GridField& g, const ParticleEnsemble& ens) {
  require(g.dim == ens.dim, "interpolate_field: dimension mismatch");
  const std::size_t total = g.points();
  std::vector<double> out(ens.N * static_cast<std::size_t>(g.comps), 0.0);
  for (std::size_t i = 0; i < ens.N; ++i) {
    auto st = detail::cic_stencil(&ens.x[i * ens.dim], ens.dim, g.n);
    for (int c = 0; c < g.comps; ++c) {
      const double* block = g.data.data() + static_cast<std::size_t>(c) * total;
      double acc = 0.0;
      for (int corner = 0; corner < st.count; ++corner) acc += block[st.corner[corner]] * st.weight[corner];
      out[i * g.comps + c] = acc;
    }
  }
  return out;
}

// A = psi * j and B = psi * rho with torus-integral normalization, so that
// F_a(x, v) = A(x) - v B(x).
inline std::pair<GridField, GridField> alignment_fields(const GridField& rho, const GridField& j,
                                                        const CommunicationWeight& psi) {
  require(rho.dim == j.dim && rho.n == j.n, "alignment_fields: grid mismatch");
  GridField psig = psi.grid(rho.dim, rho.n);
  GridField A = spectral::spectral_convolve(psig, j);
  GridField B = spectral::spectral_convolve(psig, rho);
  return {std::move(A), std::move(B)};
}

namespace detail {

// Accumulates a_i = [A(x_i) - v_i B(x_i)] + [u(x_i) - v_i]; either bracket is
// dropped when its fields are null.
inline std::vector<double> acceleration(const ParticleEnsemble& ens, const GridField* A, const GridField* B,
                                        const GridField* u) {
  const int d = ens.dim;
  std::vector<double> a(ens.N * static_cast<std::size_t>(d), 0.0);
  if (A != nullptr && B != nullptr) {
    std::vector<double> Ai = interpolate_field(*A, ens);
    std::vector<double> Bi = interpolate_field(*B, ens);
    for (std::size_t i = 0; i < ens.N; ++i)
      for (int k = 0; k < d; ++k) a[i * d + k] += Ai[i * d + k] - ens.v[i * d + k] * Bi[i];
  }
  if (u != nullptr) {
    std::vector<double> Ui = interpolate_field(*u, ens);
    for (std::size_t i = 0; i < ens.N; ++i)
      for (int k = 0; k < d; ++k) a[i * d + k] += Ui[i * d + k] - ens.v[i * d + k];
  }
  return a;
}

inline bool all_finite(const std::vector<double>& xs) {
  for (double v : xs)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace detail

inline std::vector<double> particle_rhs(const ParticleEnsemble& ens, const GridField& A, const GridField& B,
                                        const GridField& u) {
  return detail::acceleration(ens, &A, &B, &u);
}

struct Toggles {
  bool drag = true;
  bool alignment = true;
  bool freeze_fluid = false;
};

// Reusable per-run scratch: the sampled kernel and, for frozen fluids, the
// grid velocity, so stages do not recompute static data.
struct StepWorkspace {
  std::optional<GridField> psi_grid;
  std::optional<GridField> frozen_u;
};

namespace detail {

struct StageForces {
  std::vector<double> a;
  std::optional<SpectralField> fluid_k;
};

inline StageForces stage_forces(const ParticleEnsemble& ens, const SpectralField& u_hat,
                                const GridField* psig, const Toggles& tg, const GridField* frozen_u) {
  StageForces out;
  const int n = u_hat.n;
  std::optional<GridField> rho, j;
  if (tg.alignment || (tg.drag && !tg.freeze_fluid)) {
    auto [r, jj] = deposit_moments(ens, n);
    rho = std::move(r);
    j = std::move(jj);
  }
  std::optional<GridField> A, B;
  if (tg.alignment && psig != nullptr) {
    A = spectral::spectral_convolve(*psig, *j);
    B = spectral::spectral_convolve(*psig, *rho);
  }
  std::optional<GridField> ugrid;
  const GridField* uptr = nullptr;
  if (tg.drag) {
    if (tg.freeze_fluid && frozen_u != nullptr) {
      uptr = frozen_u;
    } else {
      ugrid = spectral::inverse_transform(u_hat);
      uptr = &*ugrid;
    }
  }
  out.a = acceleration(ens, A ? &*A : nullptr, B ? &*B : nullptr, uptr);
  if (!tg.freeze_fluid) {
    if (tg.drag) {
      GridField src = fluid::compute_drag_source(*rho, *j, *uptr);
      SpectralField s_hat = fluid::prepare_source(src);
      out.fluid_k = fluid::fluid_rhs(u_hat, &s_hat);
    } else {
      out.fluid_k = fluid::fluid_rhs(u_hat, nullptr);
    }
  }
  return out;
}

}  // namespace detail

// One Heun step of the coupled system; particle stages and fluid stages share
// the same deposited sources, and the viscous factor is applied exactly.
inline std::pair<ParticleEnsemble, fluid::FluidState> step_coupled(const ParticleEnsemble& ens,
                                                                   const fluid::FluidState& fl,
                                                                   const CommunicationWeight& psi, double dt,
                                                                   const Toggles& tg,
                                                                   StepWorkspace* ws = nullptr) {
  require(dt > 0.0, "step_coupled: dt must be positive");
  require(ens.dim == fl.u.dim, "step_coupled: particle/fluid dimension mismatch");
  const int d = ens.dim;
  const int n = fl.u.n;
  const double t_next = fl.t + dt;
  if (!detail::all_finite(ens.x) || !detail::all_finite(ens.v) || !spectral::all_finite(fl.u))
    throw blowup_error(fl.t);

  StepWorkspace local;
  StepWorkspace* w = ws != nullptr ? ws : &local;
  if (tg.alignment && !w->psi_grid) w->psi_grid = psi.grid(d, n);
  if (tg.drag && tg.freeze_fluid && !w->frozen_u) w->frozen_u = spectral::inverse_transform(fl.u);
  const GridField* psig = w->psi_grid ? &*w->psi_grid : nullptr;
  const GridField* frozen = w->frozen_u ? &*w->frozen_u : nullptr;

  // Shapes are fixed by construction below, so a non-finite rejection raised
  // inside a stage is a numerical blow-up of this step.
  detail::StageForces s1;
  try {
    s1 = detail::stage_forces(ens, fl.u, psig, tg, frozen);
  } catch (const std::invalid_argument&) {
    throw blowup_error(t_next);
  }

  ParticleEnsemble pred = ens;
  for (std::size_t i = 0; i < ens.N; ++i)
    for (int k = 0; k < d; ++k) {
      pred.x[i * d + k] = wrap_coordinate(ens.x[i * d + k] + dt * ens.v[i * d + k]);
      pred.v[i * d + k] = ens.v[i * d + k] + dt * s1.a[i * d + k];
    }
  if (!detail::all_finite(pred.v) || !detail::all_finite(pred.x)) throw blowup_error(t_next);

  SpectralField upred = fl.u;
  if (s1.fluid_k) {
    for (std::size_t i = 0; i < upred.coeff.size(); ++i) upred.coeff[i] += dt * s1.fluid_k->coeff[i];
    upred = spectral::heat_semigroup_apply(upred, fl.mu * dt);
    if (!spectral::all_finite(upred)) throw blowup_error(t_next);
  }

  detail::StageForces s2;
  try {
    s2 = detail::stage_forces(pred, upred, psig, tg, frozen);
  } catch (const std::invalid_argument&) {
    throw blowup_error(t_next);
  }

  ParticleEnsemble next = ens;
  for (std::size_t i = 0; i < ens.N; ++i)
    for (int k = 0; k < d; ++k) {
      std::size_t a = i * d + k;
      next.x[a] = wrap_coordinate(ens.x[a] + 0.5 * dt * (ens.v[a] + pred.v[a]));
      next.v[a] = ens.v[a] + 0.5 * dt * (s1.a[a] + s2.a[a]);
    }

  fluid::FluidState fnext{fl.u, fl.mu, t_next};
  if (s1.fluid_k && s2.fluid_k) {
    SpectralField mid = fl.u;
    for (std::size_t i = 0; i < mid.coeff.size(); ++i) mid.coeff[i] += 0.5 * dt * s1.fluid_k->coeff[i];
    fnext.u = spectral::heat_semigroup_apply(mid, fl.mu * dt);
    for (std::size_t i = 0; i < fnext.u.coeff.size(); ++i) fnext.u.coeff[i] += 0.5 * dt * s2.fluid_k->coeff[i];
    fnext.u.solenoidal = true;
  }

  if (!detail::all_finite(next.v) || !spectral::all_finite(fnext.u)) throw blowup_error(t_next);
  return {std::move(next), std::move(fnext)};
}

// x_i i.i.d. uniform on the torus, v_i i.i.d. Gaussian(v_mean, v_std^2 I),
// w_i = M0/N. center_velocities shifts the draw so the weighted mean equals
// v_mean exactly rather than up to O(N^{-1/2}).
inline ParticleEnsemble sample_ensemble(int dim, std::size_t N, double m0, const Vec& v_mean, double v_std,
                                        bool center_velocities, Rng& rng) {
  require(m0 > 0.0, "sample_ensemble: total mass must be positive");
  ParticleEnsemble ens = ParticleEnsemble::empty(dim, N);
  if (N == 0) return ens;
  const double wi = m0 / static_cast<double>(N);
  for (std::size_t i = 0; i < N; ++i) {
    ens.w[i] = wi;
    for (int k = 0; k < dim; ++k) {
      ens.x[i * dim + k] = rng.uniform(0.0, two_pi);
      ens.v[i * dim + k] = v_mean[k] + v_std * rng.gaussian();
    }
  }
  if (center_velocities) {
    for (int k = 0; k < dim; ++k) {
      double mean = 0.0;
      for (std::size_t i = 0; i < N; ++i) mean += ens.w[i] * ens.v[i * dim + k];
      mean /= m0;
      double shift = v_mean[k] - mean;
      for (std::size_t i = 0; i < N; ++i) ens.v[i * dim + k] += shift;
    }
  }
  return ens;
}

}  // namespace swarmflow::kinetic
