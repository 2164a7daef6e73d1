#pragma once

#include <cmath>

#include "swarmflow/spectral.hpp"

namespace swarmflow::fluid {

using spectral::GridField;
using spectral::SpectralField;

struct FluidState {
  SpectralField u;   // solenoidal, kept inside the 2/3 band
  double mu = 1.0;
  double t = 0.0;
};

// Fluid forcing by the particles: -integral (u - v) f dv = j - rho u,
// evaluated pointwise on the grid.
inline GridField compute_drag_source(const GridField& rho, const GridField& j, const GridField& u) {
  require(rho.dim == j.dim && rho.n == j.n && rho.dim == u.dim && rho.n == u.n,
          "compute_drag_source: grid mismatch");
  require(rho.comps == 1 && j.comps == rho.dim && u.comps == rho.dim,
          "compute_drag_source: rho scalar, j and u vector");
  GridField out = GridField::zeros(rho.dim, rho.n, rho.dim);
  const std::size_t total = rho.points();
  for (int c = 0; c < rho.dim; ++c)
    for (std::size_t p = 0; p < total; ++p) out.at(c, p) = j.at(c, p) - rho.data[p] * u.at(c, p);
  return out;
}

// Projected, dealiased -(u . grad) u. Identically zero in d=3 (Stokes flow);
// for band-limited velocities the retained coefficients are exact convolution
// values, so the term stays energy neutral.
inline SpectralField nonlinear_term(const SpectralField& u) {
  require(u.comps == u.dim, "nonlinear_term: velocity must have dim components");
  if (u.dim == 3) return SpectralField::zeros(u.dim, u.n, u.comps);
  GridField ug = spectral::inverse_transform(u);
  const std::size_t total = ug.points();
  GridField adv = GridField::zeros(u.dim, u.n, u.dim);
  for (int a = 0; a < u.dim; ++a) {
    GridField da = spectral::inverse_transform(spectral::derivative(u, a));
    for (int c = 0; c < u.dim; ++c)
      for (std::size_t p = 0; p < total; ++p) adv.at(c, p) += ug.at(a, p) * da.at(c, p);
  }
  SpectralField out = spectral::forward_transform(adv);
  for (cplx& z : out.coeff) z = -z;
  out = spectral::leray_project(spectral::dealias_two_thirds(out));
  const std::size_t pts = out.points();
  for (int c = 0; c < out.comps; ++c) out.coeff[static_cast<std::size_t>(c) * pts] = cplx(0.0, 0.0);
  return out;
}

// Projects, dealiases and Nyquist-filters a grid-space source so it can enter
// the spectral right-hand side.
inline SpectralField prepare_source(const GridField& source) {
  return spectral::leray_project(spectral::dealias_two_thirds(spectral::forward_transform(source)));
}

inline SpectralField fluid_rhs(const SpectralField& u, const SpectralField* source) {
  SpectralField k = nonlinear_term(u);
  if (source != nullptr) {
    require(source->comps == k.comps && source->n == k.n && source->dim == k.dim,
            "fluid_rhs: source mismatch");
    for (std::size_t i = 0; i < k.coeff.size(); ++i) k.coeff[i] += source->coeff[i];
  }
  return k;
}

// Heun step with the exact viscous integrating factor:
//   u* = E (u + dt k1),   u' = E (u + dt/2 k1) + dt/2 k2,   E = e^{-mu |xi|^2 dt}.
// Exact for the pure heat part at any dt.
inline FluidState fluid_step(const FluidState& state, const GridField& source, double dt) {
  require(dt > 0.0, "fluid_step: dt must be positive");
  require(source.dim == state.u.dim && source.n == state.u.n && source.comps == state.u.comps,
          "fluid_step: source mismatch");
  if (!spectral::all_finite(state.u)) throw blowup_error(state.t);
  const double t_next = state.t + dt;
  SpectralField unew;
  // Shapes are validated above, so any non-finite rejection raised while
  // evaluating the stages is a numerical blow-up of this step.
  try {
    const SpectralField& u = state.u;
    SpectralField s_hat = prepare_source(source);
    SpectralField k1 = fluid_rhs(u, &s_hat);

    SpectralField stage = u;
    for (std::size_t i = 0; i < stage.coeff.size(); ++i) stage.coeff[i] += dt * k1.coeff[i];
    SpectralField upred = spectral::heat_semigroup_apply(stage, state.mu * dt);
    if (!spectral::all_finite(upred)) throw blowup_error(t_next);
    SpectralField k2 = fluid_rhs(upred, &s_hat);

    SpectralField mid = u;
    for (std::size_t i = 0; i < mid.coeff.size(); ++i) mid.coeff[i] += 0.5 * dt * k1.coeff[i];
    unew = spectral::heat_semigroup_apply(mid, state.mu * dt);
    for (std::size_t i = 0; i < unew.coeff.size(); ++i) unew.coeff[i] += 0.5 * dt * k2.coeff[i];
    unew.solenoidal = true;
  } catch (const std::invalid_argument&) {
    throw blowup_error(t_next);
  }

  FluidState next{std::move(unew), state.mu, t_next};
  if (!spectral::all_finite(next.u)) throw blowup_error(next.t);
  return next;
}

// d=2: scalar dx1 u2 - dx2 u1; d=3: the full curl.
inline GridField vorticity(const SpectralField& u) {
  require(u.comps == u.dim, "vorticity: velocity must have dim components");
  const std::size_t total = u.points();
  if (u.dim == 2) {
    SpectralField w = SpectralField::zeros(2, u.n, 1);
    for (std::size_t p = 0; p < total; ++p) {
      auto idx = spectral::unflatten(p, u.dim, u.n);
      double k1 = static_cast<double>(spectral::freq_of(idx[0], u.n));
      double k2 = static_cast<double>(spectral::freq_of(idx[1], u.n));
      w.at(0, p) = cplx(0.0, k1) * u.at(1, p) - cplx(0.0, k2) * u.at(0, p);
    }
    return spectral::inverse_transform(w);
  }
  SpectralField w = SpectralField::zeros(3, u.n, 3);
  for (std::size_t p = 0; p < total; ++p) {
    auto idx = spectral::unflatten(p, u.dim, u.n);
    cplx ik[3];
    for (int a = 0; a < 3; ++a) ik[a] = cplx(0.0, static_cast<double>(spectral::freq_of(idx[a], u.n)));
    w.at(0, p) = ik[1] * u.at(2, p) - ik[2] * u.at(1, p);
    w.at(1, p) = ik[2] * u.at(0, p) - ik[0] * u.at(2, p);
    w.at(2, p) = ik[0] * u.at(1, p) - ik[1] * u.at(0, p);
  }
  return spectral::inverse_transform(w);
}

// u = a (cos x1 sin x2, -sin x1 cos x2); its projected advection term vanishes
// and it decays as e^{-2 mu t} under the viscous flow.
inline SpectralField taylor_green(int n, double amplitude) {
  GridField g = GridField::zeros(2, n, 2);
  const std::size_t total = g.points();
  for (std::size_t p = 0; p < total; ++p) {
    auto idx = spectral::unflatten(p, 2, n);
    double x1 = spectral::grid_coord(idx[0], n);
    double x2 = spectral::grid_coord(idx[1], n);
    g.at(0, p) = amplitude * std::cos(x1) * std::sin(x2);
    g.at(1, p) = -amplitude * std::sin(x1) * std::cos(x2);
  }
  SpectralField s = spectral::forward_transform(g);
  s.solenoidal = true;
  return s;
}

// Zero-mean solenoidal field with Gaussian coefficients on 1 <= |xi|_inf <=
// max_mode, scaled so the root-mean-square speed equals amplitude.
inline SpectralField random_solenoidal(int dim, int n, double amplitude, int max_mode, Rng& rng) {
  spectral::validate_geometry(dim, n);
  require(max_mode >= 1 && max_mode <= (n - 1) / 3,
          "random_solenoidal: max_mode must lie inside the dealiased band");
  SpectralField s = SpectralField::zeros(dim, n, dim);
  const std::size_t total = s.points();
  for (std::size_t p = 1; p < total; ++p) {
    auto idx = spectral::unflatten(p, dim, n);
    int f[3] = {0, 0, 0};
    bool inside = true;
    for (int k = 0; k < dim; ++k) {
      f[k] = spectral::freq_of(idx[k], n);
      inside = inside && std::abs(f[k]) <= max_mode;
    }
    if (!inside) continue;
    // fill only the lexicographically positive half; mirror the conjugate
    int lead = 0;
    for (int k = 0; k < dim; ++k)
      if (f[k] != 0) {
        lead = f[k];
        break;
      }
    if (lead <= 0) continue;
    std::array<int, 3> neg{0, 0, 0};
    for (int k = 0; k < dim; ++k) neg[k] = (n - idx[k]) % n;
    std::size_t q = spectral::flat_index(neg, dim, n);
    for (int c = 0; c < dim; ++c) {
      cplx z(rng.gaussian(), rng.gaussian());
      s.at(c, p) = z;
      s.at(c, q) = std::conj(z);
    }
  }
  s = spectral::leray_project(s);
  double ms = 0.0;
  for (const cplx& z : s.coeff) ms += std::norm(z);  // mean |u|^2 over the box
  if (ms > 0.0) {
    double scale = amplitude / std::sqrt(ms);
    for (cplx& z : s.coeff) z *= scale;
  }
  s.solenoidal = true;
  return s;
}

}  // namespace swarmflow::fluid
