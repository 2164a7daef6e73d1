#pragma once

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <vector>

#include "swarmflow/fluid.hpp"
#include "swarmflow/kinetic.hpp"

namespace swarmflow::diagnostics {

using kinetic::CommunicationWeight;
using kinetic::ParticleEnsemble;
using spectral::GridField;
using spectral::SpectralField;

struct Centers {
  Vec v_c = vzero();
  Vec u_c = vzero();
  double mass = 0.0;
};

// v_c is the mass-weighted mean particle velocity; u_c is the fluid momentum
// integral over the torus, so the conserved total is mass*v_c + u_c.
inline Centers centers(const ParticleEnsemble& ens, const SpectralField& u) {
  Centers c;
  for (std::size_t i = 0; i < ens.N; ++i) {
    c.mass += ens.w[i];
    for (int k = 0; k < ens.dim; ++k) c.v_c[k] += ens.w[i] * ens.v[i * ens.dim + k];
  }
  require(c.mass > 0.0, "centers: total mass must be positive");
  for (int k = 0; k < ens.dim; ++k) c.v_c[k] /= c.mass;
  c.u_c = spectral::mean_mode(u);
  return c;
}

inline Vec v_infinity(const Vec& v_c0, const Vec& u_c0, double m0, int dim) {
  require(m0 > 0.0, "v_infinity: total mass must be positive");
  Vec v = vzero();
  for (int k = 0; k < dim; ++k) v[k] = (m0 * v_c0[k] + u_c0[k]) / (1.0 + m0);
  return v;
}

// L = 1/2 sum w|v-v_c|^2 + 1/2 integral |u-ubar|^2 + |u_c-v_c|^2/(2(1+M0)),
// with ubar the spatial average u_c/(2pi)^d; the fluid term is evaluated by
// Parseval over the nonzero modes.
inline double lyapunov(const ParticleEnsemble& ens, const SpectralField& u, const Vec& v_c, const Vec& u_c,
                       double m0) {
  require(m0 > 0.0, "lyapunov: total mass must be positive");
  double kin = 0.0;
  for (std::size_t i = 0; i < ens.N; ++i) {
    double d2 = 0.0;
    for (int k = 0; k < ens.dim; ++k) {
      double d = ens.v[i * ens.dim + k] - v_c[k];
      d2 += d * d;
    }
    kin += ens.w[i] * d2;
  }
  double gap = 0.0;
  for (int k = 0; k < u.dim; ++k) {
    double d = u_c[k] - v_c[k];
    gap += d * d;
  }
  return 0.5 * kin + 0.5 * spectral::fluctuation_l2_sq(u) + gap / (2.0 * (1.0 + m0));
}

inline double total_energy(const ParticleEnsemble& ens, const SpectralField& u) {
  double kin = 0.0;
  for (std::size_t i = 0; i < ens.N; ++i) {
    double s2 = 0.0;
    for (int k = 0; k < ens.dim; ++k) s2 += ens.v[i * ens.dim + k] * ens.v[i * ens.dim + k];
    kin += ens.w[i] * s2;
  }
  return 0.5 * kin + 0.5 * spectral::l2_norm_sq(u);
}

struct DissipationParts {
  double drag = 0.0;
  double viscous = 0.0;
  double pair = 0.0;
  double total() const { return drag + viscous + pair; }
};

namespace detail {

inline double pair_sum_direct(const ParticleEnsemble& ens, const CommunicationWeight& psi) {
  double acc = 0.0;
  const int d = ens.dim;
  for (std::size_t i = 0; i < ens.N; ++i)
    for (std::size_t j = i + 1; j < ens.N; ++j) {
      Vec r = vzero();
      double dv2 = 0.0;
      for (int k = 0; k < d; ++k) {
        r[k] = ens.x[i * d + k] - ens.x[j * d + k];
        double dv = ens.v[i * d + k] - ens.v[j * d + k];
        dv2 += dv * dv;
      }
      acc += 2.0 * ens.w[i] * ens.w[j] * psi(r, d) * dv2;
    }
  return acc;
}

// Expands |v_i - v_j|^2 and folds the double sum into three convolutions of
// deposited moments, evaluated back at the particles.
inline double pair_sum_grid(const ParticleEnsemble& ens, const CommunicationWeight& psi, int n) {
  const int d = ens.dim;
  auto [rho, j] = kinetic::deposit_moments(ens, n);
  std::vector<double> speed2(ens.N, 0.0);
  for (std::size_t i = 0; i < ens.N; ++i)
    for (int k = 0; k < d; ++k) speed2[i] += ens.v[i * d + k] * ens.v[i * d + k];
  GridField s = kinetic::deposit(ens, n, speed2.data(), 1);

  GridField psig = psi.grid(d, n);
  GridField A = spectral::spectral_convolve(psig, j);
  GridField B = spectral::spectral_convolve(psig, rho);
  GridField C = spectral::spectral_convolve(psig, s);

  std::vector<double> Ai = kinetic::interpolate_field(A, ens);
  std::vector<double> Bi = kinetic::interpolate_field(B, ens);
  std::vector<double> Ci = kinetic::interpolate_field(C, ens);

  double acc = 0.0;
  for (std::size_t i = 0; i < ens.N; ++i) {
    double va = 0.0;
    for (int k = 0; k < d; ++k) va += ens.v[i * d + k] * Ai[i * d + k];
    acc += ens.w[i] * (speed2[i] * Bi[i] - 2.0 * va + Ci[i]);
  }
  return acc;
}

}  // namespace detail

// D = sum w|u(x_i)-v_i|^2 + mu integral |grad u|^2 + pair alignment term; the
// pair double sum is evaluated directly below pair_threshold particles and by
// the grid-convolution identity above it.
inline DissipationParts dissipation_parts(const ParticleEnsemble& ens, const SpectralField& u,
                                          const CommunicationWeight& psi, std::size_t pair_threshold = 4096,
                                          double mu = 1.0, bool include_drag = true,
                                          bool include_viscous = true, bool include_pair = true) {
  DissipationParts parts;
  const int d = ens.dim;
  if (include_drag && ens.N > 0) {
    GridField ug = spectral::inverse_transform(u);
    std::vector<double> ui = kinetic::interpolate_field(ug, ens);
    for (std::size_t i = 0; i < ens.N; ++i) {
      double d2 = 0.0;
      for (int k = 0; k < d; ++k) {
        double dv = ui[i * d + k] - ens.v[i * d + k];
        d2 += dv * dv;
      }
      parts.drag += ens.w[i] * d2;
    }
  }
  if (include_viscous) parts.viscous = mu * spectral::gradient_l2_sq(u);
  if (include_pair && ens.N > 0 && !psi.vanishes()) {
    double pair_sum = ens.N <= pair_threshold ? detail::pair_sum_direct(ens, psi)
                                              : detail::pair_sum_grid(ens, psi, u.n);
    parts.pair = 0.5 * pair_sum;
  }
  return parts;
}

inline double dissipation(const ParticleEnsemble& ens, const SpectralField& u, const CommunicationWeight& psi,
                          std::size_t pair_threshold = 4096) {
  return dissipation_parts(ens, u, psi, pair_threshold).total();
}

// (sum w_i |v_i - center|^p)^{1/p}, stabilized by factoring out the largest
// deviation so large p stays in range.
inline double weighted_moment(const ParticleEnsemble& ens, double p, const Vec& center) {
  require(p >= 1.0, "weighted_moment: p must be >= 1");
  const int d = ens.dim;
  std::vector<double> dist(ens.N, 0.0);
  double peak = 0.0;
  for (std::size_t i = 0; i < ens.N; ++i) {
    double d2 = 0.0;
    for (int k = 0; k < d; ++k) {
      double dv = ens.v[i * d + k] - center[k];
      d2 += dv * dv;
    }
    dist[i] = std::sqrt(d2);
    peak = std::max(peak, dist[i]);
  }
  if (peak == 0.0) return 0.0;
  if (std::isinf(p)) return peak;
  double acc = 0.0;
  for (std::size_t i = 0; i < ens.N; ++i) acc += ens.w[i] * std::pow(dist[i] / peak, p);
  return peak * std::pow(acc, 1.0 / p);
}

inline double support_radius(const ParticleEnsemble& ens, const Vec& vinf) {
  require(ens.N >= 1, "support_radius: empty ensemble");
  double r = 0.0;
  for (std::size_t i = 0; i < ens.N; ++i) {
    double d2 = 0.0;
    for (int k = 0; k < ens.dim; ++k) {
      double dv = ens.v[i * ens.dim + k] - vinf[k];
      d2 += dv * dv;
    }
    r = std::max(r, std::sqrt(d2));
  }
  return r;
}

// L^p grid norm of rho u - j, the field whose decay Lemma-style drag
// estimates control; p is 2 or infinity.
inline double drag_norm(const ParticleEnsemble& ens, const SpectralField& u, double p) {
  require(p == 2.0 || std::isinf(p), "drag_norm: p must be 2 or infinity");
  auto [rho, j] = kinetic::deposit_moments(ens, u.n);
  GridField ug = spectral::inverse_transform(u);
  GridField field = GridField::zeros(u.dim, u.n, u.dim);
  const std::size_t total = field.points();
  for (int c = 0; c < u.dim; ++c)
    for (std::size_t pnt = 0; pnt < total; ++pnt)
      field.at(c, pnt) = rho.data[pnt] * ug.at(c, pnt) - j.at(c, pnt);
  return spectral::lp_norm(field, p);
}

inline double vorticity_norm(const SpectralField& u, double p) {
  require(p >= 1.0, "vorticity_norm: p must be >= 1");
  return spectral::lp_norm(fluid::vorticity(u), p);
}

inline double u_minus_mean_linf(const SpectralField& u) {
  SpectralField fluct = u;
  const std::size_t total = fluct.points();
  for (int c = 0; c < fluct.comps; ++c) fluct.coeff[static_cast<std::size_t>(c) * total] = cplx(0.0, 0.0);
  return spectral::max_abs(spectral::inverse_transform(fluct));
}

// The explicit coupling f -> rho tensor delta_{v_inf} transports every parcel
// straight in velocity, so the p-th moment is an upper bound for W_p.
inline double wasserstein_bound(const ParticleEnsemble& ens, const Vec& vinf, double p) {
  return weighted_moment(ens, p, vinf);
}

struct FitResult {
  double rate = 0.0;
  double r_squared = 0.0;
  std::size_t samples = 0;
};

// Least-squares slope of log y against t on the window t >= t_min; the decay
// rate is the negated slope.
inline FitResult fit_decay_rate(const std::vector<double>& ts, const std::vector<double>& ys,
                                double t_min = 0.0) {
  require(ts.size() == ys.size(), "fit_decay_rate: length mismatch");
  std::vector<double> t, ly;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    if (ts[i] < t_min) continue;
    require(ys[i] > 0.0, "fit_decay_rate: series values must be positive");
    t.push_back(ts[i]);
    ly.push_back(std::log(ys[i]));
  }
  require(t.size() >= 8, "fit_decay_rate: need at least 8 samples in the window");

  const double n = static_cast<double>(t.size());
  double mt = 0.0, my = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    mt += t[i];
    my += ly[i];
  }
  mt /= n;
  my /= n;
  double stt = 0.0, sty = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    stt += (t[i] - mt) * (t[i] - mt);
    sty += (t[i] - mt) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  require(stt > 0.0, "fit_decay_rate: window needs distinct times");

  FitResult fit;
  fit.samples = t.size();
  const double slope = sty / stt;
  fit.rate = -slope;
  if (syy <= 1e-30) {
    fit.r_squared = 1.0;
  } else {
    double ss_res = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      double r = (ly[i] - my) - slope * (t[i] - mt);
      ss_res += r * r;
    }
    fit.r_squared = 1.0 - ss_res / syy;
  }
  return fit;
}

struct VelocityBox {
  Vec lo = vzero();
  Vec hi = vzero();
};

inline VelocityBox velocity_box(const ParticleEnsemble& ens, double pad_fraction = 0.05) {
  VelocityBox box;
  if (ens.N == 0) {
    for (int k = 0; k < ens.dim; ++k) {
      box.lo[k] = -1.0;
      box.hi[k] = 1.0;
    }
    return box;
  }
  for (int k = 0; k < ens.dim; ++k) {
    double lo = ens.v[k], hi = ens.v[k];
    for (std::size_t i = 0; i < ens.N; ++i) {
      lo = std::min(lo, ens.v[i * ens.dim + k]);
      hi = std::max(hi, ens.v[i * ens.dim + k]);
    }
    double pad = std::max(pad_fraction * (hi - lo), 1e-6);
    box.lo[k] = lo - pad;
    box.hi[k] = hi + pad;
  }
  return box;
}

// Histogram estimate of the phase-space density on bins^d x bins^d cells;
// returns the discrete L^q norm (integral of f^q)^{1/q}. Biased by the cell
// bandwidth, intended for growth-rate monitoring only. Velocities outside the
// box are clamped into the boundary cells so mass is never dropped.
inline double fq_histogram_norm(const ParticleEnsemble& ens, double q, int bins, const VelocityBox& box) {
  require(q >= 1.0, "fq_histogram_norm: q must be >= 1");
  require(bins >= 1, "fq_histogram_norm: bins must be positive");
  if (ens.N == 0) return 0.0;
  const int d = ens.dim;

  double cell_vol = 1.0;
  Vec hx = vzero(), hv = vzero();
  for (int k = 0; k < d; ++k) {
    hx[k] = two_pi / bins;
    double range = box.hi[k] - box.lo[k];
    require(range > 0.0, "fq_histogram_norm: degenerate velocity box");
    hv[k] = range / bins;
    cell_vol *= hx[k] * hv[k];
  }

  std::unordered_map<std::uint64_t, double> mass;
  mass.reserve(ens.N * 2);
  for (std::size_t i = 0; i < ens.N; ++i) {
    std::uint64_t key = 0;
    for (int k = 0; k < d; ++k) {
      int ix = static_cast<int>(std::floor(ens.x[i * d + k] / hx[k]));
      ix = std::clamp(ix, 0, bins - 1);
      key = key * static_cast<std::uint64_t>(bins) + static_cast<std::uint64_t>(ix);
    }
    for (int k = 0; k < d; ++k) {
      int iv = static_cast<int>(std::floor((ens.v[i * d + k] - box.lo[k]) / hv[k]));
      iv = std::clamp(iv, 0, bins - 1);
      key = key * static_cast<std::uint64_t>(bins) + static_cast<std::uint64_t>(iv);
    }
    mass[key] += ens.w[i];
  }

  double peak = 0.0;
  for (const auto& [key, m] : mass) peak = std::max(peak, m);
  if (peak == 0.0) return 0.0;
  double acc = 0.0;
  for (const auto& [key, m] : mass) acc += std::pow(m / peak, q);
  // integral of f^q = sum (mass/vol)^q vol = sum mass^q vol^{1-q}
  return peak * std::pow(acc, 1.0 / q) * std::pow(cell_vol, (1.0 - q) / q);
}

inline double max_cell_density(const GridField& rho) {
  double m = 0.0;
  for (double v : rho.data) m = std::max(m, v);
  return m;
}

}  // namespace swarmflow::diagnostics
