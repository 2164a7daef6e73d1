#pragma once

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <utility>
#include <vector>

#include "swarmflow/common.hpp"

namespace swarmflow::spectral {

inline void validate_geometry(int dim, int n) {
  require(dim == 2 || dim == 3, "spatial dimension must be 2 or 3");
  require(n >= 4 && n % 2 == 0, "grid size per axis must be even and >= 4");
}

inline std::size_t ipow(std::size_t base, int exp) {
  std::size_t r = 1;
  for (int i = 0; i < exp; ++i) r *= base;
  return r;
}

// Row-major flattening, axis 0 slowest; matches the FFTW multi-dimensional
// layout so grids can be handed to plans without reshuffling.
inline std::size_t flat_index(const std::array<int, 3>& idx, int dim, int n) {
  std::size_t p = 0;
  for (int k = 0; k < dim; ++k) p = p * static_cast<std::size_t>(n) + static_cast<std::size_t>(idx[k]);
  return p;
}

inline std::array<int, 3> unflatten(std::size_t p, int dim, int n) {
  std::array<int, 3> idx{0, 0, 0};
  for (int k = dim - 1; k >= 0; --k) {
    idx[k] = static_cast<int>(p % static_cast<std::size_t>(n));
    p /= static_cast<std::size_t>(n);
  }
  return idx;
}

// Signed integer frequency of storage index m on an n-point axis.
inline int freq_of(int m, int n) { return m <= n / 2 ? m : m - n; }

inline double grid_coord(int i, int n) { return two_pi * static_cast<double>(i) / static_cast<double>(n); }

struct GridField {
  int dim = 2;
  int n = 0;
  int comps = 1;
  std::vector<double> data;  // comps blocks of n^dim samples

  static GridField zeros(int dim, int n, int comps) {
    validate_geometry(dim, n);
    require(comps >= 1, "field needs at least one component");
    GridField g;
    g.dim = dim;
    g.n = n;
    g.comps = comps;
    g.data.assign(static_cast<std::size_t>(comps) * ipow(n, dim), 0.0);
    return g;
  }

  std::size_t points() const { return ipow(static_cast<std::size_t>(n), dim); }
  double cell_volume() const { return std::pow(two_pi / n, dim); }
  double& at(int c, std::size_t p) { return data[static_cast<std::size_t>(c) * points() + p]; }
  double at(int c, std::size_t p) const { return data[static_cast<std::size_t>(c) * points() + p]; }
};

struct SpectralField {
  int dim = 2;
  int n = 0;
  int comps = 1;
  bool solenoidal = false;
  std::vector<cplx> coeff;  // same layout as GridField::data

  static SpectralField zeros(int dim, int n, int comps) {
    validate_geometry(dim, n);
    require(comps >= 1, "field needs at least one component");
    SpectralField s;
    s.dim = dim;
    s.n = n;
    s.comps = comps;
    s.coeff.assign(static_cast<std::size_t>(comps) * ipow(n, dim), cplx(0.0, 0.0));
    return s;
  }

  std::size_t points() const { return ipow(static_cast<std::size_t>(n), dim); }
  cplx& at(int c, std::size_t p) { return coeff[static_cast<std::size_t>(c) * points() + p]; }
  cplx at(int c, std::size_t p) const { return coeff[static_cast<std::size_t>(c) * points() + p]; }
};

namespace detail {

inline std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

// One cached plan pair per (dim, n); FFTW planning is not thread-safe and
// plans are bound to their buffers, so execution is serialized per workspace.
class FftWorkspace {
 public:
  FftWorkspace(int dim, int n) : total_(ipow(static_cast<std::size_t>(n), dim)), buf_(total_) {
    int dims[3] = {n, n, n};
    auto* raw = reinterpret_cast<fftw_complex*>(buf_.data());
    std::lock_guard<std::mutex> lock(planner_mutex());
    fwd_ = fftw_plan_dft(dim, dims, raw, raw, FFTW_FORWARD, FFTW_ESTIMATE);
    bwd_ = fftw_plan_dft(dim, dims, raw, raw, FFTW_BACKWARD, FFTW_ESTIMATE);
    if (fwd_ == nullptr || bwd_ == nullptr) throw std::runtime_error("fftw plan creation failed");
  }

  ~FftWorkspace() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(bwd_);
  }

  FftWorkspace(const FftWorkspace&) = delete;
  FftWorkspace& operator=(const FftWorkspace&) = delete;

  void run(const cplx* in, cplx* out, bool forward) {
    std::lock_guard<std::mutex> lock(mutex_);
    std::copy(in, in + total_, buf_.data());
    fftw_execute(forward ? fwd_ : bwd_);
    std::copy(buf_.cbegin(), buf_.cend(), out);
  }

 private:
  std::size_t total_;
  std::vector<cplx> buf_;
  fftw_plan fwd_ = nullptr;
  fftw_plan bwd_ = nullptr;
  std::mutex mutex_;
};

inline FftWorkspace& workspace(int dim, int n) {
  static std::mutex reg_mutex;
  static std::map<std::pair<int, int>, std::unique_ptr<FftWorkspace>> registry;
  std::lock_guard<std::mutex> lock(reg_mutex);
  auto key = std::make_pair(dim, n);
  auto it = registry.find(key);
  if (it == registry.end()) it = registry.emplace(key, std::make_unique<FftWorkspace>(dim, n)).first;
  return *it->second;
}

}  // namespace detail

// Zeroes every mode with an index on a Nyquist plane (|xi_k| = n/2); those
// modes have no conjugate partner on an even grid and would break Hermitian
// symmetry under differentiation.
inline void zero_nyquist(SpectralField& s) {
  const std::size_t total = s.points();
  const int half = s.n / 2;
  for (std::size_t p = 0; p < total; ++p) {
    auto idx = unflatten(p, s.dim, s.n);
    bool hit = false;
    for (int k = 0; k < s.dim; ++k) hit = hit || idx[k] == half;
    if (!hit) continue;
    for (int c = 0; c < s.comps; ++c) s.at(c, p) = cplx(0.0, 0.0);
  }
}

// Discrete analogue of c(xi) = (2pi)^{-d} integral u e^{-i xi.x} dx:
// c(xi) = n^{-d} sum_j u(x_j) e^{-i xi.x_j}.
inline SpectralField forward_transform(const GridField& g) {
  validate_geometry(g.dim, g.n);
  for (double v : g.data)
    if (!std::isfinite(v)) throw std::invalid_argument("forward_transform: non-finite sample");
  SpectralField s = SpectralField::zeros(g.dim, g.n, g.comps);
  const std::size_t total = g.points();
  std::vector<cplx> in(total);
  auto& ws = detail::workspace(g.dim, g.n);
  const double scale = 1.0 / static_cast<double>(total);
  for (int c = 0; c < g.comps; ++c) {
    for (std::size_t p = 0; p < total; ++p) in[p] = cplx(g.data[c * total + p], 0.0);
    ws.run(in.data(), s.coeff.data() + static_cast<std::size_t>(c) * total, true);
    for (std::size_t p = 0; p < total; ++p) s.coeff[c * total + p] *= scale;
  }
  zero_nyquist(s);
  return s;
}

inline GridField inverse_transform(const SpectralField& s) {
  validate_geometry(s.dim, s.n);
  GridField g = GridField::zeros(s.dim, s.n, s.comps);
  const std::size_t total = s.points();
  std::vector<cplx> out(total);
  auto& ws = detail::workspace(s.dim, s.n);
  for (int c = 0; c < s.comps; ++c) {
    ws.run(s.coeff.data() + static_cast<std::size_t>(c) * total, out.data(), false);
    for (std::size_t p = 0; p < total; ++p) g.data[c * total + p] = out[p].real();
  }
  return g;
}

inline SpectralField leray_project(const SpectralField& s) {
  require(s.comps == s.dim, "leray_project: field must have one component per spatial dimension");
  SpectralField out = s;
  const std::size_t total = s.points();
  for (std::size_t p = 1; p < total; ++p) {
    auto idx = unflatten(p, s.dim, s.n);
    double k[3] = {0, 0, 0};
    double ksq = 0.0;
    for (int a = 0; a < s.dim; ++a) {
      k[a] = static_cast<double>(freq_of(idx[a], s.n));
      ksq += k[a] * k[a];
    }
    if (ksq == 0.0) continue;
    cplx kdotu(0.0, 0.0);
    for (int a = 0; a < s.dim; ++a) kdotu += k[a] * out.at(a, p);
    for (int a = 0; a < s.dim; ++a) out.at(a, p) -= k[a] * kdotu / ksq;
  }
  out.solenoidal = true;
  return out;
}

inline SpectralField divergence(const SpectralField& s) {
  require(s.comps == s.dim, "divergence: field must have one component per spatial dimension");
  SpectralField out = SpectralField::zeros(s.dim, s.n, 1);
  const std::size_t total = s.points();
  for (std::size_t p = 0; p < total; ++p) {
    auto idx = unflatten(p, s.dim, s.n);
    cplx acc(0.0, 0.0);
    for (int a = 0; a < s.dim; ++a) {
      double k = static_cast<double>(freq_of(idx[a], s.n));
      acc += cplx(0.0, k) * s.at(a, p);
    }
    out.at(0, p) = acc;
  }
  return out;
}

// d/dx_axis applied to every component.
inline SpectralField derivative(const SpectralField& s, int axis) {
  require(axis >= 0 && axis < s.dim, "derivative: axis out of range");
  SpectralField out = s;
  out.solenoidal = false;
  const std::size_t total = s.points();
  for (std::size_t p = 0; p < total; ++p) {
    auto idx = unflatten(p, s.dim, s.n);
    double k = static_cast<double>(freq_of(idx[axis], s.n));
    for (int c = 0; c < s.comps; ++c) out.at(c, p) *= cplx(0.0, k);
  }
  return out;
}

// 2/3-rule dealiasing: zero every mode with max_k |xi_k| > floor(n/3).
inline SpectralField dealias_two_thirds(const SpectralField& s) {
  SpectralField out = s;
  // largest band with 3 cut < n: products of retained modes then alias only
  // onto discarded modes, never back into the band
  const int cut = (s.n - 1) / 3;
  const std::size_t total = s.points();
  for (std::size_t p = 0; p < total; ++p) {
    auto idx = unflatten(p, s.dim, s.n);
    bool keep = true;
    for (int k = 0; k < s.dim; ++k) keep = keep && std::abs(freq_of(idx[k], s.n)) <= cut;
    if (keep) continue;
    for (int c = 0; c < s.comps; ++c) out.at(c, p) = cplx(0.0, 0.0);
  }
  return out;
}

inline SpectralField heat_semigroup_apply(const SpectralField& s, double t) {
  require(t >= 0.0, "heat_semigroup_apply: t must be nonnegative");
  SpectralField out = s;
  const std::size_t total = s.points();
  for (std::size_t p = 0; p < total; ++p) {
    auto idx = unflatten(p, s.dim, s.n);
    double ksq = 0.0;
    for (int k = 0; k < s.dim; ++k) {
      double f = static_cast<double>(freq_of(idx[k], s.n));
      ksq += f * f;
    }
    double factor = std::exp(-t * ksq);
    for (int c = 0; c < s.comps; ++c) out.at(c, p) *= factor;
  }
  return out;
}

// (2pi)^d times the xi=0 coefficient: the torus integral of each component.
inline Vec mean_mode(const SpectralField& s) {
  require(s.comps <= 3, "mean_mode: at most three components");
  Vec m = vzero();
  const std::size_t total = s.points();
  const double vol = std::pow(two_pi, s.dim);
  for (int c = 0; c < s.comps; ++c) m[c] = vol * s.coeff[static_cast<std::size_t>(c) * total].real();
  return m;
}

inline double field_integral(const GridField& g, int comp) {
  const std::size_t total = g.points();
  double acc = 0.0;
  for (std::size_t p = 0; p < total; ++p) acc += g.data[static_cast<std::size_t>(comp) * total + p];
  return acc * g.cell_volume();
}

// Parseval: integral |u|^2 dx = (2pi)^d sum |c(xi)|^2, all components.
inline double l2_norm_sq(const SpectralField& s) {
  double acc = 0.0;
  for (const cplx& z : s.coeff) acc += std::norm(z);
  return std::pow(two_pi, s.dim) * acc;
}

// Same sum restricted to xi != 0: integral |u - mean(u)|^2 dx.
inline double fluctuation_l2_sq(const SpectralField& s) {
  const std::size_t total = s.points();
  double acc = 0.0;
  for (int c = 0; c < s.comps; ++c)
    for (std::size_t p = 1; p < total; ++p) acc += std::norm(s.at(c, p));
  return std::pow(two_pi, s.dim) * acc;
}

// integral |grad u|^2 dx = (2pi)^d sum |xi|^2 |c(xi)|^2.
inline double gradient_l2_sq(const SpectralField& s) {
  const std::size_t total = s.points();
  double acc = 0.0;
  for (std::size_t p = 0; p < total; ++p) {
    auto idx = unflatten(p, s.dim, s.n);
    double ksq = 0.0;
    for (int k = 0; k < s.dim; ++k) {
      double f = static_cast<double>(freq_of(idx[k], s.n));
      ksq += f * f;
    }
    if (ksq == 0.0) continue;
    for (int c = 0; c < s.comps; ++c) acc += ksq * std::norm(s.at(c, p));
  }
  return std::pow(two_pi, s.dim) * acc;
}

// Torus convolution (psi * g)(x) = integral psi(x-y) g(y) dy, evaluated as
// (2pi)^d psihat(xi) ghat(xi) mode by mode; exact for band-limited inputs.
inline GridField spectral_convolve(const GridField& kernel, const GridField& g) {
  require(kernel.dim == g.dim && kernel.n == g.n, "spectral_convolve: grid mismatch");
  require(kernel.comps == 1 || g.comps == 1, "spectral_convolve: one factor must be scalar");
  SpectralField kh = forward_transform(kernel);
  SpectralField gh = forward_transform(g);
  const SpectralField& scalar = kernel.comps == 1 ? kh : gh;
  const SpectralField& vec = kernel.comps == 1 ? gh : kh;
  SpectralField prod = SpectralField::zeros(g.dim, g.n, vec.comps);
  const std::size_t total = prod.points();
  const double vol = std::pow(two_pi, g.dim);
  for (int c = 0; c < vec.comps; ++c)
    for (std::size_t p = 0; p < total; ++p) prod.at(c, p) = vol * scalar.at(0, p) * vec.at(c, p);
  return inverse_transform(prod);
}

// L^p norm of the pointwise Euclidean magnitude across components; p may be
// infinity.
inline double lp_norm(const GridField& g, double p) {
  require(p >= 1.0, "lp_norm: p must be >= 1");
  const std::size_t total = g.points();
  double maxmag = 0.0;
  std::vector<double> mag(total, 0.0);
  for (std::size_t s = 0; s < total; ++s) {
    double m2 = 0.0;
    for (int c = 0; c < g.comps; ++c) {
      double v = g.data[static_cast<std::size_t>(c) * total + s];
      m2 += v * v;
    }
    mag[s] = std::sqrt(m2);
    maxmag = std::max(maxmag, mag[s]);
  }
  if (std::isinf(p)) return maxmag;
  if (maxmag == 0.0) return 0.0;
  double acc = 0.0;
  for (std::size_t s = 0; s < total; ++s) acc += std::pow(mag[s] / maxmag, p);
  return maxmag * std::pow(acc * g.cell_volume(), 1.0 / p);
}

inline double max_abs(const GridField& g) { return lp_norm(g, std::numeric_limits<double>::infinity()); }

inline bool all_finite(const SpectralField& s) {
  for (const cplx& z : s.coeff)
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return false;
  return true;
}

}  // namespace swarmflow::spectral
