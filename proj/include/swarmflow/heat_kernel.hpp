#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "swarmflow/diagnostics.hpp"

namespace swarmflow::heat_kernel {

inline constexpr double default_tolerance = 1e-16;

struct HeatKernelQuery {
  int dim = 2;
  double t = 1.0;
  Vec x = vzero();
  double tolerance = default_tolerance;
};

namespace detail {

inline void validate(int dim, double t, double tol) {
  require(dim == 2 || dim == 3, "heat kernel: dim must be 2 or 3");
  require(t > 0.0, "heat kernel: t must be positive");
  require(tol > 0.0 && tol <= 1e-8, "heat kernel: tolerance must lie in (0, 1e-8]");
}

// Smallest K with e^{-t K^2} (2K+1)^dim < tol, so the dropped Fourier tail of
// the d-dimensional sum is below tolerance.
inline int fourier_radius(double t, int dim, double tol) {
  for (int K = 1; K <= 4096; ++K)
    if (std::exp(-t * static_cast<double>(K) * K) * std::pow(2.0 * K + 1.0, dim) < tol) return K;
  throw std::invalid_argument("heat kernel: no admissible Fourier truncation radius; use the image sum");
}

// Smallest M whose dropped image tail, bounded by the leading Gaussian term
// times a geometric factor and by the size of the other axis factors, is
// below tolerance.
inline int image_radius(double t, int dim, double tol) {
  const double pi = 0.5 * two_pi;
  const double scale = 1.0 / std::sqrt(2.0 * two_pi * t);
  const double other = std::pow(std::max(1.0, 1.1 * scale), dim - 1);
  const double geometric = 1.0 / (1.0 - std::exp(-pi * pi / t));
  for (int M = 1; M <= 4096; ++M) {
    double z = pi * (2.0 * M + 1.0);
    double tail = 2.0 * scale * std::exp(-z * z / (4.0 * t)) * geometric;
    if (tail * dim * other < tol) return M;
  }
  throw std::invalid_argument("heat kernel: no admissible image truncation radius");
}

inline double gamma1_fourier(double y, double t, int radius) {
  double s = 1.0;
  for (int m = 1; m <= radius; ++m)
    s += 2.0 * std::exp(-t * static_cast<double>(m) * m) * std::cos(m * y);
  return s / two_pi;
}

inline double gamma1_fourier_deriv(double y, double t, int radius) {
  double s = 0.0;
  for (int m = 1; m <= radius; ++m)
    s -= 2.0 * m * std::exp(-t * static_cast<double>(m) * m) * std::sin(m * y);
  return s / two_pi;
}

inline double gamma1_images(double y, double t, int radius) {
  const double yf = std::remainder(y, two_pi);
  double s = 0.0;
  for (int m = -radius; m <= radius; ++m) {
    double z = yf - two_pi * m;
    s += std::exp(-z * z / (4.0 * t));
  }
  return s / std::sqrt(2.0 * two_pi * t);
}

inline double gamma1_images_deriv(double y, double t, int radius) {
  const double yf = std::remainder(y, two_pi);
  double s = 0.0;
  for (int m = -radius; m <= radius; ++m) {
    double z = yf - two_pi * m;
    s -= z / (2.0 * t) * std::exp(-z * z / (4.0 * t));
  }
  return s / std::sqrt(2.0 * two_pi * t);
}

struct Axis1D {
  std::vector<double> g;
  std::vector<double> dg;
};

inline Axis1D tabulate(double t, int dim, int n, double tol) {
  Axis1D a;
  a.g.resize(n);
  a.dg.resize(n);
  if (t >= 1.0) {
    int K = fourier_radius(t, dim, tol);
    for (int i = 0; i < n; ++i) {
      double y = two_pi * i / n;
      a.g[i] = gamma1_fourier(y, t, K);
      a.dg[i] = gamma1_fourier_deriv(y, t, K);
    }
  } else {
    int M = image_radius(t, dim, tol);
    for (int i = 0; i < n; ++i) {
      double y = two_pi * i / n;
      a.g[i] = gamma1_images(y, t, M);
      a.dg[i] = gamma1_images_deriv(y, t, M);
    }
  }
  return a;
}

}  // namespace detail

inline double gamma_fourier(const Vec& x, double t, int dim, double tol = default_tolerance) {
  detail::validate(dim, t, tol);
  int K = detail::fourier_radius(t, dim, tol);
  double prod = 1.0;
  for (int k = 0; k < dim; ++k) prod *= detail::gamma1_fourier(x[k], t, K);
  return prod;
}

inline double gamma_images(const Vec& x, double t, int dim, double tol = default_tolerance) {
  detail::validate(dim, t, tol);
  int M = detail::image_radius(t, dim, tol);
  double prod = 1.0;
  for (int k = 0; k < dim; ++k) prod *= detail::gamma1_images(x[k], t, M);
  return prod;
}

// Theta-function duality: the two series are equal; each side converges
// super-exponentially on its half of the switch.
inline double gamma(const Vec& x, double t, int dim, double tol = default_tolerance) {
  detail::validate(dim, t, tol);
  return t >= 1.0 ? gamma_fourier(x, t, dim, tol) : gamma_images(x, t, dim, tol);
}

inline double gamma(const HeatKernelQuery& q) { return gamma(q.x, q.t, q.dim, q.tolerance); }

inline Vec gamma_gradient(const Vec& x, double t, int dim, double tol = default_tolerance) {
  detail::validate(dim, t, tol);
  double g[3] = {1.0, 1.0, 1.0};
  double dg[3] = {0.0, 0.0, 0.0};
  if (t >= 1.0) {
    int K = detail::fourier_radius(t, dim, tol);
    for (int k = 0; k < dim; ++k) {
      g[k] = detail::gamma1_fourier(x[k], t, K);
      dg[k] = detail::gamma1_fourier_deriv(x[k], t, K);
    }
  } else {
    int M = detail::image_radius(t, dim, tol);
    for (int k = 0; k < dim; ++k) {
      g[k] = detail::gamma1_images(x[k], t, M);
      dg[k] = detail::gamma1_images_deriv(x[k], t, M);
    }
  }
  Vec grad = vzero();
  for (int k = 0; k < dim; ++k) {
    grad[k] = dg[k];
    for (int j = 0; j < dim; ++j)
      if (j != k) grad[k] *= g[j];
  }
  return grad;
}

inline Vec gamma_gradient(const HeatKernelQuery& q) { return gamma_gradient(q.x, q.t, q.dim, q.tolerance); }

inline double mean_value(int dim) { return std::pow(two_pi, -dim); }

namespace detail {

inline int quadrature_points(int dim) { return dim == 2 ? 256 : 64; }

template <typename F>
double tensor_lp(int dim, int n, double p, F&& value) {
  const double cell = std::pow(two_pi / n, dim);
  double peak = 0.0;
  const int nk = dim == 3 ? n : 1;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < nk; ++k) peak = std::max(peak, std::abs(value(i, j, k)));
  if (peak == 0.0) return 0.0;
  double acc = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < nk; ++k) acc += std::pow(std::abs(value(i, j, k)) / peak, p);
  return peak * std::pow(acc * cell, 1.0 / p);
}

// One factor-4 refinement pass around the grid maximizer.
template <typename F>
double refined_max(int dim, int n, F&& value_at, int bi, int bj, int bk, double coarse) {
  const double h = two_pi / n;
  double best = coarse;
  const int rk = dim == 3 ? 4 : 0;
  for (int di = -4; di <= 4; ++di)
    for (int dj = -4; dj <= 4; ++dj)
      for (int dk = -rk; dk <= rk; ++dk) {
        Vec x = vzero();
        x[0] = wrap_coordinate((bi + 0.25 * di) * h);
        x[1] = wrap_coordinate((bj + 0.25 * dj) * h);
        if (dim == 3) x[2] = wrap_coordinate((bk + 0.25 * dk) * h);
        best = std::max(best, value_at(x));
      }
  return best;
}

}  // namespace detail

inline double lp_distance_to_mean(double t, double p, int dim, double tol = default_tolerance) {
  detail::validate(dim, t, tol);
  require(p >= 1.0, "lp_distance_to_mean: p must be >= 1");
  const int n = detail::quadrature_points(dim);
  const detail::Axis1D ax = detail::tabulate(t, dim, n, tol);
  const double mean = mean_value(dim);
  auto value = [&](int i, int j, int k) {
    double g = ax.g[i] * ax.g[j];
    if (dim == 3) g *= ax.g[k];
    return g - mean;
  };
  if (!std::isinf(p)) return detail::tensor_lp(dim, n, p, value);

  double best = 0.0;
  int bi = 0, bj = 0, bk = 0;
  const int nk = dim == 3 ? n : 1;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < nk; ++k)
        if (std::abs(value(i, j, k)) > best) {
          best = std::abs(value(i, j, k));
          bi = i;
          bj = j;
          bk = k;
        }
  auto value_at = [&](const Vec& x) { return std::abs(gamma(x, t, dim, tol) - mean); };
  return detail::refined_max(dim, n, value_at, bi, bj, bk, best);
}

inline double grad_lp_norm(double t, double p, int dim, double tol = default_tolerance) {
  detail::validate(dim, t, tol);
  require(p >= 1.0, "grad_lp_norm: p must be >= 1");
  const int n = detail::quadrature_points(dim);
  const detail::Axis1D ax = detail::tabulate(t, dim, n, tol);
  auto value = [&](int i, int j, int k) {
    int idx[3] = {i, j, k};
    double acc = 0.0;
    for (int c = 0; c < dim; ++c) {
      double term = ax.dg[idx[c]];
      for (int o = 0; o < dim; ++o)
        if (o != c) term *= ax.g[idx[o]];
      acc += term * term;
    }
    return std::sqrt(acc);
  };
  if (!std::isinf(p)) return detail::tensor_lp(dim, n, p, value);

  double best = 0.0;
  int bi = 0, bj = 0, bk = 0;
  const int nk = dim == 3 ? n : 1;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < nk; ++k)
        if (value(i, j, k) > best) {
          best = value(i, j, k);
          bi = i;
          bj = j;
          bk = k;
        }
  auto value_at = [&](const Vec& x) { return norm(gamma_gradient(x, t, dim, tol), dim); };
  return detail::refined_max(dim, n, value_at, bi, bj, bk, best);
}

// Decay envelopes with the constant set to one; the fitted constant is the
// reported sup-ratio.
inline double envelope_distance(double t, double p, int dim) {
  const double a = std::isinf(p) ? 1.0 : 1.0 - 1.0 / p;
  return std::pow(1.0 / t + std::pow(t, -0.5 * dim), a) * std::exp(-t * a);
}

inline double envelope_gradient(double t, double p, int dim) {
  const double inv_p = std::isinf(p) ? 0.0 : 1.0 / p;
  const double a = 1.0 - inv_p;
  return (std::pow(t, -(1.0 - 0.5 * inv_p)) + std::pow(t, -0.5 * dim * a - 0.5)) * std::exp(-t * a);
}

struct BoundRow {
  std::string quantity;
  double t = 0.0;
  double p = 0.0;
  double measured = 0.0;
  double envelope = 0.0;
  double ratio = 0.0;
};

struct BoundSummary {
  double p = 0.0;
  double sup_ratio_distance = 0.0;
  double sup_ratio_gradient = 0.0;
  double trend_distance = 0.0;
  double trend_gradient = 0.0;
  bool bounded = true;
  double fitted_rate_distance = 0.0;
  double fitted_rate_gradient = 0.0;
};

struct BoundReport {
  int dim = 2;
  std::vector<BoundRow> rows;
  std::vector<BoundSummary> per_p;
};

inline constexpr double trend_threshold = 0.02;

namespace detail {

// Least-squares slope of log(ratio) against t over the upper half of the
// grid; a positive slope above threshold means the envelope misses growth.
inline double tail_trend(const std::vector<double>& ts, const std::vector<double>& ratios) {
  std::vector<double> sorted = ts;
  std::sort(sorted.begin(), sorted.end());
  const double median = sorted[sorted.size() / 2];
  double st = 0, sy = 0, stt = 0, sty = 0;
  std::size_t m = 0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    if (ts[i] < median || ratios[i] <= 0.0) continue;
    double y = std::log(ratios[i]);
    st += ts[i];
    sy += y;
    stt += ts[i] * ts[i];
    sty += ts[i] * y;
    ++m;
  }
  if (m < 3) return 0.0;
  double denom = m * stt - st * st;
  if (denom <= 0.0) return 0.0;
  return (m * sty - st * sy) / denom;
}

}  // namespace detail

inline BoundReport bound_check(const std::vector<double>& t_grid, const std::vector<double>& p_list,
                               int dim, double tol = default_tolerance) {
  require(!t_grid.empty(), "bound_check: empty t grid");
  require(!p_list.empty(), "bound_check: empty p list");
  BoundReport report;
  report.dim = dim;
  for (double p : p_list) {
    BoundSummary s;
    s.p = p;
    std::vector<double> ts, md, mg, rd, rg;
    for (double t : t_grid) {
      double measured_d = lp_distance_to_mean(t, p, dim, tol);
      double envelope_d = envelope_distance(t, p, dim);
      double measured_g = grad_lp_norm(t, p, dim, tol);
      double envelope_g = envelope_gradient(t, p, dim);
      report.rows.push_back({"distance_to_mean", t, p, measured_d, envelope_d, measured_d / envelope_d});
      report.rows.push_back({"gradient", t, p, measured_g, envelope_g, measured_g / envelope_g});
      ts.push_back(t);
      md.push_back(std::max(measured_d, 1e-300));
      mg.push_back(std::max(measured_g, 1e-300));
      rd.push_back(measured_d / envelope_d);
      rg.push_back(measured_g / envelope_g);
      s.sup_ratio_distance = std::max(s.sup_ratio_distance, rd.back());
      s.sup_ratio_gradient = std::max(s.sup_ratio_gradient, rg.back());
    }
    s.trend_distance = detail::tail_trend(ts, rd);
    s.trend_gradient = detail::tail_trend(ts, rg);
    s.bounded = s.trend_distance <= trend_threshold && s.trend_gradient <= trend_threshold;
    std::size_t tail = 0;
    for (double t : ts)
      if (t >= 1.0) ++tail;
    if (tail >= 8) {
      s.fitted_rate_distance = diagnostics::fit_decay_rate(ts, md, 1.0).rate;
      s.fitted_rate_gradient = diagnostics::fit_decay_rate(ts, mg, 1.0).rate;
    }
    report.per_p.push_back(s);
  }
  return report;
}

}  // namespace swarmflow::heat_kernel
