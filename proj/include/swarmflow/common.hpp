#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace swarmflow {

inline constexpr double two_pi = 6.283185307179586476925286766559;

using cplx = std::complex<double>;

// Coordinate triple with fixed capacity; the active dimension travels with the
// owning field or ensemble, unused trailing components stay zero.
using Vec = std::array<double, 3>;

inline constexpr Vec vzero() { return {0.0, 0.0, 0.0}; }

inline double dot(const Vec& a, const Vec& b, int dim) {
  double s = 0.0;
  for (int k = 0; k < dim; ++k) s += a[k] * b[k];
  return s;
}

inline double norm_sq(const Vec& a, int dim) { return dot(a, a, dim); }

inline double norm(const Vec& a, int dim) { return std::sqrt(norm_sq(a, dim)); }

// Maps x to the fundamental cell [0, 2*pi).
inline double wrap_coordinate(double x) {
  double y = std::fmod(x, two_pi);
  if (y < 0.0) y += two_pi;
  if (y >= two_pi) y = 0.0;
  return y;
}

// Shortest signed displacement from b to a along one periodic axis.
inline double periodic_delta(double a, double b) {
  double d = std::fmod(a - b, two_pi);
  if (d > 0.5 * two_pi) d -= two_pi;
  if (d < -0.5 * two_pi) d += two_pi;
  return d;
}

inline double torus_distance_sq(const Vec& a, const Vec& b, int dim) {
  double s = 0.0;
  for (int k = 0; k < dim; ++k) {
    double d = periodic_delta(a[k], b[k]);
    s += d * d;
  }
  return s;
}

struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raised by the time loop when a state norm leaves the finite range.
struct blowup_error : std::runtime_error {
  double time;
  explicit blowup_error(double t)
      : std::runtime_error("non-finite state detected at t = " + std::to_string(t)),
        time(t) {}
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

inline std::string version_string() { return "swarmflow 0.1.0"; }

// Seeded generator with hand-rolled output maps so that streams are identical
// across standard library implementations (std::*_distribution are not pinned
// by the standard).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = two_pi * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  // uniform integer in [0, m)
  std::size_t index(std::size_t m) {
    return static_cast<std::size_t>(uniform() * static_cast<double>(m)) % m;
  }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace swarmflow
