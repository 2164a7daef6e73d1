#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "swarmflow/kinetic.hpp"

using namespace swarmflow;
using namespace swarmflow::kinetic;
using spectral::GridField;
using spectral::SpectralField;

namespace {

ParticleEnsemble two_particle(int dim, Vec x0, Vec v0, double w0, Vec x1, Vec v1, double w1) {
  ParticleEnsemble ens = ParticleEnsemble::empty(dim, 2);
  for (int k = 0; k < dim; ++k) {
    ens.x[k] = x0[k];
    ens.v[k] = v0[k];
    ens.x[dim + k] = x1[k];
    ens.v[dim + k] = v1[k];
  }
  ens.w[0] = w0;
  ens.w[1] = w1;
  return ens;
}

Vec weighted_mean_velocity(const ParticleEnsemble& ens) {
  Vec m = vzero();
  double mass = 0.0;
  for (std::size_t i = 0; i < ens.N; ++i) {
    mass += ens.w[i];
    for (int k = 0; k < ens.dim; ++k) m[k] += ens.w[i] * ens.v[i * ens.dim + k];
  }
  for (int k = 0; k < ens.dim; ++k) m[k] /= mass;
  return m;
}

double max_speed_deviation(const ParticleEnsemble& ens, const Vec& center) {
  double r = 0.0;
  for (std::size_t i = 0; i < ens.N; ++i) {
    double d2 = 0.0;
    for (int k = 0; k < ens.dim; ++k) {
      double d = ens.v[i * ens.dim + k] - center[k];
      d2 += d * d;
    }
    r = std::max(r, std::sqrt(d2));
  }
  return r;
}

}  // namespace

TEST_CASE("communication weight family") {
  CommunicationWeight psi{0.5, -0.2};
  REQUIRE(psi.psi_min(2) == Catch::Approx(0.1));
  REQUIRE(psi.psi_max(2) == Catch::Approx(0.9));
  REQUIRE(psi.psi_min(3) == Catch::Approx(-0.1));

  Vec r{0.7, 2.1, 0.0};
  Vec rneg{-0.7, -2.1, 0.0};
  REQUIRE(psi(r, 2) == Catch::Approx(psi(rneg, 2)).margin(1e-16));
  REQUIRE(psi(r, 2) == Catch::Approx(0.5 - 0.2 * (std::cos(0.7) + std::cos(2.1))));

  GridField g = psi.grid(2, 16);
  const std::size_t total = g.points();
  double lo = 1e300, hi = -1e300;
  for (std::size_t p = 0; p < total; ++p) {
    auto idx = spectral::unflatten(p, 2, 16);
    Vec x{spectral::grid_coord(idx[0], 16), spectral::grid_coord(idx[1], 16), 0.0};
    REQUIRE(g.data[p] == Catch::Approx(psi(x, 2)).margin(1e-15));
    lo = std::min(lo, g.data[p]);
    hi = std::max(hi, g.data[p]);
  }
  REQUIRE(lo >= psi.psi_min(2) - 1e-12);
  REQUIRE(hi <= psi.psi_max(2) + 1e-12);

  REQUIRE(CommunicationWeight{0.0, 0.0}.vanishes());
  REQUIRE_FALSE(psi.vanishes());
}

TEST_CASE("deposit places a nodal particle in a single cell") {
  const int n = 8;
  ParticleEnsemble ens = ParticleEnsemble::empty(2, 1);
  ens.x[0] = spectral::grid_coord(3, n);
  ens.x[1] = spectral::grid_coord(5, n);
  ens.w[0] = 1.0;
  auto [rho, j] = deposit_moments(ens, n);

  const double vol = rho.cell_volume();
  std::size_t home = spectral::flat_index({3, 5, 0}, 2, n);
  for (std::size_t p = 0; p < rho.points(); ++p) {
    if (p == home)
      REQUIRE(rho.data[p] == Catch::Approx(1.0 / vol).epsilon(1e-14));
    else
      REQUIRE(rho.data[p] == 0.0);
  }
  for (double v : j.data) REQUIRE(v == 0.0);
}

TEST_CASE("deposit of an empty ensemble is zero") {
  ParticleEnsemble ens = ParticleEnsemble::empty(3, 0);
  auto [rho, j] = deposit_moments(ens, 8);
  for (double v : rho.data) REQUIRE(v == 0.0);
  for (double v : j.data) REQUIRE(v == 0.0);
  REQUIRE(j.comps == 3);
}

TEST_CASE("deposit splits a midpoint particle evenly") {
  const int n = 8;
  const double h = two_pi / n;
  ParticleEnsemble ens = ParticleEnsemble::empty(2, 1);
  ens.x[0] = 2.0 * h + 0.5 * h;
  ens.x[1] = 6.0 * h;
  ens.w[0] = 2.0;
  auto [rho, j] = deposit_moments(ens, n);

  const double vol = rho.cell_volume();
  std::size_t left = spectral::flat_index({2, 6, 0}, 2, n);
  std::size_t right = spectral::flat_index({3, 6, 0}, 2, n);
  REQUIRE(rho.data[left] == Catch::Approx(1.0 / vol).epsilon(1e-13));
  REQUIRE(rho.data[right] == Catch::Approx(1.0 / vol).epsilon(1e-13));
  double sum = 0.0;
  for (double v : rho.data) sum += v;
  REQUIRE(sum * vol == Catch::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("deposited moments integrate to the ensemble totals") {
  Rng rng(81);
  const int n = 16;
  ParticleEnsemble ens = sample_ensemble(2, 500, 2.5, Vec{0.3, -0.1, 0.0}, 0.7, false, rng);
  auto [rho, j] = deposit_moments(ens, n);

  const double vol = rho.cell_volume();
  double mass = 0.0;
  for (double v : rho.data) mass += v;
  REQUIRE(mass * vol == Catch::Approx(ens.mass()).epsilon(1e-13));

  for (int c = 0; c < 2; ++c) {
    double mom = 0.0;
    for (std::size_t p = 0; p < j.points(); ++p) mom += j.at(c, p);
    double exact = 0.0;
    for (std::size_t i = 0; i < ens.N; ++i) exact += ens.w[i] * ens.v[i * 2 + c];
    REQUIRE(mom * vol == Catch::Approx(exact).margin(1e-13 * ens.mass()));
  }

  for (double v : rho.data) REQUIRE(v >= 0.0);
}

TEST_CASE("interpolation reproduces constants and cell-linear profiles") {
  const int n = 8;
  GridField g = GridField::zeros(2, n, 1);
  for (double& v : g.data) v = 3.25;
  ParticleEnsemble ens = ParticleEnsemble::empty(2, 3);
  Rng rng(82);
  for (std::size_t i = 0; i < 3; ++i)
    for (int k = 0; k < 2; ++k) ens.x[i * 2 + k] = rng.uniform(0.0, two_pi);
  std::vector<double> vals = interpolate_field(g, ens);
  for (double v : vals) REQUIRE(v == Catch::Approx(3.25).epsilon(1e-15));

  // a globally affine sample is reproduced exactly inside an unwrapped cell
  GridField lin = GridField::zeros(2, n, 1);
  for (std::size_t p = 0; p < lin.points(); ++p) {
    auto idx = spectral::unflatten(p, 2, n);
    lin.data[p] = 2.0 + 3.0 * spectral::grid_coord(idx[0], n) - 0.5 * spectral::grid_coord(idx[1], n);
  }
  const double h = two_pi / n;
  ParticleEnsemble probe = ParticleEnsemble::empty(2, 1);
  probe.x[0] = 3.0 * h + 0.37 * h;
  probe.x[1] = 5.0 * h + 0.81 * h;
  double got = interpolate_field(lin, probe)[0];
  REQUIRE(got == Catch::Approx(2.0 + 3.0 * probe.x[0] - 0.5 * probe.x[1]).epsilon(1e-13));
}

TEST_CASE("deposition and interpolation are adjoint") {
  Rng rng(83);
  const int n = 8;
  const std::size_t N = 100;
  ParticleEnsemble ens = sample_ensemble(2, N, 1.7, vzero(), 1.0, false, rng);
  GridField g = GridField::zeros(2, n, 1);
  for (double& v : g.data) v = rng.uniform(-1.0, 1.0);

  std::vector<double> vals = interpolate_field(g, ens);
  double lhs = 0.0;
  for (std::size_t i = 0; i < N; ++i) lhs += ens.w[i] * vals[i];

  std::vector<double> ones(N, 1.0);
  GridField dep = deposit(ens, n, ones.data(), 1);
  double rhs = 0.0;
  for (std::size_t p = 0; p < dep.points(); ++p) rhs += g.data[p] * dep.data[p];
  rhs *= dep.cell_volume();

  REQUIRE(lhs == Catch::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("constant kernel alignment fields are the global averages") {
  Rng rng(84);
  const int n = 16;
  ParticleEnsemble ens = sample_ensemble(2, 200, 1.3, Vec{0.4, 0.2, 0.0}, 0.5, false, rng);
  auto [rho, j] = deposit_moments(ens, n);
  CommunicationWeight psi{1.0, 0.0};
  auto [A, B] = alignment_fields(rho, j, psi);

  Vec P = vzero();
  for (std::size_t i = 0; i < ens.N; ++i)
    for (int k = 0; k < 2; ++k) P[k] += ens.w[i] * ens.v[i * 2 + k];

  for (std::size_t p = 0; p < A.points(); ++p) {
    REQUIRE(A.at(0, p) == Catch::Approx(P[0]).margin(1e-12));
    REQUIRE(A.at(1, p) == Catch::Approx(P[1]).margin(1e-12));
    REQUIRE(B.data[p] == Catch::Approx(ens.mass()).epsilon(1e-12));
  }
}

TEST_CASE("pure cosine kernel annihilates a uniform density") {
  const int n = 8;
  ParticleEnsemble ens = ParticleEnsemble::empty(2, n * n);
  for (int i = 0; i < n; ++i)
    for (int jj = 0; jj < n; ++jj) {
      std::size_t p = static_cast<std::size_t>(i * n + jj);
      ens.x[p * 2] = spectral::grid_coord(i, n);
      ens.x[p * 2 + 1] = spectral::grid_coord(jj, n);
      ens.w[p] = 1.0 / (n * n);
    }
  auto [rho, j] = deposit_moments(ens, n);
  CommunicationWeight psi{0.0, 1.0};
  auto [A, B] = alignment_fields(rho, j, psi);
  for (double v : B.data) REQUIRE(std::abs(v) < 1e-13);
}

TEST_CASE("two opposed particles under a constant kernel feel pure relaxation") {
  const int n = 8;
  ParticleEnsemble ens = two_particle(2, Vec{1.0, 4.0, 0.0}, Vec{1.0, 0.0, 0.0}, 0.5,
                                      Vec{4.5, 2.0, 0.0}, Vec{-1.0, 0.0, 0.0}, 0.5);
  auto [rho, j] = deposit_moments(ens, n);
  auto [A, B] = alignment_fields(rho, j, CommunicationWeight{1.0, 0.0});

  std::vector<double> Ai = interpolate_field(A, ens);
  std::vector<double> Bi = interpolate_field(B, ens);
  for (std::size_t i = 0; i < 2; ++i) {
    for (int k = 0; k < 2; ++k) {
      double fa = Ai[i * 2 + k] - ens.v[i * 2 + k] * Bi[i];
      REQUIRE(fa == Catch::Approx(-ens.v[i * 2 + k]).margin(1e-13));
    }
  }
}

TEST_CASE("particle acceleration assembles drag and alignment") {
  const int n = 8;

  SECTION("bare drag toward rest") {
    ParticleEnsemble ens = ParticleEnsemble::empty(2, 1);
    ens.x = {1.0, 2.0};
    ens.v = {1.0, 0.0};
    ens.w = {1.0};
    GridField zeroA = GridField::zeros(2, n, 2);
    GridField zeroB = GridField::zeros(2, n, 1);
    GridField zeroU = GridField::zeros(2, n, 2);
    auto a = particle_rhs(ens, zeroA, zeroB, zeroU);
    REQUIRE(a[0] == -1.0);
    REQUIRE(a[1] == 0.0);
  }

  SECTION("a lone particle exerts no alignment force on itself") {
    ParticleEnsemble ens = ParticleEnsemble::empty(2, 1);
    ens.x = {2.7, 0.9};
    ens.v = {0.8, -0.4};
    ens.w = {1.0};
    auto [rho, j] = deposit_moments(ens, n);
    auto [A, B] = alignment_fields(rho, j, CommunicationWeight{1.0, 0.0});
    GridField u = GridField::zeros(2, n, 2);
    for (std::size_t p = 0; p < u.points(); ++p) {
      auto idx = spectral::unflatten(p, 2, n);
      u.at(0, p) = std::cos(spectral::grid_coord(idx[0], n));
    }
    auto a = particle_rhs(ens, A, B, u);
    double u_here = interpolate_field(u, ens)[0];
    REQUIRE(a[0] == Catch::Approx(u_here - 0.8).margin(1e-13));
    REQUIRE(a[1] == Catch::Approx(0.4).margin(1e-13));
  }

  SECTION("constant kernel gives the closed-form linear force") {
    Rng rng(85);
    const double c = 1.3;
    ParticleEnsemble ens = sample_ensemble(2, 40, 2.0, vzero(), 1.0, false, rng);
    auto [rho, j] = deposit_moments(ens, 16);
    auto [A, B] = alignment_fields(rho, j, CommunicationWeight{c, 0.0});
    GridField u = GridField::zeros(2, 16, 2);
    auto a = particle_rhs(ens, A, B, u);

    Vec P = vzero();
    for (std::size_t i = 0; i < ens.N; ++i)
      for (int k = 0; k < 2; ++k) P[k] += ens.w[i] * ens.v[i * 2 + k];
    for (std::size_t i = 0; i < ens.N; ++i)
      for (int k = 0; k < 2; ++k) {
        double expect = c * (P[k] - ens.mass() * ens.v[i * 2 + k]) - ens.v[i * 2 + k];
        REQUIRE(a[i * 2 + k] == Catch::Approx(expect).margin(1e-12));
      }
  }
}

TEST_CASE("free streaming is exact when all forces are off") {
  Rng rng(86);
  ParticleEnsemble ens = sample_ensemble(2, 50, 1.0, vzero(), 1.5, false, rng);
  fluid::FluidState fl{SpectralField::zeros(2, 8, 2), 1.0, 0.0};
  const double dt = 0.37;
  Toggles off{false, false, true};

  auto [next, fnext] = step_coupled(ens, fl, CommunicationWeight{}, dt, off);
  for (std::size_t i = 0; i < ens.N; ++i)
    for (int k = 0; k < 2; ++k) {
      REQUIRE(next.v[i * 2 + k] == ens.v[i * 2 + k]);
      REQUIRE(next.x[i * 2 + k] == wrap_coordinate(ens.x[i * 2 + k] + dt * ens.v[i * 2 + k]));
    }
  REQUIRE(fnext.t == dt);
}

TEST_CASE("drag against a frozen still fluid is exponential relaxation") {
  Rng rng(87);
  ParticleEnsemble ens = sample_ensemble(2, 30, 1.0, vzero(), 1.0, false, rng);
  ParticleEnsemble start = ens;
  fluid::FluidState fl{SpectralField::zeros(2, 8, 2), 1.0, 0.0};
  Toggles tg{true, false, true};
  StepWorkspace ws;

  const double dt = 1e-3;
  const int steps = 1000;
  for (int s = 0; s < steps; ++s) {
    auto [e2, f2] = step_coupled(ens, fl, CommunicationWeight{}, dt, tg, &ws);
    ens = std::move(e2);
    fl = std::move(f2);
  }
  const double decay = std::exp(-1.0);
  for (std::size_t i = 0; i < ens.N; ++i)
    for (int k = 0; k < 2; ++k)
      REQUIRE(ens.v[i * 2 + k] == Catch::Approx(start.v[i * 2 + k] * decay).margin(1e-6));
}

TEST_CASE("constant-kernel flocking matches the exact solution") {
  Rng rng(88);
  ParticleEnsemble ens = sample_ensemble(2, 30, 1.0, Vec{0.2, -0.1, 0.0}, 0.8, false, rng);
  ParticleEnsemble start = ens;
  Vec vc0 = weighted_mean_velocity(ens);
  fluid::FluidState fl{SpectralField::zeros(2, 16, 2), 1.0, 0.0};
  Toggles tg{false, true, true};
  StepWorkspace ws;
  CommunicationWeight psi{1.0, 0.0};

  const double dt = 1e-3;
  for (int s = 0; s < 1000; ++s) {
    auto [e2, f2] = step_coupled(ens, fl, psi, dt, tg, &ws);
    ens = std::move(e2);
    fl = std::move(f2);
  }

  Vec vc = weighted_mean_velocity(ens);
  REQUIRE(std::abs(vc[0] - vc0[0]) < 1e-12);
  REQUIRE(std::abs(vc[1] - vc0[1]) < 1e-12);

  const double decay = std::exp(-1.0);  // rate c M0 = 1
  for (std::size_t i = 0; i < ens.N; ++i)
    for (int k = 0; k < 2; ++k) {
      double expect = vc0[k] + (start.v[i * 2 + k] - vc0[k]) * decay;
      REQUIRE(ens.v[i * 2 + k] == Catch::Approx(expect).margin(1e-5));
    }
}

TEST_CASE("alignment contracts the velocity support by the Heun factor") {
  Rng rng(89);
  const double c = 1.3;
  const double m0 = 2.0;
  const double dt = 1e-2;
  ParticleEnsemble ens = sample_ensemble(2, 50, m0, vzero(), 1.0, true, rng);
  fluid::FluidState fl{SpectralField::zeros(2, 16, 2), 1.0, 0.0};
  Toggles tg{false, true, true};
  StepWorkspace ws;
  CommunicationWeight psi{c, 0.0};

  Vec vc = weighted_mean_velocity(ens);
  double before = max_speed_deviation(ens, vc);
  auto [next, f2] = step_coupled(ens, fl, psi, dt, tg, &ws);
  double after = max_speed_deviation(next, vc);

  const double lam = c * m0;
  REQUIRE(after / before == Catch::Approx(std::exp(-lam * dt)).margin(2.0 * lam * lam * dt * dt));
  REQUIRE(after / before == Catch::Approx(1.0 - lam * dt + 0.5 * lam * lam * dt * dt).margin(1e-12));
}

TEST_CASE("mass and weights never change during stepping") {
  Rng rng(90);
  ParticleEnsemble ens = sample_ensemble(2, 100, 1.9, Vec{0.1, 0.0, 0.0}, 0.6, false, rng);
  std::vector<double> w0 = ens.w;
  fluid::FluidState fl{fluid::random_solenoidal(2, 16, 0.5, 4, rng), 1.0, 0.0};
  Toggles tg{true, true, false};
  StepWorkspace ws;
  for (int s = 0; s < 50; ++s) {
    auto [e2, f2] = step_coupled(ens, fl, CommunicationWeight{1.0, 0.5}, 0.01, tg, &ws);
    ens = std::move(e2);
    fl = std::move(f2);
  }
  REQUIRE(ens.w == w0);
  for (std::size_t i = 0; i < ens.N; ++i)
    for (int k = 0; k < 2; ++k) {
      REQUIRE(ens.x[i * 2 + k] >= 0.0);
      REQUIRE(ens.x[i * 2 + k] < two_pi);
    }
}

TEST_CASE("coupled stepping conserves total momentum to rounding") {
  Rng rng(91);
  ParticleEnsemble ens = sample_ensemble(2, 200, 1.2, Vec{0.2, -0.3, 0.0}, 0.5, false, rng);
  fluid::FluidState fl{fluid::random_solenoidal(2, 16, 0.7, 4, rng), 1.0, 0.0};
  Toggles tg{true, true, false};
  StepWorkspace ws;
  CommunicationWeight psi{1.0, 0.3};

  auto total_momentum = [&](const ParticleEnsemble& e, const fluid::FluidState& f) {
    Vec p = spectral::mean_mode(f.u);
    for (std::size_t i = 0; i < e.N; ++i)
      for (int k = 0; k < 2; ++k) p[k] += e.w[i] * e.v[i * 2 + k];
    return p;
  };

  Vec p0 = total_momentum(ens, fl);
  for (int s = 0; s < 100; ++s) {
    auto [e2, f2] = step_coupled(ens, fl, psi, 0.01, tg, &ws);
    ens = std::move(e2);
    fl = std::move(f2);
  }
  Vec p1 = total_momentum(ens, fl);
  for (int k = 0; k < 2; ++k) REQUIRE(std::abs(p1[k] - p0[k]) < 1e-10);
}

TEST_CASE("step_coupled validates its inputs and detects blow-up") {
  Rng rng(92);
  ParticleEnsemble ens = sample_ensemble(2, 10, 1.0, vzero(), 1.0, false, rng);
  fluid::FluidState fl{SpectralField::zeros(2, 8, 2), 1.0, 0.5};
  Toggles tg{true, false, true};

  REQUIRE_THROWS_AS(step_coupled(ens, fl, CommunicationWeight{}, 0.0, tg), std::invalid_argument);

  ParticleEnsemble bad3 = sample_ensemble(3, 10, 1.0, vzero(), 1.0, false, rng);
  REQUIRE_THROWS_AS(step_coupled(bad3, fl, CommunicationWeight{}, 0.1, tg), std::invalid_argument);

  ParticleEnsemble poisoned = ens;
  poisoned.v[3] = std::nan("");
  try {
    step_coupled(poisoned, fl, CommunicationWeight{}, 0.1, tg);
    FAIL("expected blow-up");
  } catch (const blowup_error& e) {
    REQUIRE(e.time == 0.5);
  }

  ParticleEnsemble fast = ens;
  fast.v[0] = 1e308;
  try {
    step_coupled(fast, fl, CommunicationWeight{}, 10.0, tg);
    FAIL("expected blow-up");
  } catch (const blowup_error& e) {
    REQUIRE(e.time == 10.5);
  }
}

TEST_CASE("ensemble sampling honours its contract") {
  Rng rng(93);
  ParticleEnsemble ens = sample_ensemble(2, 400, 3.0, Vec{0.5, -0.2, 0.0}, 0.3, true, rng);

  REQUIRE(ens.N == 400);
  REQUIRE(ens.mass() == Catch::Approx(3.0).epsilon(1e-13));
  for (double w : ens.w) REQUIRE(w == 3.0 / 400.0);
  for (double xi : ens.x) {
    REQUIRE(xi >= 0.0);
    REQUIRE(xi < two_pi);
  }
  Vec vc = weighted_mean_velocity(ens);
  REQUIRE(vc[0] == Catch::Approx(0.5).margin(1e-12));
  REQUIRE(vc[1] == Catch::Approx(-0.2).margin(1e-12));

  Rng r1(94), r2(94);
  ParticleEnsemble a = sample_ensemble(3, 20, 1.0, vzero(), 1.0, false, r1);
  ParticleEnsemble b = sample_ensemble(3, 20, 1.0, vzero(), 1.0, false, r2);
  REQUIRE(a.x == b.x);
  REQUIRE(a.v == b.v);

  Rng r3(95);
  ParticleEnsemble cold = sample_ensemble(2, 15, 1.0, Vec{0.7, 0.1, 0.0}, 0.0, false, r3);
  for (std::size_t i = 0; i < cold.N; ++i) {
    REQUIRE(cold.v[i * 2] == 0.7);
    REQUIRE(cold.v[i * 2 + 1] == 0.1);
  }

  REQUIRE_THROWS_AS(sample_ensemble(2, 10, 0.0, vzero(), 1.0, false, r3), std::invalid_argument);

  ParticleEnsemble none = sample_ensemble(2, 0, 1.0, vzero(), 1.0, false, r3);
  REQUIRE(none.N == 0);
  REQUIRE(none.mass() == 0.0);
}
