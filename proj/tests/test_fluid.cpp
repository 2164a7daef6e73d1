#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "swarmflow/fluid.hpp"

using namespace swarmflow;
using namespace swarmflow::fluid;
using spectral::GridField;
using spectral::SpectralField;

namespace {

GridField constant_field(int dim, int n, int comps, const std::vector<double>& vals) {
  GridField g = GridField::zeros(dim, n, comps);
  const std::size_t total = g.points();
  for (int c = 0; c < comps; ++c)
    for (std::size_t p = 0; p < total; ++p) g.at(c, p) = vals[c];
  return g;
}

GridField eval_on_grid(int dim, int n, int comps, auto&& fn) {
  GridField g = GridField::zeros(dim, n, comps);
  const std::size_t total = g.points();
  for (std::size_t p = 0; p < total; ++p) {
    auto idx = spectral::unflatten(p, dim, n);
    Vec x = vzero();
    for (int k = 0; k < dim; ++k) x[k] = spectral::grid_coord(idx[k], n);
    for (int c = 0; c < comps; ++c) g.at(c, p) = fn(c, x);
  }
  return g;
}

double max_pointwise_error(const GridField& a, const GridField& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

double max_coeff_error(const SpectralField& a, const SpectralField& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.coeff.size(); ++i) m = std::max(m, std::abs(a.coeff[i] - b.coeff[i]));
  return m;
}

}  // namespace

TEST_CASE("drag source is j - rho u pointwise") {
  const int n = 8;
  Rng rng(71);
  GridField rho = GridField::zeros(2, n, 1);
  GridField j = GridField::zeros(2, n, 2);
  GridField u = GridField::zeros(2, n, 2);
  for (double& v : rho.data) v = rng.uniform(0.0, 2.0);
  for (double& v : j.data) v = rng.uniform(-1.0, 1.0);
  for (double& v : u.data) v = rng.uniform(-1.0, 1.0);

  SECTION("still fluid leaves the current alone") {
    GridField zero_u = GridField::zeros(2, n, 2);
    GridField s = compute_drag_source(rho, j, zero_u);
    REQUIRE(max_pointwise_error(s, j) == 0.0);
  }

  SECTION("vacuum gives no force") {
    GridField zero_rho = GridField::zeros(2, n, 1);
    GridField zero_j = GridField::zeros(2, n, 2);
    GridField s = compute_drag_source(zero_rho, zero_j, u);
    for (double v : s.data) REQUIRE(v == 0.0);
  }

  SECTION("unit density at rest opposes the flow") {
    GridField one = constant_field(2, n, 1, {1.0});
    GridField zero_j = GridField::zeros(2, n, 2);
    GridField uc = constant_field(2, n, 2, {1.0, 0.0});
    GridField s = compute_drag_source(one, zero_j, uc);
    const std::size_t total = s.points();
    for (std::size_t p = 0; p < total; ++p) {
      REQUIRE(s.at(0, p) == -1.0);
      REQUIRE(s.at(1, p) == 0.0);
    }
  }

  SECTION("random fields match the formula") {
    GridField s = compute_drag_source(rho, j, u);
    const std::size_t total = s.points();
    for (int c = 0; c < 2; ++c)
      for (std::size_t p = 0; p < total; ++p)
        REQUIRE(s.at(c, p) == j.at(c, p) - rho.data[p] * u.at(c, p));
  }

  SECTION("shape mismatches are rejected") {
    GridField rho16 = GridField::zeros(2, 16, 1);
    REQUIRE_THROWS_AS(compute_drag_source(rho16, j, u), std::invalid_argument);
    GridField jbad = GridField::zeros(2, n, 1);
    REQUIRE_THROWS_AS(compute_drag_source(rho, jbad, u), std::invalid_argument);
  }
}

TEST_CASE("advection term vanishes where it should") {
  SECTION("constant velocity") {
    GridField g = constant_field(2, 16, 2, {0.7, -0.3});
    SpectralField nl = nonlinear_term(spectral::forward_transform(g));
    for (const cplx& z : nl.coeff) REQUIRE(std::abs(z) < 1e-15);
  }

  SECTION("three dimensions carry no advection") {
    Rng rng(72);
    SpectralField u = random_solenoidal(3, 8, 1.0, 2, rng);
    SpectralField nl = nonlinear_term(u);
    for (const cplx& z : nl.coeff) REQUIRE(z == cplx(0.0, 0.0));
  }

  SECTION("Taylor-Green is a projected fixed point") {
    SpectralField u = taylor_green(32, 1.0);
    SpectralField nl = nonlinear_term(u);
    for (const cplx& z : nl.coeff) REQUIRE(std::abs(z) < 1e-13);
  }
}

TEST_CASE("advection term matches a hand-computed flow") {
  // u = (2 sin 2x2, -sin x1) gives -P[(u.grad)u] =
  // ((12/5) sin x1 cos 2x2, -(6/5) cos x1 sin 2x2).
  const int n = 16;
  GridField ug = eval_on_grid(2, n, 2, [](int c, const Vec& x) {
    return c == 0 ? 2.0 * std::sin(2.0 * x[1]) : -std::sin(x[0]);
  });
  SpectralField u = spectral::forward_transform(ug);
  GridField nl = spectral::inverse_transform(nonlinear_term(u));
  GridField expected = eval_on_grid(2, n, 2, [](int c, const Vec& x) {
    return c == 0 ? (12.0 / 5.0) * std::sin(x[0]) * std::cos(2.0 * x[1])
                  : -(6.0 / 5.0) * std::cos(x[0]) * std::sin(2.0 * x[1]);
  });
  REQUIRE(max_pointwise_error(nl, expected) < 1e-12);
}

TEST_CASE("advection term is energy neutral and divergence free") {
  Rng rng(73);
  SpectralField u = random_solenoidal(2, 24, 1.0, 7, rng);
  SpectralField nl = nonlinear_term(u);

  SpectralField div = spectral::divergence(nl);
  for (const cplx& z : div.coeff) REQUIRE(std::abs(z) < 1e-13);
  REQUIRE(std::abs(nl.coeff[0]) < 1e-15);
  REQUIRE(std::abs(nl.coeff[nl.points()]) < 1e-15);

  // in-band velocity: the retained convolution is exact, so <u, nl> = 0
  double inner = 0.0;
  double scale = 0.0;
  for (std::size_t i = 0; i < u.coeff.size(); ++i) {
    inner += (std::conj(u.coeff[i]) * nl.coeff[i]).real();
    scale += std::abs(u.coeff[i]) * std::abs(nl.coeff[i]);
  }
  REQUIRE(std::abs(inner) < 1e-13 * std::max(scale, 1.0));
}

TEST_CASE("fluid step requires a positive dt and matching source") {
  FluidState st{taylor_green(8, 1.0), 1.0, 0.0};
  GridField src = GridField::zeros(2, 8, 2);
  REQUIRE_THROWS_AS(fluid_step(st, src, 0.0), std::invalid_argument);
  REQUIRE_THROWS_AS(fluid_step(st, src, -0.1), std::invalid_argument);
  GridField bad = GridField::zeros(2, 16, 2);
  REQUIRE_THROWS_AS(fluid_step(st, bad, 0.1), std::invalid_argument);
}

TEST_CASE("fluid step fixes the rest state and advances time") {
  FluidState st{SpectralField::zeros(2, 16, 2), 0.8, 1.5};
  st.u.solenoidal = true;
  GridField src = GridField::zeros(2, 16, 2);
  FluidState next = fluid_step(st, src, 0.25);
  REQUIRE(next.t == 1.75);
  REQUIRE(next.mu == 0.8);
  for (const cplx& z : next.u.coeff) REQUIRE(z == cplx(0.0, 0.0));
}

TEST_CASE("Stokes flow decays by exact heat factors") {
  const int n = 8;
  const double mu = 0.7;
  const double dt = 0.01;
  SpectralField u0 = SpectralField::zeros(3, n, 3);
  std::array<int, 3> plus{1, 0, 0};
  std::array<int, 3> minus{n - 1, 0, 0};
  u0.at(1, spectral::flat_index(plus, 3, n)) = cplx(0.5, 0.0);
  u0.at(1, spectral::flat_index(minus, 3, n)) = cplx(0.5, 0.0);
  u0.solenoidal = true;

  GridField src = GridField::zeros(3, n, 3);
  FluidState st{u0, mu, 0.0};
  for (int s = 0; s < 10; ++s) st = fluid_step(st, src, dt);

  const double factor = std::exp(-mu * st.t);
  REQUIRE(st.t == Catch::Approx(0.1).margin(1e-14));
  cplx got = st.u.at(1, spectral::flat_index(plus, 3, n));
  REQUIRE(std::abs(got - cplx(0.5 * factor, 0.0)) < 1e-14);
  double off = 0.0;
  for (std::size_t i = 0; i < st.u.coeff.size(); ++i) {
    if (i == st.u.points() + spectral::flat_index(plus, 3, n)) continue;
    if (i == st.u.points() + spectral::flat_index(minus, 3, n)) continue;
    off = std::max(off, std::abs(st.u.coeff[i]));
  }
  REQUIRE(off == 0.0);
}

TEST_CASE("Taylor-Green energy follows the viscous law") {
  const int n = 64;
  const double dt = 1e-3;
  FluidState st{taylor_green(n, 1.0), 1.0, 0.0};
  const double e0 = spectral::l2_norm_sq(st.u);
  REQUIRE(e0 == Catch::Approx(2.0 * std::numbers::pi * std::numbers::pi).epsilon(1e-12));

  GridField src = GridField::zeros(2, n, 2);
  for (int s = 0; s < 250; ++s) st = fluid_step(st, src, dt);
  const double ratio = std::sqrt(spectral::l2_norm_sq(st.u) / e0);
  REQUIRE(std::abs(ratio - std::exp(-2.0 * st.t)) < 1e-11);
}

TEST_CASE("perturbed flow converges at second order") {
  const int n = 32;
  const double T = 0.25;
  SpectralField u0 = taylor_green(n, 1.0);
  GridField pert = eval_on_grid(2, n, 2, [](int c, const Vec& x) {
    // 0.3 * rot(sin 2x1 sin x2)
    return c == 0 ? -0.3 * std::sin(2.0 * x[0]) * std::cos(x[1])
                  : 0.6 * std::cos(2.0 * x[0]) * std::sin(x[1]);
  });
  SpectralField ph = spectral::forward_transform(pert);
  for (std::size_t i = 0; i < u0.coeff.size(); ++i) u0.coeff[i] += ph.coeff[i];

  GridField src = GridField::zeros(2, n, 2);
  auto advance = [&](int steps) {
    FluidState st{u0, 1.0, 0.0};
    const double dt = T / steps;
    for (int s = 0; s < steps; ++s) st = fluid_step(st, src, dt);
    return st.u;
  };
  SpectralField ref = advance(320);
  double e_coarse = max_coeff_error(advance(10), ref);
  double e_fine = max_coeff_error(advance(20), ref);
  REQUIRE(e_coarse > 1e-9);
  double rate = e_coarse / e_fine;
  REQUIRE(rate > 3.0);
  REQUIRE(rate < 5.0);
}

TEST_CASE("stepping preserves solenoidality and mean coupling") {
  Rng rng(74);
  const int n = 24;
  FluidState st{random_solenoidal(2, n, 0.8, 6, rng), 0.5, 0.0};
  GridField src = eval_on_grid(2, n, 2, [](int c, const Vec& x) {
    return c == 0 ? 0.4 + 0.2 * std::cos(x[0]) : 0.1 * std::sin(x[1]);
  });
  for (int s = 0; s < 20; ++s) st = fluid_step(st, src, 0.01);

  SpectralField div = spectral::divergence(st.u);
  for (const cplx& z : div.coeff) REQUIRE(std::abs(z) < 1e-12);

  // the mean source drives the mean flow: d/dt mean(u) = mean(src)
  Vec m = spectral::mean_mode(st.u);
  const double vol = std::pow(two_pi, 2);
  REQUIRE(m[0] == Catch::Approx(0.4 * vol * st.t).epsilon(1e-10));
  REQUIRE(m[1] == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("planar energy never increases without forcing") {
  Rng rng(75);
  const int n = 48;
  FluidState st{random_solenoidal(2, n, 1.5, (n - 1) / 3, rng), 1.0, 0.0};
  GridField src = GridField::zeros(2, n, 2);
  double prev = spectral::l2_norm_sq(st.u);
  for (int s = 0; s < 40; ++s) {
    st = fluid_step(st, src, 0.005);
    double cur = spectral::l2_norm_sq(st.u);
    REQUIRE(cur <= prev * (1.0 + 1e-12));
    prev = cur;
  }
}

TEST_CASE("stepping is deterministic") {
  auto run = [] {
    Rng rng(76);
    FluidState st{random_solenoidal(2, 16, 1.0, 4, rng), 1.0, 0.0};
    GridField src = GridField::zeros(2, 16, 2);
    for (int s = 0; s < 5; ++s) st = fluid_step(st, src, 0.01);
    return st.u.coeff;
  };
  auto a = run();
  auto b = run();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].real() == b[i].real());
    REQUIRE(a[i].imag() == b[i].imag());
  }
}

TEST_CASE("non-finite states surface as blow-up errors") {
  GridField src = GridField::zeros(2, 16, 2);

  SECTION("poisoned input is reported at the current time") {
    FluidState st{taylor_green(16, 1.0), 1.0, 2.5};
    st.u.coeff[3] = cplx(std::nan(""), 0.0);
    REQUIRE_THROWS_AS(fluid_step(st, src, 0.1), blowup_error);
    try {
      fluid_step(st, src, 0.1);
    } catch (const blowup_error& e) {
      REQUIRE(e.time == 2.5);
    }
  }

  SECTION("overflow inside a step is reported at the step end") {
    FluidState st{taylor_green(16, 1e200), 1.0, 1.0};
    try {
      fluid_step(st, src, 0.25);
      FAIL("expected blow-up");
    } catch (const blowup_error& e) {
      REQUIRE(e.time == 1.25);
    }
  }
}

TEST_CASE("vorticity of simple flows") {
  const int n = 16;

  SECTION("shear flow") {
    GridField ug = eval_on_grid(2, n, 2, [](int c, const Vec& x) {
      return c == 0 ? std::sin(x[1]) : 0.0;
    });
    GridField w = vorticity(spectral::forward_transform(ug));
    REQUIRE(w.comps == 1);
    GridField expected = eval_on_grid(2, n, 1, [](int, const Vec& x) { return -std::cos(x[1]); });
    REQUIRE(max_pointwise_error(w, expected) < 1e-13);
  }

  SECTION("constant flow is irrotational") {
    GridField ug = constant_field(2, n, 2, {0.3, -0.8});
    GridField w = vorticity(spectral::forward_transform(ug));
    for (double v : w.data) REQUIRE(std::abs(v) < 1e-15);
  }

  SECTION("three-dimensional curl") {
    GridField ug = eval_on_grid(3, 8, 3, [](int c, const Vec& x) {
      return c == 1 ? std::cos(x[0]) : 0.0;
    });
    GridField w = vorticity(spectral::forward_transform(ug));
    REQUIRE(w.comps == 3);
    GridField expected = eval_on_grid(3, 8, 3, [](int c, const Vec& x) {
      return c == 2 ? -std::sin(x[0]) : 0.0;
    });
    REQUIRE(max_pointwise_error(w, expected) < 1e-13);
  }
}

TEST_CASE("vorticity integrates to zero and matches the gradient energy") {
  Rng rng(77);
  SpectralField u = random_solenoidal(2, 32, 1.0, 9, rng);
  GridField w = vorticity(u);
  REQUIRE(std::abs(spectral::field_integral(w, 0)) < 1e-12);

  // for divergence-free u the enstrophy equals the full gradient energy
  double enst = std::pow(spectral::lp_norm(w, 2.0), 2);
  REQUIRE(enst == Catch::Approx(spectral::gradient_l2_sq(u)).epsilon(1e-10));

  SpectralField u3 = random_solenoidal(3, 8, 1.0, 2, rng);
  GridField w3 = vorticity(u3);
  double enst3 = std::pow(spectral::lp_norm(w3, 2.0), 2);
  REQUIRE(enst3 == Catch::Approx(spectral::gradient_l2_sq(u3)).epsilon(1e-10));
}

TEST_CASE("random solenoidal fields have the advertised statistics") {
  Rng rng(78);
  const int n = 32;
  SpectralField u = random_solenoidal(2, n, 0.9, 5, rng);

  REQUIRE(u.solenoidal);
  SpectralField div = spectral::divergence(u);
  for (const cplx& z : div.coeff) REQUIRE(std::abs(z) < 1e-13);

  Vec m = spectral::mean_mode(u);
  REQUIRE(std::abs(m[0]) < 1e-14);
  REQUIRE(std::abs(m[1]) < 1e-14);

  const double vol = std::pow(two_pi, 2);
  REQUIRE(spectral::l2_norm_sq(u) / vol == Catch::Approx(0.9 * 0.9).epsilon(1e-12));

  const std::size_t total = u.points();
  for (std::size_t p = 0; p < total; ++p) {
    auto idx = spectral::unflatten(p, 2, n);
    bool inside = std::abs(spectral::freq_of(idx[0], n)) <= 5 && std::abs(spectral::freq_of(idx[1], n)) <= 5;
    if (inside) continue;
    REQUIRE(u.at(0, p) == cplx(0.0, 0.0));
    REQUIRE(u.at(1, p) == cplx(0.0, 0.0));
  }

  Rng r1(79), r2(79);
  SpectralField a = random_solenoidal(3, 8, 1.0, 2, r1);
  SpectralField b = random_solenoidal(3, 8, 1.0, 2, r2);
  REQUIRE(max_coeff_error(a, b) == 0.0);

  REQUIRE_THROWS_AS(random_solenoidal(2, n, 1.0, 0, rng), std::invalid_argument);
  REQUIRE_THROWS_AS(random_solenoidal(2, n, 1.0, n / 3 + 1, rng), std::invalid_argument);
}
