#include <doctest.h>

#include <cmath>
#include <random>

#include "t1mr/dynamics.hpp"
#include "t1mr/gslac.hpp"
#include "t1mr/lindblad.hpp"

using namespace t1mr;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Flip-flop pair {|up,dn>, |dn,up>} embedded in two spin-1/2; v in rad/s.
HamiltonianMatrix flip_flop(double v) {
  HamiltonianMatrix h = zero_hamiltonian({2, 2});
  h.matrix(1, 2) = h.matrix(2, 1) = v / si::two_pi_mhz;
  return h;
}

DiagonalDephasing probe_dephasing(double rate) {
  RVec op(4);
  op << 0.5, 0.5, -0.5, -0.5;
  return {op, rate};
}

DensityMatrix pure(int n, int k) {
  DensityMatrix d;
  d.rho = CMat::Zero(n, n);
  d.rho(k, k) = 1;
  return d;
}

}  // namespace

TEST_CASE("closed-form populations match RK4 integration") {
  const Populations init{0.7, 0.2, 0.1};
  for (double tau : {0.0, 1e-4, 3e-3, 0.02})
    for (double kres : {0.0, 150.0, 4000.0}) {
      const auto a = rate_equation_populations(tau, 70, kres, init);
      const auto b = rate_equation_rk4(tau, 70, kres, init, 4000);
      CHECK(a.n0 == doctest::Approx(b.n0).epsilon(1e-8));
      CHECK(a.nm1 == doctest::Approx(b.nm1).epsilon(1e-8));
      CHECK(a.np1 == doctest::Approx(b.np1).epsilon(1e-8));
      CHECK(a.n0 + a.nm1 + a.np1 == doctest::Approx(1.0).epsilon(1e-14));
    }
  CHECK_THROWS(rate_equation_populations(-1, 1, 1, init));
  CHECK_THROWS(rate_equation_populations(1, -1, 1, init));
  CHECK_THROWS(rate_equation_populations(1, 1, 1, Populations{0.5, 0.6, 0}));
}

TEST_CASE("PL curve equals the brightness-weighted populations") {
  const double i0 = 2.0, alpha = 0.7, n0 = 0.9, kph = 60, kres = 900;
  const Populations init{n0, (1 - n0) / 2, (1 - n0) / 2};
  const double ii = pl_i_inf(i0, alpha), c = pl_contrast(alpha, n0);
  for (double tau : {0.0, 1e-4, 1e-3, 0.01, 0.1}) {
    const auto p = rate_equation_populations(tau, kph, kres, init);
    const double direct = i0 * (p.n0 + alpha * (p.nm1 + p.np1));
    CHECK(pl_curve(tau, ii, c, 3 * kph, 2 * kres) == doctest::Approx(direct).epsilon(1e-13));
  }
  const auto v = pl_curve(std::vector<double>{0, 1e-3}, 1, 0.3, 200, 1000);
  CHECK(v[0] == doctest::Approx(1.3));
  CHECK(v[1] == doctest::Approx(pl_curve(1e-3, 1, 0.3, 200, 1000)));
}

TEST_CASE("two-spin decay limits") {
  const double g = 1e6;
  CHECK(two_spin_decay(0, g, 3e5, 1.0) == doctest::Approx(1.0));
  CHECK(two_spin_decay(1.0, g, 3e5, 1.0) == doctest::Approx(0.5));
  // equality case is continuous with its neighbours
  const double t = 2e-6;
  const double eq = two_spin_decay(t, g, g / 2, 1.0);
  CHECK(two_spin_decay(t, g, g / 2 * (1 - 1e-7), 1.0) == doctest::Approx(eq).epsilon(1e-6));
  CHECK(two_spin_decay(t, g, g / 2 * (1 + 1e-7), 1.0) == doctest::Approx(eq).epsilon(1e-6));
  // strong coupling: undamped Rabi-like oscillation at w for small gamma2
  const double w = 1e8;
  CHECK(two_spin_decay(kPi / w, 1.0, w, 1.0) == doctest::Approx(0.0).scale(1).epsilon(1e-6));
  // the rate does not depend on the initial value
  const double a = two_spin_decay(t, g, 1e5, 1.0), b = two_spin_decay(t, g, 1e5, 0.4);
  CHECK((a - 0.5) / 0.5 == doctest::Approx((b - 0.2) / 0.2).epsilon(1e-12));
  CHECK_THROWS(two_spin_decay(t, 0, 1, 1));
}

TEST_CASE("Lindblad flip-flop reproduces the closed-form two-spin decay") {
  const double g = 1e6;
  for (double w : {0.3 * g, 2.5 * g}) {
    const auto h = flip_flop(w / 2);
    std::vector<double> grid;
    for (int k = 1; k <= 40; ++k) grid.push_back(k * 0.25 / g);
    const auto tr = lindblad_evolve(h, {probe_dephasing(g)}, pure(4, 1), grid);
    REQUIRE(tr.t.size() == grid.size());
    for (std::size_t q = 0; q < tr.t.size(); ++q)
      CHECK(std::abs(std::real(tr.rho[q](1, 1)) - two_spin_decay(tr.t[q], g, w, 1.0)) < 1e-4);
  }
}

TEST_CASE("Lindblad propagation keeps trace, Hermiticity and positivity") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  HamiltonianMatrix h = zero_hamiltonian({2, 2});
  CMat m(4, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) m(i, j) = {nd(rng), nd(rng)};
  h.matrix = 0.5 * (m + m.adjoint());
  CMat a(4, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) a(i, j) = {nd(rng), nd(rng)};
  DensityMatrix rho0;
  rho0.rho = a * a.adjoint();
  rho0.rho /= rho0.rho.trace();
  const double dt = lindblad_step(h, {});
  std::vector<double> grid;
  for (int k = 1; k <= 1000; ++k) grid.push_back(k * dt);
  const auto tr = lindblad_evolve(h, {probe_dephasing(3e5)}, rho0, grid);
  CHECK(tr.max_trace_error < 1e-9);
  CHECK(tr.max_herm_error < 1e-12);
  CHECK(tr.min_eigenvalue > -1e-9);
  for (const auto& r : tr.rho) CHECK_NOTHROW(validate(DensityMatrix{r, {}}));
}

TEST_CASE("Lindblad edge cases") {
  const auto h = zero_hamiltonian({2, 2});
  DensityMatrix rho0;
  rho0.rho = CMat::Identity(4, 4) * 0.1;
  rho0.rho(0, 0) = 0.7;
  rho0.rho(0, 3) = rho0.rho(3, 0) = 0.05;
  EvolveOptions o;
  o.dt = 1e-7;
  auto tr = lindblad_evolve(h, {}, rho0, {1e-6, 1e-5}, o);
  CHECK((tr.rho.back() - rho0.rho).norm() < 1e-14);

  // background relaxation of a two-member group
  Background bg;
  bg.t1 = 1e-3;
  bg.groups = {{0, 1}};
  o.background = bg;
  o.dt = 0;
  tr = lindblad_evolve(h, {}, pure(4, 0), {1e-4, 1e-3, 3e-3}, o);
  for (std::size_t q = 0; q < tr.t.size(); ++q)
    CHECK(std::real(tr.rho[q](0, 0)) == doctest::Approx(0.5 + 0.5 * std::exp(-tr.t[q] / 1e-3)).epsilon(1e-9));

  DensityMatrix bad = pure(4, 0);
  bad.rho(0, 0) = 1.5;
  CHECK_THROWS(validate(bad));
  CHECK_THROWS(lindblad_evolve(h, {}, bad, {1e-6}));
  CHECK_THROWS(lindblad_evolve(h, {}, pure(3, 0), {1e-6}));
}

TEST_CASE("biexponential fit recovers the rates within its error bars") {
  std::vector<double> tau;
  for (int k = 0; k < 120; ++k) tau.push_back(1e-6 * std::pow(5e-2 / 1e-6, k / 119.0));
  std::mt19937_64 rng(21);
  const double sigma = 0.01;
  std::normal_distribution<double> nd(0.0, sigma);
  int inside = 0;
  const int reps = 30;
  for (int r = 0; r < reps; ++r) {
    RelaxationCurve c;
    c.tau = tau;
    for (double t : tau) c.values.push_back(pl_curve(t, 1.0, 0.3, 200, 6200) + nd(rng));
    c.errors.assign(tau.size(), sigma);
    const auto f = fit_biexponential(c);
    CHECK(f.converged);
    inside += std::abs(f.g_res - 6200) < 2 * f.s_g_res;
    CHECK(f.reduced_chi2 == doctest::Approx(1.0).epsilon(0.5));
  }
  CHECK(inside >= int(0.85 * reps));

  RelaxationCurve exact;
  exact.tau = tau;
  exact.values = pl_curve(tau, 1.0, 0.3, 200, 2000);
  BiexpOptions o;
  o.fixed_g_ph = 200;
  const auto f = fit_biexponential(exact, o);
  CHECK(f.g_ph == 200);
  CHECK(f.g_res == doctest::Approx(2000).epsilon(1e-6));
  CHECK(f.contrast == doctest::Approx(0.3).epsilon(1e-6));
}

TEST_CASE("biexponential fit rejects bad curves") {
  RelaxationCurve c;
  c.tau = {1, 2, 3};
  c.values = {1, 1, 1};
  CHECK_THROWS_AS(fit_biexponential(c), FitError);
  c.tau = {1e-3, 2e-3, 3e-3, 4e-3, 5e-3, 6e-3};
  c.values.assign(6, 1.0);
  CHECK_THROWS_AS(fit_biexponential(c), FitError);
  c.tau = {3e-3, 2e-3, 1e-3, 4e-3, 5e-3, 6e-3};
  CHECK_THROWS(fit_biexponential(c));
}

TEST_CASE("GSLAC Hamiltonian and population-rate fit") {
  GslacOptions o;
  for (Species s : {Species::H1, Species::C13}) {
    const auto h = gslac_hamiltonian(1024, s, o);
    CHECK(h.dim() == 18);
    CHECK(is_hermitian(h.matrix, 1e-12));
  }
  std::vector<double> t, y;
  for (int k = 0; k < 60; ++k) {
    t.push_back(1e-6 * std::pow(1.5e-2 / 1e-6, k / 59.0));
    y.push_back(1.0 / 3 + std::exp(-200 * t.back()) / 6 + 0.5 * std::exp(-(200 + 5000) * t.back()));
  }
  const auto p = fit_population_rate(t, y, 200);
  CHECK(p.status == "ok");
  CHECK(p.gamma_res == doctest::Approx(5000).epsilon(1e-6));
  CHECK(species_from_string(to_string(Species::C13)) == Species::C13);
}

TEST_CASE("Lindblad rate agrees with the closed form at a resonance") {
  const auto c = PhysicalConstants::measured_probe();
  const auto cmp = lindblad_vs_closed_form(Kernel::Plus, Geometry{3.0, kPi / 3}, c.gamma_h1, 1e6, 0, c);
  CHECK(cmp.rel_error < 0.05);
  CHECK(cmp.fitted > 0);
}

TEST_CASE("biexponential fit of a single-exponential curve gives g_res near zero") {
  std::vector<double> tau;
  for (int k = 0; k < 120; ++k) tau.push_back(1e-6 * std::pow(5e-2 / 1e-6, k / 119.0));
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd(0.0, 0.01);
  RelaxationCurve c;
  c.tau = tau;
  for (double t : tau) c.values.push_back(pl_curve(t, 1.0, 0.3, 200, 0) + nd(rng));
  c.errors.assign(tau.size(), 0.01);
  const auto f = fit_biexponential(c);
  CHECK((f.g_res_at_bound || f.g_res < 2 * f.s_g_res));
  CHECK(f.g_ph == doctest::Approx(200).epsilon(0.05));
}
