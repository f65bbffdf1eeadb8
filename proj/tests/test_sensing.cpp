#include <doctest.h>

#include <cmath>

#include "t1mr/gslac.hpp"
#include "t1mr/relaxation.hpp"
#include "t1mr/sensing.hpp"

using namespace t1mr;

namespace {

// d/dtau log SNR
double dlog_snr(double tau, double g_res, double g_ph) {
  const double e = std::exp(-g_res * tau);
  return -0.5 / tau - g_ph + g_res * e / (1 - e);
}

double bisect(double lo, double hi, double g_res, double g_ph) {
  for (int k = 0; k < 200; ++k) {
    const double mid = 0.5 * (lo + hi);
    (dlog_snr(mid, g_res, g_ph) > 0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("snr follows the shot-noise expression") {
  const MeasurementBudget b;
  const double tau = 2e-3, g = 300;
  const double n_rep = b.t_total / tau;
  const double expect = std::sqrt(n_rep * b.count_rate * b.t_ro) * 0.75 * b.contrast *
                        std::exp(-b.gamma_ph * tau) * (1 - std::exp(-g * tau));
  CHECK(snr(tau, g, b) == doctest::Approx(expect).epsilon(1e-14));
  CHECK(snr(tau, 0, b) == 0);
  CHECK_THROWS(snr(0, g, b));
  MeasurementBudget four = b;
  four.t_total = 4;
  CHECK(snr(tau, g, four) == doctest::Approx(2 * snr(tau, g, b)).epsilon(1e-14));
}

TEST_CASE("optimal tau is the stationary point of the snr") {
  const MeasurementBudget b;
  for (double g : {2.0, 200.0, 5e4}) {
    const double t = optimal_tau(g, b);
    CHECK(t == doctest::Approx(bisect(1e-9, 10 / b.gamma_ph, g, b.gamma_ph)).epsilon(1e-6));
    CHECK(snr(t, g, b) >= snr(t * 1.01, g, b));
    CHECK(snr(t, g, b) >= snr(t * 0.99, g, b));
  }
  CHECK_THROWS(optimal_tau(0, b));
}

TEST_CASE("minimum acquisition time") {
  const MeasurementBudget b;
  for (double g : {50.0, 200.0, 2000.0}) {
    const double s = snr(optimal_tau(g, b), g, b);
    CHECK(min_acquisition_time(g, b) == doctest::Approx(1 / (s * s)).epsilon(1e-12));
  }
  CHECK(min_acquisition_time(200, b) == doctest::Approx(20).epsilon(0.1));
  MeasurementBudget bad = b;
  bad.contrast = 1.5;
  CHECK_THROWS(validate(bad));
}

TEST_CASE("detectability map scales as r^-6 and matches gamma_res") {
  const auto c = PhysicalConstants::measured_probe();
  const MeasurementBudget b;
  const std::vector<double> r{1.0, 2.0, 4.0};
  const std::vector<double> th{0.2, 0.8, 1.5};
  MapOptions mo;
  mo.levels = {1.0};
  const auto m = detectability_map(Species::H1, r, th, b, c, mo);
  ChannelParams p;
  p.channel = Channel::NmrDirect;
  p.kernel = Kernel::Plus;
  p.gamma_t = c.gamma_h1;
  p.gamma2_total = 1e6;
  for (std::size_t j = 0; j < th.size(); ++j) {
    CHECK(m.ratio[0][j] == doctest::Approx(gamma_res(p, Geometry{1.0, th[j]}, 1.0, c) / b.gamma_ph).epsilon(1e-12));
    CHECK(m.ratio[1][j] == doctest::Approx(m.ratio[0][j] / 64).epsilon(1e-12));
    CHECK(m.ratio[2][j] == doctest::Approx(m.ratio[0][j] / 4096).epsilon(1e-12));
  }
  mo.jobs = 3;
  const auto m3 = detectability_map(Species::H1, r, th, b, c, mo);
  CHECK(m3.ratio == m.ratio);
  CHECK_THROWS(detectability_map(Species::H1, {1.0}, th, b, c, mo));
  CHECK_THROWS(detectability_map(Species::H1, {1.0, 11.0}, th, b, c, mo));
}

TEST_CASE("contours of an analytic field") {
  std::vector<double> x, y;
  for (int i = 0; i <= 100; ++i) x.push_back(-2 + 0.04 * i);
  for (int j = 0; j <= 100; ++j) y.push_back(-2 + 0.04 * j);
  std::vector<std::vector<double>> f(x.size(), std::vector<double>(y.size()));
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < y.size(); ++j) f[i][j] = std::exp(-(x[i] * x[i] + y[j] * y[j]));
  // level e^-1 is the unit circle
  const auto lines = contour_lines(x, y, f, std::exp(-1.0));
  REQUIRE(lines.size() == 1);
  CHECK(lines[0].points.size() > 100);
  for (const auto& [a, b] : lines[0].points) CHECK(std::hypot(a, b) == doctest::Approx(1.0).epsilon(2e-3));
  CHECK(contour_lines(x, y, f, 10.0).empty());
  CHECK_THROWS(contour_lines(x, y, f, 0.0));
}

TEST_CASE("contour reach of the map follows the r^-6 law") {
  const auto c = PhysicalConstants::measured_probe();
  const MeasurementBudget b;
  std::vector<double> r, th;
  for (int i = 0; i <= 190; ++i) r.push_back(0.5 + 0.05 * i);
  for (int j = 0; j <= 50; ++j) th.push_back(1.5707963267948966 * j / 50);
  MapOptions mo;
  mo.levels = {1.0};
  const auto m = detectability_map(Species::H1, r, th, b, c, mo);
  // ratio = 1 where r^6 = ratio(1 nm) at the best angle
  double best = 0;
  for (std::size_t j = 0; j < th.size(); ++j) best = std::max(best, m.ratio[0][j] * std::pow(r[0], 6));
  CHECK(contour_reach(m, 1.0) == doctest::Approx(std::pow(best, 1.0 / 6)).epsilon(1e-3));
  CHECK(contour_reach(m, 123.0) == 0);
}
