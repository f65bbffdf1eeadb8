#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "t1mr/kernels.hpp"

using namespace t1mr;

namespace {

bool have_avx2() {
  return kernels::avx2::compiled() && kernels::isa_available(kernels::Isa::Avx2);
}

double rel_diff(double a, double b) {
  if (a == b) return 0;
  return std::abs(a - b) / std::max(std::abs(a), std::abs(b));
}

std::vector<double> uniform(std::size_t n, double lo, double hi, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

}  // namespace

TEST_CASE("scalar kernels against their definitions") {
  const auto det = uniform(37, -5e6, 5e6, 1), amp = uniform(37, 0, 10, 2);
  std::vector<double> out(37, 1.0);
  kernels::scalar::lorentzian_accumulate(det.data(), amp.data(), 37, 2e6, out.data());
  for (int i = 0; i < 37; ++i)
    CHECK(out[i] == doctest::Approx(1.0 + amp[i] * 4e12 / (4e12 + det[i] * det[i])).epsilon(1e-15));

  const std::vector<double> r{0.5, 1, 2, 7.5};
  std::vector<double> o(4);
  kernels::scalar::inverse_sixth(r.data(), 4, 3.0, o.data());
  for (int i = 0; i < 4; ++i) CHECK(o[i] == doctest::Approx(3.0 / std::pow(r[i], 6)).epsilon(1e-15));

  const auto t = uniform(20, 0, 0.05, 3);
  std::vector<double> y(20);
  kernels::scalar::biexp_curve(t.data(), 20, 1.2, 0.3, 200, 500, y.data());
  for (int i = 0; i < 20; ++i)
    CHECK(y[i] == doctest::Approx(1.2 * (1 + 0.075 * (std::exp(-200 * t[i]) + 3 * std::exp(-700 * t[i]))))
                      .epsilon(1e-15));
}

TEST_CASE("AVX2 kernels match the scalar reference") {
  if (!have_avx2()) {
    MESSAGE("AVX2 not available on this CPU; equivalence not exercised");
    return;
  }
  for (std::size_t n : {0u, 1u, 3u, 4u, 5u, 17u, 1000u}) {
    const auto det = uniform(n, -1e7, 1e7, 10 + n), amp = uniform(n, -3, 3, 20 + n);
    std::vector<double> a(n, 0.5), b(n, 0.5);
    kernels::scalar::lorentzian_accumulate(det.data(), amp.data(), n, 1.3e6, a.data());
    kernels::avx2::lorentzian_accumulate(det.data(), amp.data(), n, 1.3e6, b.data());
    for (std::size_t i = 0; i < n; ++i) CHECK(rel_diff(a[i], b[i]) < 1e-14);

    const auto x = uniform(n, 990, 1010, 30 + n);
    const std::vector<double> c{995, 1001.5, 1004}, hw{0.3, 1.1, 0.05}, am{1, -0.2, 4};
    kernels::scalar::lorentzian_sum(x.data(), n, c.data(), hw.data(), am.data(), 3, 0.7, a.data());
    kernels::avx2::lorentzian_sum(x.data(), n, c.data(), hw.data(), am.data(), 3, 0.7, b.data());
    for (std::size_t i = 0; i < n; ++i) CHECK(rel_diff(a[i], b[i]) < 1e-14);

    const auto r = uniform(n, 0.2, 10, 40 + n);
    kernels::scalar::inverse_sixth(r.data(), n, 123.0, a.data());
    kernels::avx2::inverse_sixth(r.data(), n, 123.0, b.data());
    for (std::size_t i = 0; i < n; ++i) CHECK(rel_diff(a[i], b[i]) < 1e-14);

    const auto t = uniform(n, 0, 0.1, 50 + n);
    kernels::scalar::biexp_curve(t.data(), n, 1.0, 0.25, 200, 1500, a.data());
    kernels::avx2::biexp_curve(t.data(), n, 1.0, 0.25, 200, 1500, b.data());
    for (std::size_t i = 0; i < n; ++i) CHECK(rel_diff(a[i], b[i]) < 1e-14);
  }
}

TEST_CASE("vector exp is accurate over the full range") {
  std::vector<double> x = uniform(4001, -700, 700, 99);
  for (double v : {0.0, -0.0, 1e-300, -1e-300, 0.5, -0.5, 709.7, 709.78, -708.3, -744.0, -745.13, -745.2, -800.0, 710.0,
                   1000.0, std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()})
    x.push_back(v);
  x.push_back(std::numeric_limits<double>::quiet_NaN());
  const std::size_t n = x.size();
  for (bool vec : {false, true}) {
    if (vec && !have_avx2()) continue;
    std::vector<double> y(n);
    if (vec) kernels::avx2::exp_vec(x.data(), n, y.data());
    else kernels::scalar::exp_vec(x.data(), n, y.data());
    for (std::size_t i = 0; i < n; ++i) {
      const double e = std::exp(x[i]);
      if (std::isnan(e)) {
        CHECK(std::isnan(y[i]));
      } else if (std::isinf(e)) {
        CHECK(y[i] == e);
      } else if (e < std::numeric_limits<double>::min()) {
        // subnormal results: absolute agreement
        CHECK(std::abs(y[i] - e) <= 4 * std::numeric_limits<double>::denorm_min() + 1e-15 * e);
      } else {
        CHECK(rel_diff(y[i], e) < 1e-14);
      }
    }
  }
}

TEST_CASE("runtime dispatch can be pinned") {
  const auto before = kernels::active_isa();
  CHECK(kernels::set_isa(kernels::Isa::Scalar));
  CHECK(kernels::active_isa() == kernels::Isa::Scalar);
  const std::vector<double> r{1, 2};
  std::vector<double> o(2);
  kernels::inverse_sixth(r.data(), 2, 64.0, o.data());
  CHECK(o[1] == doctest::Approx(1.0));
  CHECK(kernels::set_isa(kernels::Isa::Avx2) == have_avx2());
  kernels::set_isa(before);
  CHECK(kernels::to_string(kernels::Isa::Scalar) == "scalar");
  CHECK(kernels::to_string(kernels::Isa::Avx2) == "avx2");
}
