#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "t1mr/spin.hpp"

using namespace t1mr;

namespace {

CMat kron2(const CMat& a, const CMat& b) {
  CMat out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

std::vector<double> sorted_eigs(const CMat& m) {
  Eigen::SelfAdjointEigenSolver<CMat> es(m);
  std::vector<double> v(es.eigenvalues().data(), es.eigenvalues().data() + m.rows());
  std::sort(v.begin(), v.end());
  return v;
}

std::vector<double> two_by_two(double a, double d, double off) {
  const double m = 0.5 * (a + d), r = std::sqrt(0.25 * (a - d) * (a - d) + off * off);
  return {m - r, m + r};
}

}  // namespace

TEST_CASE("spin operators obey the angular momentum algebra") {
  for (double s : {0.5, 1.0}) {
    const auto op = spin_operators(s);
    const auto n = op.sz.rows();
    const cd i(0, 1);
    CHECK((op.sx * op.sy - op.sy * op.sx - i * op.sz).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((op.sy * op.sz - op.sz * op.sy - i * op.sx).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((op.sz * op.sx - op.sx * op.sz - i * op.sy).cwiseAbs().maxCoeff() < 1e-14);
    const CMat s2 = op.sx * op.sx + op.sy * op.sy + op.sz * op.sz;
    CHECK((s2 - s * (s + 1) * CMat::Identity(n, n)).cwiseAbs().maxCoeff() < 1e-13);
    CHECK(is_hermitian(op.sx, 0));
    CHECK(is_hermitian(op.sy, 0));
    for (Eigen::Index k = 0; k < n; ++k) CHECK(std::real(op.sz(k, k)) == doctest::Approx(s - k));
    CHECK(op.m.front() == s);
  }
  CHECK_THROWS_AS(spin_operators(0.3), std::invalid_argument);
  CHECK_THROWS_AS(spin_operators(1.5), std::invalid_argument);
}

TEST_CASE("product basis and embedding follow the Kronecker order") {
  const std::vector<int> dims{3, 2};
  const auto basis = product_basis(dims);
  REQUIRE(basis.size() == 6);
  CHECK(basis[0] == std::vector<double>{1, 0.5});
  CHECK(basis[1] == std::vector<double>{1, -0.5});
  CHECK(basis[5] == std::vector<double>{-1, -0.5});
  const auto s = spin_operators(1), t = spin_operators(0.5);
  CHECK((embed(s.sx, dims, 0).matrix - kron2(s.sx, CMat::Identity(2, 2))).norm() < 1e-15);
  CHECK((embed(t.sz, dims, 1).matrix - kron2(CMat::Identity(3, 3), t.sz)).norm() < 1e-15);
  const auto h = zero_hamiltonian(dims);
  CHECK(h.index_of({0, -0.5}) == 3);
  CHECK(h.index_of({2, 0.5}) == -1);
}

TEST_CASE("dipolar constant matches mu0/4pi gamma_a gamma_b h / r^3") {
  const double r = 2.5, ga = -2.8035, gb = 4.258e-3;
  const double expect = 1e-7 * (ga * 1e10) * (gb * 1e10) * 6.62607015e-34 / std::pow(r * 1e-9, 3) / 1e6;
  CHECK(dipolar_constant_mhz(r, ga, gb) == doctest::Approx(expect).epsilon(1e-14));
  CHECK(dipolar_constant_mhz(2 * r, ga, gb) == doctest::Approx(expect / 8).epsilon(1e-14));
  CHECK_THROWS(dipolar_constant_mhz(0, ga, gb));
}

TEST_CASE("axial dipole coupling of two spin-1/2 has spectrum {-J/2, -J/2, 0, J}") {
  const double j = dipolar_constant_mhz(1.0, 4.258e-3, 4.258e-3);
  const auto h = build_dipole_hamiltonian(Geometry{1.0, 0.0}, 4.258e-3, 4.258e-3, {2, 2}, 0, 1);
  const auto e = sorted_eigs(h.matrix);
  std::vector<double> expect{-j / 2, -j / 2, 0, j};
  std::sort(expect.begin(), expect.end());
  for (int k = 0; k < 4; ++k) CHECK(e[k] == doctest::Approx(expect[k]).epsilon(1e-12));
}

TEST_CASE("dipole Hamiltonian is Hermitian, traceless and rotates with theta") {
  for (double th : {0.0, 0.3, 1.2, 3.14159265358979 / 2}) {
    const auto h = build_dipole_hamiltonian(Geometry{3.0, th}, -2.8035, 4.258e-3, {3, 2}, 0, 1);
    CHECK(is_hermitian(h.matrix, 1e-15));
    CHECK(std::abs(h.matrix.trace()) < 1e-15);
    // |0,-1/2> <-> |-1,+1/2> element carries (3 sin^2 - 2) / 4 * sqrt 2 * J
    const double j = dipolar_constant_mhz(3.0, -2.8035, 4.258e-3);
    const double s2 = std::sin(th) * std::sin(th);
    CHECK(std::abs(h.matrix(3, 4)) == doctest::Approx(std::abs(j * (3 * s2 - 2) / 4 * std::sqrt(2.0))).epsilon(1e-12));
  }
  CHECK_THROWS(build_dipole_hamiltonian(Geometry{3.0, 0}, 1, 1, {2, 2}, 0, 0));
  CHECK_THROWS(build_dipole_hamiltonian(Geometry{-1.0, 0}, 1, 1, {2, 2}, 0, 1));
}

TEST_CASE("NV Hamiltonian levels along the axis") {
  const auto c = PhysicalConstants::measured_probe();
  const double b = 400;
  const auto e = sorted_eigs(build_nv_hamiltonian(b, c, false).matrix);
  std::vector<double> expect{0.0, c.d_nv + c.gamma_nv * b, c.d_nv - c.gamma_nv * b};
  std::sort(expect.begin(), expect.end());
  for (int k = 0; k < 3; ++k) CHECK(e[k] == doctest::Approx(expect[k]).epsilon(1e-12));
  CHECK(build_nv_hamiltonian(b, c, true).dim() == 9);
  CHECK_THROWS(build_nv_hamiltonian(-1, c, false));
}

TEST_CASE("exact P1 levels agree with the closed 2x2 blocks") {
  const auto c = PhysicalConstants::measured_probe();
  for (Axis ax : {Axis::On, Axis::Off}) {
    const auto p = p1_params(c, ax);
    const double b = 500;
    const double we = -c.gamma_e * b, wn = -c.gamma_n14 * b;
    // |+1/2,mI> couples to |-1/2,mI+1> with a_perp/sqrt2
    std::vector<double> expect;
    expect.push_back(we / 2 + p.a_par / 2 + p.q + wn);      // |+1/2,+1>, isolated
    expect.push_back(-we / 2 + p.a_par / 2 + p.q - wn);     // |-1/2,-1>, isolated
    for (double v : two_by_two(we / 2, -we / 2 - p.a_par / 2 + p.q + wn, p.a_perp / std::sqrt(2.0)))
      expect.push_back(v);
    for (double v : two_by_two(we / 2 - p.a_par / 2 + p.q - wn, -we / 2, p.a_perp / std::sqrt(2.0)))
      expect.push_back(v);
    std::sort(expect.begin(), expect.end());
    const auto lv = p1_levels_exact(b, c, p);
    std::vector<double> got;
    for (const auto& row : lv)
      for (double v : row) got.push_back(v);
    std::sort(got.begin(), got.end());
    for (int k = 0; k < 6; ++k) CHECK(got[k] == doctest::Approx(expect[k]).epsilon(1e-12));
  }
}

TEST_CASE("perturbative P1 levels converge to exact ones as 1/B^2") {
  const auto c = PhysicalConstants::measured_probe();
  for (Axis ax : {Axis::On, Axis::Off}) {
    const auto p = p1_params(c, ax);
    auto gap = [&](double b) {
      const auto a = p1_levels_perturbative(b, c, p), e = p1_levels_exact(b, c, p);
      double m = 0;
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 3; ++j) m = std::max(m, std::abs(a[i][j] - e[i][j]));
      return m;
    };
    const double g1 = gap(1000), g2 = gap(2000);
    CHECK(g1 < 0.05);
    CHECK(g1 / g2 == doctest::Approx(4.0).epsilon(0.05));
  }
}

TEST_CASE("off-axis P1 parameters follow the tilted hyperfine tensor") {
  const auto c = PhysicalConstants::measured_probe();
  const auto on = p1_params(c, Axis::On);
  CHECK(on.a_par == c.a_par_p1);
  CHECK(on.a_perp == c.a_perp_p1);
  const auto off = p1_params(c, Axis::Off);
  const double cb = 1.0 / 3.0, sb2 = 1 - cb * cb;
  // axial tensor seen along an axis tilted by beta
  CHECK(off.a_par == doctest::Approx(c.a_par_p1 * cb * cb + c.a_perp_p1 * sb2).epsilon(1e-12));
  CHECK(off.a_perp ==
        doctest::Approx(c.a_par_p1 * sb2 / 2 + c.a_perp_p1 * (1 + cb * cb) / 2).epsilon(1e-12));
  CHECK(p1_params(c, Axis::Off, OffAxisQuadrupole::Printed).q == c.q_p1);
  CHECK(p1_params(c, Axis::Off, OffAxisQuadrupole::Rotated).q ==
        doctest::Approx(c.q_p1 * (3 * cb * cb - 1) / 2));
}

TEST_CASE("eigensystem labels follow the dominant basis state") {
  std::mt19937 rng(7);
  std::normal_distribution<double> nd;
  HamiltonianMatrix h = zero_hamiltonian({2, 3});
  for (int i = 0; i < 6; ++i) h.matrix(i, i) = 10.0 * i;
  CMat pert(6, 6);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) pert(i, j) = cd(nd(rng), nd(rng));
  h.matrix += 0.01 * (pert + pert.adjoint());
  const auto es = eigensystem(h);
  for (int k = 0; k < 6; ++k) CHECK(es.label[k] == k);
  for (int k = 1; k < 6; ++k) CHECK(es.values[k] > es.values[k - 1]);
  HamiltonianMatrix bad = h;
  bad.matrix(0, 1) += 1.0;
  CHECK_THROWS_AS(eigensystem(bad), std::invalid_argument);
}

TEST_CASE("label tracking survives a level crossing") {
  // two levels crossing linearly with a tiny coupling
  auto make = [](double x) {
    HamiltonianMatrix h = zero_hamiltonian({2});
    h.matrix(0, 0) = x;
    h.matrix(1, 1) = -x;
    h.matrix(0, 1) = h.matrix(1, 0) = 1e-9;
    return h;
  };
  auto prev = eigensystem(make(-1.0));
  const int top_label_before = prev.label[1];
  auto next = eigensystem(make(1.0));
  track_labels(prev, next);
  // the state that was on top is now at the bottom
  CHECK(next.label[0] == top_label_before);
}

TEST_CASE("geometry validation") {
  CHECK_NOTHROW(validate(Geometry{1.0, 0.5}));
  CHECK_THROWS(validate(Geometry{0.0, 0.5}));
  CHECK_THROWS(validate(Geometry{1.0, -0.1}));
  CHECK_THROWS(validate(Geometry{1.0, 4.0}));
}
