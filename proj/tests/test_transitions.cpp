#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "t1mr/transitions.hpp"

using namespace t1mr;

TEST_CASE("probe conversion formula and its inverse") {
  const auto c = PhysicalConstants::measured_probe();
  for (double b : {100.0, 512.3, 1000.0, 1100.0}) {
    const double w = nv_transition_frequency(b, 1, c);
    CHECK(w == doctest::Approx(c.d_nv + c.gamma_nv * b - c.a_par_nv_odmr).epsilon(1e-15));
    CHECK(field_from_omega(w, c) == doctest::Approx(b).epsilon(1e-13));
  }
  CHECK(nv_transition_frequency(gslac_field(c), 1, c) == doctest::Approx(0).scale(1));
  CHECK(std::abs(nv_transition_frequency(gslac_field(c), 1, c)) < 1e-10);
  CHECK_THROWS(field_from_omega(c.d_nv + 100, c));
}

TEST_CASE("exact probe frequency tracks the first-order model away from the GSLAC") {
  const auto c = PhysicalConstants::measured_probe();
  for (double b : {300.0, 500.0, 700.0})
    for (int mi : {-1, 0, 1}) {
      const double fo = nv_transition_frequency(b, mi, c, NvModel::FirstOrder);
      const double ex = nv_transition_frequency(b, mi, c, NvModel::Exact);
      CHECK(std::abs(fo - ex) < 0.01);
    }
}

TEST_CASE("P1 line families have the expected sizes") {
  CHECK(p1_line_specs(Kind::EprSingle, Axis::On).size() == 3);
  CHECK(p1_line_specs(Kind::EprDouble, Axis::On).size() == 2);
  CHECK(p1_line_specs(Kind::Nmr, Axis::On, Branch::Before).size() == 4);
  for (const auto& s : p1_line_specs(Kind::Nmr, Axis::Off, Branch::After)) {
    CHECK(s.ms_i == s.ms_f);
    CHECK(std::abs(s.mi_i - s.mi_f) == 1);
  }
  const auto t = resonance_table(PhysicalConstants::measured_probe());
  CHECK(t.size() == 26);
  CHECK(std::count_if(t.begin(), t.end(), [](const auto& r) { return r.spec.kind == Kind::Nmr; }) == 16);
}

TEST_CASE("every tabulated resonance satisfies |w_nv| = w_t") {
  const auto c = PhysicalConstants::measured_probe();
  for (const auto& r : resonance_table(c)) {
    const double wnv = std::abs(nv_transition_frequency(r.b_res, 1, c));
    const double wt = p1_transition_frequency(r.b_res, r.spec, c);
    CHECK(std::abs(wnv - wt) < 1e-8);
    CHECK(std::abs(r.omega_nv) == doctest::Approx(r.omega_target).epsilon(1e-10));
    if (r.spec.kind == Kind::Nmr) {
      CHECK((r.spec.branch == Branch::Before) == (r.b_res < gslac_field(c)));
      CHECK((r.spec.branch == Branch::Before) == (r.omega_nv > 0));
    }
  }
}

TEST_CASE("EPR closed form agrees with the numerical roots to second order") {
  const auto c = PhysicalConstants::measured_probe();
  TableOptions o;
  o.nmr = false;
  for (const auto& r : resonance_table(c, o)) {
    const double cf = epr_closed_form(r.spec, c);
    // neglected terms are O(a_par^2 / d_nv) ~ a few 0.1 MHz
    CHECK(std::abs(cf - std::abs(r.omega_nv)) < 0.5);
  }
  CHECK_THROWS(epr_closed_form(p1_line_specs(Kind::Nmr, Axis::On)[0], c));
}

TEST_CASE("exact and perturbative target models give nearly the same NMR fields") {
  const auto c = PhysicalConstants::measured_probe();
  TableOptions a, b;
  a.epr_single = a.epr_double = b.epr_single = b.epr_double = false;
  b.res.target_model = TargetModel::Exact;
  const auto ra = resonance_table(c, a), rb = resonance_table(c, b);
  REQUIRE(ra.size() == rb.size());
  for (std::size_t i = 0; i < ra.size(); ++i) CHECK(std::abs(ra[i].omega_target - rb[i].omega_target) < 0.1);
}

TEST_CASE("no resonance outside the search window") {
  const auto c = PhysicalConstants::measured_probe();
  ResonanceOptions o;
  o.epr_lo = 10;
  o.epr_hi = 50;
  CHECK_THROWS_AS(solve_resonance(p1_line_specs(Kind::EprSingle, Axis::On)[0], c, o), NoResonance);
}

TEST_CASE("NMR inversion round-trips the generating constants") {
  const auto c = PhysicalConstants::measured_probe();
  TableOptions o;
  o.epr_single = o.epr_double = false;
  o.axis = Axis::On;
  std::vector<NmrLine> lines;
  for (const auto& r : resonance_table(c, o))
    lines.push_back({nmr_pair_index(r.spec), r.omega_target, 0.01, r.b_res});
  REQUIRE(lines.size() == 8);
  const auto inv = invert_nmr_lines(lines, c);
  CHECK(inv.a_par == doctest::Approx(c.a_par_p1).epsilon(1e-9));
  CHECK(inv.a_perp == doctest::Approx(c.a_perp_p1).epsilon(1e-9));
  CHECK(inv.q == doctest::Approx(c.q_p1).epsilon(1e-9));
  CHECK(inv.gamma_n == doctest::Approx(c.gamma_n14).epsilon(1e-6));
  CHECK(inv.rms_residual < 1e-9);
}

TEST_CASE("NMR inversion error bars cover noisy replicates") {
  const auto c = PhysicalConstants::measured_probe();
  TableOptions o;
  o.epr_single = o.epr_double = false;
  o.axis = Axis::On;
  const auto table = resonance_table(c, o);
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd(0.0, 0.05);
  int inside = 0;
  const int reps = 200;
  for (int k = 0; k < reps; ++k) {
    std::vector<NmrLine> lines;
    for (const auto& r : table)
      lines.push_back({nmr_pair_index(r.spec), r.omega_target + nd(rng), 0.05, r.b_res});
    const auto inv = invert_nmr_lines(lines, c);
    inside += std::abs(inv.a_par - c.a_par_p1) < 2 * inv.sa_par;
  }
  // two-sigma coverage is 95 %
  CHECK(inside > 0.9 * reps);
}

TEST_CASE("NMR inversion rejects bad inputs") {
  const auto c = PhysicalConstants::measured_probe();
  CHECK_THROWS(invert_nmr_lines({{1, 50, 0.1, 1000}}, c));
  std::vector<NmrLine> same(4, NmrLine{1, 50, 0.1, 1000});
  CHECK_THROWS(invert_nmr_lines(same, c));
  std::vector<NmrLine> bad{{1, 50, 0.1, 1000}, {2, 50, 0.1, 1000}, {3, 50, 0.1, 1000}, {5, 50, 0.1, 1000}};
  CHECK_THROWS(invert_nmr_lines(bad, c));
}

TEST_CASE("measured NMR lines map to fields on the right branch") {
  const auto c = PhysicalConstants::measured_probe();
  const double b1 = nmr_line_field(51.5, Branch::Before, c);
  const double b2 = nmr_line_field(51.5, Branch::After, c);
  CHECK(b1 < gslac_field(c));
  CHECK(b2 > gslac_field(c));
  CHECK(std::abs(nv_transition_frequency(b1, 1, c)) == doctest::Approx(51.5).epsilon(1e-12));
  CHECK(std::abs(nv_transition_frequency(b2, 1, c)) == doctest::Approx(51.5).epsilon(1e-12));
}

TEST_CASE("string round trips") {
  for (Kind k : {Kind::EprSingle, Kind::EprDouble, Kind::Nmr}) CHECK(kind_from_string(to_string(k)) == k);
  for (Axis a : {Axis::On, Axis::Off}) CHECK(axis_from_string(to_string(a)) == a);
  CHECK_THROWS(kind_from_string("nope"));
  const auto s = p1_line_specs(Kind::Nmr, Axis::Off, Branch::After)[0];
  CHECK(s.id().find("nmr") != std::string::npos);
  CHECK(s.id().find("after") != std::string::npos);
}
