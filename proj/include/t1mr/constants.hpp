#pragma once

#include <string>

#include <json.hpp>

namespace t1mr {

// Units: MHz, G, MHz/G, s^-1, nm.
namespace si {
constexpr double h = 6.62607015e-34;
constexpr double mu0_over_4pi = 1e-7;
constexpr double pi = 3.14159265358979323846;
constexpr double mhz_per_gauss_to_hz_per_tesla = 1e10;
constexpr double nm = 1e-9;
constexpr double two_pi_mhz = 2.0 * pi * 1e6;  // MHz -> rad/s
}  // namespace si

struct PhysicalConstants {
  double gamma_nv = -2.8035;
  double gamma_e = -2.8024;
  double gamma_n14 = 3.077e-4;
  double d_nv = 2870.0;
  double a_par_nv = -2.14;
  double a_perp_nv = -2.70;
  double q_nv = -4.96;
  double a_par_nv_odmr = -2.16;
  double a_par_p1 = 113.98;
  double a_perp_p1 = 81.34;
  double q_p1 = -3.97;
  double gamma_h1 = 4.258e-3;
  // literature value, not given with the model constants
  double gamma_c13 = 1.0705e-3;

  static PhysicalConstants measured_probe() {
    PhysicalConstants c;
    c.d_nv = 2870.5;
    return c;
  }
};

nlohmann::json to_json(const PhysicalConstants& c);
// Unknown keys are rejected; missing keys keep the values in `base`.
PhysicalConstants constants_from_json(const nlohmann::json& j,
                                      PhysicalConstants base = {});
nlohmann::json constants_provenance();

}  // namespace t1mr
