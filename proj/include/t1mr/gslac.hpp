#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "t1mr/lindblad.hpp"
#include "t1mr/relaxation.hpp"

namespace t1mr {

enum class Species { H1, C13 };
std::string to_string(Species s);
Species species_from_string(const std::string& s);
double species_gamma(Species s, const PhysicalConstants& c);

struct GslacPoint {
  double b = 0;          // G
  double gamma_res = 0;  // s^-1
  double rss = 0;
  std::string status;    // ok | at-upper-bound | error
  std::string message;
};

struct GslacOptions {
  Geometry geometry{3.0, 0.78539816339744831};
  double gamma2_p = 1e6;   // probe electron dephasing, s^-1
  double gamma2_t = 0;     // target dephasing, s^-1
  double gamma_ph = 200;   // background relaxation, s^-1
  int n_times = 60;
  double t_min = 1e-6;     // s; the grid ends at 3/gamma_ph
  int jobs = 1;
  PhysicalConstants c = PhysicalConstants::measured_probe();
};

// 18-dim NV (S=1, 14N I=1) x target (1/2) Hamiltonian in MHz; basis index
// (1 - mS) 6 + (1 - mI) 2 + (mt > 0 ? 0 : 1).
HamiltonianMatrix gslac_hamiltonian(double b, Species s, const GslacOptions& opt);

struct GslacTrace {
  std::vector<double> t;
  std::vector<double> population;  // |0, mI=+1> summed over the target
  Trajectory trajectory;
};

GslacTrace gslac_trace(double b, Species s, const GslacOptions& opt);

// Fit n(t) = 1/3 + e^{-g_ph t}/6 + e^{-(g_ph + g_res) t}/2 with only g_res free.
GslacPoint fit_population_rate(const std::vector<double>& t, const std::vector<double>& y,
                               double gamma_ph);

GslacPoint gslac_point(double b, Species s, const GslacOptions& opt);

using GslacCallback = std::function<void(std::size_t index, const GslacPoint&)>;

// Points already present in `done` (same index) are reused, not recomputed.
std::vector<GslacPoint> gslac_nmr_spectrum(Species s, const std::vector<double>& b_grid,
                                           const GslacOptions& opt,
                                           const std::vector<std::optional<GslacPoint>>& done = {},
                                           const GslacCallback& on_point = {});

// Single NV (S=1) x spin-1/2 target without NV nucleus, tuned to the exact
// diagonal resonance of the chosen kernel.
struct TwoSpinComparison {
  double b_res = 0;
  double fitted = 0;     // s^-1, from the Lindblad trajectory
  double predicted = 0;  // s^-1, closed form
  double rel_error = 0;
};

TwoSpinComparison lindblad_vs_closed_form(Kernel k, const Geometry& g, double gamma_t,
                                          double gamma2_p, double gamma2_t,
                                          const PhysicalConstants& c);

}  // namespace t1mr
