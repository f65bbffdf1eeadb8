#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace t1mr {

struct Populations {
  double n0 = 1, nm1 = 0, np1 = 0;
};

// Closed-form three-level populations with phonon rate k_ph between all
// pairs and k_res between |0> and |-1>.
Populations rate_equation_populations(double tau, double k_ph, double k_res,
                                      const Populations& init);

// Classical RK4 integration of the same rate model (test oracle).
Populations rate_equation_rk4(double tau, double k_ph, double k_res, const Populations& init,
                              int steps);

double pl_curve(double tau, double i_inf, double contrast, double g_ph, double g_res);
std::vector<double> pl_curve(const std::vector<double>& tau, double i_inf, double contrast,
                             double g_ph, double g_res);

// PL coefficients from the populations model: I_inf and contrast for
// brightness ratio alpha = I1/I0 and initial |0> population n0.
double pl_i_inf(double i0, double alpha);
double pl_contrast(double alpha, double n0_init);

// Resonant-state population of the two-spin problem (rad/s, s^-1).
double two_spin_decay(double t, double gamma2, double omega_int, double rho_init);

enum class CurveModel { Populations, Pl };

struct RelaxationCurve {
  std::vector<double> tau;
  std::vector<double> values;
  std::vector<double> errors;  // optional
  CurveModel model = CurveModel::Pl;
};

void validate(const RelaxationCurve& c);

struct BiexpFit {
  double i_inf = 0, contrast = 0, g_ph = 0, g_res = 0;
  double s_i_inf = 0, s_contrast = 0, s_g_ph = 0, s_g_res = 0;
  double chi2 = 0, reduced_chi2 = 0;
  int iterations = 0;
  bool converged = false;
  bool g_res_at_bound = false;
  std::string message;
};

class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BiexpOptions {
  std::optional<double> fixed_g_ph;
  int max_iter = 500;
};

BiexpFit fit_biexponential(const RelaxationCurve& curve, const BiexpOptions& opt = {});

}  // namespace t1mr
