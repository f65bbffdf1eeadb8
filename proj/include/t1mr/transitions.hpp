#pragma once

#include <optional>
#include <string>
#include <vector>

#include "t1mr/spin.hpp"

namespace t1mr {

enum class System { Probe, P1, BareNucleus };
enum class Kind { EprSingle, EprDouble, Nmr, Probe0m1, Probe0p1 };
enum class Branch { Before, After };

std::string to_string(System s);
std::string to_string(Kind k);
std::string to_string(Axis a);
std::string to_string(Branch b);
Kind kind_from_string(const std::string& s);
Axis axis_from_string(const std::string& s);

// For P1 lines: initial state (ms_i, mi_i) and final (ms_f, mi_f).
// NMR lines keep ms_i == ms_f.
struct TransitionSpec {
  System system = System::P1;
  Kind kind = Kind::EprSingle;
  Axis axis = Axis::On;
  double ms_i = 0.5, ms_f = -0.5;
  int mi_i = 0, mi_f = 0;
  Branch branch = Branch::Before;

  std::string id() const;
};

enum class NvModel { Conversion, FirstOrder, Exact };
enum class TargetModel { Perturbative, Exact };

enum class ProbeBranch { ZeroToMinus, ZeroToPlus };

// Signed 0 -> -1 probe frequency (MHz) with nuclear projection m_i.
// Conversion: d_nv + gamma_nv B - a_par_nv_odmr m_i.
// FirstOrder: adds the transverse hyperfine shift with a_par_nv.
// Exact: difference of 9x9 adiabatic eigenvalues.
double nv_transition_frequency(double b_gauss, int m_i, const PhysicalConstants& c,
                               NvModel model = NvModel::Conversion,
                               ProbeBranch pb = ProbeBranch::ZeroToMinus);

// Inverse of the conversion formula at m_i = +1.
double field_from_omega(double omega_nv, const PhysicalConstants& c);

// Field at which the polarized probe transition crosses zero.
double gslac_field(const PhysicalConstants& c);

struct P1Line {
  TransitionSpec spec;
  double omega = 0;  // MHz, positive
};

std::vector<TransitionSpec> p1_line_specs(Kind kind, Axis axis, Branch branch = Branch::Before);

double p1_transition_frequency(double b_gauss, const TransitionSpec& spec,
                               const PhysicalConstants& c,
                               TargetModel model = TargetModel::Perturbative,
                               OffAxisQuadrupole qmode = OffAxisQuadrupole::Rotated);

std::vector<P1Line> p1_transition_frequencies(double b_gauss, Kind kind, Axis axis,
                                              const PhysicalConstants& c,
                                              TargetModel model = TargetModel::Perturbative,
                                              OffAxisQuadrupole qmode = OffAxisQuadrupole::Rotated);

struct ResonanceOptions {
  double epr_lo = 300, epr_hi = 700;
  double nmr_lo = 950, nmr_hi = 1100;
  double grid_step = 1.0;
  double tol_mhz = 1e-9;
  NvModel nv_model = NvModel::Conversion;
  TargetModel target_model = TargetModel::Perturbative;
  OffAxisQuadrupole qmode = OffAxisQuadrupole::Rotated;
};

struct ResonanceResult {
  TransitionSpec spec;
  double b_res = 0;
  double omega_nv = 0;      // signed
  double omega_target = 0;  // positive
  double residual = 0;
};

class NoResonance : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// All roots of |w_nv(B)| - |w_t(B)| in the kind's window.
std::vector<ResonanceResult> solve_resonances(const TransitionSpec& spec,
                                              const PhysicalConstants& c,
                                              const ResonanceOptions& opt = {});
// The root on the requested branch (sign of w_nv); throws NoResonance.
ResonanceResult solve_resonance(const TransitionSpec& spec, const PhysicalConstants& c,
                                const ResonanceOptions& opt = {});

// Closed-form EPR estimate of w_nv at resonance, valid to second order in
// a_par/d_nv and A_perp/d_nv.
double epr_closed_form(const TransitionSpec& spec, const PhysicalConstants& c,
                       OffAxisQuadrupole qmode = OffAxisQuadrupole::Rotated);

struct TableOptions {
  bool epr_single = true, epr_double = true, nmr = true;
  std::optional<Axis> axis;
  ResonanceOptions res;
};

std::vector<ResonanceResult> resonance_table(const PhysicalConstants& c,
                                             const TableOptions& opt = {});

// A measured NMR line: which ms-conserving pair, |w_nv| and its uncertainty.
// pair: 1 (+1/2; +1,0), 2 (+1/2; -1,0), 3 (-1/2; +1,0), 4 (-1/2; -1,0)
struct NmrLine {
  int pair = 1;
  double omega = 0;
  double sigma = 0.1;
  double b_res = 0;
};

struct NmrInversion {
  double a_par = 0, a_perp = 0, q = 0, gamma_n = 0;  // MHz, MHz/G
  double sa_par = 0, sa_perp = 0, sq = 0, sgamma_n = 0;
  double rms_residual = 0;
};

int nmr_pair_index(const TransitionSpec& spec);
// Field consistent with a measured line via the conversion formula.
double nmr_line_field(double omega_abs, Branch branch, const PhysicalConstants& c);

NmrInversion invert_nmr_lines(const std::vector<NmrLine>& lines, const PhysicalConstants& c);

}  // namespace t1mr
