#pragma once

#include <array>
#include <complex>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "t1mr/constants.hpp"

namespace t1mr {

using cd = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using RVec = Eigen::VectorXd;

struct SpinOperators {
  double s = 0.5;
  CMat sx, sy, sz;
  std::vector<double> m;  // descending
};

SpinOperators spin_operators(double s);

struct HamiltonianMatrix {
  CMat matrix;
  std::vector<int> dims;
  std::vector<std::vector<double>> basis;  // one m tuple per row

  int dim() const { return static_cast<int>(matrix.rows()); }
  // index of the product state with the given m tuple, -1 if absent
  int index_of(const std::vector<double>& ms) const;
};

std::vector<std::vector<double>> product_basis(const std::vector<int>& dims);

HamiltonianMatrix embed(const CMat& op, const std::vector<int>& dims, int index);
HamiltonianMatrix zero_hamiltonian(const std::vector<int>& dims);

struct Geometry {
  double r_nm = 3.0;
  double theta = 0.0;
};

void validate(const Geometry& g);

enum class Axis { On, Off };

// Off-axis quadrupole: `Printed` keeps Q unchanged, `Rotated` applies the
// second-rank rotation to the tilted frame, Q' = Q (3cos^2(beta) - 1) / 2.
enum class OffAxisQuadrupole { Printed, Rotated };

struct P1Params {
  double a_par = 0;
  double a_perp = 0;
  double q = 0;
};

P1Params p1_params(const PhysicalConstants& c, Axis axis,
                   OffAxisQuadrupole qmode = OffAxisQuadrupole::Rotated);

HamiltonianMatrix build_nv_hamiltonian(double b_gauss, const PhysicalConstants& c,
                                       bool include_nuclear);

HamiltonianMatrix build_p1_hamiltonian(double b_gauss, const PhysicalConstants& c,
                                       const P1Params& p);
HamiltonianMatrix build_p1_hamiltonian(double b_gauss, const PhysicalConstants& c,
                                       Axis axis);

// Dipolar coupling constant mu0 gamma_a gamma_b h / (4 pi r^3), in MHz.
double dipolar_constant_mhz(double r_nm, double gamma_a, double gamma_b);

// Full dipole-dipole term between subsystems ia and ib (spin ops taken from
// dims), target direction (sin theta, 0, cos theta).
HamiltonianMatrix build_dipole_hamiltonian(const Geometry& g, double gamma_a,
                                           double gamma_b, const std::vector<int>& dims,
                                           int ia, int ib);

struct Eigensystem {
  RVec values;            // ascending, MHz
  CMat vectors;           // columns
  std::vector<int> label; // product-basis index assigned to each eigenvector
};

Eigensystem eigensystem(const HamiltonianMatrix& h, double herm_tol = 1e-12);

// Relabel `next` so each eigenvector keeps the label of the previous sweep
// point it overlaps most with.
void track_labels(const Eigensystem& prev, Eigensystem& next);

bool is_hermitian(const CMat& m, double tol);

// Perturbative P1 levels (MHz) indexed [ms_index][mi_index] with
// ms_index 0 -> +1/2, 1 -> -1/2 and mi_index 0 -> +1, 1 -> 0, 2 -> -1.
using P1Levels = std::array<std::array<double, 3>, 2>;
P1Levels p1_levels_perturbative(double b_gauss, const PhysicalConstants& c,
                                const P1Params& p);
// Exact levels with the same indexing, assigned by adiabatic label.
P1Levels p1_levels_exact(double b_gauss, const PhysicalConstants& c, const P1Params& p);

inline int ms_index(double ms) { return ms > 0 ? 0 : 1; }
inline int mi_index(int mi) { return 1 - mi; }

}  // namespace t1mr
