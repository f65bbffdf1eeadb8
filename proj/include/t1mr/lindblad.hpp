#pragma once

#include <optional>
#include <stdexcept>
#include <vector>

#include "t1mr/spin.hpp"

namespace t1mr {

struct DensityMatrix {
  CMat rho;
  std::vector<std::vector<double>> basis;
};

// Throws if rho is not square, not Hermitian, off unit trace or has an
// eigenvalue below -tol.
void validate(const DensityMatrix& d, double tol = 1e-9);

// Pure dephasing along a diagonal operator: element (i,j) decays at
// rate * (op_i - op_j)^2.
struct DiagonalDephasing {
  RVec op;
  double rate = 0;
};

// Column-major vec convention, H in MHz, result in s^-1.
CMat liouvillian(const CMat& h_mhz, const std::vector<DiagonalDephasing>& deph);

// Diagonal entries within each group relax toward the group mean at 1/t1.
struct Background {
  double t1 = 0;
  std::vector<std::vector<int>> groups;
};

struct EvolveOptions {
  double dt = 0;                // base step, s; 0 picks it from the spectrum
  std::vector<int> gap_states;  // basis states bounding the step; empty = all
  std::optional<Background> background;
  double trace_tol = 1e-9;
  double herm_tol = 1e-12;
  double pos_tol = 1e-9;
};

struct Trajectory {
  std::vector<double> t;  // times actually reached (multiples of dt)
  std::vector<CMat> rho;
  double dt = 0;
  long long steps = 0;
  double max_trace_error = 0;
  double max_herm_error = 0;
  double min_eigenvalue = 1;
};

class LindbladError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Base step rule: min(T1/100, 1/(20 max gap)) with the gap taken over the
// eigenvalues labelled by gap_states.
double lindblad_step(const HamiltonianMatrix& h, const EvolveOptions& opt);

Trajectory lindblad_evolve(const HamiltonianMatrix& h, const std::vector<DiagonalDephasing>& deph,
                           const DensityMatrix& rho0, const std::vector<double>& t_grid,
                           const EvolveOptions& opt = {});

}  // namespace t1mr
