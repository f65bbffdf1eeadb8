#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace t1mr {

using ResidualFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
using JacobianFn = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;

struct LmOptions {
  int max_iter = 500;
  double ftol = 1e-14;   // relative cost decrease
  double xtol = 1e-12;   // relative step
  double gtol = 1e-14;   // scaled gradient
  double lambda0 = 1e-3;
  std::vector<bool> frozen;  // per-parameter; empty means all free
  std::vector<double> lower, upper;
};

struct LmResult {
  Eigen::VectorXd x;
  Eigen::VectorXd residual;
  Eigen::MatrixXd jacobian;
  double cost = 0;  // 0.5 |r|^2
  int iterations = 0;
  bool converged = false;
  std::string message;
  std::vector<double> cost_history;  // one entry per accepted step, starting at x0
  std::vector<bool> at_bound;
};

// Damped Gauss-Newton with Marquardt scaling and box projection. The Jacobian
// falls back to central differences when jac is empty.
LmResult levenberg_marquardt(const ResidualFn& f, Eigen::VectorXd x0, const LmOptions& opt = {},
                             const JacobianFn& jac = {});

// Covariance (J^T J)^-1 over the free parameters, scaled by the reduced
// chi-square when `scale` is set; frozen rows/cols are zero.
Eigen::MatrixXd lm_covariance(const LmResult& r, const std::vector<bool>& frozen, bool scale);

struct PeakFit {
  std::vector<double> centers, half_widths, amplitudes;
  double baseline = 0;
  std::vector<double> s_centers, s_half_widths, s_amplitudes;
  double s_baseline = 0;
  double chi2 = 0, reduced_chi2 = 0, r_squared = 0;
  int iterations = 0;
  bool converged = false;
  std::vector<std::pair<int, int>> degenerate;  // peaks that collapsed onto each other
  std::string message;
};

struct PeakGuess {
  double center = 0, half_width = 1, amplitude = 1;
};

struct LorentzianFitOptions {
  std::optional<double> baseline;  // initial baseline, default: data minimum
  int max_iter = 500;
};

double lorentzian_model(double x, const std::vector<PeakGuess>& peaks, double baseline);

PeakFit fit_lorentzian_sum(const std::vector<double>& x, const std::vector<double>& y,
                           const std::vector<PeakGuess>& init,
                           const std::vector<double>& yerr = {},
                           const LorentzianFitOptions& opt = {});

nlohmann::json to_json(const PeakFit& f);

}  // namespace t1mr
