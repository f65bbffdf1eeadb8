#pragma once

#include <vector>

#include "t1mr/gslac.hpp"
#include "t1mr/relaxation.hpp"

namespace t1mr {

struct MeasurementBudget {
  double count_rate = 2e5;  // photons/s
  double t_ro = 300e-9;     // s
  double contrast = 0.25;
  double gamma_ph = 200;    // s^-1
  double t_total = 1;       // s
};

void validate(const MeasurementBudget& b);

double snr(double tau, double gamma_res, const MeasurementBudget& b);
double optimal_tau(double gamma_res, const MeasurementBudget& b);
double min_acquisition_time(double gamma_res, const MeasurementBudget& b);

struct ContourLine {
  double level = 0;
  std::vector<std::pair<double, double>> points;  // (r_nm, theta)
};

struct DetectabilityMap {
  std::vector<double> r_nm, theta;
  std::vector<std::vector<double>> ratio;  // [r index][theta index], gamma_res / gamma_ph
  std::vector<ContourLine> contours;
};

struct MapOptions {
  Kernel kernel = Kernel::Plus;
  double gamma2 = 1e6;
  std::vector<double> levels{0.2, 1.0, 7.0};
  int jobs = 1;
};

DetectabilityMap detectability_map(Species s, const std::vector<double>& r_nm,
                                   const std::vector<double>& theta, const MeasurementBudget& b,
                                   const PhysicalConstants& c, const MapOptions& opt = {});

// Marching squares on log(field) over a rectilinear grid; one polyline per
// connected piece.
std::vector<ContourLine> contour_lines(const std::vector<double>& x, const std::vector<double>& y,
                                       const std::vector<std::vector<double>>& field,
                                       double level);

// Largest r reached by the contours at `level`, 0 if none.
double contour_reach(const DetectabilityMap& m, double level);

}  // namespace t1mr
