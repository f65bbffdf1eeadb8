#pragma once

#include <string>
#include <vector>

#include "t1mr/transitions.hpp"

namespace t1mr {

enum class Channel { EprSingle, EprDouble, NmrHyperfine, NmrDirect };
enum class Kernel { Plus, Minus, Double };

std::string to_string(Channel c);
std::string to_string(Kernel k);
Channel channel_from_string(const std::string& s);
Kernel kernel_from_string(const std::string& s);

// Damping rates of probe and target baths, s^-1.
struct DampingRates {
  double gamma2_p = 1e6;      // probe dephasing
  double gamma2_t = 1e6;      // target electron dephasing
  double gamma1_t = 1e6;      // target electron longitudinal relaxation
  double gamma2_t_nuc = 1e6;  // target nuclear dephasing
};

struct ChannelParams {
  Channel channel = Channel::EprSingle;
  Kernel kernel = Kernel::Plus;
  double gamma_t = 0;       // MHz/G
  double gamma2_total = 0;  // s^-1
  double a_perp = 0;        // MHz, used by the suppressed channels
};

ChannelParams channel_params(Channel ch, Kernel k, const DampingRates& d,
                             const PhysicalConstants& c, double a_perp);
void validate(const ChannelParams& p);

// Suppression factor (A_perp / w_e)^2 at field b.
double suppression_factor(double b_gauss, double a_perp, const PhysicalConstants& c);
double suppression(const ChannelParams& p, double b_gauss, const PhysicalConstants& c);

// Angular kernel value (3 sin^2 - 1 +- 1)^2 or (3 sin 2theta)^2, dimensionless.
double angular_kernel(Kernel k, double theta);

// Mutual coupling b in rad/s; 2b equals the resonant matrix element
// 2 H_int / hbar of the two-spin problem for the +- kernels.
double coupling_b(const Geometry& g, double gamma_t, Kernel k, const PhysicalConstants& c);

// On-resonance rate, s^-1.
double gamma_res(const ChannelParams& p, const Geometry& g, double b_res,
                 const PhysicalConstants& c);

double occupancy_dilution(const TransitionSpec& spec);

struct SpectrumLine {
  TransitionSpec spec;
  ChannelParams params;
  double b_res = 0;       // G, NaN if the line never crosses the probe
  double center_mhz = 0;  // target frequency at b_res
  double width = 0;       // half-width, s^-1
  double amplitude = 0;   // s^-1, diluted
  double dilution = 1;
};

struct Spectrum {
  std::vector<double> b;
  std::vector<double> gamma1;
  std::vector<SpectrumLine> lines;
  std::vector<std::vector<double>> per_line;
};

struct SpectrumOptions {
  bool apply_dilution = true;
  ResonanceOptions res;
};

// Lines must be P1 specs; each one is assigned a channel/kernel by its kind
// (and for NMR, by the direction of the target electron flip).
Spectrum gamma1_spectrum(const std::vector<double>& b_grid,
                         const std::vector<TransitionSpec>& lines, const Geometry& g,
                         Channel channel, const DampingRates& d, const PhysicalConstants& c,
                         const SpectrumOptions& opt = {});

// Kernel paired with a P1 line under a channel.
Kernel kernel_for(const TransitionSpec& spec, Channel ch);

double angular_average_ratio();
double angular_average_ratio_quadrature(double r_min = 1.0, double r_max = 1e3,
                                        int n_theta = 64, int n_r = 64);
double angular_moment(Kernel k);

enum class Technique { T1Single, T1Double, Deer };
double angular_response(Technique t, double theta);
Technique technique_from_string(const std::string& s);

double infer_distance(double gamma_res_measured, const ChannelParams& p, double theta,
                      double dilution, double b_res, const PhysicalConstants& c);

}  // namespace t1mr
