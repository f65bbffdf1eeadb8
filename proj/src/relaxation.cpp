#include "t1mr/relaxation.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "t1mr/constants.hpp"
#include "t1mr/kernels.hpp"

namespace t1mr {

namespace {

constexpr double kPi = 3.14159265358979323846;

double hz_per_tesla(double mhz_per_gauss) {
  return std::abs(mhz_per_gauss) * si::mhz_per_gauss_to_hz_per_tesla;
}

// (mu0 gamma_nv h / (2 sqrt 2))^2 gamma_t^2 in SI, multiplied later by Theta/r^6.
double prefactor_sq(double gamma_t, const PhysicalConstants& c) {
  const double mu0 = 4 * kPi * si::mu0_over_4pi;
  const double p = mu0 * hz_per_tesla(c.gamma_nv) * hz_per_tesla(gamma_t) * si::h /
                   (2 * std::sqrt(2.0));
  return p * p;
}

void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  x.assign(n, 0);
  w.assign(n, 0);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1, p1 = z;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2 * k - 1) * z * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1;
      dp = n * (z * p1 - p0) / (z * z - 1);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-15) break;
    }
    x[i] = -z;
    x[n - 1 - i] = z;
    w[i] = w[n - 1 - i] = 2 / ((1 - z * z) * dp * dp);
  }
}

}  // namespace

std::string to_string(Channel c) {
  switch (c) {
    case Channel::EprSingle: return "epr-single";
    case Channel::EprDouble: return "epr-double";
    case Channel::NmrHyperfine: return "nmr-hyperfine";
    case Channel::NmrDirect: return "nmr-direct";
  }
  return "?";
}

std::string to_string(Kernel k) {
  switch (k) {
    case Kernel::Plus: return "+";
    case Kernel::Minus: return "-";
    case Kernel::Double: return "double";
  }
  return "?";
}

Channel channel_from_string(const std::string& s) {
  if (s == "epr-single") return Channel::EprSingle;
  if (s == "epr-double") return Channel::EprDouble;
  if (s == "nmr-hyperfine") return Channel::NmrHyperfine;
  if (s == "nmr-direct") return Channel::NmrDirect;
  throw std::invalid_argument("unknown channel: " + s);
}

Kernel kernel_from_string(const std::string& s) {
  if (s == "+" || s == "plus") return Kernel::Plus;
  if (s == "-" || s == "minus") return Kernel::Minus;
  if (s == "double") return Kernel::Double;
  throw std::invalid_argument("unknown kernel: " + s);
}

ChannelParams channel_params(Channel ch, Kernel k, const DampingRates& d,
                             const PhysicalConstants& c, double a_perp) {
  ChannelParams p;
  p.channel = ch;
  p.kernel = k;
  p.a_perp = a_perp;
  switch (ch) {
    case Channel::EprSingle:
      p.gamma_t = c.gamma_e;
      p.gamma2_total = d.gamma2_p + d.gamma2_t;
      break;
    case Channel::EprDouble:
      p.gamma_t = c.gamma_e;
      p.gamma2_total = d.gamma2_p + d.gamma1_t;
      break;
    case Channel::NmrHyperfine:
      p.gamma_t = c.gamma_e;
      p.gamma2_total = d.gamma2_p + d.gamma2_t_nuc;
      break;
    case Channel::NmrDirect:
      p.gamma_t = c.gamma_n14;
      p.gamma2_total = d.gamma2_p + d.gamma2_t_nuc;
      break;
  }
  validate(p);
  return p;
}

void validate(const ChannelParams& p) {
  if (!(p.gamma2_total > 0)) throw std::invalid_argument("gamma2_total must be > 0");
  const bool ok = [&] {
    switch (p.channel) {
      case Channel::EprSingle: return p.kernel == Kernel::Plus;
      case Channel::EprDouble: return p.kernel == Kernel::Double;
      default: return p.kernel == Kernel::Plus || p.kernel == Kernel::Minus;
    }
  }();
  if (!ok)
    throw std::invalid_argument("kernel " + to_string(p.kernel) + " not valid for channel " +
                                to_string(p.channel));
  const bool suppressed = p.channel == Channel::EprDouble || p.channel == Channel::NmrHyperfine;
  if (suppressed && !(p.a_perp != 0)) throw std::invalid_argument("a_perp required");
}

double suppression_factor(double b_gauss, double a_perp, const PhysicalConstants& c) {
  const double we = std::abs(c.gamma_e) * b_gauss;
  if (!(we > 0)) throw std::invalid_argument("field must be > 0");
  const double s = a_perp / we;
  return std::min(1.0, s * s);
}

double suppression(const ChannelParams& p, double b_gauss, const PhysicalConstants& c) {
  if (p.channel == Channel::EprDouble || p.channel == Channel::NmrHyperfine)
    return suppression_factor(b_gauss, p.a_perp, c);
  return 1.0;
}

double angular_kernel(Kernel k, double theta) {
  const double s2 = std::sin(theta) * std::sin(theta);
  switch (k) {
    case Kernel::Plus: return 9 * s2 * s2;
    case Kernel::Minus: return (3 * s2 - 2) * (3 * s2 - 2);
    case Kernel::Double: {
      const double v = 3 * std::sin(2 * theta);
      return v * v;
    }
  }
  return 0;
}

double coupling_b(const Geometry& g, double gamma_t, Kernel k, const PhysicalConstants& c) {
  validate(g);
  const double mu0 = 4 * kPi * si::mu0_over_4pi;
  const double r3 = std::pow(g.r_nm * si::nm, 3);
  const double base = mu0 * hz_per_tesla(c.gamma_nv) * hz_per_tesla(gamma_t) * si::h /
                      (4 * std::sqrt(2.0)) / r3;
  const double s2 = std::sin(g.theta) * std::sin(g.theta);
  switch (k) {
    case Kernel::Plus: return base * 3 * s2;
    case Kernel::Minus: return base * (3 * s2 - 2);
    case Kernel::Double: return base * 3 * std::sin(2 * g.theta) / 2;
  }
  return 0;
}

double gamma_res(const ChannelParams& p, const Geometry& g, double b_res,
                 const PhysicalConstants& c) {
  validate(p);
  validate(g);
  const double r6 = std::pow(g.r_nm * si::nm, 6);
  return prefactor_sq(p.gamma_t, c) * suppression(p, b_res, c) *
         angular_kernel(p.kernel, g.theta) / r6 / p.gamma2_total;
}

double occupancy_dilution(const TransitionSpec& spec) {
  switch (spec.system) {
    case System::BareNucleus: return 1.0;
    case System::Probe: throw std::invalid_argument("dilution undefined for probe transitions");
    case System::P1: break;
  }
  const double axis = spec.axis == Axis::On ? 0.25 : 0.75;
  return axis * 0.5 / 3.0;
}

Kernel kernel_for(const TransitionSpec& spec, Channel ch) {
  switch (ch) {
    case Channel::EprSingle:
      if (spec.kind != Kind::EprSingle) break;
      return Kernel::Plus;
    case Channel::EprDouble:
      if (spec.kind != Kind::EprDouble) break;
      return Kernel::Double;
    case Channel::NmrHyperfine:
    case Channel::NmrDirect:
      if (spec.kind != Kind::Nmr) break;
      // Probe goes 0 -> -1; the target flip lowering its projection pairs
      // with the + kernel.
      return spec.mi_f < spec.mi_i ? Kernel::Plus : Kernel::Minus;
  }
  throw std::invalid_argument("line " + spec.id() + " does not belong to channel " +
                              to_string(ch));
}

Spectrum gamma1_spectrum(const std::vector<double>& b_grid,
                         const std::vector<TransitionSpec>& lines, const Geometry& g,
                         Channel channel, const DampingRates& d, const PhysicalConstants& c,
                         const SpectrumOptions& opt) {
  validate(g);
  Spectrum s;
  s.b = b_grid;
  const std::size_t n = b_grid.size();
  s.gamma1.assign(n, 0.0);
  std::vector<double> omega_nv(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(b_grid[i] > 0)) throw std::invalid_argument("field grid must be > 0");
    omega_nv[i] = std::abs(nv_transition_frequency(b_grid[i], 1, c, opt.res.nv_model));
  }

  std::vector<double> det(n), amp(n);
  for (const auto& spec : lines) {
    if (spec.system != System::P1) throw std::invalid_argument("spectrum lines must be P1");
    SpectrumLine line;
    line.spec = spec;
    line.params = channel_params(channel, kernel_for(spec, channel), d, c,
                                 p1_params(c, spec.axis, opt.res.qmode).a_perp);
    line.dilution = opt.apply_dilution ? occupancy_dilution(spec) : 1.0;
    line.width = line.params.gamma2_total;
    try {
      const auto r = solve_resonance(spec, c, opt.res);
      line.b_res = r.b_res;
      line.center_mhz = r.omega_target;
      line.amplitude = line.dilution * gamma_res(line.params, g, r.b_res, c);
    } catch (const NoResonance&) {
      line.b_res = std::numeric_limits<double>::quiet_NaN();
      line.center_mhz = std::numeric_limits<double>::quiet_NaN();
      line.amplitude = 0;
    }

    for (std::size_t i = 0; i < n; ++i) {
      const double wt = p1_transition_frequency(b_grid[i], spec, c, opt.res.target_model,
                                                opt.res.qmode);
      det[i] = si::two_pi_mhz * (omega_nv[i] - wt);
      amp[i] = line.dilution * gamma_res(line.params, g, b_grid[i], c);
    }
    std::vector<double> contrib(n, 0.0);
    kernels::lorentzian_accumulate(det.data(), amp.data(), n, line.width, contrib.data());
    for (std::size_t i = 0; i < n; ++i) s.gamma1[i] += contrib[i];
    s.per_line.push_back(std::move(contrib));
    s.lines.push_back(line);
  }
  return s;
}

double angular_moment(Kernel k) {
  switch (k) {
    case Kernel::Plus: return 48.0 / 5.0;
    case Kernel::Minus: return 8.0 / 5.0;
    case Kernel::Double: return 48.0 / 5.0;
  }
  return 0;
}

double angular_average_ratio() { return angular_moment(Kernel::Plus) / angular_moment(Kernel::Minus); }

double angular_average_ratio_quadrature(double r_min, double r_max, int n_theta, int n_r) {
  if (!(r_min > 0 && r_max > r_min) || n_theta < 2 || n_r < 2)
    throw std::invalid_argument("bad quadrature parameters");
  std::vector<double> ut, wt, ur, wr;
  gauss_legendre(n_theta, ut, wt);
  gauss_legendre(n_r, ur, wr);
  // theta through u = cos(theta); r through s = ln r
  const double la = std::log(r_min), lb = std::log(r_max);
  double plus = 0, minus = 0;
  for (int i = 0; i < n_theta; ++i) {
    const double theta = std::acos(ut[i]);
    for (int j = 0; j < n_r; ++j) {
      const double sj = 0.5 * (lb - la) * ur[j] + 0.5 * (lb + la);
      const double r = std::exp(sj);
      const double w = wt[i] * wr[j] * 0.5 * (lb - la) * r * r * r / std::pow(r, 6);
      plus += w * angular_kernel(Kernel::Plus, theta);
      minus += w * angular_kernel(Kernel::Minus, theta);
    }
  }
  return plus / minus;
}

double angular_response(Technique t, double theta) {
  if (!(theta >= 0 && theta <= kPi)) throw std::invalid_argument("theta must be in [0, pi]");
  const double s = std::sin(theta), co = std::cos(theta);
  switch (t) {
    case Technique::T1Single: return s * s * s * s;
    case Technique::T1Double: {
      const double v = std::sin(2 * theta);
      return v * v;
    }
    case Technique::Deer: {
      const double v = 1 - 3 * co * co;
      return v * v / 4;
    }
  }
  return 0;
}

Technique technique_from_string(const std::string& s) {
  if (s == "t1-single") return Technique::T1Single;
  if (s == "t1-double") return Technique::T1Double;
  if (s == "deer") return Technique::Deer;
  throw std::invalid_argument("unknown technique: " + s);
}

double infer_distance(double gamma_res_measured, const ChannelParams& p, double theta,
                      double dilution, double b_res, const PhysicalConstants& c) {
  if (!(gamma_res_measured > 0)) throw std::invalid_argument("measured rate must be > 0");
  if (!(dilution > 0 && dilution <= 1)) throw std::invalid_argument("dilution must be in (0,1]");
  const double at_1nm = dilution * gamma_res(p, Geometry{1.0, theta}, b_res, c);
  if (!(at_1nm > 0)) throw std::domain_error("angular kernel vanishes; no distance solution");
  return std::pow(at_1nm / gamma_res_measured, 1.0 / 6.0);
}

}  // namespace t1mr
