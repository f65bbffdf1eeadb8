#include "t1mr/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "t1mr/analysis.hpp"
#include "t1mr/kernels.hpp"

namespace t1mr {

namespace {

void check_rates(double a, double b) {
  if (!(a >= 0) || !(b >= 0)) throw std::invalid_argument("rates must be >= 0");
}

void check_init(const Populations& p) {
  if (p.n0 < 0 || p.nm1 < 0 || p.np1 < 0 || std::abs(p.n0 + p.nm1 + p.np1 - 1) > 1e-9)
    throw std::invalid_argument("initial populations must be >= 0 and sum to 1");
}

}  // namespace

Populations rate_equation_populations(double tau, double k_ph, double k_res,
                                      const Populations& init) {
  check_rates(k_ph, k_res);
  check_init(init);
  if (tau < 0) throw std::invalid_argument("tau must be >= 0");
  const double e1 = std::exp(-3 * k_ph * tau);
  const double e2 = std::exp(-(3 * k_ph + 2 * k_res) * tau);
  const double a = 1.0 / 3 - init.np1;
  const double d = init.n0 - init.nm1;
  Populations p;
  p.n0 = 1.0 / 3 + 0.5 * a * e1 + 0.5 * d * e2;
  p.nm1 = 1.0 / 3 + 0.5 * a * e1 - 0.5 * d * e2;
  p.np1 = 1.0 / 3 - a * e1;
  return p;
}

Populations rate_equation_rk4(double tau, double k_ph, double k_res, const Populations& init,
                              int steps) {
  check_rates(k_ph, k_res);
  if (steps < 1) throw std::invalid_argument("steps must be >= 1");
  auto f = [&](const std::array<double, 3>& n) {
    const double n0 = n[0], nm = n[1], np = n[2];
    return std::array<double, 3>{k_ph * (nm + np - 2 * n0) + k_res * (nm - n0),
                                 k_ph * (n0 + np - 2 * nm) + k_res * (n0 - nm),
                                 k_ph * (n0 + nm - 2 * np)};
  };
  std::array<double, 3> y{init.n0, init.nm1, init.np1};
  const double h = tau / steps;
  for (int s = 0; s < steps; ++s) {
    auto add = [](const std::array<double, 3>& a, const std::array<double, 3>& b, double c) {
      return std::array<double, 3>{a[0] + c * b[0], a[1] + c * b[1], a[2] + c * b[2]};
    };
    const auto k1 = f(y);
    const auto k2 = f(add(y, k1, h / 2));
    const auto k3 = f(add(y, k2, h / 2));
    const auto k4 = f(add(y, k3, h));
    for (int i = 0; i < 3; ++i) y[i] += h / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
  }
  return {y[0], y[1], y[2]};
}

double pl_curve(double tau, double i_inf, double contrast, double g_ph, double g_res) {
  check_rates(g_ph, g_res);
  return i_inf *
         (1 + 0.25 * contrast * (std::exp(-g_ph * tau) + 3 * std::exp(-(g_ph + g_res) * tau)));
}

std::vector<double> pl_curve(const std::vector<double>& tau, double i_inf, double contrast,
                             double g_ph, double g_res) {
  check_rates(g_ph, g_res);
  std::vector<double> out(tau.size());
  kernels::biexp_curve(tau.data(), tau.size(), i_inf, contrast, g_ph, g_res, out.data());
  return out;
}

double pl_i_inf(double i0, double alpha) { return i0 * (1 + 2 * alpha) / 3; }

double pl_contrast(double alpha, double n0_init) {
  return (1 - alpha) / (1 + 2 * alpha) * (3 * n0_init - 1);
}

double two_spin_decay(double t, double gamma2, double omega_int, double rho_init) {
  if (!(gamma2 > 0)) throw std::invalid_argument("gamma2 must be > 0");
  const double disc = gamma2 * gamma2 - 4 * omega_int * omega_int;
  double bracket;
  if (disc > 0) {
    const double s = std::sqrt(disc);
    // e^{-G t/2}(cosh + G/s sinh) written with decaying exponentials only
    const double ep = std::exp(-(gamma2 - s) * t / 2);
    const double em = std::exp(-(gamma2 + s) * t / 2);
    bracket = 0.5 * (ep + em) + gamma2 / s * 0.5 * (ep - em);
  } else if (disc < 0) {
    const double w = std::sqrt(-disc);
    bracket = std::exp(-gamma2 * t / 2) * (std::cos(w * t / 2) + gamma2 / w * std::sin(w * t / 2));
  } else {
    bracket = std::exp(-gamma2 * t / 2) * (1 + gamma2 * t / 2);
  }
  return rho_init / 2 + rho_init / 2 * bracket;
}

void validate(const RelaxationCurve& c) {
  if (c.tau.size() != c.values.size()) throw std::invalid_argument("tau/value sizes differ");
  if (!c.errors.empty() && c.errors.size() != c.tau.size())
    throw std::invalid_argument("error column size differs");
  for (std::size_t i = 0; i < c.tau.size(); ++i) {
    if (!std::isfinite(c.tau[i]) || !std::isfinite(c.values[i]))
      throw std::invalid_argument("non-finite curve value");
    if (i > 0 && !(c.tau[i] > c.tau[i - 1]))
      throw std::invalid_argument("tau grid must be strictly increasing");
  }
  for (double e : c.errors)
    if (!(e > 0)) throw std::invalid_argument("errors must be > 0");
}

BiexpFit fit_biexponential(const RelaxationCurve& curve, const BiexpOptions& opt) {
  validate(curve);
  const std::size_t n = curve.tau.size();
  if (n < 6) throw FitError("at least 6 points are required");
  if (curve.tau.front() < 0) throw FitError("tau must be >= 0");
  const double t_hi = curve.tau.back();
  const double t_lo = std::max(curve.tau.front(), t_hi * 1e-12);
  if (t_hi / std::max(t_lo, 1e-300) < 10) throw FitError("tau grid must span at least one decade");
  if (opt.fixed_g_ph && !(*opt.fixed_g_ph >= 0)) throw FitError("fixed g_ph must be >= 0");

  std::vector<double> w(n, 1.0);
  for (std::size_t i = 0; i < curve.errors.size(); ++i) w[i] = 1 / curve.errors[i];
  const auto& t = curve.tau;
  const auto& y = curve.values;

  // Variable projection start: for trial rates, I_inf and I_inf C/4 are linear.
  auto linear = [&](double gph, double gres, double& a, double& b) {
    double s11 = 0, s12 = 0, s22 = 0, r1 = 0, r2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double f = std::exp(-gph * t[i]) + 3 * std::exp(-(gph + gres) * t[i]);
      const double ww = w[i] * w[i];
      s11 += ww;
      s12 += ww * f;
      s22 += ww * f * f;
      r1 += ww * y[i];
      r2 += ww * f * y[i];
    }
    const double det = s11 * s22 - s12 * s12;
    if (std::abs(det) < 1e-300 * std::max(1.0, s11 * s22)) {
      a = r1 / s11;
      b = 0;
    } else {
      a = (s22 * r1 - s12 * r2) / det;
      b = (s11 * r2 - s12 * r1) / det;
    }
    double rss = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double f = std::exp(-gph * t[i]) + 3 * std::exp(-(gph + gres) * t[i]);
      const double d = (a + b * f - y[i]) * w[i];
      rss += d * d;
    }
    return rss;
  };

  const double r_lo = 0.01 / t_hi, r_hi = 100 / t_lo;
  std::vector<double> rate_grid{0.0};
  const int ng = 161;
  for (int k = 0; k < ng; ++k)
    rate_grid.push_back(r_lo * std::pow(r_hi / r_lo, double(k) / (ng - 1)));
  std::vector<double> gph_grid = opt.fixed_g_ph ? std::vector<double>{*opt.fixed_g_ph} : rate_grid;

  double best = HUGE_VAL, bgph = 0, bgres = 0, ba = 0, bb = 0;
  for (double gph : gph_grid) {
    for (double gres : rate_grid) {
      double a, b;
      const double rss = linear(gph, gres, a, b);
      if (rss < best) {
        best = rss;
        bgph = gph;
        bgres = gres;
        ba = a;
        bb = b;
      }
    }
  }
  if (!(std::abs(ba) > 0)) throw FitError("degenerate data: zero asymptote");

  Eigen::VectorXd p0(4);
  p0 << ba, 4 * bb / ba, bgph, bgres;
  auto resid = [&](const Eigen::VectorXd& p) {
    Eigen::VectorXd r(n);
    for (std::size_t i = 0; i < n; ++i)
      r[i] = (p[0] * (1 + 0.25 * p[1] *
                              (std::exp(-p[2] * t[i]) + 3 * std::exp(-(p[2] + p[3]) * t[i]))) -
              y[i]) *
             w[i];
    return r;
  };
  auto jac = [&](const Eigen::VectorXd& p) {
    Eigen::MatrixXd j(n, 4);
    for (std::size_t i = 0; i < n; ++i) {
      const double e1 = std::exp(-p[2] * t[i]);
      const double e2 = std::exp(-(p[2] + p[3]) * t[i]);
      const double s = e1 + 3 * e2;
      j(i, 0) = w[i] * (1 + 0.25 * p[1] * s);
      j(i, 1) = w[i] * p[0] * 0.25 * s;
      j(i, 2) = w[i] * p[0] * 0.25 * p[1] * (-t[i] * s);
      j(i, 3) = w[i] * p[0] * 0.25 * p[1] * (-3 * t[i] * e2);
    }
    return j;
  };
  LmOptions lo;
  lo.max_iter = opt.max_iter;
  lo.frozen = {false, false, bool(opt.fixed_g_ph), false};
  lo.lower = {-HUGE_VAL, -HUGE_VAL, 0.0, 0.0};
  const LmResult r = levenberg_marquardt(resid, p0, lo, jac);
  if (!r.x.allFinite()) throw FitError("fit diverged");
  if (r.x[2] < 0 || r.x[3] < 0) throw FitError("negative rate solution");

  const Eigen::MatrixXd cov = lm_covariance(r, lo.frozen, curve.errors.empty());
  BiexpFit f;
  f.i_inf = r.x[0];
  f.contrast = r.x[1];
  f.g_ph = r.x[2];
  f.g_res = r.x[3];
  f.s_i_inf = std::sqrt(std::max(0.0, cov(0, 0)));
  f.s_contrast = std::sqrt(std::max(0.0, cov(1, 1)));
  f.s_g_ph = std::sqrt(std::max(0.0, cov(2, 2)));
  f.s_g_res = std::sqrt(std::max(0.0, cov(3, 3)));
  f.chi2 = r.residual.squaredNorm();
  const int nfree = opt.fixed_g_ph ? 3 : 4;
  f.reduced_chi2 = n > std::size_t(nfree) ? f.chi2 / double(n - nfree) : 0;
  f.iterations = r.iterations;
  f.converged = r.converged;
  f.g_res_at_bound = r.at_bound[3];
  f.message = r.message;
  if (f.g_res_at_bound) f.message += "; g_res at lower bound 0";
  if (!f.converged) throw FitError("no convergence: " + r.message);
  return f;
}

}  // namespace t1mr
