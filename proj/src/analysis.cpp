#include "t1mr/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "t1mr/kernels.hpp"

namespace t1mr {

namespace {

Eigen::MatrixXd numeric_jacobian(const ResidualFn& f, const Eigen::VectorXd& x,
                                 const std::vector<bool>& frozen, Eigen::Index m) {
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(m, x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    if (!frozen.empty() && frozen[k]) continue;
    const double h = 1e-6 * std::max(std::abs(x[k]), 1e-8);
    Eigen::VectorXd xp = x, xm = x;
    xp[k] += h;
    xm[k] -= h;
    j.col(k) = (f(xp) - f(xm)) / (2 * h);
  }
  return j;
}

void project(Eigen::VectorXd& x, const LmOptions& o) {
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    if (!o.lower.empty()) x[k] = std::max(x[k], o.lower[k]);
    if (!o.upper.empty()) x[k] = std::min(x[k], o.upper[k]);
  }
}

}  // namespace

LmResult levenberg_marquardt(const ResidualFn& f, Eigen::VectorXd x, const LmOptions& opt,
                             const JacobianFn& jac) {
  const Eigen::Index n = x.size();
  auto sized = [n](const std::vector<double>& v) { return v.empty() || Eigen::Index(v.size()) == n; };
  if (!(opt.frozen.empty() || Eigen::Index(opt.frozen.size()) == n) || !sized(opt.lower) ||
      !sized(opt.upper))
    throw std::invalid_argument("lm: option vectors must match the parameter count");
  project(x, opt);

  LmResult res;
  Eigen::VectorXd r = f(x);
  if (!r.allFinite()) throw std::invalid_argument("lm: non-finite residual at the start point");
  double cost = 0.5 * r.squaredNorm();
  res.cost_history.push_back(cost);
  double lambda = opt.lambda0;
  auto free = [&](Eigen::Index k) { return opt.frozen.empty() || !opt.frozen[k]; };

  Eigen::MatrixXd j = jac ? jac(x) : numeric_jacobian(f, x, opt.frozen, r.size());
  int it = 0;
  for (; it < opt.max_iter; ++it) {
    for (Eigen::Index k = 0; k < n; ++k)
      if (!free(k)) j.col(k).setZero();
    const Eigen::MatrixXd jtj = j.transpose() * j;
    const Eigen::VectorXd g = j.transpose() * r;
    if (g.cwiseAbs().maxCoeff() <= opt.gtol * std::max(cost, 1e-300)) {
      res.converged = true;
      res.message = "gradient tolerance";
      break;
    }
    bool accepted = false;
    for (int tries = 0; tries < 60; ++tries) {
      Eigen::MatrixXd a = jtj;
      for (Eigen::Index k = 0; k < n; ++k) {
        if (!free(k)) {
          a.row(k).setZero();
          a.col(k).setZero();
          a(k, k) = 1;
        } else {
          a(k, k) += lambda * std::max(jtj(k, k), 1e-12);
        }
      }
      Eigen::VectorXd step = a.ldlt().solve(-g);
      for (Eigen::Index k = 0; k < n; ++k)
        if (!free(k)) step[k] = 0;
      Eigen::VectorXd xn = x + step;
      project(xn, opt);
      const Eigen::VectorXd rn = f(xn);
      const double cn = rn.allFinite() ? 0.5 * rn.squaredNorm() : HUGE_VAL;
      if (cn <= cost) {
        const double drel = (cost - cn) / std::max(cost, 1e-300);
        const double xrel = (xn - x).norm() / (x.norm() + opt.xtol);
        x = xn;
        r = rn;
        cost = cn;
        res.cost_history.push_back(cost);
        lambda = std::max(lambda / 3, 1e-12);
        accepted = true;
        if (drel <= opt.ftol || xrel <= opt.xtol) {
          res.converged = true;
          res.message = drel <= opt.ftol ? "cost tolerance" : "step tolerance";
        }
        break;
      }
      lambda *= 4;
    }
    if (!accepted) {
      res.converged = true;
      res.message = "no further decrease";
      break;
    }
    j = jac ? jac(x) : numeric_jacobian(f, x, opt.frozen, r.size());
    if (res.converged) break;
  }
  if (!res.converged) res.message = "iteration limit reached";
  for (Eigen::Index k = 0; k < n; ++k)
    if (!free(k)) j.col(k).setZero();
  res.x = x;
  res.residual = r;
  res.jacobian = j;
  res.cost = cost;
  res.iterations = it;
  res.at_bound.assign(n, false);
  for (Eigen::Index k = 0; k < n; ++k)
    res.at_bound[k] = (!opt.lower.empty() && x[k] <= opt.lower[k]) ||
                      (!opt.upper.empty() && x[k] >= opt.upper[k]);
  return res;
}

Eigen::MatrixXd lm_covariance(const LmResult& r, const std::vector<bool>& frozen, bool scale) {
  const Eigen::Index n = r.x.size();
  std::vector<Eigen::Index> idx;
  for (Eigen::Index k = 0; k < n; ++k)
    if (frozen.empty() || !frozen[k]) idx.push_back(k);
  Eigen::MatrixXd jf(r.jacobian.rows(), idx.size());
  for (std::size_t a = 0; a < idx.size(); ++a) jf.col(a) = r.jacobian.col(idx[a]);
  Eigen::MatrixXd cf = (jf.transpose() * jf).completeOrthogonalDecomposition().pseudoInverse();
  if (scale) {
    const double dof = double(r.residual.size()) - double(idx.size());
    if (dof > 0) cf *= r.residual.squaredNorm() / dof;
  }
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t a = 0; a < idx.size(); ++a)
    for (std::size_t b = 0; b < idx.size(); ++b) cov(idx[a], idx[b]) = cf(a, b);
  return cov;
}

double lorentzian_model(double x, const std::vector<PeakGuess>& peaks, double baseline) {
  double s = baseline;
  for (const auto& p : peaks) {
    const double d = x - p.center;
    s += p.amplitude * p.half_width * p.half_width / (p.half_width * p.half_width + d * d);
  }
  return s;
}

PeakFit fit_lorentzian_sum(const std::vector<double>& x, const std::vector<double>& y,
                           const std::vector<PeakGuess>& init, const std::vector<double>& yerr,
                           const LorentzianFitOptions& opt) {
  if (init.empty()) throw std::invalid_argument("at least one peak is required");
  if (x.size() != y.size()) throw std::invalid_argument("x and y sizes differ");
  if (!yerr.empty() && yerr.size() != y.size()) throw std::invalid_argument("yerr size differs");
  const std::size_t m = init.size();
  if (x.size() < 3 * m + 1) throw std::invalid_argument("too few points for the peak count");
  const auto [xmin, xmax] = std::minmax_element(x.begin(), x.end());
  for (const auto& p : init) {
    if (p.center < *xmin || p.center > *xmax)
      throw std::invalid_argument("initial center outside the data range");
    if (!(p.half_width > 0)) throw std::invalid_argument("initial half-width must be > 0");
  }
  std::vector<double> w(y.size(), 1.0);
  for (std::size_t i = 0; i < yerr.size(); ++i) {
    if (!(yerr[i] > 0)) throw std::invalid_argument("yerr must be > 0");
    w[i] = 1.0 / yerr[i];
  }

  // parameters: [c_k, log hw_k, a_k]..., baseline
  Eigen::VectorXd p0(3 * m + 1);
  for (std::size_t k = 0; k < m; ++k) {
    p0[3 * k] = init[k].center;
    p0[3 * k + 1] = std::log(init[k].half_width);
    p0[3 * k + 2] = init[k].amplitude;
  }
  p0[3 * m] = opt.baseline ? *opt.baseline : *std::min_element(y.begin(), y.end());

  const std::size_t n = x.size();
  auto model = [&](const Eigen::VectorXd& p, std::vector<double>& out) {
    std::vector<double> c(m), hw(m), a(m);
    for (std::size_t k = 0; k < m; ++k) {
      c[k] = p[3 * k];
      hw[k] = std::exp(p[3 * k + 1]);
      a[k] = p[3 * k + 2];
    }
    out.resize(n);
    kernels::lorentzian_sum(x.data(), n, c.data(), hw.data(), a.data(), m, p[3 * m], out.data());
  };
  auto resid = [&](const Eigen::VectorXd& p) {
    std::vector<double> mo;
    model(p, mo);
    Eigen::VectorXd r(n);
    for (std::size_t i = 0; i < n; ++i) r[i] = (mo[i] - y[i]) * w[i];
    return r;
  };
  auto jac = [&](const Eigen::VectorXd& p) {
    Eigen::MatrixXd j(n, 3 * m + 1);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < m; ++k) {
        const double c = p[3 * k], hw = std::exp(p[3 * k + 1]), a = p[3 * k + 2];
        const double d = x[i] - c, h2 = hw * hw, den = h2 + d * d;
        const double l = h2 / den;
        j(i, 3 * k) = w[i] * a * 2 * h2 * d / (den * den);
        j(i, 3 * k + 1) = w[i] * a * 2 * l * (1 - l);
        j(i, 3 * k + 2) = w[i] * l;
      }
      j(i, 3 * m) = w[i];
    }
    return j;
  };

  LmOptions lo;
  lo.max_iter = opt.max_iter;
  const LmResult r = levenberg_marquardt(resid, p0, lo, jac);
  const Eigen::MatrixXd cov = lm_covariance(r, {}, yerr.empty());

  PeakFit f;
  f.iterations = r.iterations;
  f.converged = r.converged;
  f.message = r.message;
  for (std::size_t k = 0; k < m; ++k) {
    const double hw = std::exp(r.x[3 * k + 1]);
    f.centers.push_back(r.x[3 * k]);
    f.half_widths.push_back(hw);
    f.amplitudes.push_back(r.x[3 * k + 2]);
    f.s_centers.push_back(std::sqrt(std::max(0.0, cov(3 * k, 3 * k))));
    f.s_half_widths.push_back(hw * std::sqrt(std::max(0.0, cov(3 * k + 1, 3 * k + 1))));
    f.s_amplitudes.push_back(std::sqrt(std::max(0.0, cov(3 * k + 2, 3 * k + 2))));
  }
  f.baseline = r.x[3 * m];
  f.s_baseline = std::sqrt(std::max(0.0, cov(3 * m, 3 * m)));
  f.chi2 = r.residual.squaredNorm();
  const double dof = double(n) - double(3 * m + 1);
  f.reduced_chi2 = dof > 0 ? f.chi2 / dof : 0;
  double mean = 0;
  for (double v : y) mean += v;
  mean /= double(n);
  double tss = 0, rss = 0;
  std::vector<double> mo;
  model(r.x, mo);
  for (std::size_t i = 0; i < n; ++i) {
    tss += (y[i] - mean) * (y[i] - mean);
    rss += (y[i] - mo[i]) * (y[i] - mo[i]);
  }
  f.r_squared = tss > 0 ? 1 - rss / tss : 1;
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = a + 1; b < m; ++b) {
      const double tol = 0.1 * std::min(f.half_widths[a], f.half_widths[b]);
      if (std::abs(f.centers[a] - f.centers[b]) < tol) f.degenerate.emplace_back(int(a), int(b));
    }
  if (!f.degenerate.empty()) f.message += "; degenerate peaks";
  return f;
}

nlohmann::json to_json(const PeakFit& f) {
  nlohmann::json j;
  j["centers"] = f.centers;
  j["half_widths"] = f.half_widths;
  j["amplitudes"] = f.amplitudes;
  j["baseline"] = f.baseline;
  j["s_centers"] = f.s_centers;
  j["s_half_widths"] = f.s_half_widths;
  j["s_amplitudes"] = f.s_amplitudes;
  j["s_baseline"] = f.s_baseline;
  j["chi2"] = f.chi2;
  j["reduced_chi2"] = f.reduced_chi2;
  j["r_squared"] = f.r_squared;
  j["iterations"] = f.iterations;
  j["converged"] = f.converged;
  j["message"] = f.message;
  nlohmann::json d = nlohmann::json::array();
  for (auto [a, b] : f.degenerate) d.push_back({a, b});
  j["degenerate"] = d;
  return j;
}

}  // namespace t1mr
