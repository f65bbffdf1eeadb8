#include "t1mr/gslac.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <thread>

#include "t1mr/analysis.hpp"

namespace t1mr {

namespace {

CMat kron(const CMat& a, const CMat& b) {
  CMat out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

std::vector<double> log_grid(double lo, double hi, int n) {
  std::vector<double> g(n);
  for (int k = 0; k < n; ++k) g[k] = lo * std::pow(hi / lo, n == 1 ? 0.0 : double(k) / (n - 1));
  return g;
}

// Golden-section minimisation of f on [a, b].
template <typename F>
double golden(F f, double a, double b, double tol) {
  const double g = 0.5 * (std::sqrt(5.0) - 1);
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = f(c), fd = f(d);
  while (std::abs(b - a) > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace

std::string to_string(Species s) { return s == Species::H1 ? "h1" : "c13"; }

Species species_from_string(const std::string& s) {
  if (s == "h1") return Species::H1;
  if (s == "c13") return Species::C13;
  throw std::invalid_argument("unknown species: " + s);
}

double species_gamma(Species s, const PhysicalConstants& c) {
  return s == Species::H1 ? c.gamma_h1 : c.gamma_c13;
}

HamiltonianMatrix gslac_hamiltonian(double b, Species s, const GslacOptions& opt) {
  const std::vector<int> dims{3, 3, 2};
  const auto nv = build_nv_hamiltonian(b, opt.c, true);
  const auto t = spin_operators(0.5);
  const double gt = species_gamma(s, opt.c);
  HamiltonianMatrix h = zero_hamiltonian(dims);
  h.matrix = kron(nv.matrix, CMat::Identity(2, 2)) + kron(CMat::Identity(9, 9), -gt * b * t.sz) +
             build_dipole_hamiltonian(opt.geometry, opt.c.gamma_nv, gt, dims, 0, 2).matrix;
  return h;
}

GslacTrace gslac_trace(double b, Species s, const GslacOptions& opt) {
  if (!(opt.gamma_ph > 0)) throw std::invalid_argument("gamma_ph must be > 0");
  if (!(opt.gamma2_p >= 0) || !(opt.gamma2_t >= 0))
    throw std::invalid_argument("dephasing rates must be >= 0");
  if (opt.n_times < 6) throw std::invalid_argument("at least 6 time points are required");
  const auto h = gslac_hamiltonian(b, s, opt);
  const int n = h.dim();

  std::vector<DiagonalDephasing> deph;
  RVec sz(n), tz(n);
  for (int i = 0; i < n; ++i) {
    sz[i] = h.basis[i][0];
    tz[i] = h.basis[i][2];
  }
  if (opt.gamma2_p > 0) deph.push_back({sz, opt.gamma2_p});
  if (opt.gamma2_t > 0) deph.push_back({tz, opt.gamma2_t});

  EvolveOptions eo;
  Background bg;
  bg.t1 = 1 / opt.gamma_ph;
  for (int mi = 0; mi < 3; ++mi)
    for (int mt = 0; mt < 2; ++mt) bg.groups.push_back({mi * 2 + mt, 6 + mi * 2 + mt, 12 + mi * 2 + mt});
  eo.background = bg;
  for (int i = 6; i < 18; ++i) eo.gap_states.push_back(i);

  DensityMatrix rho0;
  rho0.rho = CMat::Zero(n, n);
  rho0.rho(6, 6) = 0.5;
  rho0.rho(7, 7) = 0.5;
  rho0.basis = h.basis;

  const auto grid = log_grid(opt.t_min, 3 / opt.gamma_ph, opt.n_times);
  GslacTrace tr;
  tr.trajectory = lindblad_evolve(h, deph, rho0, grid, eo);
  // rounding onto the step grid may merge neighbouring times
  for (std::size_t k = 0; k < tr.trajectory.t.size(); ++k) {
    if (!tr.t.empty() && tr.trajectory.t[k] == tr.t.back()) continue;
    tr.t.push_back(tr.trajectory.t[k]);
    const auto& r = tr.trajectory.rho[k];
    tr.population.push_back(std::real(r(6, 6) + r(7, 7)));
  }
  return tr;
}

GslacPoint fit_population_rate(const std::vector<double>& t, const std::vector<double>& y,
                               double gamma_ph) {
  if (t.size() != y.size() || t.size() < 3) throw std::invalid_argument("bad curve for fit");
  auto rss = [&](double g) {
    double s = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double m =
          1.0 / 3 + std::exp(-gamma_ph * t[i]) / 6 + 0.5 * std::exp(-(gamma_ph + g) * t[i]);
      s += (m - y[i]) * (m - y[i]);
    }
    return s;
  };
  const double lo = 1e-3, hi = 1e8;
  auto grid = log_grid(lo, hi, 440);
  grid.insert(grid.begin(), 0.0);
  std::size_t best = 0;
  double bv = HUGE_VAL;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double v = rss(grid[k]);
    if (v < bv) {
      bv = v;
      best = k;
    }
  }
  GslacPoint p;
  p.status = "ok";
  if (best == 0) {
    p.gamma_res = 0;
    p.rss = bv;
    return p;
  }
  if (best == grid.size() - 1) {
    p.gamma_res = hi;
    p.rss = bv;
    p.status = "at-upper-bound";
    p.message = "rate above the fit range";
    return p;
  }
  const double a = best == 1 ? std::log(lo) - std::log(hi / lo) / 439 : std::log(grid[best - 1]);
  const double b = std::log(grid[best + 1]);
  const double x = golden([&](double lg) { return rss(std::exp(lg)); }, a, b, 1e-10);
  p.gamma_res = std::exp(x);
  p.rss = rss(p.gamma_res);
  if (p.rss > bv) {
    p.gamma_res = grid[best];
    p.rss = bv;
  }
  return p;
}

GslacPoint gslac_point(double b, Species s, const GslacOptions& opt) {
  GslacPoint p;
  try {
    const auto tr = gslac_trace(b, s, opt);
    p = fit_population_rate(tr.t, tr.population, opt.gamma_ph);
  } catch (const std::exception& e) {
    p.status = "error";
    p.message = e.what();
    p.gamma_res = std::nan("");
  }
  p.b = b;
  return p;
}

std::vector<GslacPoint> gslac_nmr_spectrum(Species s, const std::vector<double>& b_grid,
                                           const GslacOptions& opt,
                                           const std::vector<std::optional<GslacPoint>>& done,
                                           const GslacCallback& on_point) {
  if (b_grid.empty()) throw std::invalid_argument("empty field grid");
  for (double b : b_grid)
    if (!(b > 0)) throw std::invalid_argument("fields must be > 0");
  validate(opt.geometry);
  std::vector<GslacPoint> out(b_grid.size());
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < b_grid.size(); ++i) {
    if (i < done.size() && done[i]) {
      out[i] = *done[i];
    } else {
      todo.push_back(i);
    }
  }
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  auto worker = [&] {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= todo.size()) return;
      const std::size_t i = todo[k];
      GslacPoint p = gslac_point(b_grid[i], s, opt);
      std::lock_guard<std::mutex> lock(mu);
      out[i] = p;
      if (on_point) on_point(i, p);
    }
  };
  const int jobs = std::max(1, std::min<int>(opt.jobs, int(todo.size())));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return out;
}

TwoSpinComparison lindblad_vs_closed_form(Kernel k, const Geometry& g, double gamma_t,
                                          double gamma2_p, double gamma2_t,
                                          const PhysicalConstants& c) {
  if (k == Kernel::Double) throw std::invalid_argument("two-spin check takes the +/- kernels");
  validate(g);
  const std::vector<int> dims{3, 2};
  const auto s = spin_operators(1.0);
  const auto t = spin_operators(0.5);
  const CMat dip = build_dipole_hamiltonian(g, c.gamma_nv, gamma_t, dims, 0, 1).matrix;
  auto ham = [&](double b) {
    HamiltonianMatrix h = zero_hamiltonian(dims);
    h.matrix = kron(c.d_nv * s.sz * s.sz - c.gamma_nv * b * s.sz, CMat::Identity(2, 2)) +
               kron(CMat::Identity(3, 3), -gamma_t * b * t.sz) + dip;
    return h;
  };
  // |0,+1/2> (2) with |-1,-1/2> (5) for +, |0,-1/2> (3) with |-1,+1/2> (4) for -
  const int ia = k == Kernel::Plus ? 2 : 3;
  const int ib = k == Kernel::Plus ? 5 : 4;
  const CMat h0 = ham(0).matrix, h1 = ham(1).matrix;
  const double d0 = std::real(h0(ia, ia) - h0(ib, ib));
  const double d1 = std::real(h1(ia, ia) - h1(ib, ib)) - d0;
  if (d1 == 0) throw std::domain_error("resonance not tunable by field");
  TwoSpinComparison out;
  out.b_res = -d0 / d1;
  if (!(out.b_res > 0)) throw std::domain_error("no positive resonance field");
  // keep the mS in {0, -1} block (indices 2..5) of the S=1 operators
  const HamiltonianMatrix full = ham(out.b_res);
  HamiltonianMatrix h;
  h.dims = full.dims;
  h.matrix = full.matrix.block(2, 2, 4, 4);
  h.basis.assign(full.basis.begin() + 2, full.basis.end());
  const int ra = ia - 2;

  ChannelParams p;
  p.channel = Channel::NmrDirect;
  p.kernel = k;
  p.gamma_t = gamma_t;
  p.gamma2_total = gamma2_p + gamma2_t;
  out.predicted = gamma_res(p, g, out.b_res, c);
  if (!(out.predicted > 0)) throw std::domain_error("kernel vanishes at this angle");

  std::vector<DiagonalDephasing> deph;
  RVec sz(4), tz(4);
  for (int i = 0; i < 4; ++i) {
    sz[i] = h.basis[i][0];
    tz[i] = h.basis[i][1];
  }
  if (gamma2_p > 0) deph.push_back({sz, gamma2_p});
  if (gamma2_t > 0) deph.push_back({tz, gamma2_t});

  // resonant product state; the population of the other pair never enters
  DensityMatrix rho0;
  rho0.rho = CMat::Zero(4, 4);
  rho0.rho(ra, ra) = 1;
  rho0.basis = h.basis;

  const auto grid = log_grid(1e-4 / out.predicted, 10 / out.predicted, 200);
  const auto tr = lindblad_evolve(h, deph, rho0, grid, EvolveOptions{});
  std::vector<double> tt, yy;
  for (std::size_t q = 0; q < tr.t.size(); ++q) {
    if (!tt.empty() && tr.t[q] == tt.back()) continue;
    tt.push_back(tr.t[q]);
    yy.push_back(std::real(tr.rho[q](ra, ra)));
  }

  // a + b e^{-G t}: scan G with (a, b) solved linearly, then refine all three
  const std::size_t n = tt.size();
  auto linear = [&](double gr, double& a, double& b) {
    double s1 = 0, sf = 0, sff = 0, sy = 0, sfy = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double f = std::exp(-gr * tt[i]);
      s1 += 1;
      sf += f;
      sff += f * f;
      sy += yy[i];
      sfy += f * yy[i];
    }
    const double det = s1 * sff - sf * sf;
    a = (sff * sy - sf * sfy) / det;
    b = (s1 * sfy - sf * sy) / det;
    double r = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = a + b * std::exp(-gr * tt[i]) - yy[i];
      r += d * d;
    }
    return r;
  };
  double best = HUGE_VAL, g0 = 0, a0 = 0, b0 = 0;
  for (double gr : log_grid(1e-2 * out.predicted, 1e2 * out.predicted, 801)) {
    double a, b;
    const double r = linear(gr, a, b);
    if (r < best) {
      best = r;
      g0 = gr;
      a0 = a;
      b0 = b;
    }
  }
  Eigen::VectorXd x0(3);
  x0 << a0, b0, g0;
  auto resid = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd r(n);
    for (std::size_t i = 0; i < n; ++i) r[i] = x[0] + x[1] * std::exp(-x[2] * tt[i]) - yy[i];
    return r;
  };
  LmOptions lo;
  lo.lower = {-HUGE_VAL, -HUGE_VAL, 0.0};
  const auto fit = levenberg_marquardt(resid, x0, lo);
  out.fitted = fit.x[2];
  out.rel_error = std::abs(out.fitted - out.predicted) / out.predicted;
  return out;
}

}  // namespace t1mr
