#include "t1mr/lindblad.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "t1mr/constants.hpp"
#include "t1mr/expm.hpp"

namespace t1mr {

namespace {

std::string sci(double x) {
  std::ostringstream o;
  o.precision(3);
  o << std::scientific << x;
  return o.str();
}

double herm_error(const CMat& r) { return (r - r.adjoint()).cwiseAbs().maxCoeff(); }

double min_eig(const CMat& r) {
  const CMat hs = 0.5 * (r + r.adjoint());
  Eigen::SelfAdjointEigenSolver<CMat> es(hs, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

// Defect of the trace row: |t U - t|_inf with t the vec of the identity.
double trace_defect(const CMat& u, Eigen::Index n) {
  Eigen::RowVectorXcd r = Eigen::RowVectorXcd::Zero(u.cols());
  for (Eigen::Index i = 0; i < n; ++i) r += u.row(i + i * n);
  for (Eigen::Index i = 0; i < n; ++i) r[i + i * n] -= 1.0;
  return r.cwiseAbs().maxCoeff();
}

// Project a propagator onto Hermiticity-preserving (U = P conj(U) P, P the
// transpose permutation) and trace-preserving (t U = t) maps.
void enforce_structure(CMat& u, Eigen::Index n) {
  const Eigen::Index m = n * n;
  auto swap = [n](Eigen::Index a) { return (a / n) + (a % n) * n; };
  CMat s(m, m);
  for (Eigen::Index b = 0; b < m; ++b)
    for (Eigen::Index a = 0; a < m; ++a) s(a, b) = 0.5 * (u(a, b) + std::conj(u(swap(a), swap(b))));
  // Spread each column's trace defect over its populations in proportion to
  // their size, so entries that are exactly zero stay zero.
  for (Eigen::Index b = 0; b < m; ++b) {
    cd r = b % (n + 1) == 0 ? cd(-1, 0) : cd(0, 0);
    double w = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      r += s(i + i * n, b);
      w += std::abs(s(i + i * n, b));
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      const double f = w > 0 ? std::abs(s(i + i * n, b)) / w : 1.0 / double(n);
      s(i + i * n, b) -= r * f;
    }
  }
  u = std::move(s);
}

}  // namespace

void validate(const DensityMatrix& d, double tol) {
  const auto& r = d.rho;
  if (r.rows() != r.cols() || r.rows() == 0) throw std::invalid_argument("rho must be square");
  if (!d.basis.empty() && Eigen::Index(d.basis.size()) != r.rows())
    throw std::invalid_argument("basis size does not match rho");
  if (herm_error(r) > 1e-12) throw std::invalid_argument("rho is not Hermitian");
  if (std::abs(r.trace() - cd(1, 0)) > tol) throw std::invalid_argument("rho trace != 1");
  if (min_eig(r) < -tol) throw std::invalid_argument("rho is not positive semidefinite");
}

CMat liouvillian(const CMat& h_mhz, const std::vector<DiagonalDephasing>& deph) {
  const Eigen::Index n = h_mhz.rows();
  if (h_mhz.cols() != n) throw std::invalid_argument("liouvillian: H must be square");
  // a multiple of the identity drops out of the commutator; removing it keeps
  // the diagonal differences free of cancellation
  CMat h = h_mhz;
  h.diagonal().array() -= h_mhz.trace() / double(n);
  h *= si::two_pi_mhz;
  CMat l = CMat::Zero(n * n, n * n);
  const cd mi(0, -1);
  // vec(H rho) = (I (x) H) vec rho; vec(rho H) = (H^T (x) I) vec rho
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index k = 0; k < n; ++k) {
        // row index of rho_ij is i + j n
        l(i + j * n, k + j * n) += mi * h(i, k);
        l(i + j * n, i + k * n) -= mi * h(k, j);
      }
  for (const auto& d : deph) {
    if (d.op.size() != n) throw std::invalid_argument("dephasing operator dimension mismatch");
    if (d.rate < 0) throw std::invalid_argument("dephasing rate must be >= 0");
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index i = 0; i < n; ++i) {
        const double dd = d.op[i] - d.op[j];
        l(i + j * n, i + j * n) -= d.rate * dd * dd;
      }
  }
  return l;
}

double lindblad_step(const HamiltonianMatrix& h, const EvolveOptions& opt) {
  if (opt.dt < 0) throw std::invalid_argument("dt must be >= 0");
  if (opt.dt > 0) return opt.dt;
  double dt = HUGE_VAL;
  if (opt.background) dt = opt.background->t1 / 100;
  const Eigensystem es = eigensystem(h);
  std::set<int> keep(opt.gap_states.begin(), opt.gap_states.end());
  double lo = HUGE_VAL, hi = -HUGE_VAL;
  for (Eigen::Index k = 0; k < es.values.size(); ++k) {
    if (!keep.empty() && !keep.count(es.label[k])) continue;
    lo = std::min(lo, es.values[k]);
    hi = std::max(hi, es.values[k]);
  }
  const double gap_hz = (hi - lo) * 1e6;
  if (gap_hz > 0) dt = std::min(dt, 1.0 / (20 * gap_hz));
  return dt;
}

Trajectory lindblad_evolve(const HamiltonianMatrix& h, const std::vector<DiagonalDephasing>& deph,
                           const DensityMatrix& rho0, const std::vector<double>& t_grid,
                           const EvolveOptions& opt) {
  const Eigen::Index n = h.matrix.rows();
  if (rho0.rho.rows() != n) throw std::invalid_argument("rho0 dimension does not match H");
  validate(rho0, opt.trace_tol);
  if (opt.background) {
    if (!(opt.background->t1 > 0)) throw std::invalid_argument("background T1 must be > 0");
    for (const auto& g : opt.background->groups)
      for (int i : g)
        if (i < 0 || i >= n) throw std::invalid_argument("background group index out of range");
  }
  for (std::size_t k = 0; k < t_grid.size(); ++k) {
    if (!(t_grid[k] >= 0)) throw std::invalid_argument("times must be >= 0");
    if (k > 0 && t_grid[k] < t_grid[k - 1]) throw std::invalid_argument("times must be sorted");
  }

  Trajectory tr;
  double dt = lindblad_step(h, opt);
  if (!std::isfinite(dt)) {
    // no scale in H: step to the largest requested time in one go
    dt = t_grid.empty() || t_grid.back() == 0 ? 1.0 : t_grid.back();
  }
  if (!(dt > 0)) throw std::invalid_argument("non-positive timestep");
  tr.dt = dt;

  std::vector<long long> target(t_grid.size());
  for (std::size_t k = 0; k < t_grid.size(); ++k) target[k] = std::llround(t_grid[k] / dt);
  const long long n_max = target.empty() ? 0 : target.back();

  // Squaring error grows with the block length and stepping error with the
  // block count; blocks near sqrt(n_max) keep both small.
  long long block_cap = std::max<long long>(1, (long long)std::ceil(std::sqrt(double(n_max))));
  if (opt.background)
    block_cap = std::min(block_cap, std::max<long long>(
                                        1, (long long)std::floor(opt.background->t1 / 100 / dt + 1e-9)));
  int kmax = 0;
  while ((2LL << kmax) <= block_cap) ++kmax;

  const CMat l = liouvillian(h.matrix, deph);
  std::vector<CMat> u{expm(l * dt)};
  if (const double d = trace_defect(u[0], n); d > opt.trace_tol)
    throw LindbladError("generator is not trace preserving, defect " + sci(d));
  enforce_structure(u[0], n);
  for (int k = 1; k <= kmax; ++k) {
    u.push_back(u.back() * u.back());
    enforce_structure(u.back(), n);
  }

  CVec v = Eigen::Map<const CVec>(rho0.rho.data(), n * n);
  auto as_matrix = [n](const CVec& x) { return CMat(Eigen::Map<const CMat>(x.data(), n, n)); };

  auto background = [&](CVec& x, double step) {
    const double f = std::exp(-step / opt.background->t1);
    for (const auto& g : opt.background->groups) {
      cd avg = 0;
      for (int i : g) avg += x[i + i * n];
      avg /= double(g.size());
      for (int i : g) x[i + i * n] = avg + (x[i + i * n] - avg) * f;
    }
  };

  long long cur = 0;
  for (std::size_t k = 0; k < target.size(); ++k) {
    long long m = target[k] - cur;
    while (m > 0) {
      int p = 0;
      while (p < kmax && (2LL << p) <= m) ++p;
      v = u[p] * v;
      if (opt.background) background(v, dt * double(1LL << p));
      m -= 1LL << p;
      ++tr.steps;
      const CMat r = as_matrix(v);
      const double te = std::abs(r.trace() - cd(1, 0));
      const double he = herm_error(r);
      tr.max_trace_error = std::max(tr.max_trace_error, te);
      tr.max_herm_error = std::max(tr.max_herm_error, he);
      if (te > opt.trace_tol)
        throw LindbladError("trace drifted by " + sci(te));
      if (he > opt.herm_tol)
        throw LindbladError("Hermiticity lost: " + sci(he));
    }
    cur = target[k];
    const CMat r = as_matrix(v);
    const double me = min_eig(r);
    tr.min_eigenvalue = std::min(tr.min_eigenvalue, me);
    if (me < -opt.pos_tol)
      throw LindbladError("positivity violated: eigenvalue " + sci(me));
    tr.t.push_back(double(cur) * dt);
    tr.rho.push_back(r);
  }
  return tr;
}

}  // namespace t1mr
