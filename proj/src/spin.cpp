#include "t1mr/spin.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <Eigen/Eigenvalues>

namespace t1mr {

SpinOperators spin_operators(double s) {
  if (s != 0.5 && s != 1.0)
    throw std::invalid_argument("spin_operators: unsupported spin " + std::to_string(s) +
                                " (only 1/2 and 1)");
  const int n = static_cast<int>(std::lround(2 * s + 1));
  SpinOperators op;
  op.s = s;
  op.m.resize(n);
  for (int i = 0; i < n; ++i) op.m[i] = s - i;
  CMat sp = CMat::Zero(n, n);
  for (int i = 1; i < n; ++i) {
    const double m = op.m[i];
    sp(i - 1, i) = std::sqrt(s * (s + 1) - m * (m + 1));
  }
  op.sz = CMat::Zero(n, n);
  for (int i = 0; i < n; ++i) op.sz(i, i) = op.m[i];
  op.sx = (sp + sp.adjoint()) / 2.0;
  op.sy = (sp - sp.adjoint()) / cd(0, 2);
  return op;
}

std::vector<std::vector<double>> product_basis(const std::vector<int>& dims) {
  std::vector<std::vector<double>> out{{}};
  for (int d : dims) {
    const double s = (d - 1) / 2.0;
    std::vector<std::vector<double>> next;
    for (const auto& prefix : out)
      for (int i = 0; i < d; ++i) {
        auto t = prefix;
        t.push_back(s - i);
        next.push_back(std::move(t));
      }
    out = std::move(next);
  }
  return out;
}

int HamiltonianMatrix::index_of(const std::vector<double>& ms) const {
  for (size_t i = 0; i < basis.size(); ++i)
    if (basis[i] == ms) return static_cast<int>(i);
  return -1;
}

HamiltonianMatrix embed(const CMat& op, const std::vector<int>& dims, int index) {
  if (index < 0 || index >= static_cast<int>(dims.size()))
    throw std::invalid_argument("embed: subsystem index out of range");
  if (op.rows() != dims[index] || op.cols() != dims[index])
    throw std::invalid_argument("embed: operator dimension does not match subsystem");
  CMat out = CMat::Identity(1, 1);
  for (size_t k = 0; k < dims.size(); ++k) {
    const CMat f = (static_cast<int>(k) == index) ? op : CMat::Identity(dims[k], dims[k]);
    CMat next(out.rows() * f.rows(), out.cols() * f.cols());
    for (Eigen::Index i = 0; i < out.rows(); ++i)
      for (Eigen::Index j = 0; j < out.cols(); ++j)
        next.block(i * f.rows(), j * f.cols(), f.rows(), f.cols()) = out(i, j) * f;
    out = std::move(next);
  }
  return {out, dims, product_basis(dims)};
}

HamiltonianMatrix zero_hamiltonian(const std::vector<int>& dims) {
  const int n = std::accumulate(dims.begin(), dims.end(), 1, std::multiplies<>());
  return {CMat::Zero(n, n), dims, product_basis(dims)};
}

void validate(const Geometry& g) {
  if (!(g.r_nm > 0)) throw std::invalid_argument("geometry: r must be > 0 nm");
  if (!(g.theta >= 0 && g.theta <= si::pi + 1e-12))
    throw std::invalid_argument("geometry: theta must lie in [0, pi]");
}

P1Params p1_params(const PhysicalConstants& c, Axis axis, OffAxisQuadrupole qmode) {
  if (axis == Axis::On) return {c.a_par_p1, c.a_perp_p1, c.q_p1};
  P1Params p;
  p.a_par = (c.a_par_p1 + 8 * c.a_perp_p1) / 9;
  p.a_perp = (4 * c.a_par_p1 + 5 * c.a_perp_p1) / 9;
  // cos(beta) = 1/3 between distinct <111> axes
  p.q = qmode == OffAxisQuadrupole::Printed ? c.q_p1 : c.q_p1 * (3.0 / 9.0 - 1.0) / 2.0;
  return p;
}

namespace {

struct Ops3 {
  CMat x, y, z;
};

Ops3 sub_ops(const std::vector<int>& dims, int k) {
  const auto s = spin_operators((dims[k] - 1) / 2.0);
  return {embed(s.sx, dims, k).matrix, embed(s.sy, dims, k).matrix,
          embed(s.sz, dims, k).matrix};
}

}  // namespace

HamiltonianMatrix build_nv_hamiltonian(double b, const PhysicalConstants& c,
                                       bool include_nuclear) {
  if (b < 0) throw std::invalid_argument("build_nv_hamiltonian: B must be >= 0");
  const std::vector<int> dims = include_nuclear ? std::vector<int>{3, 3} : std::vector<int>{3};
  auto h = zero_hamiltonian(dims);
  const auto s = sub_ops(dims, 0);
  h.matrix = c.d_nv * s.z * s.z - c.gamma_nv * b * s.z;
  if (include_nuclear) {
    const auto i = sub_ops(dims, 1);
    h.matrix += c.a_par_nv * s.z * i.z + c.a_perp_nv * (s.x * i.x + s.y * i.y) +
                c.q_nv * i.z * i.z - c.gamma_n14 * b * i.z;
  }
  return h;
}

HamiltonianMatrix build_p1_hamiltonian(double b, const PhysicalConstants& c,
                                       const P1Params& p) {
  if (b < 0) throw std::invalid_argument("build_p1_hamiltonian: B must be >= 0");
  const std::vector<int> dims{2, 3};
  auto h = zero_hamiltonian(dims);
  const auto s = sub_ops(dims, 0);
  const auto i = sub_ops(dims, 1);
  h.matrix = -c.gamma_e * b * s.z - c.gamma_n14 * b * i.z + p.a_par * s.z * i.z +
             p.a_perp * (s.x * i.x + s.y * i.y) + p.q * i.z * i.z;
  return h;
}

HamiltonianMatrix build_p1_hamiltonian(double b, const PhysicalConstants& c, Axis axis) {
  return build_p1_hamiltonian(b, c, p1_params(c, axis));
}

double dipolar_constant_mhz(double r_nm, double gamma_a, double gamma_b) {
  if (!(r_nm > 0)) throw std::invalid_argument("dipole: r must be > 0");
  const double r = r_nm * si::nm;
  return si::mu0_over_4pi * (gamma_a * si::mhz_per_gauss_to_hz_per_tesla) *
         (gamma_b * si::mhz_per_gauss_to_hz_per_tesla) * si::h / (r * r * r) / 1e6;
}

HamiltonianMatrix build_dipole_hamiltonian(const Geometry& g, double gamma_a, double gamma_b,
                                           const std::vector<int>& dims, int ia, int ib) {
  validate(g);
  if (ia == ib || ia < 0 || ib < 0 || ia >= static_cast<int>(dims.size()) ||
      ib >= static_cast<int>(dims.size()))
    throw std::invalid_argument("dipole: invalid subsystem indices");
  const double j = dipolar_constant_mhz(g.r_nm, gamma_a, gamma_b);
  const auto a = sub_ops(dims, ia);
  const auto b = sub_ops(dims, ib);
  const double nx = std::sin(g.theta), nz = std::cos(g.theta);
  const CMat an = nx * a.x + nz * a.z;
  const CMat bn = nx * b.x + nz * b.z;
  auto h = zero_hamiltonian(dims);
  h.matrix = -j * (3.0 * an * bn - (a.x * b.x + a.y * b.y + a.z * b.z));
  return h;
}

bool is_hermitian(const CMat& m, double tol) {
  if (m.rows() != m.cols()) return false;
  return (m - m.adjoint()).cwiseAbs().maxCoeff() <= tol;
}

Eigensystem eigensystem(const HamiltonianMatrix& h, double herm_tol) {
  if (!is_hermitian(h.matrix, herm_tol))
    throw std::invalid_argument("eigensystem: matrix is not Hermitian");
  Eigen::SelfAdjointEigenSolver<CMat> es(h.matrix);
  Eigensystem out;
  out.values = es.eigenvalues();
  out.vectors = es.eigenvectors();
  const int n = h.dim();
  out.label.assign(n, -1);
  // greedy maximum overlap, ties toward the lower basis index
  std::vector<std::tuple<double, int, int>> cand;
  cand.reserve(n * n);
  for (int col = 0; col < n; ++col)
    for (int row = 0; row < n; ++row) cand.emplace_back(std::norm(out.vectors(row, col)), row, col);
  std::stable_sort(cand.begin(), cand.end(), [](const auto& x, const auto& y) {
    if (std::get<0>(x) != std::get<0>(y)) return std::get<0>(x) > std::get<0>(y);
    return std::get<1>(x) < std::get<1>(y);
  });
  std::vector<bool> used(n, false);
  for (const auto& [w, row, col] : cand) {
    if (out.label[col] >= 0 || used[row]) continue;
    out.label[col] = row;
    used[row] = true;
  }
  return out;
}

void track_labels(const Eigensystem& prev, Eigensystem& next) {
  const int n = static_cast<int>(next.values.size());
  const CMat ov = prev.vectors.adjoint() * next.vectors;
  std::vector<std::tuple<double, int, int>> cand;
  for (int p = 0; p < n; ++p)
    for (int q = 0; q < n; ++q) cand.emplace_back(std::norm(ov(p, q)), p, q);
  std::stable_sort(cand.begin(), cand.end(), [](const auto& x, const auto& y) {
    if (std::get<0>(x) != std::get<0>(y)) return std::get<0>(x) > std::get<0>(y);
    return std::get<1>(x) < std::get<1>(y);
  });
  std::vector<int> label(n, -1);
  std::vector<bool> used(n, false);
  for (const auto& [w, p, q] : cand) {
    if (label[q] >= 0 || used[p]) continue;
    label[q] = prev.label[p];
    used[p] = true;
  }
  next.label = std::move(label);
}

P1Levels p1_levels_perturbative(double b, const PhysicalConstants& c, const P1Params& p) {
  if (!(b > 0)) throw std::invalid_argument("perturbative P1 levels need B > 0");
  const double we = -c.gamma_e * b;
  const double wn = -c.gamma_n14 * b;
  const double mix = p.a_perp * p.a_perp / (2 * we);
  P1Levels e{};
  e[0][0] = we / 2 + p.a_par / 2 + p.q + wn;
  e[0][1] = we / 2 + mix;
  e[0][2] = we / 2 - p.a_par / 2 + mix + p.q - wn;
  e[1][0] = -we / 2 - p.a_par / 2 - mix + p.q + wn;
  e[1][1] = -we / 2 - mix;
  e[1][2] = -we / 2 + p.a_par / 2 + p.q - wn;
  return e;
}

P1Levels p1_levels_exact(double b, const PhysicalConstants& c, const P1Params& p) {
  const auto h = build_p1_hamiltonian(b, c, p);
  const auto es = eigensystem(h);
  P1Levels e{};
  for (int k = 0; k < h.dim(); ++k) {
    const auto& m = h.basis[es.label[k]];
    e[ms_index(m[0])][mi_index(static_cast<int>(std::lround(m[1])))] = es.values[k];
  }
  return e;
}

}  // namespace t1mr
