#include "t1mr/transitions.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

namespace t1mr {

std::string to_string(System s) {
  switch (s) {
    case System::Probe: return "probe";
    case System::P1: return "p1";
    case System::BareNucleus: return "bare-nucleus";
  }
  return "?";
}

std::string to_string(Kind k) {
  switch (k) {
    case Kind::EprSingle: return "epr-single";
    case Kind::EprDouble: return "epr-double";
    case Kind::Nmr: return "nmr";
    case Kind::Probe0m1: return "probe-0-1";
    case Kind::Probe0p1: return "probe-0+1";
  }
  return "?";
}

std::string to_string(Axis a) { return a == Axis::On ? "on" : "off"; }
std::string to_string(Branch b) { return b == Branch::Before ? "before" : "after"; }

Kind kind_from_string(const std::string& s) {
  for (Kind k : {Kind::EprSingle, Kind::EprDouble, Kind::Nmr, Kind::Probe0m1, Kind::Probe0p1})
    if (to_string(k) == s) return k;
  throw std::invalid_argument("unknown transition kind '" + s + "'");
}

Axis axis_from_string(const std::string& s) {
  if (s == "on") return Axis::On;
  if (s == "off") return Axis::Off;
  throw std::invalid_argument("unknown axis '" + s + "' (expected on|off)");
}

namespace {

std::string half(double m) { return m > 0 ? "+1/2" : "-1/2"; }
std::string signed_int(int m) { return m > 0 ? "+" + std::to_string(m) : std::to_string(m); }

}  // namespace

std::string TransitionSpec::id() const {
  std::ostringstream os;
  os << to_string(kind) << ':' << to_string(axis) << ':';
  if (kind == Kind::Nmr)
    os << half(ms_i) << ':' << signed_int(mi_i) << ">" << signed_int(mi_f) << ':'
       << to_string(branch);
  else
    os << signed_int(mi_i) << ">" << signed_int(mi_f);
  return os.str();
}

double nv_transition_frequency(double b, int m_i, const PhysicalConstants& c, NvModel model,
                               ProbeBranch pb) {
  if (b < 0) throw std::invalid_argument("nv_transition_frequency: B must be >= 0");
  if (m_i < -1 || m_i > 1) throw std::invalid_argument("nv_transition_frequency: m_i must be -1, 0 or +1");
  const double sgn = pb == ProbeBranch::ZeroToMinus ? 1.0 : -1.0;
  const double zeeman = c.d_nv + sgn * c.gamma_nv * b;
  switch (model) {
    case NvModel::Conversion: return zeeman - sgn * c.a_par_nv_odmr * m_i;
    case NvModel::FirstOrder:
      return zeeman - sgn * c.a_par_nv * m_i +
             (2 - m_i * m_i) * c.a_perp_nv * c.a_perp_nv / zeeman;
    case NvModel::Exact: {
      const auto h = build_nv_hamiltonian(b, c, true);
      const auto es = eigensystem(h);
      const double ms_target = pb == ProbeBranch::ZeroToMinus ? -1.0 : 1.0;
      const int i0 = h.index_of({0.0, double(m_i)});
      const int i1 = h.index_of({ms_target, double(m_i)});
      double e0 = 0, e1 = 0;
      for (int k = 0; k < h.dim(); ++k) {
        if (es.label[k] == i0) e0 = es.values[k];
        if (es.label[k] == i1) e1 = es.values[k];
      }
      return e1 - e0;
    }
  }
  return 0;
}

double field_from_omega(double omega, const PhysicalConstants& c) {
  const double b = (omega - c.d_nv + c.a_par_nv_odmr) / c.gamma_nv;
  if (b < 0) throw std::invalid_argument("field_from_omega: frequency maps to a negative field");
  return b;
}

double gslac_field(const PhysicalConstants& c) {
  return (c.d_nv - c.a_par_nv_odmr) / std::abs(c.gamma_nv);
}

std::vector<TransitionSpec> p1_line_specs(Kind kind, Axis axis, Branch branch) {
  std::vector<TransitionSpec> out;
  auto mk = [&](double ms_i, double ms_f, int mi_i, int mi_f) {
    TransitionSpec s;
    s.system = System::P1;
    s.kind = kind;
    s.axis = axis;
    s.ms_i = ms_i;
    s.ms_f = ms_f;
    s.mi_i = mi_i;
    s.mi_f = mi_f;
    s.branch = kind == Kind::Nmr ? branch : Branch::Before;
    out.push_back(s);
  };
  switch (kind) {
    case Kind::EprSingle:
      for (int m : {+1, 0, -1}) mk(0.5, -0.5, m, m);
      break;
    case Kind::EprDouble:
      mk(0.5, -0.5, 0, +1);
      mk(0.5, -0.5, -1, 0);
      break;
    case Kind::Nmr:
      if (branch == Branch::Before) {
        mk(0.5, 0.5, +1, 0);
        mk(0.5, 0.5, 0, -1);
        mk(-0.5, -0.5, 0, +1);
        mk(-0.5, -0.5, -1, 0);
      } else {
        mk(0.5, 0.5, 0, +1);
        mk(0.5, 0.5, -1, 0);
        mk(-0.5, -0.5, +1, 0);
        mk(-0.5, -0.5, 0, -1);
      }
      break;
    default:
      throw std::invalid_argument("p1_line_specs: not a P1 transition kind");
  }
  return out;
}

double p1_transition_frequency(double b, const TransitionSpec& s, const PhysicalConstants& c,
                               TargetModel model, OffAxisQuadrupole qmode) {
  if (s.system != System::P1) throw std::invalid_argument("p1_transition_frequency: not a P1 spec");
  if (model == TargetModel::Perturbative && !(b > 0))
    throw std::invalid_argument("p1_transition_frequency: perturbative levels need B > 0");
  const auto p = p1_params(c, s.axis, qmode);
  const auto e = model == TargetModel::Perturbative ? p1_levels_perturbative(b, c, p)
                                                    : p1_levels_exact(b, c, p);
  const double ei = e[ms_index(s.ms_i)][mi_index(s.mi_i)];
  const double ef = e[ms_index(s.ms_f)][mi_index(s.mi_f)];
  return std::abs(ei - ef);
}

std::vector<P1Line> p1_transition_frequencies(double b, Kind kind, Axis axis,
                                              const PhysicalConstants& c, TargetModel model,
                                              OffAxisQuadrupole qmode) {
  std::vector<P1Line> out;
  for (const auto& s : p1_line_specs(kind, axis))
    out.push_back({s, p1_transition_frequency(b, s, c, model, qmode)});
  return out;
}

namespace {

double refine_root(const std::function<double(double)>& f, double a, double b, double fa,
                   double fb, double tol) {
  // bisection to a narrow bracket, then safeguarded secant
  for (int it = 0; it < 200 && b - a > 1e-4; ++it) {
    const double m = 0.5 * (a + b);
    const double fm = f(m);
    if (fm == 0) return m;
    if ((fm < 0) == (fa < 0)) {
      a = m;
      fa = fm;
    } else {
      b = m;
      fb = fm;
    }
  }
  double x0 = a, x1 = b, f0 = fa, f1 = fb;
  for (int it = 0; it < 100; ++it) {
    if (f1 == f0) break;
    double x2 = x1 - f1 * (x1 - x0) / (f1 - f0);
    if (x2 < a || x2 > b) x2 = 0.5 * (a + b);
    const double f2 = f(x2);
    if ((f2 < 0) == (fa < 0)) {
      a = x2;
      fa = f2;
    } else {
      b = x2;
      fb = f2;
    }
    x0 = x1;
    f0 = f1;
    x1 = x2;
    f1 = f2;
    if (std::abs(f2) < tol) return x2;
  }
  return std::abs(fa) < std::abs(fb) ? a : b;
}

}  // namespace

std::vector<ResonanceResult> solve_resonances(const TransitionSpec& spec, const PhysicalConstants& c,
                                              const ResonanceOptions& opt) {
  if (spec.system != System::P1) throw std::invalid_argument("solve_resonance: P1 transitions only");
  const bool nmr = spec.kind == Kind::Nmr;
  const double lo = nmr ? opt.nmr_lo : opt.epr_lo;
  const double hi = nmr ? opt.nmr_hi : opt.epr_hi;
  if (!(hi > lo) || !(opt.grid_step > 0)) throw std::invalid_argument("solve_resonance: bad window");
  auto w_nv = [&](double b) { return nv_transition_frequency(b, +1, c, opt.nv_model); };
  auto w_t = [&](double b) { return p1_transition_frequency(b, spec, c, opt.target_model, opt.qmode); };
  auto f = [&](double b) { return std::abs(w_nv(b)) - std::abs(w_t(b)); };

  std::vector<ResonanceResult> out;
  const int n = static_cast<int>(std::ceil((hi - lo) / opt.grid_step));
  double b0 = lo, f0 = f(b0);
  for (int i = 1; i <= n; ++i) {
    const double b1 = std::min(hi, lo + i * opt.grid_step);
    const double f1 = f(b1);
    double root = std::nan("");
    if (f0 == 0)
      root = b0;
    else if ((f0 < 0) != (f1 < 0) && f1 != 0)
      root = refine_root(f, b0, b1, f0, f1, opt.tol_mhz);
    if (!std::isnan(root)) {
      ResonanceResult r;
      r.spec = spec;
      r.b_res = root;
      r.omega_nv = w_nv(root);
      r.omega_target = w_t(root);
      r.residual = std::abs(r.omega_nv) - std::abs(r.omega_target);
      r.spec.branch = r.omega_nv > 0 ? Branch::Before : Branch::After;
      out.push_back(r);
    }
    b0 = b1;
    f0 = f1;
  }
  return out;
}

ResonanceResult solve_resonance(const TransitionSpec& spec, const PhysicalConstants& c,
                                const ResonanceOptions& opt) {
  const auto roots = solve_resonances(spec, c, opt);
  for (const auto& r : roots)
    if (spec.kind != Kind::Nmr || r.spec.branch == spec.branch) {
      auto out = r;
      out.spec = spec;
      return out;
    }
  throw NoResonance("no resonance for " + spec.id() + " in the scanned window");
}

double epr_closed_form(const TransitionSpec& s, const PhysicalConstants& c, OffAxisQuadrupole qmode) {
  if (s.kind != Kind::EprSingle && s.kind != Kind::EprDouble)
    throw std::invalid_argument("epr_closed_form: EPR transitions only");
  const double d = c.d_nv - c.a_par_nv_odmr;
  const double b0 = d / (2 * std::abs(c.gamma_e));
  const double shift = p1_transition_frequency(b0, s, c, TargetModel::Perturbative, qmode) +
                       c.gamma_e * b0;
  return 0.5 * (d + shift);
}

std::vector<ResonanceResult> resonance_table(const PhysicalConstants& c, const TableOptions& opt) {
  std::vector<TransitionSpec> specs;
  std::vector<Axis> axes;
  if (opt.axis) axes = {*opt.axis};
  else axes = {Axis::On, Axis::Off};
  for (Axis a : axes) {
    if (opt.epr_single)
      for (auto& s : p1_line_specs(Kind::EprSingle, a)) specs.push_back(s);
    if (opt.epr_double)
      for (auto& s : p1_line_specs(Kind::EprDouble, a)) specs.push_back(s);
  }
  if (opt.nmr)
    for (Branch br : {Branch::Before, Branch::After})
      for (Axis a : axes)
        for (auto& s : p1_line_specs(Kind::Nmr, a, br)) specs.push_back(s);
  std::vector<ResonanceResult> out;
  out.reserve(specs.size());
  for (const auto& s : specs) out.push_back(solve_resonance(s, c, opt.res));
  return out;
}

int nmr_pair_index(const TransitionSpec& s) {
  if (s.kind != Kind::Nmr) throw std::invalid_argument("nmr_pair_index: not an NMR spec");
  const bool plus = s.mi_i == 1 || s.mi_f == 1;
  if (s.ms_i > 0) return plus ? 1 : 2;
  return plus ? 3 : 4;
}

double nmr_line_field(double omega_abs, Branch branch, const PhysicalConstants& c) {
  return field_from_omega(branch == Branch::Before ? omega_abs : -omega_abs, c);
}

NmrInversion invert_nmr_lines(const std::vector<NmrLine>& lines, const PhysicalConstants& c) {
  const int n = static_cast<int>(lines.size());
  if (n < 4) throw std::invalid_argument("invert_nmr_lines: need at least 4 lines");
  // unknowns: A_par, Q, gamma_N, A_perp^2
  Eigen::MatrixXd a(n, 4);
  Eigen::VectorXd y(n), w(n);
  for (int i = 0; i < n; ++i) {
    const auto& l = lines[i];
    if (!(l.b_res > 0) || !(l.sigma > 0))
      throw std::invalid_argument("invert_nmr_lines: each line needs B > 0 and sigma > 0");
    const double we = -c.gamma_e * l.b_res;
    const double bb = l.b_res;
    switch (l.pair) {
      case 1: a.row(i) << 0.5, 1, -bb, -1 / (2 * we); break;
      case 2: a.row(i) << 0.5, -1, -bb, 0; break;
      case 3: a.row(i) << 0.5, -1, bb, 0; break;
      case 4: a.row(i) << 0.5, 1, bb, 1 / (2 * we); break;
      default: throw std::invalid_argument("invert_nmr_lines: pair must be 1..4");
    }
    y(i) = l.omega;
    w(i) = 1 / l.sigma;
  }
  const Eigen::MatrixXd aw = w.asDiagonal() * a;
  const Eigen::VectorXd yw = w.asDiagonal() * y;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(aw, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto sv = svd.singularValues();
  if (sv(sv.size() - 1) <= 1e-12 * sv(0))
    throw std::invalid_argument("invert_nmr_lines: rank-deficient line set");
  const Eigen::VectorXd x = svd.solve(yw);
  const Eigen::MatrixXd cov = (aw.transpose() * aw).inverse();
  NmrInversion r;
  r.a_par = x(0);
  r.q = x(1);
  r.gamma_n = x(2);
  if (x(3) < 0) throw std::invalid_argument("invert_nmr_lines: negative A_perp^2 solution");
  r.a_perp = std::sqrt(x(3));
  r.sa_par = std::sqrt(cov(0, 0));
  r.sq = std::sqrt(cov(1, 1));
  r.sgamma_n = std::sqrt(cov(2, 2));
  r.sa_perp = r.a_perp > 0 ? std::sqrt(cov(3, 3)) / (2 * r.a_perp) : 0;
  r.rms_residual = std::sqrt((a * x - y).squaredNorm() / n);
  return r;
}

}  // namespace t1mr
