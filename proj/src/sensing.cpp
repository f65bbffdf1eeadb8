#include "t1mr/sensing.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <thread>

#include "t1mr/kernels.hpp"

namespace t1mr {

void validate(const MeasurementBudget& b) {
  if (!(b.count_rate > 0) || !(b.t_ro > 0) || !(b.gamma_ph > 0) || !(b.t_total > 0))
    throw std::invalid_argument("budget values must be > 0");
  if (!(b.contrast > 0 && b.contrast < 1)) throw std::invalid_argument("contrast must be in (0,1)");
}

double snr(double tau, double gamma_res, const MeasurementBudget& b) {
  if (!(tau > 0)) throw std::invalid_argument("tau must be > 0");
  if (!(gamma_res >= 0)) throw std::invalid_argument("gamma_res must be >= 0");
  return std::sqrt(b.count_rate * b.t_ro * b.t_total / tau) * 0.75 * b.contrast *
         std::exp(-b.gamma_ph * tau) * (1 - std::exp(-gamma_res * tau));
}

double optimal_tau(double gamma_res, const MeasurementBudget& b) {
  validate(b);
  if (!(gamma_res > 0)) throw std::invalid_argument("gamma_res must be > 0");
  const double lo = 1e-6, hi = 10 / b.gamma_ph;
  const int n = 400;
  auto tau_at = [&](int k) { return lo * std::pow(hi / lo, double(k) / (n - 1)); };
  int best = 0;
  double bv = -1;
  for (int k = 0; k < n; ++k) {
    const double v = snr(tau_at(k), gamma_res, b);
    if (v > bv) {
      bv = v;
      best = k;
    }
  }
  double a = std::log(tau_at(std::max(best - 1, 0)));
  double c = std::log(tau_at(std::min(best + 1, n - 1)));
  const double g = 0.5 * (std::sqrt(5.0) - 1);
  auto f = [&](double lt) { return -snr(std::exp(lt), gamma_res, b); };
  double x1 = c - g * (c - a), x2 = a + g * (c - a);
  double f1 = f(x1), f2 = f(x2);
  while (c - a > 1e-12) {
    if (f1 < f2) {
      c = x2;
      x2 = x1;
      f2 = f1;
      x1 = c - g * (c - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + g * (c - a);
      f2 = f(x2);
    }
  }
  return std::exp(0.5 * (a + c));
}

double min_acquisition_time(double gamma_res, const MeasurementBudget& b) {
  MeasurementBudget unit = b;
  unit.t_total = 1;
  const double s = snr(optimal_tau(gamma_res, unit), gamma_res, unit);
  return 1 / (s * s);
}

namespace {

struct Pt {
  double x, y;
};

}  // namespace

std::vector<ContourLine> contour_lines(const std::vector<double>& x, const std::vector<double>& y,
                                       const std::vector<std::vector<double>>& field,
                                       double level) {
  const std::size_t nx = x.size(), ny = y.size();
  if (field.size() != nx) throw std::invalid_argument("field rows must match x");
  for (const auto& row : field)
    if (row.size() != ny) throw std::invalid_argument("field columns must match y");
  if (!(level > 0)) throw std::invalid_argument("contour level must be > 0");
  const double lv = std::log(level);
  auto val = [&](std::size_t i, std::size_t j) {
    const double f = field[i][j];
    return f > 0 ? std::log(f) - lv : -1e300;
  };

  // Edge keys: horizontal edge (i,j)-(i+1,j) -> 2*(i*ny+j), vertical (i,j)-(i,j+1) -> 2*(i*ny+j)+1
  std::map<long long, Pt> where;
  std::map<long long, std::vector<long long>> adj;
  auto cross = [&](std::size_t i0, std::size_t j0, std::size_t i1, std::size_t j1, long long key) {
    if (!where.count(key)) {
      const double a = val(i0, j0), b = val(i1, j1);
      double t = a == b ? 0.5 : a / (a - b);
      if (a < -1e299 || b < -1e299) t = a < -1e299 ? 0.0 : 1.0;
      where[key] = {x[i0] + t * (x[i1] - x[i0]), y[j0] + t * (y[j1] - y[j0])};
    }
  };
  auto link = [&](long long a, long long b) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  };
  for (std::size_t i = 0; i + 1 < nx; ++i) {
    for (std::size_t j = 0; j + 1 < ny; ++j) {
      const double v00 = val(i, j), v10 = val(i + 1, j), v11 = val(i + 1, j + 1),
                   v01 = val(i, j + 1);
      const int code = (v00 > 0) | ((v10 > 0) << 1) | ((v11 > 0) << 2) | ((v01 > 0) << 3);
      if (code == 0 || code == 15) continue;
      const long long bottom = 2LL * (i * ny + j);          // (i,j)-(i+1,j)
      const long long top = 2LL * (i * ny + j + 1);         // (i,j+1)-(i+1,j+1)
      const long long left = 2LL * (i * ny + j) + 1;        // (i,j)-(i,j+1)
      const long long right = 2LL * ((i + 1) * ny + j) + 1; // (i+1,j)-(i+1,j+1)
      auto e = [&](long long k) {
        if (k == bottom) cross(i, j, i + 1, j, k);
        else if (k == top) cross(i, j + 1, i + 1, j + 1, k);
        else if (k == left) cross(i, j, i, j + 1, k);
        else cross(i + 1, j, i + 1, j + 1, k);
        return k;
      };
      const double centre = 0.25 * (v00 + v10 + v11 + v01);
      switch (code) {
        case 1: case 14: link(e(left), e(bottom)); break;
        case 2: case 13: link(e(bottom), e(right)); break;
        case 3: case 12: link(e(left), e(right)); break;
        case 4: case 11: link(e(right), e(top)); break;
        case 6: case 9: link(e(bottom), e(top)); break;
        case 7: case 8: link(e(left), e(top)); break;
        case 5:
          if (centre > 0) { link(e(left), e(top)); link(e(bottom), e(right)); }
          else { link(e(left), e(bottom)); link(e(right), e(top)); }
          break;
        case 10:
          if (centre > 0) { link(e(left), e(bottom)); link(e(right), e(top)); }
          else { link(e(left), e(top)); link(e(bottom), e(right)); }
          break;
        default: break;
      }
    }
  }

  std::vector<ContourLine> out;
  std::map<long long, bool> used;
  auto walk = [&](long long start) {
    ContourLine c;
    c.level = level;
    long long prev = -1, cur = start;
    while (true) {
      used[cur] = true;
      c.points.emplace_back(where[cur].x, where[cur].y);
      long long nxt = -1;
      for (long long nb : adj[cur])
        if (nb != prev && !used[nb]) {
          nxt = nb;
          break;
        }
      if (nxt < 0) {
        // close loops back to the start
        for (long long nb : adj[cur])
          if (nb == start && nb != prev && c.points.size() > 2) c.points.emplace_back(where[start].x, where[start].y);
        break;
      }
      prev = cur;
      cur = nxt;
    }
    out.push_back(std::move(c));
  };
  for (const auto& [k, nb] : adj)
    if (nb.size() == 1 && !used[k]) walk(k);
  for (const auto& [k, nb] : adj)
    if (!used[k]) walk(k);
  return out;
}

DetectabilityMap detectability_map(Species s, const std::vector<double>& r_nm,
                                   const std::vector<double>& theta, const MeasurementBudget& b,
                                   const PhysicalConstants& c, const MapOptions& opt) {
  validate(b);
  if (r_nm.size() < 2 || theta.size() < 2) throw std::invalid_argument("map grids need >= 2 points");
  for (double r : r_nm)
    if (!(r > 0 && r <= 10)) throw std::invalid_argument("r grid must lie in (0, 10] nm");
  ChannelParams p;
  p.channel = Channel::NmrDirect;
  p.kernel = opt.kernel;
  p.gamma_t = species_gamma(s, c);
  p.gamma2_total = opt.gamma2;
  validate(p);

  DetectabilityMap m;
  m.r_nm = r_nm;
  m.theta = theta;
  m.ratio.assign(r_nm.size(), std::vector<double>(theta.size()));
  // Rates scale as r^-6, so each theta column is one scaled kernel pass.
  auto columns = [&](std::size_t from, std::size_t step) {
    std::vector<double> col(r_nm.size());
    for (std::size_t j = from; j < theta.size(); j += step) {
      const double at_1nm = gamma_res(p, Geometry{1.0, theta[j]}, 1.0, c) / b.gamma_ph;
      kernels::inverse_sixth(r_nm.data(), r_nm.size(), at_1nm, col.data());
      for (std::size_t i = 0; i < r_nm.size(); ++i) m.ratio[i][j] = col[i];
    }
  };
  const std::size_t jobs = std::max(1, opt.jobs);
  if (jobs == 1) {
    columns(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < jobs; ++k) pool.emplace_back(columns, k, jobs);
    for (auto& t : pool) t.join();
  }
  for (double lv : opt.levels) {
    auto lines = contour_lines(r_nm, theta, m.ratio, lv);
    m.contours.insert(m.contours.end(), lines.begin(), lines.end());
  }
  return m;
}

double contour_reach(const DetectabilityMap& m, double level) {
  double r = 0;
  for (const auto& c : m.contours)
    if (c.level == level)
      for (const auto& p : c.points) r = std::max(r, p.first);
  return r;
}

}  // namespace t1mr
