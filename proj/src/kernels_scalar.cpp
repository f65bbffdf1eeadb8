#include <cmath>
#include <cstdlib>

#include "t1mr/kernels.hpp"

namespace t1mr::kernels {

namespace scalar {

void lorentzian_accumulate(const double* det, const double* amp, std::size_t n, double hw,
                           double* out) {
  const double h2 = hw * hw;
  for (std::size_t i = 0; i < n; ++i) out[i] += amp[i] * h2 / (h2 + det[i] * det[i]);
}

void lorentzian_sum(const double* x, std::size_t n, const double* c, const double* hw,
                    const double* amp, std::size_t m, double baseline, double* out) {
  for (std::size_t i = 0; i < n; ++i) {
    double s = baseline;
    for (std::size_t k = 0; k < m; ++k) {
      const double d = x[i] - c[k];
      const double h2 = hw[k] * hw[k];
      s += amp[k] * h2 / (h2 + d * d);
    }
    out[i] = s;
  }
}

void inverse_sixth(const double* r, std::size_t n, double scale, double* out) {
  for (std::size_t i = 0; i < n; ++i) {
    const double r2 = r[i] * r[i];
    out[i] = scale / (r2 * r2 * r2);
  }
}

void biexp_curve(const double* t, std::size_t n, double i_inf, double contrast, double g_ph,
                 double g_res, double* out) {
  for (std::size_t i = 0; i < n; ++i)
    out[i] = i_inf * (1 + 0.25 * contrast *
                              (std::exp(-g_ph * t[i]) + 3 * std::exp(-(g_ph + g_res) * t[i])));
}

void exp_vec(const double* x, std::size_t n, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(x[i]);
}

}  // namespace scalar

namespace {

struct Table {
  decltype(&scalar::lorentzian_accumulate) lacc;
  decltype(&scalar::lorentzian_sum) lsum;
  decltype(&scalar::inverse_sixth) inv6;
  decltype(&scalar::biexp_curve) biexp;
  decltype(&scalar::exp_vec) expv;
};

constexpr Table scalar_table{scalar::lorentzian_accumulate, scalar::lorentzian_sum,
                             scalar::inverse_sixth, scalar::biexp_curve, scalar::exp_vec};
constexpr Table avx2_table{avx2::lorentzian_accumulate, avx2::lorentzian_sum,
                           avx2::inverse_sixth, avx2::biexp_curve, avx2::exp_vec};

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa detect() {
  const char* force = std::getenv("T1MR_FORCE_SCALAR");
  if (force && *force && *force != '0') return Isa::Scalar;
  return isa_available(Isa::Avx2) ? Isa::Avx2 : Isa::Scalar;
}

Isa& current() {
  static Isa isa = detect();
  return isa;
}

const Table& table() { return current() == Isa::Avx2 ? avx2_table : scalar_table; }

}  // namespace

bool isa_available(Isa isa) {
  if (isa == Isa::Scalar) return true;
  static const bool ok = avx2::compiled() && cpu_has_avx2();
  return ok;
}

Isa active_isa() { return current(); }

std::string to_string(Isa isa) { return isa == Isa::Avx2 ? "avx2" : "scalar"; }

bool set_isa(Isa isa) {
  if (!isa_available(isa)) return false;
  current() = isa;
  return true;
}

void lorentzian_accumulate(const double* det, const double* amp, std::size_t n, double hw,
                           double* out) {
  table().lacc(det, amp, n, hw, out);
}

void lorentzian_sum(const double* x, std::size_t n, const double* c, const double* hw,
                    const double* amp, std::size_t m, double baseline, double* out) {
  table().lsum(x, n, c, hw, amp, m, baseline, out);
}

void inverse_sixth(const double* r, std::size_t n, double scale, double* out) {
  table().inv6(r, n, scale, out);
}

void biexp_curve(const double* t, std::size_t n, double i_inf, double contrast, double g_ph,
                 double g_res, double* out) {
  table().biexp(t, n, i_inf, contrast, g_ph, g_res, out);
}

void exp_vec(const double* x, std::size_t n, double* out) { table().expv(x, n, out); }

}  // namespace t1mr::kernels
