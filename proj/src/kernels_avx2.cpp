#include <cmath>

#include "t1mr/kernels.hpp"

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>
#define T1MR_HAVE_AVX2 1
#endif

namespace t1mr::kernels::avx2 {

#ifdef T1MR_HAVE_AVX2

namespace {

// exp(x) = 2^k exp(r), |r| <= ln2/2, degree-12 Taylor in Horner form.
inline __m256d exp_pd(__m256d x) {
  const __m256d hi = _mm256_set1_pd(709.782712893384);  // log(DBL_MAX)
  const __m256d lo = _mm256_set1_pd(-746.0);
  const __m256d under = _mm256_cmp_pd(x, lo, _CMP_LT_OQ);
  const __m256d over = _mm256_cmp_pd(x, hi, _CMP_GT_OQ);
  const __m256d nan = _mm256_cmp_pd(x, x, _CMP_UNORD_Q);
  x = _mm256_min_pd(_mm256_max_pd(x, lo), hi);

  const __m256d log2e = _mm256_set1_pd(1.4426950408889634);
  const __m256d ln2_hi = _mm256_set1_pd(6.93145751953125e-1);
  const __m256d ln2_lo = _mm256_set1_pd(1.42860682030941723212e-6);
  const __m256d k = _mm256_round_pd(_mm256_mul_pd(x, log2e),
                                    _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(k, ln2_hi, x);
  r = _mm256_fnmadd_pd(k, ln2_lo, r);

  static constexpr double c[] = {1.0 / 479001600, 1.0 / 39916800, 1.0 / 3628800,
                                 1.0 / 362880,    1.0 / 40320,    1.0 / 5040,
                                 1.0 / 720,       1.0 / 120,      1.0 / 24,
                                 1.0 / 6,         0.5,            1.0,
                                 1.0};
  __m256d p = _mm256_set1_pd(c[0]);
  for (int i = 1; i < 13; ++i) p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(c[i]));

  // 2^k split in two factors so that k down to -1074 stays representable.
  const __m128i ki = _mm256_cvtpd_epi32(k);
  const __m128i k1 = _mm_srai_epi32(ki, 1);
  const __m128i k2 = _mm_sub_epi32(ki, k1);
  auto pow2 = [](__m128i e) {
    const __m256i e64 = _mm256_cvtepi32_epi64(e);
    const __m256i bits = _mm256_slli_epi64(_mm256_add_epi64(e64, _mm256_set1_epi64x(1023)), 52);
    return _mm256_castsi256_pd(bits);
  };
  __m256d y = _mm256_mul_pd(_mm256_mul_pd(p, pow2(k1)), pow2(k2));
  y = _mm256_blendv_pd(y, _mm256_setzero_pd(), under);
  y = _mm256_blendv_pd(y, _mm256_set1_pd(HUGE_VAL), over);
  y = _mm256_blendv_pd(y, _mm256_set1_pd(NAN), nan);
  return y;
}

}  // namespace

bool compiled() { return true; }

void lorentzian_accumulate(const double* det, const double* amp, std::size_t n, double hw,
                           double* out) {
  const __m256d h2 = _mm256_set1_pd(hw * hw);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_loadu_pd(det + i);
    const __m256d den = _mm256_fmadd_pd(d, d, h2);
    const __m256d v = _mm256_div_pd(_mm256_mul_pd(_mm256_loadu_pd(amp + i), h2), den);
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(out + i), v));
  }
  scalar::lorentzian_accumulate(det + i, amp + i, n - i, hw, out + i);
}

void lorentzian_sum(const double* x, std::size_t n, const double* c, const double* hw,
                    const double* amp, std::size_t m, double baseline, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d xv = _mm256_loadu_pd(x + i);
    __m256d s = _mm256_set1_pd(baseline);
    for (std::size_t k = 0; k < m; ++k) {
      const __m256d d = _mm256_sub_pd(xv, _mm256_set1_pd(c[k]));
      const __m256d h2 = _mm256_set1_pd(hw[k] * hw[k]);
      const __m256d den = _mm256_fmadd_pd(d, d, h2);
      s = _mm256_add_pd(s, _mm256_div_pd(_mm256_mul_pd(_mm256_set1_pd(amp[k]), h2), den));
    }
    _mm256_storeu_pd(out + i, s);
  }
  scalar::lorentzian_sum(x + i, n - i, c, hw, amp, m, baseline, out + i);
}

void inverse_sixth(const double* r, std::size_t n, double scale, double* out) {
  const __m256d sv = _mm256_set1_pd(scale);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d rv = _mm256_loadu_pd(r + i);
    const __m256d r2 = _mm256_mul_pd(rv, rv);
    const __m256d r6 = _mm256_mul_pd(_mm256_mul_pd(r2, r2), r2);
    _mm256_storeu_pd(out + i, _mm256_div_pd(sv, r6));
  }
  scalar::inverse_sixth(r + i, n - i, scale, out + i);
}

void biexp_curve(const double* t, std::size_t n, double i_inf, double contrast, double g_ph,
                 double g_res, double* out) {
  const __m256d a = _mm256_set1_pd(-g_ph);
  const __m256d b = _mm256_set1_pd(-(g_ph + g_res));
  const __m256d q = _mm256_set1_pd(0.25 * contrast);
  const __m256d three = _mm256_set1_pd(3.0);
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d ii = _mm256_set1_pd(i_inf);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d tv = _mm256_loadu_pd(t + i);
    const __m256d e1 = exp_pd(_mm256_mul_pd(a, tv));
    const __m256d e2 = exp_pd(_mm256_mul_pd(b, tv));
    const __m256d s = _mm256_fmadd_pd(three, e2, e1);
    _mm256_storeu_pd(out + i, _mm256_mul_pd(ii, _mm256_fmadd_pd(q, s, one)));
  }
  scalar::biexp_curve(t + i, n - i, i_inf, contrast, g_ph, g_res, out + i);
}

void exp_vec(const double* x, std::size_t n, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out + i, exp_pd(_mm256_loadu_pd(x + i)));
  scalar::exp_vec(x + i, n - i, out + i);
}

#else

bool compiled() { return false; }
void lorentzian_accumulate(const double* det, const double* amp, std::size_t n, double hw,
                           double* out) {
  scalar::lorentzian_accumulate(det, amp, n, hw, out);
}
void lorentzian_sum(const double* x, std::size_t n, const double* c, const double* hw,
                    const double* amp, std::size_t m, double baseline, double* out) {
  scalar::lorentzian_sum(x, n, c, hw, amp, m, baseline, out);
}
void inverse_sixth(const double* r, std::size_t n, double scale, double* out) {
  scalar::inverse_sixth(r, n, scale, out);
}
void biexp_curve(const double* t, std::size_t n, double i_inf, double contrast, double g_ph,
                 double g_res, double* out) {
  scalar::biexp_curve(t, n, i_inf, contrast, g_ph, g_res, out);
}
void exp_vec(const double* x, std::size_t n, double* out) { scalar::exp_vec(x, n, out); }

#endif

}  // namespace t1mr::kernels::avx2
