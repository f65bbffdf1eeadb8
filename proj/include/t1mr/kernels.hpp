#pragma once

#include <cstddef>
#include <string>

namespace t1mr::kernels {

enum class Isa { Scalar, Avx2 };

// Selected once from CPUID; T1MR_FORCE_SCALAR=1 in the environment pins the
// scalar path.
Isa active_isa();
bool isa_available(Isa isa);
std::string to_string(Isa isa);
// Override the dispatch (tests); returns false if the ISA is not available.
bool set_isa(Isa isa);

// out[i] += amp[i] * hw^2 / (hw^2 + det[i]^2)
void lorentzian_accumulate(const double* det, const double* amp, std::size_t n, double hw,
                           double* out);

// out[i] = baseline + sum_k amp[k] hw[k]^2 / (hw[k]^2 + (x[i] - c[k])^2)
void lorentzian_sum(const double* x, std::size_t n, const double* c, const double* hw,
                    const double* amp, std::size_t m, double baseline, double* out);

// out[i] = scale / r[i]^6
void inverse_sixth(const double* r, std::size_t n, double scale, double* out);

// out[i] = i_inf (1 + (contrast/4)(exp(-g_ph t) + 3 exp(-(g_ph + g_res) t)))
void biexp_curve(const double* t, std::size_t n, double i_inf, double contrast, double g_ph,
                 double g_res, double* out);

// out[i] = exp(x[i])
void exp_vec(const double* x, std::size_t n, double* out);

namespace scalar {
void lorentzian_accumulate(const double*, const double*, std::size_t, double, double*);
void lorentzian_sum(const double*, std::size_t, const double*, const double*, const double*,
                    std::size_t, double, double*);
void inverse_sixth(const double*, std::size_t, double, double*);
void biexp_curve(const double*, std::size_t, double, double, double, double, double*);
void exp_vec(const double*, std::size_t, double*);
}  // namespace scalar

namespace avx2 {
bool compiled();
void lorentzian_accumulate(const double*, const double*, std::size_t, double, double*);
void lorentzian_sum(const double*, std::size_t, const double*, const double*, const double*,
                    std::size_t, double, double*);
void inverse_sixth(const double*, std::size_t, double, double*);
void biexp_curve(const double*, std::size_t, double, double, double, double, double*);
void exp_vec(const double*, std::size_t, double*);
}  // namespace avx2

}  // namespace t1mr::kernels
