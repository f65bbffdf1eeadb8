#pragma once

#include <array>
#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

namespace t1mr {

// Dense matrix exponential by Pade scaling and squaring (degrees 3..13,
// selected on the 1-norm).
template <typename Derived>
typename Derived::PlainObject expm(const Eigen::MatrixBase<Derived>& a_in) {
  using Mat = typename Derived::PlainObject;
  const Mat a = a_in;
  if (a.rows() != a.cols()) throw std::invalid_argument("expm: matrix must be square");
  const Eigen::Index n = a.rows();
  const Mat ident = Mat::Identity(n, n);
  if (!a.allFinite()) throw std::invalid_argument("expm: non-finite entries");

  const double norm1 = a.cwiseAbs().colwise().sum().maxCoeff();

  static constexpr std::array<double, 4> th{1.495585217958292e-2, 2.539398330063230e-1,
                                            9.504178996162932e-1, 2.097847961257068e0};
  static constexpr double b3[] = {120, 60, 12, 1};
  static constexpr double b5[] = {30240, 15120, 3360, 420, 30, 1};
  static constexpr double b7[] = {17297280, 8648640, 1995840, 277200, 25200, 1512, 56, 1};
  static constexpr double b9[] = {17643225600., 8821612800., 2075673600., 302702400.,
                                  30270240.,    2162160.,    110880.,     3960.,
                                  90.,          1.};
  static constexpr double b13[] = {64764752532480000., 32382376266240000., 7771770303897600.,
                                   1187353796428800.,  129060195264000.,   10559470521600.,
                                   670442572800.,      33522128640.,       1323241920.,
                                   40840800.,          960960.,            16380.,
                                   182.,               1.};

  auto low_order = [&](const double* b, int m) {
    const Mat a2 = a * a;
    Mat pow = ident;
    Mat u = b[1] * ident;
    Mat v = b[0] * ident;
    for (int k = 2; k <= m; k += 2) {
      pow = pow * a2;
      u += b[k + 1] * pow;
      v += b[k] * pow;
    }
    u = a * u;
    return Mat((v - u).partialPivLu().solve(v + u));
  };

  if (norm1 <= th[0]) return low_order(b3, 3);
  if (norm1 <= th[1]) return low_order(b5, 5);
  if (norm1 <= th[2]) return low_order(b7, 7);
  if (norm1 <= th[3]) return low_order(b9, 9);

  constexpr double theta13 = 5.371920351148152;
  int s = 0;
  if (norm1 > theta13) s = static_cast<int>(std::ceil(std::log2(norm1 / theta13)));
  const Mat x = a / std::ldexp(1.0, s);
  const Mat x2 = x * x, x4 = x2 * x2, x6 = x4 * x2;
  Mat u = x * (x6 * (b13[13] * x6 + b13[11] * x4 + b13[9] * x2) + b13[7] * x6 + b13[5] * x4 +
               b13[3] * x2 + b13[1] * ident);
  Mat v = x6 * (b13[12] * x6 + b13[10] * x4 + b13[8] * x2) + b13[6] * x6 + b13[4] * x4 +
          b13[2] * x2 + b13[0] * ident;
  Mat r = (v - u).partialPivLu().solve(v + u);
  for (int k = 0; k < s; ++k) r = r * r;
  return r;
}

}  // namespace t1mr
