#pragma once

#include <complex>

#include <Eigen/Dense>

namespace qsc {

using Complex = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using RVector = Eigen::VectorXd;
using RMatrix = Eigen::MatrixXd;

inline constexpr double kPi = 3.141592653589793238462643383279502884;
inline constexpr double kTwoPi = 2.0 * kPi;
inline constexpr double kSqrtPi = 1.772453850905516027298167483341145183;
inline constexpr double kInvSqrt2 = 0.707106781186547524400844362104849039;

inline constexpr Complex kImag{0.0, 1.0};

}  // namespace qsc
