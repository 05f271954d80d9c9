#pragma once

#include <complex>
#include <numbers>
#include <stdexcept>

#include <Eigen/Dense>

namespace meshfix {

using cd = std::complex<double>;
using CMatrix = Eigen::Matrix<cd, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CVector = Eigen::VectorXcd;
using Mat2 = Eigen::Matrix2cd;

inline constexpr double kPi = std::numbers::pi;
inline constexpr cd kI{0.0, 1.0};

// Thrown when a matrix that must be unitary is not.
class UnitarityError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// [0, 2π)
double wrap_2pi(double x);
// (−π, π]
double wrap_pi(double x);

}  // namespace meshfix
