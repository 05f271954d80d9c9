#include "meshfix/mzi.hpp"

#include <cmath>

namespace meshfix {

Mat2 splitter(double x) {
  const double c = std::cos(kPi / 4 + x), s = std::sin(kPi / 4 + x);
  Mat2 m;
  m << c, kI * s, kI * s, c;
  return m;
}

Mat2 phase_top(double p) {
  Mat2 m;
  m << std::polar(1.0, p), 0.0, 0.0, 1.0;
  return m;
}

Mat2 ideal_mzi(double theta, double phi) {
  const double s = std::sin(theta / 2), c = std::cos(theta / 2);
  const cd pre = kI * std::polar(1.0, theta / 2);
  const cd ep = std::polar(1.0, phi);
  Mat2 m;
  m << ep * s, c, ep * c, -s;
  return pre * m;
}

Mat2 ideal_mzi(const MziSettings& s) { return ideal_mzi(s.theta, s.phi); }

Mat2 imperfect_mzi(double theta, double phi, double alpha, double beta) {
  const double s = std::sin(theta / 2), c = std::cos(theta / 2);
  const double cp = std::cos(alpha + beta), cm = std::cos(alpha - beta);
  const double sp = std::sin(alpha + beta), sm = std::sin(alpha - beta);
  const cd pre = kI * std::polar(1.0, theta / 2);
  const cd ep = std::polar(1.0, phi);
  Mat2 m;
  m << ep * cd(cm * s, sp * c), cd(cp * c, sm * s),
       ep * cd(cp * c, -sm * s), cd(-cm * s, sp * c);
  return pre * m;
}

Mat2 imperfect_mzi(const MziSettings& s, const SplitterErrors& e) {
  return imperfect_mzi(s.theta, s.phi, e.alpha, e.beta);
}

Mat2 imperfect_mzi_factored(double theta, double phi, double alpha, double beta) {
  Mat2 b, a;
  b << std::cos(beta), kI * std::sin(beta), kI * std::sin(beta), std::cos(beta);
  a << std::cos(alpha), kI * std::polar(1.0, -phi) * std::sin(alpha),
       kI * std::polar(1.0, phi) * std::sin(alpha), std::cos(alpha);
  return b * ideal_mzi(theta, phi) * a;
}

}  // namespace meshfix
