#include "meshfix/types.hpp"

#include <cmath>

namespace meshfix {

double wrap_2pi(double x) {
  double r = std::fmod(x, 2 * kPi);
  if (r < 0) r += 2 * kPi;
  if (r >= 2 * kPi) r = 0.0;
  return r;
}

double wrap_pi(double x) {
  double r = wrap_2pi(x);
  if (r > kPi) r -= 2 * kPi;
  return r;
}

}  // namespace meshfix
