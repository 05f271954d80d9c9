#include "meshfix/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace meshfix {

double expected_error(int n, double sigma_bs) {
  if (n < 2 || sigma_bs < 0) throw std::domain_error("need n >= 2 and sigma >= 0");
  return sigma_bs * std::sqrt(2.0 * (n - 1));
}

double expected_corrected_error(int n, double sigma_bs) {
  if (n < 2 || sigma_bs < 0) throw std::domain_error("need n >= 2 and sigma >= 0");
  return sigma_bs * sigma_bs * std::sqrt(2.0 * (double(n) * n - 1) / 3.0);
}

static double mixture_weight(int n, int k) { return 2.0 * (n - k) / (double(n) * (n - 1)); }

double theta_density(int n, double theta) {
  if (n < 2) throw std::domain_error("need n >= 2");
  if (theta < 0 || theta > kPi) return 0.0;
  const double s = std::sin(theta / 2), c = std::cos(theta / 2);
  double p = 0;
  for (int k = 1; k < n; ++k) p += mixture_weight(n, k) * k * s * std::pow(c, 2 * k - 1);
  return p;
}

double theta_cdf(int n, double xi) {
  if (n < 2) throw std::domain_error("need n >= 2");
  if (xi <= 0) return 0.0;
  if (xi >= kPi) return 1.0;
  const double c2 = std::pow(std::cos(xi / 2), 2);
  double f = 0, ck = 1;
  for (int k = 1; k < n; ++k) {
    ck *= c2;
    f += mixture_weight(n, k) * (1.0 - ck);
  }
  return f;
}

double theta_cdf_small_angle(int n, double xi) { return (n + 1) * xi * xi / 12.0; }

double tail_probability_bar(int n, double sigma_bs) {
  if (n < 1) throw std::domain_error("need n >= 1");
  return 4.0 * sigma_bs * sigma_bs / n;
}

double component_error_contribution(ComponentKind kind, double magnitude, int n) {
  if (n < 1) throw std::domain_error("need n >= 1");
  switch (kind) {
    case ComponentKind::Splitter: return std::sqrt(4.0 / n * (1 - std::cos(magnitude)));
    case ComponentKind::Phase: return std::sqrt((2 - 2 * std::cos(magnitude)) / n);
    case ComponentKind::ClippedTheta: return std::sqrt(8.0 / n) * std::abs(std::sin(magnitude / 4));
  }
  return 0.0;
}

DynamicBudget dynamic_error_budget(int bits, double shifter_length_um, double delta_T_K, double wavelength_nm) {
  if (bits < 1 || wavelength_nm <= 0) throw std::domain_error("bad budget inputs");
  DynamicBudget b;
  b.quantization_phase_rms = (2 * kPi / std::ldexp(1.0, bits)) / std::sqrt(3.0);
  b.thermal_phase = 2 * kPi * kSiliconThermoOptic * delta_T_K * (shifter_length_um * 1e-6) / (wavelength_nm * 1e-9);
  return b;
}

double DnTable::at(double lambda) const {
  if (lambda_nm.size() != dn.size() || lambda_nm.size() < 2)
    throw std::invalid_argument("dn table needs at least two aligned samples");
  if (lambda < lambda_nm.front() || lambda > lambda_nm.back())
    throw std::domain_error("wavelength outside dn table");
  auto it = std::upper_bound(lambda_nm.begin(), lambda_nm.end(), lambda);
  std::size_t i = std::min<std::size_t>(it - lambda_nm.begin(), lambda_nm.size() - 1);
  if (i == 0) i = 1;
  const double t = (lambda - lambda_nm[i - 1]) / (lambda_nm[i] - lambda_nm[i - 1]);
  return dn[i - 1] + t * (dn[i] - dn[i - 1]);
}

double wavelength_coupling(const DnTable& t, double lambda0_nm, double lambda_nm) {
  const double x = (kPi / 4) * (t.at(lambda_nm) / t.at(lambda0_nm)) * (lambda0_nm / lambda_nm);
  return std::pow(std::sin(x), 2);
}

double alpha_from_transmission(double T) {
  return std::asin(std::sqrt(std::clamp(T, 0.0, 1.0))) - kPi / 4;
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double pos = q * (v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - lo) * (v[hi] - v[lo]);
}

}  // namespace meshfix
