#include "meshfix/correct.hpp"

#include <algorithm>
#include <cmath>

namespace meshfix {

ThetaCorrection correct_theta(double theta, const SplitterErrors& e) {
  if (!(theta >= 0.0 && theta <= kPi)) throw std::domain_error("theta must lie in [0, pi]");
  const double lo = 2 * std::abs(e.alpha + e.beta);
  const double hi = kPi - 2 * std::abs(e.alpha - e.beta);
  if (theta < lo) return {0.0, Clip::ClippedToCross};
  if (theta > hi) return {kPi, Clip::ClippedToBar};
  const double sp = std::sin(e.alpha + e.beta), cm = std::cos(e.alpha - e.beta);
  const double s = std::sin(theta / 2);
  const double den = cm * cm - sp * sp;
  if (den <= 0) return {theta, Clip::None};
  const double x = std::clamp((s * s - sp * sp) / den, 0.0, 1.0);
  return {2 * std::asin(std::sqrt(x)), Clip::None};
}

PhaseCorrection correct_phases(double theta, double theta_prime, const SplitterErrors& e) {
  const double sp = std::sin(e.alpha + e.beta), sm = std::sin(e.alpha - e.beta);
  const double cp = std::cos(e.alpha + e.beta), cm = std::cos(e.alpha - e.beta);
  const double s = std::sin(theta_prime / 2), c = std::cos(theta_prime / 2);
  // atan2 form keeps the θ′ ∈ {0, π} limits finite.
  const double a = std::atan2(sm * s, cp * c);
  const double b = std::atan2(sp * c, cm * s);
  const double half = (theta - theta_prime) / 2;
  return {wrap_pi(a - b), wrap_pi(half - a), wrap_pi(half + b)};
}

DeviceCorrection correct_device(const MziSettings& s, const SplitterErrors& e) {
  const ThetaCorrection t = correct_theta(s.theta, e);
  const PhaseCorrection p = correct_phases(s.theta, t.theta_prime, e);
  return {t.theta_prime, wrap_2pi(s.phi + p.phi_offset), p.psi1, p.psi2, t.clipped};
}

CorrectionReport correct_mesh(const MeshProgram& target, const ErrorMap& errors) {
  const Topology& topo = target.topology;
  if (target.settings.size() != topo.mzis.size() || errors.size() != topo.mzis.size() ||
      static_cast<int>(target.output_phases.size()) != topo.n)
    throw std::invalid_argument("program and error map are not aligned");
  CorrectionReport r;
  r.corrected_program = target;
  r.devices.resize(topo.mzis.size());
  std::vector<double> q(topo.n, 0.0);  // phase owed to each mode, paid downstream
  double clip_sq = 0.0;
  for (int i = 0; i < topo.size(); ++i) {
    const int m = topo.mzis[i].top_mode;
    const MziSettings eff{target.settings[i].theta, target.settings[i].phi + q[m] - q[m + 1]};
    DeviceCorrection dc = correct_device(eff, errors[i]);
    r.devices[i] = dc;
    r.corrected_program.settings[i] = {dc.theta_prime, dc.phi_prime};
    const double common = q[m + 1];
    q[m] = common + dc.psi1;
    q[m + 1] = common + dc.psi2;
    if (dc.clipped != Clip::None) {
      ++r.n_clipped;
      const double d = eff.theta - dc.theta_prime;
      clip_sq += d * d;
    }
  }
  for (int k = 0; k < topo.n; ++k)
    r.corrected_program.output_phases[k] = wrap_2pi(target.output_phases[k] + q[k]);
  r.predicted_residual = std::sqrt(clip_sq / (2.0 * topo.n));
  return r;
}

RedundantGate redundant_gate_settings(double theta, double phi, double beta, double a1, double a2) {
  if (!(theta >= 0.0 && theta <= kPi)) throw std::domain_error("theta must lie in [0, pi]");
  if (!(std::abs(beta) < kPi / 4 - std::max(std::abs(a1 + a2), std::abs(a1 - a2))))
    throw std::domain_error("passive splitter error too large for the tunable splitter");
  const double sp = std::sin(a1 + a2), cm = std::cos(a1 - a2);
  const double sm = std::sin(a1 - a2), cp = std::cos(a1 + a2);
  const bool low = theta < kPi / 2;
  // The tunable splitter cancels the passive one: α(θα) = −β or +β.
  const double x = std::pow(std::sin(kPi / 4 + (low ? beta : -beta)), 2);
  RedundantGate g;
  g.theta_alpha = 2 * std::asin(std::sqrt(std::clamp((x - sp * sp) / (cm * cm - sp * sp), 0.0, 1.0)));
  const double th = std::tan(g.theta_alpha / 2);
  const double xi1 = std::atan2(sp, cm * th);
  const double xi2 = std::atan(sm / cp * th);
  const double xi3 = -xi1;
  const double s2b = std::sin(2 * beta), c2b = std::cos(2 * beta);
  if (low) {
    const double r = std::clamp(std::sin(theta / 2) / c2b, -1.0, 1.0);
    g.theta_prime = 2 * std::acos(r) + kPi / 2 + xi3 - xi2;
    const double tt = g.theta_prime + xi2 - xi3 - kPi / 2;
    const double rest = 0.5 * (theta - g.theta_alpha - g.theta_prime - xi2 - xi3);
    g.phi_prime = phi - xi1 + xi2 + std::arg(cd(-s2b * std::cos(tt / 2), std::sin(tt / 2)));
    g.psi1 = std::arg(cd(s2b * std::cos(tt / 2), std::sin(tt / 2))) + rest - 5 * kPi / 4;
    g.psi2 = kPi / 4 + rest;
  } else {
    const double r = std::clamp(std::cos(theta / 2) / c2b, -1.0, 1.0);
    g.theta_prime = 2 * std::asin(r) + kPi / 2 + xi3 - xi2;
    const double tt = g.theta_prime + xi2 - xi3 - kPi / 2;
    const double rest = 0.5 * (theta - g.theta_alpha - g.theta_prime - xi2 - xi3);
    g.phi_prime = phi - xi1 + xi2 + kPi / 2 + std::atan(std::tan(tt / 2) * s2b);
    g.psi1 = rest - 3 * kPi / 4;
    g.psi2 = -std::arg(cd(-s2b * std::sin(tt / 2), std::cos(tt / 2))) + rest + 3 * kPi / 4;
  }
  g.theta_prime = wrap_2pi(g.theta_prime);
  g.phi_prime = wrap_2pi(g.phi_prime);
  g.psi1 = wrap_pi(g.psi1);
  g.psi2 = wrap_pi(g.psi2);
  return g;
}

Mat2 redundant_gate_unitary(const RedundantGate& g, double beta, double a1, double a2) {
  Mat2 out;
  out << std::polar(1.0, g.psi1), 0.0, 0.0, std::polar(1.0, g.psi2);
  return out * splitter(beta) * phase_top(g.theta_prime) * splitter(a2) * phase_top(g.theta_alpha) *
         splitter(a1) * phase_top(g.phi_prime);
}

}  // namespace meshfix
