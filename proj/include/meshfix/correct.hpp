#pragma once

#include <vector>

#include "meshfix/mesh.hpp"

namespace meshfix {

enum class Clip { None, ClippedToCross, ClippedToBar };

struct ThetaCorrection {
  double theta_prime = 0.0;
  Clip clipped = Clip::None;
};

struct PhaseCorrection {
  double phi_offset = 0.0;
  double psi1 = 0.0;
  double psi2 = 0.0;
};

struct DeviceCorrection {
  double theta_prime = 0.0;
  double phi_prime = 0.0;
  double psi1 = 0.0;
  double psi2 = 0.0;
  Clip clipped = Clip::None;
};

struct CorrectionReport {
  std::vector<DeviceCorrection> devices;
  MeshProgram corrected_program;
  int n_clipped = 0;
  double predicted_residual = 0.0;
};

// Realizable when 2|α+β| ≤ θ ≤ π − 2|α−β|; endpoints count as realizable.
// Throws std::domain_error for θ outside [0, π].
ThetaCorrection correct_theta(double theta, const SplitterErrors& e);

// diag(e^{iψ1}, e^{iψ2})·T′(θ′, φ + φ_offset) = T(θ, φ) for any φ when θ′ is unclipped.
PhaseCorrection correct_phases(double theta, double theta_prime, const SplitterErrors& e);

DeviceCorrection correct_device(const MziSettings& s, const SplitterErrors& e);

CorrectionReport correct_mesh(const MeshProgram& target, const ErrorMap& errors);

struct RedundantGate {
  double theta_alpha = 0.0;  // internal phase of the tunable input splitter
  double theta_prime = 0.0;
  double phi_prime = 0.0;
  double psi1 = 0.0;
  double psi2 = 0.0;
};

// Tunable-splitter MZI (a1, θα, a2) replacing the input coupler of a device
// whose output coupler has error β. Requires θ ∈ [0, π] and
// |β| < π/4 − max(|a1+a2|, |a1−a2|); throws std::domain_error otherwise.
RedundantGate redundant_gate_settings(double theta, double phi, double beta, double a1, double a2);

// diag(e^{iψ1}, e^{iψ2})·S(β)·P(θ′)·S(a2)·P(θα)·S(a1)·P(φ′)
Mat2 redundant_gate_unitary(const RedundantGate& g, double beta, double a1, double a2);

}  // namespace meshfix
