#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "meshfix/mesh.hpp"

namespace meshfix {

// Mean matrix error of an uncorrected mesh, σ·√(2(N−1)).
double expected_error(int n, double sigma_bs);
// Mean error after correction, σ²·√(2(N²−1)/3).
double expected_corrected_error(int n, double sigma_bs);

// Haar distribution of internal phases pooled over a full mesh.
double theta_density(int n, double theta);
double theta_cdf(int n, double xi);
// Leading small-angle term of theta_cdf, (N+1)ξ²/12.
double theta_cdf_small_angle(int n, double xi);
// Probability a device needs θ beyond the bar-side limit, ≈ 4σ²/N.
double tail_probability_bar(int n, double sigma_bs);

enum class ComponentKind { Splitter, Phase, ClippedTheta };
// Exact per-device contribution to ε for a mesh of size n.
double component_error_contribution(ComponentKind kind, double magnitude, int n);

struct DynamicBudget {
  double quantization_phase_rms = 0.0;  // rad
  double thermal_phase = 0.0;           // rad
};

inline constexpr double kSiliconThermoOptic = 1.8e-4;  // K⁻¹

DynamicBudget dynamic_error_budget(int bits, double shifter_length_um, double delta_T_K, double wavelength_nm);

// Sampled Δn(λ); wavelengths ascending, linearly interpolated.
struct DnTable {
  std::vector<double> lambda_nm;
  std::vector<double> dn;
  double at(double lambda) const;
};

// Cross-coupled power fraction sin²[(π/4)(Δn(λ)/Δn(λ₀))(λ₀/λ)].
double wavelength_coupling(const DnTable& t, double lambda0_nm, double lambda_nm);
// Splitter error equivalent to a cross-coupled power fraction T.
double alpha_from_transmission(double T);

struct SweepConfig {
  std::vector<int> n_modes{32};
  std::vector<double> sigma_bs{0.02};
  int n_unitaries = 30;
  int n_error_maps = 30;
  std::uint64_t seed = 1;
  bool correct = true;  // also evaluate the corrected arm
  Layout layout = Layout::Rectangular;
  double correlation = 0.0;  // between α and β of a device
  int threads = 1;
};

struct SweepSample {
  int n = 0;
  double sigma = 0.0;
  int trial = 0;
  bool corrected = false;
  double epsilon = 0.0;
  int n_clipped = 0;
};

struct CellSummary {
  int n = 0;
  double sigma = 0.0;
  bool corrected = false;
  int count = 0;
  double mean = 0.0;
  double rms = 0.0;  // √⟨ε²⟩, the quantity the closed-form laws describe
  double median = 0.0;
  double q05 = 0.0, q25 = 0.0, q75 = 0.0, q95 = 0.0;
  double clip_rate = 0.0;  // clipped devices / devices evaluated
};

struct SweepResult {
  std::vector<SweepSample> samples;
  std::vector<CellSummary> cells;
};

SweepResult run_sweep(const SweepConfig& cfg);

// Error map with α, β ~ N(0, σ²), optionally correlated.
ErrorMap random_error_map(std::size_t count, double sigma, double correlation, std::uint64_t seed);

// Linear-interpolated quantile of an unsorted sample.
double quantile(std::vector<double> v, double q);

// Rows `n,sigma,trial,corrected,epsilon,n_clipped`, no header comment.
std::string sweep_csv(const SweepResult& r);

}  // namespace meshfix
