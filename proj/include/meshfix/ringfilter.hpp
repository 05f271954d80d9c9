#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "meshfix/mzi.hpp"
#include "meshfix/types.hpp"

namespace meshfix {

inline constexpr double kSpeedOfLight = 299792458.0;  // m/s

// One tunable-coupling ring. The coupler is C(β)·diag(1, e^{iθ})·C(α) with
// C(x) = [[cos(π/4+x), sin(π/4+x)], [−sin(π/4+x), cos(π/4+x)]]; port 1 of
// the coupler closes on itself through a loop of length z2 and phase φ.
struct RingSpec {
  double theta = 0.0;
  double phi = 0.0;
  SplitterErrors errors;
  double z1 = 100e-6;   // m, coupler arm
  double z2 = 0.0;      // m, feedback loop; 0 means pick the default FSR
  double a = 0.995;     // round-trip amplitude, excluding routing TBUs
  std::vector<SplitterErrors> bar_tbus = std::vector<SplitterErrors>(5);
  bool clipped = false;  // set by correction when θ′ was out of reach
};

// n(ω) = n0 + (ng − n0)(ω − ω0)/ω0
struct IndexModel {
  double n0 = 2.35;
  double ng = 4.2;
  double lambda0 = 1550e-9;  // m

  double omega0() const { return 2.0 * kPi * kSpeedOfLight / lambda0; }
  double wavenumber(double omega) const;
};

struct Channel {
  double center_hz = kSpeedOfLight / 1550e-9;
  double bandwidth_hz = 50e9;
  double fit_fraction = 1.0;  // central share of the channel used by the GDD fit
};

struct RingArraySpec {
  std::vector<RingSpec> rings;
  IndexModel index;
  Channel channel;
};

// Loop length giving a free spectral range fsr_hz for a round trip of z1 + z2.
double loop_length_for_fsr(const IndexModel& m, double z1, double fsr_hz);

// Amplitude of all routing TBUs per pass, a·∏cos(α_t − β_t).
double loop_amplitude(const RingSpec& r);

cd ring_response(const RingSpec& r, const IndexModel& m, double omega);
std::vector<cd> array_response(const RingArraySpec& s, const std::vector<double>& omega);

// −d arg T/dω by central differences on the unwrapped phase, one-sided at the
// ends. Throws std::invalid_argument when neighbouring samples differ by more
// than 0.9π in phase, since the unwrap is then ambiguous.
std::vector<double> group_delay(const std::vector<cd>& response, const std::vector<double>& omega);

struct GddFit {
  double gdd = 0.0;       // ps/nm
  double offset = 0.0;    // ps at lambda = 0
  double residual = 0.0;  // RMS, ps
};

// OLS line through τ (seconds) against λ (nm).
GddFit fit_gdd(const std::vector<double>& tau, const std::vector<double>& lambda_nm);

// Angular frequencies spanning the channel, evenly spaced, `points` samples.
std::vector<double> channel_grid(const Channel& c, int points);
std::vector<double> to_lambda_nm(const std::vector<double>& omega);

struct GddProfile {
  std::vector<double> omega;
  std::vector<double> lambda_nm;
  std::vector<cd> response;
  std::vector<double> tau;  // s
  GddFit fit;               // over the fit window only
};

GddProfile evaluate_gdd(const RingArraySpec& s, int points);

// Ring count, loop geometry and index model are taken from `base`; only θ, φ are trained.
struct TrainOptions {
  int budget = 40000;  // objective evaluations per restart
  int restarts = 5;
  int grid_points = 64;
  double tolerance = 2.0;  // ps/nm
  // Trained couplers stay in [margin, π − margin], away from the cross and bar
  // limits that splitter errors put out of reach.
  double coupler_margin = 0.3;
  std::uint64_t seed = 1;
  int threads = 1;
};

struct TrainResult {
  RingArraySpec spec;  // best found, also when not converged
  double gdd = 0.0;
  double mse = 0.0;  // ps²
  int evaluations = 0;
  int restarts_used = 0;
  bool converged = false;
};

RingArraySpec default_array(int n_rings);

TrainResult train_ideal(double target_gdd, const RingArraySpec& base, const TrainOptions& opts = {});

struct RingErrors {
  SplitterErrors coupler;
  std::vector<SplitterErrors> bar_tbus;
};

std::vector<RingErrors> random_ring_errors(const RingArraySpec& s, double sigma, std::uint64_t seed);

// Installs the errors into a copy of `ideal`. With correct=true each coupler is
// re-set so that its transfer matrix matches the ideal one up to port phases;
// the loop-side phase is folded into φ and the bus-side ones are a global phase.
// Bar TBUs keep θ = π (the best they can do) and so keep their cos(α−β) loss.
RingArraySpec apply_errors_and_correct(const RingArraySpec& ideal, const std::vector<RingErrors>& errors,
                                       bool correct);

nlohmann::json ring_array_to_json(const RingArraySpec& s);
RingArraySpec ring_array_from_json(const nlohmann::json& j);

}  // namespace meshfix
