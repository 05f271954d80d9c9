#pragma once

#include <functional>
#include <string>
#include <vector>

#include "meshfix/chip.hpp"
#include "meshfix/json_io.hpp"

namespace meshfix {

class CalibrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DeviceCalibration {
  int device = 0;
  double alpha_hat = 0.0;
  double beta_hat = 0.0;
  ShifterMap theta_map;
  ShifterMap phi_map;

  // Diagnostics.
  double zeta = 0.0;  // |bottom/top| input amplitude ratio during the two-input probe
  double visibility_cross_top = 0.0, visibility_cross_bottom = 0.0;
  double visibility_bar_top = 0.0, visibility_bar_bottom = 0.0;
  double extinction_top = 0.0, extinction_bottom = 0.0;  // direct-detection devices only
  double output_gauge = 0.0;      // relative phase of the device's outputs in the virtual frame
  double phase_consistency = 0.0;  // bar-vs-cross field phase residual, rad (coherent frames only)
  double u_psi = 0.0;              // V² at which φ equals the relative input phase ψ
  bool sum_sign_resolved = true;
  bool diff_sign_resolved = true;
};

struct CalibrationRecord {
  int n = 0;
  Layout layout = Layout::Rectangular;
  std::vector<DeviceCalibration> devices;  // indexed like the topology
  std::vector<double> responsivity;        // relative to the last port; triangular only
  double gauge_residual = 0.0;  // output-frame phase left after the input-phase step; rectangular only

  ErrorMap error_map() const;
};

json record_to_json(const CalibrationRecord& r);

struct CalibrationOptions {
  int coarse_points = 64;     // per swept axis
  double kappa_search = 0.3;  // searched κ range relative to nominal
  int fringe_points = 32;     // samples in a least-squares fringe fit
  double power_floor = 1e-6;  // minimum probe power reaching a device
  double min_visibility = 1e-12;
  double sign_step = 0.01;    // finite-difference step as a fraction of V(π)
  double lo_tolerance = 0.05;  // relative spread allowed in the LO distribution
  // Single-device studies only: weight of the second port in two-input probes,
  // and light leaked into the dark port of single-input probes.
  cd second_port_weight{1.0, 0.0};
  cd dark_port_leak{0.0, 0.0};
};

enum class ThetaMethod { PhiAveraged, Direct };

struct Fit;

class Calibrator {
 public:
  explicit Calibrator(ChipInterface& chip, CalibrationOptions opts = {});

  // Single-device steps. They assume every device after `device` in propagation
  // order is calibrated; earlier ones are routed with nominal settings.
  ShifterMap calibrate_theta(int device, ThetaMethod method = ThetaMethod::PhiAveraged,
                             double phi_volts = 0.0);
  // Requires calibrate_theta(device).
  SplitterErrors calibrate_splitters(int device);
  // Requires calibrate_splitters(device). The offset is provisional until the
  // input-phase step of calibrate_mesh/calibrate_reck fixes the frame.
  ShifterMap calibrate_phi(int device);

  CalibrationRecord calibrate_mesh();
  CalibrationRecord calibrate_reck();

  const DeviceCalibration& device(int d) const { return cal_.at(d); }

 private:
  struct Obs {
    double top = 0, bottom = 0;
    cd zt, zb;
  };
  enum class Frame { Coherent, Direct, Homodyne };

  void set_u(int d, Shifter s, double u);
  void route(int d);
  CVector probe(int d, bool two_input) const;
  Obs observe(int d, const CVector& input);
  Mat2 model(int d) const;
  void back_propagate(CVector& z, int d) const;
  double top_power(int d, const CVector& in);
  // Samples f on the coarse grid over [0, v_max²] and fits a sinusoid.
  Fit sweep(const std::function<double(double)>& f) const;
  double theta_u(int d, double theta) const;
  void calibrate_kappa_phi(int d);
  void finish_inputs(CalibrationRecord& rec);
  void setup_homodyne();
  CalibrationRecord make_record() const;

  ChipInterface& chip_;
  CalibrationOptions opt_;
  const Topology topo_;
  double u_max_;
  double kappa_nom_;
  Frame frame_ = Frame::Coherent;
  std::vector<DeviceCalibration> cal_;
  std::vector<char> theta_done_, split_done_, phi_done_;
  std::vector<double> kappa_phi_;  // κ from the φ fringe, before the offset is known
  std::vector<double> u_peak_;     // top-power maximum of the θ = π/2 fringe
  std::vector<double> u_theta_, u_phi_;
  std::vector<double> resp_;
  // Homodyne state for triangular meshes.
  CMatrix m0_inv_;
  CVector lo_model_;
  std::vector<double> lo_power_;
};

CalibrationRecord calibrate_mesh(ChipInterface& chip, const CalibrationOptions& opts = {});
CalibrationRecord calibrate_reck(ChipInterface& chip, const CalibrationOptions& opts = {});

// Magnitudes of (α+β, α−β) and ζ from the four two-input visibilities.
struct VisibilitySolution {
  double sum = 0.0, diff = 0.0, zeta_cross = 0.0, zeta_bar = 0.0;
};
VisibilitySolution solve_visibilities(double cross_top, double cross_bottom, double bar_top,
                                      double bar_bottom, double floor = 1e-12);

// |α+β|, |α−β| from top/bottom extinction ratios measured with one input dark.
std::pair<double, double> solve_extinction(double er_top, double er_bottom);

}  // namespace meshfix

namespace meshfix {

// Corrects `target` with the calibrated errors and writes the resulting
// voltages and output phases to the chip through the calibrated maps.
CorrectionReport program_chip(ChipInterface& chip, const CalibrationRecord& rec, const MeshProgram& target);

}  // namespace meshfix
