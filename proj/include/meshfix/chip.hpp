#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "meshfix/mesh.hpp"

namespace meshfix {

enum class Shifter { Theta, Phi };
enum class DetectorKind { Intensity, Coherent };
enum class MeasureKind { Intensity, Field };

// phase(V) = κV² + δ
struct ShifterMap {
  double kappa = 0.0;  // rad/V²
  double delta = 0.0;  // rad
  double phase(double volts) const { return kappa * volts * volts + delta; }
  // Smallest non-negative voltage giving `target` modulo 2π.
  double voltage_for(double target) const;
};

class CapabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Everything a calibration routine may touch. Hidden parameters are not
// reachable through this interface.
class ChipInterface {
 public:
  virtual ~ChipInterface() = default;
  virtual const Topology& topology() const = 0;
  virtual double v_max() const = 0;
  // Design value of κ; the fabricated shifters deviate from it.
  virtual double kappa_nominal() const = 0;
  virtual DetectorKind detector(int port) const = 0;

  virtual void set_voltage(int device, Shifter s, double volts) = 0;
  // The output phase screen is treated as an ideal, directly programmable element.
  virtual void set_output_phases(const std::vector<double>& d) = 0;
  virtual void set_input(const CVector& x) = 0;
  // Responsivity-scaled power at a port.
  virtual double measure_intensity(int port) = 0;
  // Complex field at a coherent port; throws CapabilityError otherwise.
  virtual cd measure_field(int port) = 0;

  int n_modes() const { return topology().n; }
  std::vector<double> measure_intensities();
  CVector measure_fields();
};

// One-shot form: program the input, read one port.
cd measure(ChipInterface& chip, const CVector& input, int port, MeasureKind kind);

struct ChipNoise {
  double sigma_intensity = 0.0;  // relative
  double sigma_phase = 0.0;      // rad
};

struct ChipTruth {
  ErrorMap errors;
  std::vector<ShifterMap> theta_maps;
  std::vector<ShifterMap> phi_maps;
  std::vector<double> responsivity;
};

struct ChipConfig {
  int n = 4;
  Layout layout = Layout::Rectangular;
  DetectorKind detectors = DetectorKind::Coherent;
  double sigma_bs = 0.02;
  double v_max = 10.0;
  double kappa_nominal = 4 * kPi / 100;  // 4π at v_max
  double kappa_spread = 0.1;             // relative, uniform
  double delta_spread = 0.3;             // rad, uniform
  double responsivity_min = 0.5;
  double responsivity_max = 1.5;
  ChipNoise noise;
  std::uint64_t seed = 1;
};

class ChipModel final : public ChipInterface {
 public:
  ChipModel(Topology topo, ChipTruth truth, DetectorKind detectors, double v_max, double kappa_nominal,
            ChipNoise noise = {}, std::uint64_t noise_seed = 0);
  static ChipModel random(const ChipConfig& cfg);

  const Topology& topology() const override { return topo_; }
  double v_max() const override { return v_max_; }
  double kappa_nominal() const override { return kappa_nom_; }
  DetectorKind detector(int port) const override;
  void set_voltage(int device, Shifter s, double volts) override;
  void set_output_phases(const std::vector<double>& d) override;
  void set_input(const CVector& x) override;
  double measure_intensity(int port) override;
  cd measure_field(int port) override;

  // For tests and truth reports only.
  const ChipTruth& truth() const { return truth_; }
  MeshProgram truth_program() const;
  CMatrix truth_unitary() const;
  double voltage(int device, Shifter s) const;

 private:
  const CVector& outputs();

  Topology topo_;
  ChipTruth truth_;
  DetectorKind detectors_;
  double v_max_, kappa_nom_;
  ChipNoise noise_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> gauss_{0.0, 1.0};
  std::vector<double> v_theta_, v_phi_, out_phases_;
  CVector input_;
  CVector out_;
  bool dirty_ = true;
};

}  // namespace meshfix
