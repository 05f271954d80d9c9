#include "meshfix/chip.hpp"

#include <cmath>
#include <string>

#include "meshfix/rng.hpp"

namespace meshfix {

double ShifterMap::voltage_for(double target) const {
  if (!(kappa > 0)) throw std::domain_error("shifter map needs kappa > 0");
  return std::sqrt(wrap_2pi(target - delta) / kappa);
}

std::vector<double> ChipInterface::measure_intensities() {
  std::vector<double> v(n_modes());
  for (int p = 0; p < n_modes(); ++p) v[p] = measure_intensity(p);
  return v;
}

CVector ChipInterface::measure_fields() {
  CVector v(n_modes());
  for (int p = 0; p < n_modes(); ++p) v(p) = measure_field(p);
  return v;
}

cd measure(ChipInterface& chip, const CVector& input, int port, MeasureKind kind) {
  chip.set_input(input);
  return kind == MeasureKind::Field ? chip.measure_field(port) : cd(chip.measure_intensity(port));
}

ChipModel::ChipModel(Topology topo, ChipTruth truth, DetectorKind detectors, double v_max, double kappa_nominal,
                     ChipNoise noise, std::uint64_t noise_seed)
    : topo_(std::move(topo)),
      truth_(std::move(truth)),
      detectors_(detectors),
      v_max_(v_max),
      kappa_nom_(kappa_nominal),
      noise_(noise),
      rng_(noise_seed) {
  const auto m = topo_.mzis.size();
  if (truth_.errors.size() != m || truth_.theta_maps.size() != m || truth_.phi_maps.size() != m ||
      static_cast<int>(truth_.responsivity.size()) != topo_.n)
    throw std::invalid_argument("chip truth does not match topology");
  for (std::size_t i = 0; i < m; ++i)
    if (!(truth_.theta_maps[i].kappa > 0 && truth_.phi_maps[i].kappa > 0))
      throw std::invalid_argument("shifter kappa must be positive");
  v_theta_.assign(m, 0.0);
  v_phi_.assign(m, 0.0);
  out_phases_.assign(topo_.n, 0.0);
  input_ = CVector::Zero(topo_.n);
}

ChipModel ChipModel::random(const ChipConfig& cfg) {
  const Topology topo = make_topology(cfg.n, cfg.layout);
  const auto m = topo.mzis.size();
  std::mt19937_64 rng(derive_seed(cfg.seed, {0x636869ULL}));
  std::normal_distribution<double> g(0.0, cfg.sigma_bs);
  std::uniform_real_distribution<double> k(1 - cfg.kappa_spread, 1 + cfg.kappa_spread);
  std::uniform_real_distribution<double> d(-cfg.delta_spread, cfg.delta_spread);
  std::uniform_real_distribution<double> r(cfg.responsivity_min, cfg.responsivity_max);
  ChipTruth t;
  t.errors.resize(m);
  for (auto& e : t.errors) {
    e.alpha = g(rng);
    e.beta = g(rng);
  }
  for (std::size_t i = 0; i < m; ++i) {
    t.theta_maps.push_back({cfg.kappa_nominal * k(rng), d(rng)});
    t.phi_maps.push_back({cfg.kappa_nominal * k(rng), d(rng)});
  }
  for (int p = 0; p < cfg.n; ++p) t.responsivity.push_back(r(rng));
  return ChipModel(topo, std::move(t), cfg.detectors, cfg.v_max, cfg.kappa_nominal, cfg.noise,
                   derive_seed(cfg.seed, {0x6e6f697365ULL}));
}

DetectorKind ChipModel::detector(int port) const {
  if (port < 0 || port >= topo_.n) throw std::out_of_range("port out of range");
  return detectors_;
}

void ChipModel::set_voltage(int device, Shifter s, double volts) {
  if (device < 0 || device >= topo_.size()) throw std::out_of_range("device out of range");
  if (!(volts >= 0 && volts <= v_max_ * (1 + 1e-12)))
    throw std::out_of_range("voltage " + std::to_string(volts) + " outside [0, v_max]");
  (s == Shifter::Theta ? v_theta_ : v_phi_)[device] = volts;
  dirty_ = true;
}

double ChipModel::voltage(int device, Shifter s) const {
  return (s == Shifter::Theta ? v_theta_ : v_phi_).at(device);
}

void ChipModel::set_output_phases(const std::vector<double>& d) {
  if (static_cast<int>(d.size()) != topo_.n) throw std::invalid_argument("need one output phase per mode");
  out_phases_ = d;
  dirty_ = true;
}

void ChipModel::set_input(const CVector& x) {
  if (x.size() != topo_.n) throw std::invalid_argument("input length must equal N");
  input_ = x;
  dirty_ = true;
}

MeshProgram ChipModel::truth_program() const {
  MeshProgram p = make_program(topo_);
  for (int i = 0; i < topo_.size(); ++i)
    p.settings[i] = {truth_.theta_maps[i].phase(v_theta_[i]), truth_.phi_maps[i].phase(v_phi_[i])};
  p.output_phases = out_phases_;
  return p;
}

CMatrix ChipModel::truth_unitary() const { return mesh_unitary(truth_program(), truth_.errors); }

const CVector& ChipModel::outputs() {
  if (dirty_) {
    out_ = propagate(truth_program(), &truth_.errors, input_);
    dirty_ = false;
  }
  return out_;
}

double ChipModel::measure_intensity(int port) {
  if (port < 0 || port >= topo_.n) throw std::out_of_range("port out of range");
  double v = truth_.responsivity[port] * std::norm(outputs()(port));
  if (noise_.sigma_intensity > 0) v *= 1 + noise_.sigma_intensity * gauss_(rng_);
  return v;
}

cd ChipModel::measure_field(int port) {
  if (detector(port) != DetectorKind::Coherent) throw CapabilityError("port has no coherent detector");
  cd v = outputs()(port);
  if (noise_.sigma_phase > 0) v *= std::polar(1.0, noise_.sigma_phase * gauss_(rng_));
  return v;
}

}  // namespace meshfix
