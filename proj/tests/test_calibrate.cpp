#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <type_traits>

#include "meshfix/calibrate.hpp"
#include "meshfix/decompose.hpp"
#include "oracle.hpp"

using namespace meshfix;

namespace {

ChipModel make_chip(int n, Layout layout, std::uint64_t seed, ChipNoise noise = {}) {
  ChipConfig cfg;
  cfg.n = n;
  cfg.layout = layout;
  cfg.detectors = layout == Layout::Rectangular ? DetectorKind::Coherent : DetectorKind::Intensity;
  cfg.seed = seed;
  cfg.noise = noise;
  return ChipModel::random(cfg);
}

// Single device with chosen splitter errors; shifter maps and responsivities drawn from `seed`.
ChipModel single_device(double alpha, double beta, Layout layout = Layout::Rectangular, std::uint64_t seed = 7) {
  ChipModel base = make_chip(2, layout, seed);
  ChipTruth t = base.truth();
  t.errors[0] = {alpha, beta};
  return ChipModel(base.topology(), t, layout == Layout::Rectangular ? DetectorKind::Coherent : DetectorKind::Intensity,
                   base.v_max(), base.kappa_nominal());
}

struct Deviation {
  double splitter = 0, theta_kappa = 0, theta_delta = 0, phi_kappa = 0, phi_delta = 0;
};

Deviation compare(const CalibrationRecord& r, const ChipTruth& t) {
  Deviation d;
  for (std::size_t i = 0; i < r.devices.size(); ++i) {
    const auto& c = r.devices[i];
    d.splitter = std::max({d.splitter, std::abs(c.alpha_hat - t.errors[i].alpha), std::abs(c.beta_hat - t.errors[i].beta)});
    d.theta_kappa = std::max(d.theta_kappa, std::abs(c.theta_map.kappa - t.theta_maps[i].kappa));
    d.theta_delta = std::max(d.theta_delta, std::abs(wrap_pi(c.theta_map.delta - t.theta_maps[i].delta)));
    d.phi_kappa = std::max(d.phi_kappa, std::abs(c.phi_map.kappa - t.phi_maps[i].kappa));
    d.phi_delta = std::max(d.phi_delta, std::abs(wrap_pi(c.phi_map.delta - t.phi_maps[i].delta)));
  }
  return d;
}

// Forwards the measurement interface and nothing else.
class Proxy final : public ChipInterface {
 public:
  explicit Proxy(ChipInterface& c) : c_(c) {}
  const Topology& topology() const override { return c_.topology(); }
  double v_max() const override { return c_.v_max(); }
  double kappa_nominal() const override { return c_.kappa_nominal(); }
  DetectorKind detector(int p) const override { return c_.detector(p); }
  void set_voltage(int d, Shifter s, double v) override { c_.set_voltage(d, s, v); }
  void set_output_phases(const std::vector<double>& d) override { c_.set_output_phases(d); }
  void set_input(const CVector& x) override { c_.set_input(x); }
  double measure_intensity(int p) override {
    ++reads;
    return c_.measure_intensity(p);
  }
  cd measure_field(int p) override {
    ++reads;
    return c_.measure_field(p);
  }
  long reads = 0;

 private:
  ChipInterface& c_;
};

// True θ at the voltage the map calls θ̂.
double true_theta_at(const ChipModel& chip, const ShifterMap& est, double theta_hat) {
  const double v = est.voltage_for(theta_hat);
  return wrap_pi(chip.truth().theta_maps[0].phase(v));
}

CVector unit(int n, int p) {
  CVector x = CVector::Zero(n);
  x(p) = 1.0;
  return x;
}

}  // namespace

TEST_CASE("measure") {
  SUBCASE("error-free chip in bar routes each input straight through") {
    ChipModel base = make_chip(4, Layout::Rectangular, 3);
    ChipTruth t = base.truth();
    for (auto& e : t.errors) e = {0, 0};
    ChipModel chip(base.topology(), t, DetectorKind::Coherent, base.v_max(), base.kappa_nominal());
    for (int d = 0; d < chip.topology().size(); ++d)
      chip.set_voltage(d, Shifter::Theta, t.theta_maps[d].voltage_for(kPi));
    for (int p = 0; p < 4; ++p) {
      const double v = std::real(measure(chip, unit(4, 1), p, MeasureKind::Intensity));
      CHECK(v == doctest::Approx(p == 1 ? t.responsivity[1] : 0.0).epsilon(1e-12).scale(1));
    }
  }
  SUBCASE("responsivity-weighted power is conserved") {
    ChipModel chip = make_chip(6, Layout::Triangular, 11);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> v(0, chip.v_max());
    for (int d = 0; d < chip.topology().size(); ++d) {
      chip.set_voltage(d, Shifter::Theta, v(rng));
      chip.set_voltage(d, Shifter::Phi, v(rng));
    }
    CVector x(6);
    for (int i = 0; i < 6; ++i) x(i) = cd(0.1 * i, 0.3 - 0.05 * i);
    chip.set_input(x);
    double total = 0;
    for (int p = 0; p < 6; ++p) total += chip.measure_intensity(p) / chip.truth().responsivity[p];
    CHECK(total == doctest::Approx(x.squaredNorm()).epsilon(1e-12));
  }
  SUBCASE("field of a single device matches the four-factor chain") {
    ChipModel chip = single_device(0.03, -0.015);
    chip.set_voltage(0, Shifter::Theta, 4.1);
    chip.set_voltage(0, Shifter::Phi, 6.3);
    const double th = chip.truth().theta_maps[0].phase(4.1), ph = chip.truth().phi_maps[0].phase(6.3);
    const oracle::M2 T = oracle::chain(th, ph, 0.03, -0.015);
    CVector x(2);
    x << cd(0.6, 0.2), cd(-0.3, 0.7);
    for (int p = 0; p < 2; ++p) {
      const cd want = T(p, 0) * x(0) + T(p, 1) * x(1);
      CHECK(std::abs(measure(chip, x, p, MeasureKind::Field) - want) < 1e-14);
    }
  }
  SUBCASE("capability mismatch") {
    ChipModel chip = make_chip(3, Layout::Triangular, 2);
    CHECK_THROWS_AS(measure(chip, unit(3, 0), 0, MeasureKind::Field), CapabilityError);
    CHECK_THROWS_AS(chip.set_voltage(0, Shifter::Theta, chip.v_max() + 1), std::out_of_range);
  }
}

TEST_CASE("calibration sees only the measurement interface") {
  static_assert(std::is_constructible_v<Calibrator, ChipInterface&>);
  static_assert(!std::is_base_of_v<ChipModel, Proxy>);
  ChipModel a = make_chip(4, Layout::Rectangular, 21);
  ChipModel b = make_chip(4, Layout::Rectangular, 21);
  Proxy proxy(b);
  const auto direct = calibrate_mesh(a);
  const auto via = calibrate_mesh(proxy);
  CHECK(proxy.reads > 0);
  for (std::size_t i = 0; i < direct.devices.size(); ++i) {
    CHECK(via.devices[i].alpha_hat == direct.devices[i].alpha_hat);
    CHECK(via.devices[i].phi_map.delta == direct.devices[i].phi_map.delta);
  }
}

TEST_CASE("calibrate_theta") {
  SUBCASE("no spurious light: direct and phi-averaged agree") {
    ChipModel chip = single_device(0.025, -0.01);
    const ShifterMap direct = Calibrator(chip).calibrate_theta(0, ThetaMethod::Direct, 3.0);
    const ShifterMap averaged = Calibrator(chip).calibrate_theta(0, ThetaMethod::PhiAveraged);
    const auto& truth = chip.truth().theta_maps[0];
    CHECK(std::abs(wrap_pi(direct.delta - truth.delta)) < 1e-6);
    CHECK(std::abs(wrap_pi(averaged.delta - truth.delta)) < 1e-6);
    CHECK(direct.kappa == doctest::Approx(truth.kappa).epsilon(1e-9));
  }
  SUBCASE("naive minimum is biased by the spurious input") {
    const double alpha = 0.02, beta = -0.015;
    for (double zeta : {0.01, 0.02, 0.05}) {
      for (double psi : {0.3, 2.0}) {
        ChipModel chip = single_device(alpha, beta);
        CalibrationOptions o;
        o.dark_port_leak = std::polar(zeta, psi);
        const double vphi = 5.0;
        const ShifterMap est = Calibrator(chip, o).calibrate_theta(0, ThetaMethod::Direct, vphi);
        const double x = chip.truth().phi_maps[0].phase(vphi) - psi;
        const double bias = true_theta_at(chip, est, 0.0);
        // Stationary point of P_top(θ) at fixed φ − ψ.
        const double exact = std::atan(2 * zeta * std::cos(x) /
                                       ((zeta * zeta - 1) * std::cos(2 * alpha) - 2 * zeta * std::sin(2 * alpha) * std::sin(x)));
        CHECK(bias == doctest::Approx(exact).epsilon(1e-8).scale(1e-10));
        CHECK(std::abs(bias - (-2 * zeta * std::cos(x))) < 0.1 * 2 * zeta);
      }
    }
  }
  SUBCASE("phi-averaged estimate does not depend on the spurious input") {
    for (double zeta : {0.0, 0.05, 0.2}) {
      ChipModel chip = single_device(0.02, -0.015);
      CalibrationOptions o;
      o.dark_port_leak = std::polar(zeta, 1.1);
      const ShifterMap est = Calibrator(chip, o).calibrate_theta(0);
      CHECK(std::abs(true_theta_at(chip, est, 0.0)) < 1e-8);
      CHECK(std::abs(wrap_pi(true_theta_at(chip, est, kPi) - kPi)) < 1e-8);
    }
  }
  SUBCASE("insufficient power") {
    ChipModel chip = single_device(0.01, 0.01);
    CalibrationOptions o;
    o.power_floor = 1e3;
    CHECK_THROWS_AS(Calibrator(chip, o).calibrate_theta(0), CalibrationError);
  }
}

TEST_CASE("calibrate_splitters") {
  SUBCASE("visibility of balanced inputs in cross") {
    ChipModel chip = single_device(0.025, 0.015);
    Calibrator cal(chip);
    cal.calibrate_theta(0);
    cal.calibrate_splitters(0);
    CHECK(cal.device(0).visibility_cross_top == doctest::Approx(std::sin(0.08)).epsilon(1e-9));
    CHECK(cal.device(0).visibility_cross_top == doctest::Approx(0.0799).epsilon(1e-3));
  }
  SUBCASE("visibility inversion recovers magnitudes and zeta") {
    for (double zeta : {0.3, 1.0, 1.7}) {
      const double s = 0.037, d = 0.012;
      auto vis_a = [&](double x, double c2) { return zeta * std::sin(2 * x) / (1 + (zeta * zeta - 1) * c2); };
      const double ct = vis_a(s, std::pow(std::cos(s), 2)), cb = vis_a(s, std::pow(std::sin(s), 2));
      const double bt = vis_a(d, std::pow(std::sin(d), 2)), bb = vis_a(d, std::pow(std::cos(d), 2));
      const auto sol = solve_visibilities(ct, cb, bt, bb);
      CHECK(sol.sum == doctest::Approx(s).epsilon(1e-12));
      CHECK(sol.diff == doctest::Approx(d).epsilon(1e-12));
      CHECK(sol.zeta_cross == doctest::Approx(zeta).epsilon(1e-12));
      CHECK(sol.zeta_bar == doctest::Approx(zeta).epsilon(1e-12));
    }
  }
  SUBCASE("random errors and unbalanced inputs, signs included") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> g(0, 0.03);
    for (int t = 0; t < 20; ++t) {
      const double a = g(rng), b = g(rng);
      ChipModel chip = single_device(a, b, Layout::Rectangular, 100 + t);
      CalibrationOptions o;
      o.second_port_weight = std::polar(0.4 + 0.05 * t, 0.3 * t);
      Calibrator cal(chip, o);
      cal.calibrate_theta(0);
      const auto e = cal.calibrate_splitters(0);
      CHECK(std::abs(e.alpha - a) < 1e-6);
      CHECK(std::abs(e.beta - b) < 1e-6);
    }
  }
  SUBCASE("ideal splitters show no interference") {
    ChipModel chip = single_device(0, 0);
    Calibrator cal(chip);
    cal.calibrate_theta(0);
    const auto e = cal.calibrate_splitters(0);
    CHECK(std::abs(e.alpha) < 1e-12);
    CHECK(std::abs(e.beta) < 1e-12);
    CHECK(cal.device(0).visibility_cross_top < 1e-12);
    CHECK(cal.device(0).visibility_bar_top < 1e-12);
    CHECK_FALSE(cal.device(0).sum_sign_resolved);
  }
  SUBCASE("extinction ratio with one input dark") {
    ChipModel chip = single_device(0.02, 0.01, Layout::Triangular);
    Calibrator cal(chip);
    cal.calibrate_theta(0, ThetaMethod::Direct);
    const auto e = cal.calibrate_splitters(0);
    const double er = std::pow(std::cos(0.01), 2) / std::pow(std::sin(0.03), 2);
    CHECK(er == doctest::Approx(1111.33).epsilon(1e-5));
    CHECK(10 * std::log10(er) == doctest::Approx(30.46).epsilon(1e-3));
    CHECK(cal.device(0).extinction_top == doctest::Approx(er).epsilon(1e-9));
    CHECK(std::abs(e.alpha - 0.02) < 1e-9);
    CHECK(std::abs(e.beta - 0.01) < 1e-9);
  }
  SUBCASE("equal errors: bottom extinction unbounded") {
    const auto [sum, diff] = solve_extinction(std::pow(std::cos(0.0), 2) / std::pow(std::sin(0.04), 2), INFINITY);
    CHECK(sum == doctest::Approx(0.04).epsilon(1e-12));
    CHECK(diff == 0.0);
    ChipModel chip = single_device(0.02, 0.02, Layout::Triangular);
    Calibrator cal(chip);
    cal.calibrate_theta(0, ThetaMethod::Direct);
    const auto e = cal.calibrate_splitters(0);
    CHECK(std::abs(e.alpha - e.beta) < 1e-7);
    CHECK(std::abs(e.alpha - 0.02) < 1e-7);
  }
}

TEST_CASE("calibrate_phi") {
  SUBCASE("ideal device: cross/bar field phase difference") {
    ChipModel chip = single_device(0, 0);
    const auto& t = chip.truth();
    const double zeta = 0.6, psi = 0.9;
    CVector x(2);
    x << 1.0, std::polar(zeta, psi);
    chip.set_voltage(0, Shifter::Phi, t.phi_maps[0].voltage_for(psi));
    chip.set_voltage(0, Shifter::Theta, t.theta_maps[0].voltage_for(0.0));
    const cd cross = measure(chip, x, 0, MeasureKind::Field);
    chip.set_voltage(0, Shifter::Theta, t.theta_maps[0].voltage_for(kPi));
    const cd bar = measure(chip, x, 0, MeasureKind::Field);
    const double predicted = std::atan2(zeta, 0.0) - std::atan2(0.0, -1.0);
    CHECK(std::abs(wrap_pi(std::arg(cross) - std::arg(bar) - predicted)) < 1e-12);
    CHECK(std::abs(wrap_pi(std::arg(cross) - psi - std::atan2(zeta, 0.0))) < 1e-12);
  }
  SUBCASE("recovered reference matches the hidden relative input phase") {
    std::mt19937_64 rng(23);
    std::normal_distribution<double> g(0, 0.03);
    std::uniform_real_distribution<double> ph(-kPi, kPi);
    for (int t = 0; t < 20; ++t) {
      ChipModel chip = single_device(g(rng), g(rng), Layout::Rectangular, 200 + t);
      const double psi = ph(rng);
      CalibrationOptions o;
      o.second_port_weight = std::polar(0.8, psi);
      const auto rec = Calibrator(chip, o).calibrate_mesh();
      const auto& c = rec.devices[0];
      CHECK(std::abs(wrap_pi(chip.truth().phi_maps[0].phase(std::sqrt(c.u_psi)) - psi)) < 1e-8);
      CHECK(std::abs(wrap_pi(c.phi_map.delta - chip.truth().phi_maps[0].delta)) < 1e-8);
      CHECK(std::abs(c.phase_consistency) < 1e-9);
    }
  }
  SUBCASE("detector phase noise of 1 mrad") {
    double worst = 0;
    for (int t = 0; t < 100; ++t) {
      ChipModel chip = make_chip(2, Layout::Rectangular, 1000 + t, {0.0, 1e-3});
      const auto rec = calibrate_mesh(chip);
      worst = std::max(worst, std::abs(wrap_pi(rec.devices[0].phi_map.delta - chip.truth().phi_maps[0].delta)));
    }
    CHECK(worst < 5e-3);
  }
}

TEST_CASE("calibrate_mesh") {
  SUBCASE("N=2 is the single-device protocol") {
    ChipModel chip = make_chip(2, Layout::Rectangular, 31);
    const auto rec = calibrate_mesh(chip);
    REQUIRE(rec.devices.size() == 1);
    const auto dev = compare(rec, chip.truth());
    CHECK(dev.splitter < 1e-10);
    CHECK(dev.phi_delta < 1e-10);
  }
  SUBCASE("N=8 round trip and programming") {
    for (std::uint64_t seed : {1, 2}) {
      ChipModel chip = make_chip(8, Layout::Rectangular, seed);
      const auto rec = calibrate_mesh(chip);
      const auto dev = compare(rec, chip.truth());
      CHECK(dev.splitter < 1e-5);
      CHECK(dev.theta_delta < 1e-5);
      CHECK(dev.phi_delta < 1e-5);
      CHECK(dev.theta_kappa < 1e-8);
      CHECK(dev.phi_kappa < 1e-8);
      CHECK(rec.gauge_residual < 1e-8);

      const CMatrix U = haar_random_unitary(8, 40 + seed);
      const auto rep = program_chip(chip, rec, decompose(U, Layout::Rectangular).program);
      REQUIRE(rep.n_clipped == 0);
      CHECK(matrix_error(chip.truth_unitary(), U) < 1e-6);
    }
  }
  SUBCASE("needs coherent detection") {
    ChipConfig cfg;
    cfg.n = 4;
    cfg.detectors = DetectorKind::Intensity;
    ChipModel chip = ChipModel::random(cfg);
    CHECK_THROWS_AS(calibrate_mesh(chip), CapabilityError);
  }
}

TEST_CASE("calibrate_reck") {
  SUBCASE("N=8 round trip and programming") {
    for (std::uint64_t seed : {1, 2}) {
      ChipModel chip = make_chip(8, Layout::Triangular, seed);
      const auto rec = calibrate_reck(chip);
      const auto dev = compare(rec, chip.truth());
      CHECK(dev.splitter < 1e-5);
      CHECK(dev.theta_delta < 1e-5);
      CHECK(dev.phi_delta < 1e-5);
      for (int p = 0; p < 8; ++p)
        CHECK(rec.responsivity[p] ==
              doctest::Approx(chip.truth().responsivity[p] / chip.truth().responsivity[7]).epsilon(1e-8));

      const CMatrix U = haar_random_unitary(8, 60 + seed);
      const auto rep = program_chip(chip, rec, decompose(U, Layout::Triangular).program);
      REQUIRE(rep.n_clipped == 0);
      CHECK(matrix_error(chip.truth_unitary(), U) < 1e-6);
    }
  }
  SUBCASE("splitter estimates do not depend on detector responsivity") {
    ChipModel a = make_chip(5, Layout::Triangular, 9);
    ChipTruth t = a.truth();
    for (auto& r : t.responsivity) r = 1.7 - r;
    ChipModel b(a.topology(), t, DetectorKind::Intensity, a.v_max(), a.kappa_nominal());
    const auto ra = calibrate_reck(a), rb = calibrate_reck(b);
    for (std::size_t i = 0; i < ra.devices.size(); ++i) {
      CHECK(ra.devices[i].alpha_hat == doctest::Approx(rb.devices[i].alpha_hat).epsilon(1e-9).scale(1e-9));
      CHECK(ra.devices[i].beta_hat == doctest::Approx(rb.devices[i].beta_hat).epsilon(1e-9).scale(1e-9));
    }
  }
  SUBCASE("LO distribution failure") {
    ChipModel chip = make_chip(4, Layout::Triangular, 5, {1e-3, 0.0});
    CalibrationOptions o;
    o.lo_tolerance = 1e-9;
    CHECK_THROWS_AS(calibrate_reck(chip, o), CalibrationError);
  }
  SUBCASE("layout checks") {
    ChipModel rect = make_chip(3, Layout::Rectangular, 1);
    CHECK_THROWS_AS(calibrate_reck(rect), std::invalid_argument);
  }
  SUBCASE("error grows no faster than linearly with intensity noise") {
    const std::vector<double> sigmas{0.001, 0.0025, 0.005, 0.01};
    std::vector<double> med;
    for (double s : sigmas) {
      std::vector<double> errs;
      for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        ChipModel chip = make_chip(4, Layout::Triangular, seed, {s, 0.0});
        errs.push_back(compare(calibrate_reck(chip), chip.truth()).splitter);
      }
      std::nth_element(errs.begin(), errs.begin() + 10, errs.end());
      med.push_back(errs[10]);
    }
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < sigmas.size(); ++i) {
      const double x = std::log(sigmas[i]), y = std::log(med[i]);
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    const double n = static_cast<double>(sigmas.size());
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    MESSAGE("log-log slope of median splitter error vs sigma_I: " << slope);
    CHECK(slope < 1.1);
    CHECK(med.back() < 0.01);
  }
}

TEST_CASE("calibration record export") {
  ChipModel chip = make_chip(4, Layout::Rectangular, 8);
  const auto rec = calibrate_mesh(chip);
  const json j = record_to_json(rec);
  CHECK(j["devices"].size() == rec.devices.size());
  CHECK(j["layout"] == "rectangular");
  const ErrorMap em = rec.error_map();
  ErrorMap back;
  program_from_json(program_to_json(make_program(chip.topology()), &em), &back);
  REQUIRE(back.size() == rec.devices.size());
  for (std::size_t i = 0; i < back.size(); ++i) CHECK(back[i].alpha == rec.devices[i].alpha_hat);
}
