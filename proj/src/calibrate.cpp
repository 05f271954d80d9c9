#include "meshfix/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include <boost/math/tools/minima.hpp>

#include "meshfix/correct.hpp"

namespace meshfix {

namespace {

}  // namespace

// a + b·cos(ku) + c·sin(ku)
struct Fit {
  double k = 0, a = 0, b = 0, c = 0;
  double amplitude() const { return std::hypot(b, c); }
  double visibility() const { return a > 0 ? amplitude() / a : 0.0; }
  double peak() const { return wrap_2pi(std::atan2(c, b)) / k; }
  double operator()(double u) const { return a + b * std::cos(k * u) + c * std::sin(k * u); }
};

namespace {

Fit fit_samples(const std::vector<double>& u, const std::vector<double>& v, double k) {
  const int n = static_cast<int>(u.size());
  Eigen::MatrixXd A(n, 3);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    A(i, 0) = 1.0;
    A(i, 1) = std::cos(k * u[i]);
    A(i, 2) = std::sin(k * u[i]);
    y(i) = v[i];
  }
  const Eigen::Vector3d x = A.colPivHouseholderQr().solve(y);
  return {k, x(0), x(1), x(2)};
}

std::vector<double> fit_grid(double U, int n) {
  std::vector<double> u(n);
  for (int i = 0; i < n; ++i) u[i] = U * (i + 0.5) / n;
  return u;
}

double brent(const std::function<double(double)>& f, double lo, double hi) {
  std::uintmax_t iters = 200;
  return boost::math::tools::brent_find_minima(f, lo, hi, std::numeric_limits<double>::digits / 2, iters).first;
}

double residual(const std::vector<double>& u, const std::vector<double>& v, const Fit& f) {
  double r = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double e = v[i] - f.a - f.b * std::cos(f.k * u[i]) - f.c * std::sin(f.k * u[i]);
    r += e * e;
  }
  return r;
}

// Full sinusoid fit with unknown angular frequency in [k_lo, k_hi]: grid and
// Brent on the projected residual, then Gauss-Newton on all four parameters.
Fit fit_sweep(const std::vector<double>& u, const std::vector<double>& v, double k_lo, double k_hi) {
  auto proj = [&](double k) { return residual(u, v, fit_samples(u, v, k)); };
  const int grid = 121;
  const double dk = (k_hi - k_lo) / (grid - 1);
  int best = 0;
  double rbest = INFINITY;
  for (int i = 0; i < grid; ++i) {
    const double r = proj(k_lo + i * dk);
    if (r < rbest) {
      rbest = r;
      best = i;
    }
  }
  const double k0 = k_lo + best * dk;
  Fit f = fit_samples(u, v, brent(proj, std::max(k0 - dk, 0.5 * k_lo), k0 + dk));
  const int n = static_cast<int>(u.size());
  for (int it = 0; it < 10; ++it) {
    Eigen::MatrixXd J(n, 4);
    Eigen::VectorXd r(n);
    for (int i = 0; i < n; ++i) {
      const double cs = std::cos(f.k * u[i]), sn = std::sin(f.k * u[i]);
      J(i, 0) = 1.0;
      J(i, 1) = cs;
      J(i, 2) = sn;
      J(i, 3) = u[i] * (f.c * cs - f.b * sn);
      r(i) = v[i] - f.a - f.b * cs - f.c * sn;
    }
    const Eigen::Vector4d step = J.colPivHouseholderQr().solve(r);
    Fit g{f.k + step(3), f.a + step(0), f.b + step(1), f.c + step(2)};
    if (!(residual(u, v, g) <= residual(u, v, f))) break;
    f = g;
    if (std::abs(step(3)) < 1e-15 * f.k) break;
  }
  return f;
}

// Representative of u modulo the period inside [P/4, 5P/4).
double interior(double u, double period) {
  double r = std::fmod(u - 0.25 * period, period);
  if (r < 0) r += period;
  return r + 0.25 * period;
}

// Phase of φ − ψ that maximizes top power at θ = π/2, negated.
double half_bar_reference(double alpha, double beta) {
  const Mat2 t = splitter(beta) * phase_top(kPi / 2) * splitter(alpha);
  return std::arg(t(0, 0) * std::conj(t(0, 1)));
}

double magnitude_large(double vis) {  // larger root of x + 1/x = 2/vis
  const double p = 1.0 / vis;
  return p + std::sqrt(std::max(p * p - 1.0, 0.0));
}

}  // namespace

VisibilitySolution solve_visibilities(double cross_top, double cross_bottom, double bar_top, double bar_bottom,
                                      double floor) {
  VisibilitySolution s;
  auto solve = [&](double vx, double vy, double& mag, double& zeta) {
    if (vx < floor || vy < floor) {
      mag = 0.0;
      zeta = std::numeric_limits<double>::quiet_NaN();
      return;
    }
    const double X = magnitude_large(vx);        // ζ / tan|x|
    const double Y = 1.0 / magnitude_large(vy);  // ζ·tan|x|
    zeta = std::sqrt(X * Y);
    mag = std::atan(std::sqrt(Y / X));
  };
  solve(cross_top, cross_bottom, s.sum, s.zeta_cross);
  solve(bar_bottom, bar_top, s.diff, s.zeta_bar);
  return s;
}

std::pair<double, double> solve_extinction(double er_top, double er_bottom) {
  const double et = 1.0 / er_top, eb = 1.0 / er_bottom;
  const double den = 1.0 - et * eb;
  const double a = std::clamp(et * (1 - eb) / den, 0.0, 1.0);
  const double b = std::clamp(eb * (1 - et) / den, 0.0, 1.0);
  return {std::asin(std::sqrt(a)), std::asin(std::sqrt(b))};
}

ErrorMap CalibrationRecord::error_map() const {
  ErrorMap e;
  e.reserve(devices.size());
  for (const auto& d : devices) e.push_back({d.alpha_hat, d.beta_hat});
  return e;
}

json record_to_json(const CalibrationRecord& r) {
  const Topology topo = make_topology(r.n, r.layout);
  json devs = json::array();
  for (const auto& d : r.devices) {
    const auto& p = topo.mzis.at(d.device);
    devs.push_back({{"device", d.device},
                    {"col", p.col},
                    {"top_mode", p.top_mode},
                    {"alpha", d.alpha_hat},
                    {"beta", d.beta_hat},
                    {"theta_map", {{"kappa", d.theta_map.kappa}, {"delta", d.theta_map.delta}}},
                    {"phi_map", {{"kappa", d.phi_map.kappa}, {"delta", d.phi_map.delta}}},
                    {"zeta", d.zeta},
                    {"visibility",
                     {d.visibility_cross_top, d.visibility_cross_bottom, d.visibility_bar_top,
                      d.visibility_bar_bottom}},
                    {"extinction", {d.extinction_top, d.extinction_bottom}},
                    {"output_gauge", d.output_gauge},
                    {"phase_consistency", d.phase_consistency},
                    {"signs_resolved", {d.sum_sign_resolved, d.diff_sign_resolved}}});
  }
  return {{"n", r.n},
          {"layout", to_string(r.layout)},
          {"gauge_residual", r.gauge_residual},
          {"responsivity", r.responsivity},
          {"devices", devs}};
}

Calibrator::Calibrator(ChipInterface& chip, CalibrationOptions opts)
    : chip_(chip), opt_(opts), topo_(chip.topology()) {
  u_max_ = chip_.v_max() * chip_.v_max();
  kappa_nom_ = chip_.kappa_nominal();
  const auto m = topo_.mzis.size();
  cal_.resize(m);
  for (std::size_t i = 0; i < m; ++i) cal_[i].device = static_cast<int>(i);
  theta_done_.assign(m, 0);
  split_done_.assign(m, 0);
  phi_done_.assign(m, 0);
  kappa_phi_.assign(m, 0.0);
  u_peak_.assign(m, 0.0);
  u_theta_.assign(m, 0.0);
  u_phi_.assign(m, 0.0);
  resp_.assign(topo_.n, 1.0);
  frame_ = topo_.layout == Layout::Triangular ? Frame::Direct : Frame::Coherent;
}

void Calibrator::set_u(int d, Shifter s, double u) {
  u = std::clamp(u, 0.0, u_max_);
  chip_.set_voltage(d, s, std::sqrt(u));
  (s == Shifter::Theta ? u_theta_ : u_phi_)[d] = u;
}

double Calibrator::theta_u(int d, double theta) const {
  const ShifterMap& m = cal_[d].theta_map;
  return wrap_2pi(theta - m.delta) / m.kappa;
}

void Calibrator::route(int d) {
  const double cross = 0.0, bar = kPi / kappa_nom_;
  const auto& here = topo_.mzis[d];
  const int k = topo_.layout == Layout::Triangular ? triangular_diagonal(topo_.n, here) : 0;
  for (int i = 0; i < d; ++i) {
    double u = bar;
    if (topo_.layout == Layout::Triangular) {
      const int ki = triangular_diagonal(topo_.n, topo_.mzis[i]);
      const int mi = topo_.mzis[i].top_mode;
      if (ki == k || (ki == k + 1 && mi <= here.top_mode)) u = cross;
    }
    set_u(i, Shifter::Theta, u);
    set_u(i, Shifter::Phi, 0.0);
  }
}

CVector Calibrator::probe(int d, bool two_input) const {
  const auto& p = topo_.mzis[d];
  const int top = topo_.layout == Layout::Triangular ? triangular_diagonal(topo_.n, p) : p.top_mode;
  CVector x = CVector::Zero(topo_.n);
  x(top) = 1.0;
  x(top + 1) = two_input ? opt_.second_port_weight : opt_.dark_port_leak;
  return x;
}

Mat2 Calibrator::model(int d) const {
  const auto& c = cal_[d];
  Mat2 g = Mat2::Identity();
  g(1, 1) = std::polar(1.0, c.output_gauge);
  return g * imperfect_mzi(c.theta_map.kappa * u_theta_[d] + c.theta_map.delta,
                           c.phi_map.kappa * u_phi_[d] + c.phi_map.delta, c.alpha_hat, c.beta_hat);
}

void Calibrator::back_propagate(CVector& z, int d) const {
  for (int i = topo_.size() - 1; i > d; --i) {
    if (frame_ == Frame::Homodyne && triangular_diagonal(topo_.n, topo_.mzis[i]) == 0) continue;
    if (!phi_done_[i]) throw std::logic_error("later devices must be calibrated first");
    const int m = topo_.mzis[i].top_mode;
    const Mat2 Ti = model(i).adjoint();
    const cd a = z(m), b = z(m + 1);
    z(m) = Ti(0, 0) * a + Ti(0, 1) * b;
    z(m + 1) = Ti(1, 0) * a + Ti(1, 1) * b;
  }
}

Calibrator::Obs Calibrator::observe(int d, const CVector& input) {
  const int m = topo_.mzis[d].top_mode;
  Obs o;
  CVector z;
  switch (frame_) {
    case Frame::Coherent:
      chip_.set_input(input);
      z = chip_.measure_fields();
      break;
    case Frame::Direct: {
      chip_.set_input(input);
      const auto I = chip_.measure_intensities();
      o.top = I[m];
      for (int p = m + 1; p < topo_.n; ++p) o.bottom += I[p] / resp_[p];
      o.zt = o.zb = cd(std::numeric_limits<double>::quiet_NaN(), 0.0);
      return o;
    }
    case Frame::Homodyne: {
      chip_.set_input(input);
      const auto Is = chip_.measure_intensities();
      CVector x = input;
      x(0) += 1.0;
      chip_.set_input(x);
      const auto I0 = chip_.measure_intensities();
      x(0) = input(0) + kI;
      chip_.set_input(x);
      const auto I1 = chip_.measure_intensities();
      CVector b(topo_.n);
      for (int i = 0; i < topo_.n; ++i) {
        const cd rho = cd(I0[i] - lo_power_[i] - Is[i], I1[i] - lo_power_[i] - Is[i]) / (2 * lo_power_[i]);
        b(i) = lo_model_(i) * rho;
      }
      z = m0_inv_ * b;
      break;
    }
  }
  back_propagate(z, d);
  o.zt = z(m);
  o.zb = z(m + 1);
  o.top = std::norm(o.zt);
  o.bottom = std::norm(o.zb);
  return o;
}

double Calibrator::top_power(int d, const CVector& in) { return observe(d, in).top; }

Fit Calibrator::sweep(const std::function<double(double)>& f) const {
  const auto u = fit_grid(u_max_, opt_.coarse_points);
  std::vector<double> v;
  v.reserve(u.size());
  for (double x : u) v.push_back(f(x));
  return fit_sweep(u, v, (1 - opt_.kappa_search) * kappa_nom_, (1 + opt_.kappa_search) * kappa_nom_);
}

void Calibrator::calibrate_kappa_phi(int d) {
  route(d);
  set_u(d, Shifter::Theta, theta_done_[d] ? theta_u(d, kPi / 2) : kPi / (2 * kappa_nom_));
  const CVector in = probe(d, true);
  kappa_phi_[d] = sweep([&](double u) {
                    set_u(d, Shifter::Phi, u);
                    return top_power(d, in);
                  }).k;
}

ShifterMap Calibrator::calibrate_theta(int d, ThetaMethod method, double phi_volts) {
  if (d < 0 || d >= topo_.size()) throw std::out_of_range("device out of range");
  if (method == ThetaMethod::PhiAveraged && kappa_phi_[d] == 0.0) calibrate_kappa_phi(d);
  route(d);
  const CVector in = probe(d, false);
  const auto grid = fit_grid(u_max_, opt_.fringe_points);
  std::function<double(double)> f;
  if (method == ThetaMethod::PhiAveraged) {
    f = [&](double u) {
      set_u(d, Shifter::Theta, u);
      std::vector<double> v;
      for (double up : grid) {
        set_u(d, Shifter::Phi, up);
        v.push_back(top_power(d, in));
      }
      return fit_samples(grid, v, kappa_phi_[d]).a;
    };
  } else {
    f = [&](double u) {
      set_u(d, Shifter::Theta, u);
      set_u(d, Shifter::Phi, phi_volts * phi_volts);
      return top_power(d, in);
    };
  }
  // ⟨P_top⟩ = C1 + C2·cos θ with its minimum at θ = 0.
  const Fit fit = sweep(f);
  if (fit.a + fit.amplitude() < opt_.power_floor)
    throw CalibrationError("insufficient optical power at device " + std::to_string(d));
  cal_[d].theta_map = {fit.k, wrap_2pi(kPi - std::atan2(fit.c, fit.b))};
  theta_done_[d] = 1;
  return cal_[d].theta_map;
}

SplitterErrors Calibrator::calibrate_splitters(int d) {
  if (!theta_done_[d]) throw std::logic_error("calibrate_theta must run first");
  if (kappa_phi_[d] == 0.0) calibrate_kappa_phi(d);
  const double kphi = kappa_phi_[d];
  auto& c = cal_[d];
  route(d);
  const CVector in2 = probe(d, true);
  const auto grid = fit_grid(u_max_, opt_.fringe_points);
  auto fringe = [&](double theta) {
    set_u(d, Shifter::Theta, theta_u(d, theta));
    std::vector<double> top, bottom;
    for (double u : grid) {
      set_u(d, Shifter::Phi, u);
      const Obs o = observe(d, in2);
      top.push_back(o.top);
      bottom.push_back(o.bottom);
    }
    return std::pair{fit_samples(grid, top, kphi), fit_samples(grid, bottom, kphi)};
  };

  const auto [half, half_b] = fringe(kPi / 2);
  (void)half_b;
  u_peak_[d] = half.peak();

  double sum = 0.0, diff = 0.0;
  Fit ct_fit, bt_fit;
  if (frame_ == Frame::Direct) {
    // One input dark: only the top detector sees this device alone, the
    // bottom output is the responsivity-weighted sum of the ports below.
    const CVector in1 = probe(d, false);
    set_u(d, Shifter::Phi, 0.0);
    set_u(d, Shifter::Theta, theta_u(d, 0.0));
    const Obs cross = observe(d, in1);
    set_u(d, Shifter::Theta, theta_u(d, kPi));
    const Obs bar = observe(d, in1);
    c.extinction_top = bar.top / cross.top;
    c.extinction_bottom = cross.bottom / bar.bottom;
    std::tie(sum, diff) = solve_extinction(c.extinction_top, c.extinction_bottom);
    if (sum < std::sqrt(opt_.min_visibility)) sum = 0.0;
    if (diff < std::sqrt(opt_.min_visibility)) diff = 0.0;
    set_u(d, Shifter::Theta, theta_u(d, kPi / 2));
    const Obs split = observe(d, in1);
    const double f = (std::pow(std::cos(diff), 2) + std::pow(std::sin(sum), 2)) / 2;
    const int m = topo_.mzis[d].top_mode;
    resp_[m] = split.top * (1 - f) / (f * split.bottom);
  } else {
    const auto [ct, cb] = fringe(0.0);
    const auto [bt, bb] = fringe(kPi);
    ct_fit = ct;
    bt_fit = bt;
    c.visibility_cross_top = ct.visibility();
    c.visibility_cross_bottom = cb.visibility();
    c.visibility_bar_top = bt.visibility();
    c.visibility_bar_bottom = bb.visibility();
    const auto s = solve_visibilities(c.visibility_cross_top, c.visibility_cross_bottom, c.visibility_bar_top,
                                      c.visibility_bar_bottom, opt_.min_visibility);
    sum = s.sum;
    diff = s.diff;
    c.zeta = std::isnan(s.zeta_cross) ? s.zeta_bar : s.zeta_cross;
  }

  // Signs: near φ = ψ the top output in cross falls with φ when α+β > 0
  // and in bar rises with φ when α−β > 0. The finite difference is taken on
  // the fitted fringe so that every sample of the sweep contributes.
  const double period = 2 * kPi / kphi;
  const double us = interior(u_peak_[d] + half_bar_reference((sum + diff) / 2, (sum - diff) / 2) / kphi, period);
  const double dv = opt_.sign_step * std::sqrt(kPi / kphi);
  auto slope = [&](const Fit& f) {
    const double v = std::sqrt(us);
    return f((v + dv) * (v + dv)) - f((v - dv) * (v - dv));
  };
  const Fit cross_top = frame_ == Frame::Direct ? fringe(0.0).first : ct_fit;
  const Fit bar_top = frame_ == Frame::Direct ? fringe(kPi).first : bt_fit;
  c.sum_sign_resolved = sum > 0;
  c.diff_sign_resolved = diff > 0;
  if (sum > 0 && slope(cross_top) > 0) sum = -sum;
  if (diff > 0 && slope(bar_top) < 0) diff = -diff;

  c.alpha_hat = (sum + diff) / 2;
  c.beta_hat = (sum - diff) / 2;
  split_done_[d] = 1;
  return {c.alpha_hat, c.beta_hat};
}

ShifterMap Calibrator::calibrate_phi(int d) {
  if (!split_done_[d]) throw std::logic_error("calibrate_splitters must run first");
  auto& c = cal_[d];
  const double kphi = kappa_phi_[d];
  const double period = 2 * kPi / kphi;
  const double ustar = interior(u_peak_[d] + half_bar_reference(c.alpha_hat, c.beta_hat) / kphi, period);
  c.u_psi = ustar;
  c.phi_map = {kphi, wrap_2pi(-kphi * ustar)};
  c.output_gauge = 0.0;

  if (frame_ != Frame::Direct) {
    route(d);
    const CVector in = probe(d, true);
    set_u(d, Shifter::Phi, ustar);
    set_u(d, Shifter::Theta, theta_u(d, 0.0));
    const Obs cross = observe(d, in);
    set_u(d, Shifter::Theta, theta_u(d, kPi));
    const Obs bar = observe(d, in);
    const double s = c.alpha_hat + c.beta_hat, df = c.alpha_hat - c.beta_hat;
    const double cs = std::cos(s), sn = std::sin(s);
    const double q = std::norm(cross.zb) / std::norm(cross.zt);
    const double z2 = (cs * cs - q * sn * sn) / (q * cs * cs - sn * sn);
    const double zeta = std::sqrt(std::max(z2, 0.0));
    c.zeta = zeta;
    const cd pt(-sn, zeta * cs), pb(-zeta * sn, cs);
    c.output_gauge = wrap_pi(std::arg(cross.zb / cross.zt) - std::arg(pb / pt));
    const double predicted = std::atan2(-zeta * std::sin(df), -std::cos(df)) - std::atan2(zeta * cs, -sn);
    c.phase_consistency = wrap_pi(std::arg(bar.zt / cross.zt) - predicted);
  }
  set_u(d, Shifter::Theta, theta_u(d, kPi));
  set_u(d, Shifter::Phi, 0.0);
  phi_done_[d] = 1;
  return c.phi_map;
}

void Calibrator::setup_homodyne() {
  const int n = topo_.n;
  CMatrix M = CMatrix::Identity(n, n);
  for (int i = 0; i < topo_.size(); ++i) {
    const auto& p = topo_.mzis[i];
    if (triangular_diagonal(n, p) != 0) continue;
    const auto& c = cal_[i];
    const double ideal = 2 * std::asin(std::sqrt(1.0 / (n - p.top_mode)));
    set_u(i, Shifter::Theta, theta_u(i, correct_theta(ideal, {c.alpha_hat, c.beta_hat}).theta_prime));
    set_u(i, Shifter::Phi, 0.0);
    apply_rows(M, p.top_mode, model(i));
  }
  m0_inv_ = M.adjoint();
  lo_model_ = M.col(0);
  CVector lo = CVector::Zero(n);
  lo(0) = 1.0;
  chip_.set_input(lo);
  lo_power_ = chip_.measure_intensities();
  double mean = 0.0;
  for (int i = 0; i < n; ++i) mean += lo_power_[i] / resp_[i] / n;
  for (int i = 0; i < n; ++i)
    if (std::abs(lo_power_[i] / resp_[i] / mean - 1.0) > opt_.lo_tolerance)
      throw CalibrationError("LO distribution failure at port " + std::to_string(i));
  frame_ = Frame::Homodyne;
}

void Calibrator::finish_inputs(CalibrationRecord& rec) {
  const int n = topo_.n;
  for (int i = 0; i < topo_.size(); ++i) {
    if (frame_ == Frame::Homodyne && triangular_diagonal(n, topo_.mzis[i]) == 0) continue;
    set_u(i, Shifter::Theta, theta_u(i, kPi / 2));
    set_u(i, Shifter::Phi, 0.0);
  }
  CMatrix M = CMatrix::Identity(n, n);
  for (int i = 0; i < topo_.size(); ++i) apply_rows(M, topo_.mzis[i].top_mode, model(i));

  // Ω_p: phase by which input p must be delayed to match the model frame.
  std::vector<double> omega(n, 0.0);
  if (topo_.layout == Layout::Rectangular) {
    const CMatrix Minv = M.adjoint();
    for (int p = 0; p < n; ++p) {
      CVector e = CVector::Zero(n);
      e(p) = 1.0;
      chip_.set_input(e);
      omega[p] = std::arg((Minv * chip_.measure_fields())(p));
    }
  } else {
    CVector e0 = CVector::Zero(n);
    e0(0) = 1.0;
    chip_.set_input(e0);
    const auto I0 = chip_.measure_intensities();
    for (int p = 1; p < n; ++p) {
      int best = 0;
      for (int i = 1; i < n; ++i)
        if (std::abs(M(i, 0) * M(i, p)) > std::abs(M(best, 0) * M(best, p))) best = i;
      CVector x = CVector::Zero(n);
      x(p) = 1.0;
      chip_.set_input(x);
      const double Ip = chip_.measure_intensities()[best];
      x(0) = 1.0;
      chip_.set_input(x);
      const double Ire = chip_.measure_intensities()[best];
      x(0) = kI;
      chip_.set_input(x);
      const double Iim = chip_.measure_intensities()[best];
      const cd ratio(Ire - I0[best] - Ip, Iim - I0[best] - Ip);
      omega[p] = std::arg(ratio) - std::arg(M(best, p) / M(best, 0));
    }
  }

  std::vector<double> acc = omega;
  for (int i = 0; i < topo_.size(); ++i) {
    const int m = topo_.mzis[i].top_mode;
    auto& c = cal_[i];
    c.phi_map.delta = wrap_2pi(c.phi_map.delta + acc[m] - acc[m + 1]);
    const double bottom = acc[m + 1];
    acc[m] = bottom;
    acc[m + 1] = bottom + c.output_gauge;
  }
  // Intensity detectors leave the output frame free, so only a coherent
  // chip has a residual to report.
  rec.gauge_residual = 0.0;
  if (topo_.layout == Layout::Rectangular)
    for (double a : acc) rec.gauge_residual = std::max(rec.gauge_residual, std::abs(wrap_pi(a)));
}

CalibrationRecord Calibrator::make_record() const {
  CalibrationRecord r;
  r.n = topo_.n;
  r.layout = topo_.layout;
  r.devices = cal_;
  if (topo_.layout == Layout::Triangular) r.responsivity = resp_;
  return r;
}

CalibrationRecord Calibrator::calibrate_mesh() {
  if (topo_.layout != Layout::Rectangular) throw std::invalid_argument("calibrate_mesh needs a rectangular mesh");
  for (int p = 0; p < topo_.n; ++p)
    if (chip_.detector(p) != DetectorKind::Coherent) throw CapabilityError("rectangular calibration needs coherent detection");
  frame_ = Frame::Coherent;
  for (int d = topo_.size() - 1; d >= 0; --d) {
    calibrate_kappa_phi(d);
    calibrate_theta(d);
    calibrate_splitters(d);
    calibrate_phi(d);
  }
  CalibrationRecord r = make_record();
  finish_inputs(r);
  r.devices = cal_;
  return r;
}

CalibrationRecord Calibrator::calibrate_reck() {
  if (topo_.layout != Layout::Triangular) throw std::invalid_argument("calibrate_reck needs a triangular mesh");
  frame_ = Frame::Direct;
  resp_.assign(topo_.n, 1.0);
  for (int d = topo_.size() - 1; d >= 0; --d) {
    const bool first_diagonal = triangular_diagonal(topo_.n, topo_.mzis[d]) == 0;
    if (!first_diagonal && frame_ == Frame::Direct) setup_homodyne();
    calibrate_kappa_phi(d);
    calibrate_theta(d, first_diagonal ? ThetaMethod::Direct : ThetaMethod::PhiAveraged);
    calibrate_splitters(d);
    calibrate_phi(d);
  }
  if (frame_ == Frame::Direct) setup_homodyne();
  CalibrationRecord r = make_record();
  finish_inputs(r);
  r.devices = cal_;
  return r;
}

CalibrationRecord calibrate_mesh(ChipInterface& chip, const CalibrationOptions& opts) {
  return Calibrator(chip, opts).calibrate_mesh();
}

CalibrationRecord calibrate_reck(ChipInterface& chip, const CalibrationOptions& opts) {
  return Calibrator(chip, opts).calibrate_reck();
}

}  // namespace meshfix

namespace meshfix {

CorrectionReport program_chip(ChipInterface& chip, const CalibrationRecord& rec, const MeshProgram& target) {
  if (rec.devices.size() != target.topology.mzis.size() || rec.n != target.topology.n)
    throw std::invalid_argument("calibration record does not match the target mesh");
  CorrectionReport rep = correct_mesh(target, rec.error_map());
  const auto& p = rep.corrected_program;
  for (std::size_t i = 0; i < p.settings.size(); ++i) {
    const auto& d = rec.devices[i];
    chip.set_voltage(static_cast<int>(i), Shifter::Theta, d.theta_map.voltage_for(p.settings[i].theta));
    chip.set_voltage(static_cast<int>(i), Shifter::Phi, d.phi_map.voltage_for(p.settings[i].phi));
  }
  chip.set_output_phases(p.output_phases);
  return rep;
}

}  // namespace meshfix
