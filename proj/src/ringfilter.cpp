#include "meshfix/ringfilter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include <gsl/gsl_multimin.h>

#include "meshfix/correct.hpp"
#include "meshfix/parallel.hpp"
#include "meshfix/rng.hpp"

namespace meshfix {

double IndexModel::wavenumber(double omega) const {
  const double w0 = omega0();
  return (n0 + (ng - n0) * (omega - w0) / w0) * omega / kSpeedOfLight;
}

double loop_length_for_fsr(const IndexModel& m, double z1, double fsr_hz) {
  return kSpeedOfLight / (m.ng * fsr_hz) - z1;
}

double loop_amplitude(const RingSpec& r) {
  double a = r.a;
  for (const auto& t : r.bar_tbus) a *= std::cos(t.alpha - t.beta);
  return a;
}

namespace {

constexpr double kDefaultFsr = 100e9;

Mat2 coupler(double x) {
  const double c = std::cos(kPi / 4 + x), s = std::sin(kPi / 4 + x);
  Mat2 m;
  m << c, s, -s, c;
  return m;
}

Mat2 ring_coupler(double theta, const SplitterErrors& e) {
  Mat2 mid = Mat2::Identity();
  mid(1, 1) = std::polar(1.0, theta);
  return coupler(e.beta) * mid * coupler(e.alpha);
}

double loop_z2(const RingSpec& r, const IndexModel& m) {
  return r.z2 > 0 ? r.z2 : loop_length_for_fsr(m, r.z1, kDefaultFsr);
}

void validate(const RingSpec& r) {
  if (!(r.a > 0 && r.a <= 1)) throw std::invalid_argument("ring amplitude must lie in (0, 1]");
  if (!(r.z1 > 0) || r.z2 < 0) throw std::invalid_argument("ring lengths must be positive");
}

}  // namespace

cd ring_response(const RingSpec& r, const IndexModel& m, double omega) {
  validate(r);
  const double k = m.wavenumber(omega);
  const Mat2 M = ring_coupler(r.theta, r.errors) * std::polar(1.0, k * r.z1);
  const cd g = std::polar(loop_amplitude(r), k * loop_z2(r, m) + r.phi);
  // Conjugated so that propagation reads e^{−iωt}: delays come out positive
  // under τ = −d arg T/dω.
  return std::conj(M(0, 0) + M(0, 1) * g * M(1, 0) / (1.0 - g * M(1, 1)));
}

std::vector<cd> array_response(const RingArraySpec& s, const std::vector<double>& omega) {
  if (s.rings.empty()) throw std::invalid_argument("ring array is empty");
  std::vector<cd> t(omega.size(), cd(1.0));
  for (const auto& r : s.rings)
    for (std::size_t i = 0; i < omega.size(); ++i) t[i] *= ring_response(r, s.index, omega[i]);
  return t;
}

std::vector<double> group_delay(const std::vector<cd>& response, const std::vector<double>& omega) {
  const std::size_t n = response.size();
  if (n < 2 || omega.size() != n) throw std::invalid_argument("group delay needs two or more aligned samples");
  std::vector<double> ph(n);
  ph[0] = std::arg(response[0]);
  for (std::size_t i = 1; i < n; ++i) {
    const double step = std::arg(response[i] / response[i - 1]);
    if (std::abs(step) > 0.9 * kPi)
      throw std::invalid_argument("frequency grid too coarse to unwrap the phase");
    ph[i] = ph[i - 1] + step;
  }
  std::vector<double> tau(n);
  tau[0] = -(ph[1] - ph[0]) / (omega[1] - omega[0]);
  tau[n - 1] = -(ph[n - 1] - ph[n - 2]) / (omega[n - 1] - omega[n - 2]);
  for (std::size_t i = 1; i + 1 < n; ++i) tau[i] = -(ph[i + 1] - ph[i - 1]) / (omega[i + 1] - omega[i - 1]);
  return tau;
}

GddFit fit_gdd(const std::vector<double>& tau, const std::vector<double>& lambda_nm) {
  const std::size_t n = tau.size();
  if (n < 2 || lambda_nm.size() != n) throw std::invalid_argument("fit needs two or more aligned samples");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += lambda_nm[i];
    my += tau[i] * 1e12;
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (lambda_nm[i] - mx) * (lambda_nm[i] - mx);
    sxy += (lambda_nm[i] - mx) * (tau[i] * 1e12 - my);
  }
  if (sxx <= 0) throw std::invalid_argument("wavelength grid is degenerate");
  GddFit f;
  f.gdd = sxy / sxx;
  f.offset = my - f.gdd * mx;
  double ss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = tau[i] * 1e12 - (f.offset + f.gdd * lambda_nm[i]);
    ss += r * r;
  }
  f.residual = std::sqrt(ss / n);
  return f;
}

std::vector<double> channel_grid(const Channel& c, int points) {
  if (points < 2) throw std::invalid_argument("channel grid needs two or more points");
  std::vector<double> w(points);
  const double f0 = c.center_hz - c.bandwidth_hz / 2;
  for (int i = 0; i < points; ++i) w[i] = 2 * kPi * (f0 + c.bandwidth_hz * i / (points - 1));
  return w;
}

std::vector<double> to_lambda_nm(const std::vector<double>& omega) {
  std::vector<double> l(omega.size());
  for (std::size_t i = 0; i < omega.size(); ++i) l[i] = 2 * kPi * kSpeedOfLight / omega[i] * 1e9;
  return l;
}

namespace {

// Indices of the samples inside the central fit window.
std::pair<std::size_t, std::size_t> fit_window(const Channel& c, const std::vector<double>& omega) {
  const double half = c.bandwidth_hz * std::clamp(c.fit_fraction, 0.0, 1.0) / 2;
  const double lo = 2 * kPi * (c.center_hz - half) * (1 - 1e-12), hi = 2 * kPi * (c.center_hz + half) * (1 + 1e-12);
  std::size_t b = 0, e = omega.size();
  while (b < e && omega[b] < lo) ++b;
  while (e > b && omega[e - 1] > hi) --e;
  if (e - b < 2) throw std::invalid_argument("fit window holds fewer than two samples");
  return {b, e};
}

}  // namespace

GddProfile evaluate_gdd(const RingArraySpec& s, int points) {
  GddProfile p;
  p.omega = channel_grid(s.channel, points);
  p.lambda_nm = to_lambda_nm(p.omega);
  p.response = array_response(s, p.omega);
  p.tau = group_delay(p.response, p.omega);
  const auto [b, e] = fit_window(s.channel, p.omega);
  p.fit = fit_gdd({p.tau.begin() + b, p.tau.begin() + e}, {p.lambda_nm.begin() + b, p.lambda_nm.begin() + e});
  return p;
}

RingArraySpec default_array(int n_rings) {
  if (n_rings < 1) throw std::invalid_argument("need at least one ring");
  RingArraySpec s;
  RingSpec r;
  r.z2 = loop_length_for_fsr(s.index, r.z1, kDefaultFsr);
  r.theta = kPi;
  s.rings.assign(n_rings, r);
  return s;
}

namespace {

struct Objective {
  RingArraySpec spec;
  std::vector<double> omega, lambda;
  std::size_t b = 0, e = 0;
  double target = 0;
  double margin = 0;
  int evaluations = 0;

  // θ sweeps [margin, π − margin] as x winds, so the simplex needs no bounds.
  void load(const double* x) {
    for (std::size_t i = 0; i < spec.rings.size(); ++i) {
      spec.rings[i].theta = margin + (kPi - 2 * margin) * (1 - std::cos(x[2 * i])) / 2;
      spec.rings[i].phi = x[2 * i + 1];
    }
  }

  // Variance of τ − target·λ over the window, ps².
  double mse(const double* x) {
    ++evaluations;
    load(x);
    std::vector<double> tau;
    try {
      tau = group_delay(array_response(spec, omega), omega);
    } catch (const std::invalid_argument&) {
      return 1e12;
    }
    double mean = 0;
    for (std::size_t i = b; i < e; ++i) mean += tau[i] * 1e12 - target * lambda[i];
    mean /= double(e - b);
    double ss = 0;
    for (std::size_t i = b; i < e; ++i) {
      const double r = tau[i] * 1e12 - target * lambda[i] - mean;
      ss += r * r;
    }
    return ss / double(e - b);
  }
};

double gsl_objective(const gsl_vector* v, void* params) {
  return static_cast<Objective*>(params)->mse(v->data);
}

struct Attempt {
  std::vector<double> x;
  double mse = std::numeric_limits<double>::infinity();
  int evaluations = 0;
};

Attempt run_simplex(Objective obj, std::vector<double> x0, int budget) {
  const std::size_t n = x0.size();
  gsl_multimin_function f{&gsl_objective, n, &obj};
  gsl_vector* x = gsl_vector_alloc(n);
  gsl_vector* step = gsl_vector_alloc(n);
  for (std::size_t i = 0; i < n; ++i) gsl_vector_set(x, i, x0[i]);
  Attempt best;
  gsl_multimin_fminimizer* s = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, n);
  // The simplex collapses long before the budget runs out; restarting it at
  // the current point with a fresh step recovers progress cheaply.
  double size = 0.5, prev = std::numeric_limits<double>::infinity();
  while (obj.evaluations < budget && size > 1e-6) {
    gsl_vector_set_all(step, size);
    gsl_multimin_fminimizer_set(s, &f, x, step);  // leaves s->fval stale
    while (obj.evaluations < budget) {
      if (gsl_multimin_fminimizer_iterate(s)) break;
      if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(s), 1e-7) == GSL_SUCCESS) break;
    }
    gsl_vector_memcpy(x, gsl_multimin_fminimizer_x(s));
    if (s->fval > prev * (1 - 1e-6)) size *= 0.25;
    prev = s->fval;
  }
  best.mse = s->fval;
  best.x.assign(x->data, x->data + n);
  best.evaluations = obj.evaluations;
  gsl_multimin_fminimizer_free(s);
  gsl_vector_free(step);
  gsl_vector_free(x);
  return best;
}

}  // namespace

TrainResult train_ideal(double target_gdd, const RingArraySpec& base, const TrainOptions& opts) {
  if (base.rings.empty()) throw std::invalid_argument("ring array is empty");
  if (opts.budget < 1000) throw std::invalid_argument("training budget must be at least 1000 evaluations");
  if (opts.restarts < 1) throw std::invalid_argument("need at least one restart");

  Objective obj;
  obj.spec = base;
  for (auto& r : obj.spec.rings) {
    r.errors = {};
    for (auto& t : r.bar_tbus) t = {};
  }
  obj.omega = channel_grid(base.channel, opts.grid_points);
  obj.lambda = to_lambda_nm(obj.omega);
  std::tie(obj.b, obj.e) = fit_window(base.channel, obj.omega);
  obj.target = target_gdd;
  obj.margin = std::clamp(opts.coupler_margin, 0.0, kPi / 2);

  const std::size_t n = 2 * base.rings.size();
  std::vector<Attempt> attempts(opts.restarts);
  parallel_for(opts.restarts, opts.threads, [&](std::size_t k) {
    std::mt19937_64 rng(derive_seed(opts.seed, {k}));
    std::uniform_real_distribution<double> u(0.0, 2 * kPi);
    std::vector<double> x0(n);
    for (auto& v : x0) v = u(rng);
    attempts[k] = run_simplex(obj, x0, opts.budget);
  });

  TrainResult res;
  res.spec = obj.spec;
  std::size_t pick = 0;
  bool found = false;
  for (std::size_t k = 0; k < attempts.size() && !found; ++k) {
    obj.load(attempts[k].x.data());
    const double g = evaluate_gdd(obj.spec, opts.grid_points).fit.gdd;
    if (std::abs(g - target_gdd) <= opts.tolerance) {
      pick = k;
      found = true;
    }
  }
  if (!found)
    for (std::size_t k = 1; k < attempts.size(); ++k)
      if (attempts[k].mse < attempts[pick].mse) pick = k;

  obj.load(attempts[pick].x.data());
  for (auto& r : obj.spec.rings) {
    r.theta = wrap_2pi(r.theta);
    r.phi = wrap_2pi(r.phi);
  }
  res.spec = obj.spec;
  res.gdd = evaluate_gdd(res.spec, opts.grid_points).fit.gdd;
  res.mse = attempts[pick].mse;
  res.converged = found;
  res.restarts_used = found ? int(pick) + 1 : opts.restarts;
  for (std::size_t k = 0; k < std::size_t(res.restarts_used); ++k) res.evaluations += attempts[k].evaluations;
  return res;
}

std::vector<RingErrors> random_ring_errors(const RingArraySpec& s, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sigma);
  std::vector<RingErrors> out(s.rings.size());
  for (std::size_t i = 0; i < s.rings.size(); ++i) {
    out[i].coupler.alpha = g(rng);
    out[i].coupler.beta = g(rng);
    out[i].bar_tbus.resize(s.rings[i].bar_tbus.size());
    for (auto& t : out[i].bar_tbus) {
      t.alpha = g(rng);
      t.beta = g(rng);
    }
  }
  return out;
}

namespace {

// Phases with K_ideal = diag(e^{ia1}, e^{ia2})·K·diag(e^{ib}, 1), read off the
// entries that carry light. Only a2 reaches the loop.
double loop_phase_offset(const Mat2& ideal, const Mat2& real) {
  constexpr double tiny = 1e-12;
  const auto ph = [&](int i, int j) { return std::arg(ideal(i, j) * std::conj(real(i, j))); };
  if (std::abs(real(1, 1)) > tiny) return ph(1, 1);
  return ph(1, 0);  // cross coupler: b is free, take b = 0
}

}  // namespace

RingArraySpec apply_errors_and_correct(const RingArraySpec& ideal, const std::vector<RingErrors>& errors,
                                       bool correct) {
  if (errors.size() != ideal.rings.size()) throw std::invalid_argument("one error record per ring is required");
  RingArraySpec out = ideal;
  for (std::size_t i = 0; i < out.rings.size(); ++i) {
    RingSpec& r = out.rings[i];
    if (errors[i].bar_tbus.size() != r.bar_tbus.size())
      throw std::invalid_argument("bar TBU error count does not match the ring");
    r.errors = errors[i].coupler;
    r.bar_tbus = errors[i].bar_tbus;
    r.clipped = false;
    if (!correct) continue;
    // |K(θ)| depends on θ only through cos θ; solve on [0, π] and keep the sign.
    const double t = wrap_pi(ideal.rings[i].theta);
    const ThetaCorrection tc = correct_theta(std::abs(t), r.errors);
    r.theta = t < 0 ? -tc.theta_prime : tc.theta_prime;
    r.clipped = tc.clipped != Clip::None;
    const Mat2 k_ideal = ring_coupler(ideal.rings[i].theta, {});
    const Mat2 k_real = ring_coupler(r.theta, r.errors);
    r.phi = wrap_2pi(ideal.rings[i].phi + loop_phase_offset(k_ideal, k_real));
  }
  return out;
}

nlohmann::json ring_array_to_json(const RingArraySpec& s) {
  nlohmann::json rings = nlohmann::json::array();
  for (const auto& r : s.rings) {
    nlohmann::json bars = nlohmann::json::array();
    for (const auto& t : r.bar_tbus) bars.push_back({{"alpha", t.alpha}, {"beta", t.beta}});
    rings.push_back({{"theta", r.theta},
                     {"phi", r.phi},
                     {"alpha", r.errors.alpha},
                     {"beta", r.errors.beta},
                     {"z1", r.z1},
                     {"z2", r.z2},
                     {"a", r.a},
                     {"bar_tbus", bars},
                     {"clipped", r.clipped}});
  }
  return {{"rings", rings},
          {"index", {{"n0", s.index.n0}, {"ng", s.index.ng}, {"lambda0", s.index.lambda0}}},
          {"channel",
           {{"center_hz", s.channel.center_hz},
            {"bandwidth_hz", s.channel.bandwidth_hz},
            {"fit_fraction", s.channel.fit_fraction}}}};
}

RingArraySpec ring_array_from_json(const nlohmann::json& j) {
  try {
    RingArraySpec s;
    if (j.contains("index")) {
      const auto& x = j.at("index");
      s.index.n0 = x.value("n0", s.index.n0);
      s.index.ng = x.value("ng", s.index.ng);
      s.index.lambda0 = x.value("lambda0", s.index.lambda0);
    }
    if (j.contains("channel")) {
      const auto& x = j.at("channel");
      s.channel.center_hz = x.value("center_hz", s.channel.center_hz);
      s.channel.bandwidth_hz = x.value("bandwidth_hz", s.channel.bandwidth_hz);
      s.channel.fit_fraction = x.value("fit_fraction", s.channel.fit_fraction);
    }
    for (const auto& x : j.at("rings")) {
      RingSpec r;
      r.theta = x.at("theta").get<double>();
      r.phi = x.at("phi").get<double>();
      r.errors = {x.value("alpha", 0.0), x.value("beta", 0.0)};
      r.z1 = x.value("z1", r.z1);
      r.z2 = x.value("z2", r.z2);
      r.a = x.value("a", r.a);
      if (x.contains("bar_tbus")) {
        r.bar_tbus.clear();
        for (const auto& t : x.at("bar_tbus")) r.bar_tbus.push_back({t.value("alpha", 0.0), t.value("beta", 0.0)});
      }
      r.clipped = x.value("clipped", false);
      validate(r);
      s.rings.push_back(r);
    }
    if (s.rings.empty()) throw std::invalid_argument("ring array is empty");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed ring array: ") + e.what());
  }
}

}  // namespace meshfix
