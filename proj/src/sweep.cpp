#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "meshfix/correct.hpp"
#include "meshfix/decompose.hpp"
#include "meshfix/parallel.hpp"
#include "meshfix/rng.hpp"
#include "meshfix/stats.hpp"

namespace meshfix {

ErrorMap random_error_map(std::size_t count, double sigma, double correlation, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  const double rho = std::clamp(correlation, -1.0, 1.0), rest = std::sqrt(1 - rho * rho);
  ErrorMap em(count);
  for (auto& e : em) {
    const double za = g(rng), zb = g(rng);
    e.alpha = sigma * za;
    e.beta = sigma * (rho * za + rest * zb);
  }
  return em;
}

namespace {

constexpr std::uint64_t kTarget = 0, kErrors = 1;

struct Outcome {
  double raw = 0, fixed = 0;
  int clipped = 0;
};

}  // namespace

SweepResult run_sweep(const SweepConfig& cfg) {
  if (cfg.n_unitaries < 1 || cfg.n_error_maps < 1 || cfg.n_modes.empty() || cfg.sigma_bs.empty())
    throw std::invalid_argument("sweep needs at least one cell and one sample");
  for (int n : cfg.n_modes)
    if (n < 2 || n > 1024) throw std::invalid_argument("n_modes must lie in [2, 1024]");
  const int threads = std::max(1, cfg.threads);
  SweepResult res;
  for (std::size_t ni = 0; ni < cfg.n_modes.size(); ++ni) {
    const int n = cfg.n_modes[ni];
    // Targets depend on N only, so every σ sees the same unitaries.
    std::vector<DecompositionResult> targets(cfg.n_unitaries);
    std::vector<CMatrix> goal(cfg.n_unitaries);
    parallel_for(targets.size(), threads, [&](std::size_t u) {
      goal[u] = haar_random_unitary(n, derive_seed(cfg.seed, {kTarget, std::uint64_t(n), u}));
      targets[u] = decompose(goal[u], cfg.layout);
    });
    for (std::size_t si = 0; si < cfg.sigma_bs.size(); ++si) {
      const double sigma = cfg.sigma_bs[si];
      const std::size_t total = std::size_t(cfg.n_unitaries) * cfg.n_error_maps;
      std::vector<Outcome> out(total);
      parallel_for(total, threads, [&](std::size_t t) {
        const std::size_t u = t / cfg.n_error_maps, e = t % cfg.n_error_maps;
        const MeshProgram& p = targets[u].program;
        const ErrorMap em = random_error_map(p.settings.size(), sigma, cfg.correlation,
                                             derive_seed(cfg.seed, {kErrors, std::uint64_t(n), si, u, e}));
        Outcome o;
        o.raw = matrix_error(mesh_unitary(p, em), goal[u]);
        if (cfg.correct) {
          const CorrectionReport r = correct_mesh(p, em);
          o.fixed = matrix_error(mesh_unitary(r.corrected_program, em), goal[u]);
          o.clipped = r.n_clipped;
        }
        out[t] = o;
      });
      const double devices = double(n) * (n - 1) / 2 * total;
      for (int arm = 0; arm < (cfg.correct ? 2 : 1); ++arm) {
        std::vector<double> eps(total);
        long clips = 0;
        for (std::size_t t = 0; t < total; ++t) {
          eps[t] = arm ? out[t].fixed : out[t].raw;
          clips += out[t].clipped;
          res.samples.push_back({n, sigma, int(t), arm == 1, eps[t], arm ? out[t].clipped : 0});
        }
        CellSummary c;
        c.n = n;
        c.sigma = sigma;
        c.corrected = arm == 1;
        c.count = int(total);
        double s = 0, s2 = 0;
        for (double x : eps) {
          s += x;
          s2 += x * x;
        }
        c.mean = s / total;
        c.rms = std::sqrt(s2 / total);
        c.median = quantile(eps, 0.5);
        c.q05 = quantile(eps, 0.05);
        c.q25 = quantile(eps, 0.25);
        c.q75 = quantile(eps, 0.75);
        c.q95 = quantile(eps, 0.95);
        c.clip_rate = cfg.correct ? clips / devices : 0.0;
        res.cells.push_back(c);
      }
    }
  }
  return res;
}

std::string sweep_csv(const SweepResult& r) {
  std::string s = "n,sigma,trial,corrected,epsilon,n_clipped\n";
  char buf[128];
  for (const auto& x : r.samples) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%d,%d,%.17g,%d\n", x.n, x.sigma, x.trial, x.corrected ? 1 : 0,
                  x.epsilon, x.n_clipped);
    s += buf;
  }
  return s;
}

}  // namespace meshfix
