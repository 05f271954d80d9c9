// meshfix: decompose, correct, calibrate and sweep programmable meshes from the shell.
//
// Every run writes manifest.json next to its outputs. The manifest hash covers
// the subcommand, resolved config, seed, tool version and input digests, never
// the wall clock or thread count, and each output file carries it.

#include <CLI11.hpp>
#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "meshfix/calibrate.hpp"
#include "meshfix/correct.hpp"
#include "meshfix/decompose.hpp"
#include "meshfix/json_io.hpp"
#include "meshfix/parallel.hpp"
#include "meshfix/ringfilter.hpp"
#include "meshfix/rng.hpp"
#include "meshfix/stats.hpp"

#ifndef MESHFIX_VERSION
#define MESHFIX_VERSION "dev"
#endif

namespace fs = std::filesystem;
using namespace meshfix;

namespace {

constexpr int kExitBadInput = 2;
constexpr int kExitNotUnitary = 3;

struct BadInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr))
    throw std::runtime_error("sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw BadInput("cannot read " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

json read_json(const std::string& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw BadInput(path + ": " + e.what());
  }
}

struct Common {
  std::uint64_t seed = 1;
  std::string out_dir = ".";
  int threads = 0;
};

class Run {
 public:
  Run(std::string subcommand, const Common& c) : sub_(std::move(subcommand)), common_(c) {
    fs::create_directories(common_.out_dir);
  }

  json config = json::object();

  void input(const std::string& path) { inputs_.push_back({{"path", path}, {"sha256", sha256_hex(read_file(path))}}); }
  void output(const std::string& name) { outputs_.push_back(name); }

  // Frozen once the first output is written.
  const std::string& hash() {
    if (hash_.empty()) hash_ = sha256_hex(identity().dump());
    return hash_;
  }

  void write(const std::string& name, const std::string& body) {
    std::ofstream f(fs::path(common_.out_dir) / name, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + name);
    f << body;
  }

  void write_json(const std::string& name, json j) {
    j["manifest_sha256"] = hash();
    write(name, j.dump(2) + "\n");
  }

  void write_csv(const std::string& name, const std::string& rows) {
    write(name, "# manifest_sha256=" + hash() + "\n" + rows);
  }

  void finish() {
    json m = identity();
    m["manifest_sha256"] = hash();
    m["threads"] = resolve_threads(common_.threads);
    m["wall_clock_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    write("manifest.json", m.dump(2) + "\n");
  }

 private:
  json identity() const {
    return {{"subcommand", sub_},  {"config", config},   {"seed", common_.seed},
            {"inputs", inputs_},   {"outputs", outputs_}, {"version", MESHFIX_VERSION}};
  }

  std::string sub_;
  Common common_;
  json inputs_ = json::array();
  std::vector<std::string> outputs_;
  std::string hash_;
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// ---------------------------------------------------------------- program

struct ProgramArgs {
  std::string unitary_file, error_file, layout = "rectangular";
  int haar = 0;
  double sigma = 0.0;
  bool correct = false;
};

int cmd_program(const ProgramArgs& a, const Common& c) {
  Run run("program", c);
  CMatrix U;
  if (!a.unitary_file.empty()) {
    run.input(a.unitary_file);
    try {
      U = matrix_from_json(read_json(a.unitary_file));
    } catch (const std::invalid_argument& e) {
      throw BadInput(e.what());
    }
  } else if (a.haar > 0) {
    U = haar_random_unitary(a.haar, derive_seed(c.seed, {0}));
  } else {
    throw BadInput("give --unitary FILE or --haar N");
  }
  const Layout layout = layout_from_string(a.layout);
  const DecompositionResult d = decompose(U, layout);

  ErrorMap em(d.program.settings.size());
  if (!a.error_file.empty()) {
    run.input(a.error_file);
    try {
      const MeshProgram shape = program_from_json(read_json(a.error_file), &em);
      if (shape.topology.n != d.program.topology.n || shape.topology.layout != layout)
        throw BadInput("error map does not match the mesh");
    } catch (const std::invalid_argument& e) {
      throw BadInput(e.what());
    }
  } else if (a.sigma > 0) {
    em = random_error_map(em.size(), a.sigma, 0.0, derive_seed(c.seed, {1}));
  }
  run.config = {{"n", U.rows()}, {"layout", to_string(layout)}, {"haar", a.haar}, {"sigma", a.sigma},
                {"correct", a.correct}};
  run.output("program.json");
  run.output("report.json");

  const double eps_raw = matrix_error(mesh_unitary(d.program, em), U);
  json report = {{"n", U.rows()}, {"layout", to_string(layout)}, {"decomposition_residual", d.residual},
                 {"epsilon_uncorrected", eps_raw}};
  MeshProgram out = d.program;
  if (a.correct) {
    const CorrectionReport r = correct_mesh(d.program, em);
    const double eps = matrix_error(mesh_unitary(r.corrected_program, em), U);
    report["epsilon_corrected"] = eps;
    report["n_clipped"] = r.n_clipped;
    report["correction"] = report_to_json(r);
    out = r.corrected_program;
    std::printf("epsilon uncorrected %.6e  corrected %.6e  clipped %d\n", eps_raw, eps, r.n_clipped);
  } else {
    std::printf("epsilon %.6e\n", eps_raw);
  }
  run.write_json("program.json", program_to_json(out, &em));
  run.write_json("report.json", report);
  run.finish();
  return 0;
}

// ---------------------------------------------------------------- sweep

SweepConfig sweep_config(const json& j) {
  SweepConfig cfg;
  cfg.n_modes = j.value("n_modes", cfg.n_modes);
  cfg.sigma_bs = j.value("sigma_bs", cfg.sigma_bs);
  cfg.n_unitaries = j.value("n_unitaries", cfg.n_unitaries);
  cfg.n_error_maps = j.value("n_error_maps", cfg.n_error_maps);
  cfg.correct = j.value("correct", cfg.correct);
  cfg.layout = layout_from_string(j.value("layout", std::string("rectangular")));
  cfg.correlation = j.value("correlation", cfg.correlation);
  return cfg;
}

json cell_to_json(const CellSummary& c) {
  return {{"n", c.n},           {"sigma", c.sigma},   {"corrected", c.corrected}, {"count", c.count},
          {"mean", c.mean},     {"rms", c.rms},       {"median", c.median},       {"q05", c.q05},
          {"q25", c.q25},       {"q75", c.q75},       {"q95", c.q95},             {"clip_rate", c.clip_rate},
          {"expected", c.corrected ? expected_corrected_error(c.n, c.sigma) : expected_error(c.n, c.sigma)}};
}

int cmd_sweep(const std::string& config_file, const Common& c) {
  Run run("sweep", c);
  run.input(config_file);
  SweepConfig cfg;
  try {
    cfg = sweep_config(read_json(config_file));
  } catch (const std::exception& e) {
    throw BadInput(e.what());
  }
  cfg.seed = c.seed;
  cfg.threads = resolve_threads(c.threads);
  run.config = {{"n_modes", cfg.n_modes},         {"sigma_bs", cfg.sigma_bs},
                {"n_unitaries", cfg.n_unitaries}, {"n_error_maps", cfg.n_error_maps},
                {"correct", cfg.correct},         {"layout", to_string(cfg.layout)},
                {"correlation", cfg.correlation}};
  run.output("sweep.csv");
  run.output("summary.json");
  const SweepResult r = run_sweep(cfg);
  json cells = json::array();
  for (const auto& cell : r.cells) {
    cells.push_back(cell_to_json(cell));
    std::printf("N=%-4d sigma=%.4f %-11s mean %.4e  rms %.4e  median %.4e\n", cell.n, cell.sigma,
                cell.corrected ? "corrected" : "uncorrected", cell.mean, cell.rms, cell.median);
  }
  run.write_csv("sweep.csv", sweep_csv(r));
  run.write_json("summary.json", {{"cells", cells}});
  run.finish();
  return 0;
}

// ---------------------------------------------------------------- calibrate

struct CalibrateArgs {
  std::string config_file;
  bool export_error_map = false;
};

int cmd_calibrate(const CalibrateArgs& a, const Common& c) {
  Run run("calibrate", c);
  run.input(a.config_file);
  ChipConfig cfg;
  bool test_mode = false;
  CalibrationOptions opts;
  try {
    const json j = read_json(a.config_file);
    cfg.n = j.value("n", cfg.n);
    cfg.layout = layout_from_string(j.value("layout", std::string("rectangular")));
    const std::string det = j.value("detectors", std::string(cfg.layout == Layout::Rectangular ? "coherent" : "intensity"));
    if (det != "coherent" && det != "intensity") throw BadInput("detectors must be coherent or intensity");
    cfg.detectors = det == "coherent" ? DetectorKind::Coherent : DetectorKind::Intensity;
    cfg.sigma_bs = j.value("sigma_bs", cfg.sigma_bs);
    if (j.contains("noise")) {
      cfg.noise.sigma_intensity = j["noise"].value("sigma_intensity", 0.0);
      cfg.noise.sigma_phase = j["noise"].value("sigma_phase", 0.0);
    }
    test_mode = j.value("test_mode", false);
    opts.lo_tolerance = j.value("lo_tolerance", opts.lo_tolerance);
    opts.fringe_points = j.value("fringe_points", opts.fringe_points);
  } catch (const json::exception& e) {
    throw BadInput(e.what());
  } catch (const std::invalid_argument& e) {
    throw BadInput(e.what());
  }
  if (cfg.n < 2) throw BadInput("n must be at least 2");
  cfg.seed = c.seed;
  run.config = {{"n", cfg.n},
                {"layout", to_string(cfg.layout)},
                {"detectors", cfg.detectors == DetectorKind::Coherent ? "coherent" : "intensity"},
                {"sigma_bs", cfg.sigma_bs},
                {"noise", {{"sigma_intensity", cfg.noise.sigma_intensity}, {"sigma_phase", cfg.noise.sigma_phase}}},
                {"test_mode", test_mode},
                {"lo_tolerance", opts.lo_tolerance},
                {"fringe_points", opts.fringe_points},
                {"export_error_map", a.export_error_map}};
  run.output("calibration.json");
  if (a.export_error_map) run.output("error_map.json");
  if (test_mode) run.output("truth_report.json");

  ChipModel chip = ChipModel::random(cfg);
  const CalibrationRecord rec =
      cfg.layout == Layout::Rectangular ? calibrate_mesh(chip, opts) : calibrate_reck(chip, opts);
  run.write_json("calibration.json", record_to_json(rec));
  if (a.export_error_map) {
    const ErrorMap em = rec.error_map();
    run.write_json("error_map.json", program_to_json(make_program(chip.topology()), &em));
  }
  std::printf("calibrated %zu devices\n", rec.devices.size());

  if (test_mode) {
    const ChipTruth& t = chip.truth();
    double d_split = 0, d_kappa = 0, d_delta = 0;
    for (std::size_t i = 0; i < rec.devices.size(); ++i) {
      const auto& r = rec.devices[i];
      d_split = std::max({d_split, std::abs(r.alpha_hat - t.errors[i].alpha), std::abs(r.beta_hat - t.errors[i].beta)});
      d_kappa = std::max({d_kappa, std::abs(r.theta_map.kappa / t.theta_maps[i].kappa - 1),
                          std::abs(r.phi_map.kappa / t.phi_maps[i].kappa - 1)});
      d_delta = std::max({d_delta, std::abs(wrap_pi(r.theta_map.delta - t.theta_maps[i].delta)),
                          std::abs(wrap_pi(r.phi_map.delta - t.phi_maps[i].delta))});
    }
    const CMatrix U = haar_random_unitary(cfg.n, derive_seed(c.seed, {2}));
    const MeshProgram target = decompose(U, cfg.layout).program;
    const CorrectionReport pr = program_chip(chip, rec, target);
    const double eps = matrix_error(chip.truth_unitary(), U);
    run.write_json("truth_report.json", {{"max_splitter_error", d_split},
                                         {"max_kappa_relative_error", d_kappa},
                                         {"max_offset_error", d_delta},
                                         {"haar_target_epsilon", eps},
                                         {"haar_target_clipped", pr.n_clipped}});
    std::printf("truth: splitter %.3e  kappa %.3e  offset %.3e rad  programmed epsilon %.3e\n", d_split, d_kappa,
                d_delta, eps);
  }
  run.finish();
  return 0;
}

// ---------------------------------------------------------------- tdc

int cmd_tdc(const std::string& config_file, const Common& c) {
  Run run("tdc", c);
  run.input(config_file);
  double target = -85, sigma = 0.02;
  int rings = 15, seeds = 100, points = 201;
  TrainOptions topt;
  RingArraySpec base;
  try {
    const json j = read_json(config_file);
    target = j.value("target_gdd", target);
    rings = j.value("n_rings", rings);
    sigma = j.value("sigma_bs", sigma);
    seeds = j.value("n_seeds", seeds);
    points = j.value("grid_points", points);
    topt.budget = j.value("budget", topt.budget);
    topt.restarts = j.value("restarts", topt.restarts);
    topt.coupler_margin = j.value("coupler_margin", topt.coupler_margin);
    base = default_array(rings);
    base.channel.bandwidth_hz = j.value("bandwidth_hz", base.channel.bandwidth_hz);
    base.channel.fit_fraction = j.value("fit_fraction", base.channel.fit_fraction);
  } catch (const json::exception& e) {
    throw BadInput(e.what());
  } catch (const std::invalid_argument& e) {
    throw BadInput(e.what());
  }
  if (seeds < 0 || points < 3) throw BadInput("n_seeds must be >= 0 and grid_points >= 3");
  topt.seed = derive_seed(c.seed, {0});
  topt.threads = resolve_threads(c.threads);
  run.config = {{"target_gdd", target},       {"n_rings", rings},
                {"sigma_bs", sigma},          {"n_seeds", seeds},
                {"grid_points", points},      {"budget", topt.budget},
                {"restarts", topt.restarts},  {"coupler_margin", topt.coupler_margin},
                {"bandwidth_hz", base.channel.bandwidth_hz}, {"fit_fraction", base.channel.fit_fraction}};
  run.output("spec.json");
  run.output("gdd.csv");

  const TrainResult tr = train_ideal(target, base, topt);
  std::printf("trained GDD %.3f ps/nm (target %.3f, %s after %d restart(s))\n", tr.gdd, target,
              tr.converged ? "converged" : "NOT converged", tr.restarts_used);

  struct Arm {
    GddProfile raw, fixed;
  };
  std::vector<Arm> arms(seeds);
  parallel_for(arms.size(), topt.threads, [&](std::size_t k) {
    const auto e = random_ring_errors(tr.spec, sigma, derive_seed(c.seed, {1, k}));
    arms[k].raw = evaluate_gdd(apply_errors_and_correct(tr.spec, e, false), points);
    arms[k].fixed = evaluate_gdd(apply_errors_and_correct(tr.spec, e, true), points);
  });

  std::string csv = "lambda_nm,re,im,tau_ps,seed,corrected\n";
  char buf[256];
  const auto rows = [&](const GddProfile& p, long seed, int corrected) {
    for (std::size_t i = 0; i < p.tau.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.12g,%.17g,%.17g,%.17g,%ld,%d\n", p.lambda_nm[i], p.response[i].real(),
                    p.response[i].imag(), p.tau[i] * 1e12, seed, corrected);
      csv += buf;
    }
  };
  rows(evaluate_gdd(tr.spec, points), -1, 0);
  std::vector<double> g_raw, g_fixed;
  for (std::size_t k = 0; k < arms.size(); ++k) {
    rows(arms[k].raw, long(k), 0);
    rows(arms[k].fixed, long(k), 1);
    g_raw.push_back(arms[k].raw.fit.gdd);
    g_fixed.push_back(arms[k].fixed.fit.gdd);
  }
  const auto moments = [](const std::vector<double>& v) -> json {
    if (v.empty()) return nullptr;
    double m = 0, s = 0;
    for (double x : v) m += x;
    m /= v.size();
    for (double x : v) s += (x - m) * (x - m);
    return {{"mean", m}, {"std", std::sqrt(s / v.size())}, {"median", quantile(v, 0.5)}, {"values", v}};
  };
  json out = ring_array_to_json(tr.spec);
  out["training"] = {{"target_gdd", target}, {"gdd", tr.gdd},  {"mse_ps2", tr.mse},
                     {"converged", tr.converged}, {"restarts_used", tr.restarts_used}, {"evaluations", tr.evaluations}};
  out["monte_carlo"] = {{"sigma_bs", sigma}, {"uncorrected", moments(g_raw)}, {"corrected", moments(g_fixed)}};
  if (!g_raw.empty())
    std::printf("sigma %.3f: GDD std uncorrected %.3f, corrected %.3f ps/nm\n", sigma,
                out["monte_carlo"]["uncorrected"]["std"].get<double>(), out["monte_carlo"]["corrected"]["std"].get<double>());
  run.write_json("spec.json", out);
  run.write_csv("gdd.csv", csv);
  run.finish();
  return tr.converged ? 0 : 1;
}

// ---------------------------------------------------------------- stats

struct StatsArgs {
  std::vector<int> n{16, 32, 64};
  std::vector<double> sigma{0.012, 0.02, 0.04};
  int bits = 12;
  double length_um = 200, delta_t = 0.01, wavelength_nm = 1550;
};

int cmd_stats(const StatsArgs& a) {
  std::printf("%6s %8s %14s %14s %14s\n", "N", "sigma", "eps_uncorr", "eps_corr", "p_bar_clip");
  for (int n : a.n)
    for (double s : a.sigma)
      std::printf("%6d %8.4f %14.6e %14.6e %14.6e\n", n, s, expected_error(n, s), expected_corrected_error(n, s),
                  tail_probability_bar(n, s));
  const DynamicBudget b = dynamic_error_budget(a.bits, a.length_um, a.delta_t, a.wavelength_nm);
  std::printf("quantization RMS at %d bits: %.4e rad\n", a.bits, b.quantization_phase_rms);
  std::printf("thermal phase (%.0f um, %.3g K, %.0f nm): %.4e rad\n", a.length_um, a.delta_t, a.wavelength_nm,
              b.thermal_phase);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Error correction for programmable photonic meshes"};
  app.set_version_flag("--version", std::string(MESHFIX_VERSION));
  app.require_subcommand(1);

  Common common;
  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", common.seed, "Master seed")->capture_default_str();
    sub->add_option("--out-dir", common.out_dir, "Output directory")->capture_default_str();
    sub->add_option("--threads", common.threads, "Worker threads (0: $MESHFIX_THREADS or all cores)");
  };

  ProgramArgs pa;
  auto* program = app.add_subcommand("program", "Decompose a unitary, inject errors, optionally correct");
  auto* src = program->add_option("--unitary", pa.unitary_file, "JSON 2-D array of [re, im] pairs");
  program->add_option("--haar", pa.haar, "Generate an N-mode Haar-random target instead")->excludes(src);
  program->add_option("--layout", pa.layout, "rectangular | triangular")->capture_default_str();
  auto* ef = program->add_option("--errors", pa.error_file, "Error map JSON (as written by calibrate)");
  program->add_option("--sigma", pa.sigma, "Draw α, β ~ N(0, σ²) instead")->excludes(ef);
  program->add_flag("--correct", pa.correct, "Apply error correction");
  add_common(program);

  std::string sweep_file;
  auto* sweep = app.add_subcommand("sweep", "Monte-Carlo ε sweep over N and σ");
  sweep->add_option("config", sweep_file, "Sweep config JSON")->required();
  add_common(sweep);

  CalibrateArgs ca;
  auto* calibrate = app.add_subcommand("calibrate", "Calibrate a simulated chip with hidden errors");
  calibrate->add_option("config", ca.config_file, "Chip config JSON")->required();
  calibrate->add_flag("--export-error-map", ca.export_error_map, "Also write error_map.json for `program --errors`");
  add_common(calibrate);

  std::string tdc_file;
  auto* tdc = app.add_subcommand("tdc", "Train a ring-array dispersion compensator and test correction");
  tdc->add_option("config", tdc_file, "TDC config JSON")->required();
  add_common(tdc);

  StatsArgs sa;
  auto* stats = app.add_subcommand("stats", "Print closed-form error laws");
  stats->add_option("--n", sa.n, "Mode counts")->capture_default_str();
  stats->add_option("--sigma", sa.sigma, "Splitter error σ (rad)")->capture_default_str();
  stats->add_option("--bits", sa.bits, "DAC resolution")->capture_default_str();
  add_common(stats);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitBadInput;
  }

  try {
    if (*program) return cmd_program(pa, common);
    if (*sweep) return cmd_sweep(sweep_file, common);
    if (*calibrate) return cmd_calibrate(ca, common);
    if (*tdc) return cmd_tdc(tdc_file, common);
    if (*stats) return cmd_stats(sa);
  } catch (const UnitarityError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNotUnitary;
  } catch (const BadInput& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitBadInput;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitBadInput;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
