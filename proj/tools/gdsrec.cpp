// gdsrec: recovery experiments with generalized Dantzig selectors.
//
// Exit codes: 0 success, 1 bound verification failed, 2 solver failures above
// the configured fraction, 3 configuration error.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "gds/experiment.hpp"

namespace fs = std::filesystem;
using namespace gds;

namespace {

constexpr int kBoundFailed = 1;
constexpr int kSolverFailures = 2;
constexpr int kConfigError = 3;

struct CommonFlags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

void add_common(CLI::App* app, CommonFlags& f, bool config_required = true) {
  app->add_option("--config", f.config, "experiment config (JSON)")->check(CLI::ExistingFile)->required(config_required);
  app->add_option("--out", f.out, "output directory (overrides output_dir)");
  app->add_option("--seed", f.seed, "master seed (overrides seed)");
  app->add_option("--threads", f.threads, "worker threads (overrides threads)");
}

ExperimentConfig load_config(const CommonFlags& f) {
  auto c = ExperimentConfig::from_file(f.config);
  if (!f.out.empty()) c.output_dir = f.out;
  if (f.seed) c.seed = *f.seed;
  if (f.threads) c.threads = *f.threads;
  c.validate();
  return c;
}

void print_scaling(const std::vector<TrialRecord>& records) {
  const auto pts = median_errors(records);
  for (const auto& pt : pts)
    std::cout << "  n=" << pt.n << "  median error " << pt.median_error << "  median relative error "
              << pt.median_relative_error << "\n";
  if (pts.size() >= 2) {
    bool positive = true;
    for (const auto& pt : pts) positive = positive && pt.median_error > 0.0;
    if (positive) std::cout << "  log-log slope " << loglog_slope(pts) << "\n";
  }
}

int report_failures(const ExperimentConfig& c, const SweepResult& s) {
  if (s.failures > 0) std::cerr << s.failures << " of " << s.records.size() << " solves did not converge\n";
  return s.failures_exceed(c.failure_fraction) ? kSolverFailures : 0;
}

int cmd_recover(const CommonFlags& f, const std::string& theta_path, const std::string& y_path,
                const std::string& measurements_dir) {
  const auto c = load_config(f);
  const fs::path out = c.output_dir;
  const SpectralNorm norm = c.spectral_norm();

  std::optional<Mat> theta;
  if (!theta_path.empty()) {
    theta = io::read_matrix_csv(theta_path);
    if (theta->rows() != c.d || theta->cols() != c.p) throw config_error("theta file shape does not match the config");
  }

  MeasurementSet m;
  if (!measurements_dir.empty()) {
    m = io::load_measurements(measurements_dir);
    if (m.ensemble.rows != c.d || m.ensemble.cols != c.p) throw config_error("measurement shape does not match the config");
  } else {
    const Eigen::Index n = c.n_grid.front();
    const auto seeds = trial_seeds(c.seed, n, 0);
    m.ensemble = c.ensemble;
    m.n = n;
    m.seed = seeds.design;
    m.noise = c.noise;
    m.noise_seed = seeds.noise;
    if (!y_path.empty()) {
      m.y = io::read_vector_csv(y_path);
      m.n = m.y.size();
    } else {
      if (!theta) theta = make_ground_truth(c, c.seed);
      m.y = observe(m.design(), *theta, c.noise, m.noise_seed);
    }
  }
  const Design design = m.design();

  double lambda = 0.0;
  switch (c.lambda.kind) {
    case LambdaRuleKind::Fixed: lambda = c.lambda.value; break;
    case LambdaRuleKind::Theory:
    case LambdaRuleKind::Empirical: {
      const auto rules = lambda_rules(norm, c.ensemble, m.n, c.noise, c.ensemble.kappa, c.constants().c0,
                                      c.lambda.mc_samples, c.lambda.quantile,
                                      stream_seed(c.seed, static_cast<std::uint64_t>(m.n), 0x6c616dULL), c.threads);
      lambda = c.lambda.kind == LambdaRuleKind::Theory ? rules.lambda_theory : rules.lambda_empirical;
    }
  }
  lambda = std::max(lambda, c.lambda.floor_rel * norm.dual_eval(design.adjoint(m.y)));

  SolverOptions opts = c.solver;
  if (opts.log_every == 0) opts.log_every = 10;
  const auto sol = solve(GdsProblem::make(norm, design, m.y, lambda), opts);

  io::write_matrix_csv(out / "theta_hat.csv", sol.theta_hat);
  io::write_text_file(out / "iterations.csv", io::iteration_log_to_csv(sol.log));
  io::save_measurements(out / "measurements", m);
  json summary = {{"n", m.n},
                  {"lambda", lambda},
                  {"objective", sol.objective},
                  {"constraint_residual", sol.constraint_residual},
                  {"feas_tol", sol.feas_tol},
                  {"iterations", sol.iterations},
                  {"converged", sol.converged}};
  if (theta) {
    io::write_matrix_csv(out / "theta_star.csv", *theta);
    summary["error"] = (sol.theta_hat - *theta).norm();
    summary["relative_error"] = (sol.theta_hat - *theta).norm() / theta->norm();
  }
  io::write_json_file(out / "recover.json", summary);
  std::cout << summary.dump(2) << "\n";
  return sol.converged ? 0 : kSolverFailures;
}

int cmd_sweep(const CommonFlags& f) {
  const auto c = load_config(f);
  const auto s = run_sweep(c);
  write_sweep_outputs(c.output_dir, c, s);
  std::cout << s.report.norm.dump() << " on " << c.d << "x" << c.p << ", rank " << c.r << ", " << s.records.size()
            << " trials\n";
  print_scaling(s.records);
  std::cout << "wrote " << (fs::path(c.output_dir) / "records.csv").string() << "\n";
  return report_failures(c, s);
}

int cmd_geometry(const CommonFlags& f) {
  const auto c = load_config(f);
  const auto report = compute_geometry(c, make_ground_truth(c, c.seed));
  const fs::path path = fs::path(c.output_dir) / "geometry.json";
  io::write_json_file(path, report.to_json());
  std::cout << report.to_json().dump(2) << "\n";
  return 0;
}

int cmd_verify(const CommonFlags& f) {
  auto c = load_config(f);
  c.lambda.kind = LambdaRuleKind::Theory;
  const auto s = run_sweep(c);
  write_sweep_outputs(c.output_dir, c, s);
  const auto summary = verify_bounds(s.records, s.report);
  io::write_json_file(fs::path(c.output_dir) / "bounds.json", summary.to_json());
  std::cout << (summary.pass ? "PASS" : "FAIL") << ": " << summary.message << "\n";
  const int failures = report_failures(c, s);
  if (failures) return failures;
  return summary.pass ? 0 : kBoundFailed;
}

int cmd_calibrate(const CommonFlags& f) {
  const json j = io::read_json_file(f.config);
  auto grid = CalibrationGrid::from_json(j.value("calibration_grid", json::object()));
  if (f.seed) grid.seed = *f.seed;
  if (f.threads) grid.threads = *f.threads;
  const auto result = calibrate(grid);
  fs::path path = f.out.empty() ? fs::path(j.value("output", std::string("calibration.json"))) : fs::path(f.out);
  if (fs::is_directory(path)) path /= "calibration.json";
  io::write_json_file(path, result.to_json());
  std::cout << "xi = " << result.constants.xi << ", c0 = " << result.constants.c0 << "\nwrote " << path.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-rank matrix recovery with generalized Dantzig selectors"};
  app.require_subcommand(1);

  CommonFlags recover_f, sweep_f, geometry_f, verify_f, calibrate_f;
  std::string theta_path, y_path, measurements_dir;

  auto* recover = app.add_subcommand("recover", "solve a single instance and write theta_hat.csv");
  add_common(recover, recover_f);
  recover->add_option("--theta", theta_path, "ground truth matrix CSV")->check(CLI::ExistingFile);
  recover->add_option("--y", y_path, "observations, one per line")->check(CLI::ExistingFile);
  recover->add_option("--measurements", measurements_dir, "measurement directory (meta.json + y.csv)")
      ->check(CLI::ExistingDirectory);

  auto* sweep = app.add_subcommand("sweep", "run every (n, trial) of the grid");
  add_common(sweep, sweep_f);
  auto* geometry = app.add_subcommand("geometry", "write the geometry report only");
  add_common(geometry, geometry_f);
  auto* verify = app.add_subcommand("verify", "sweep with the theory lambda rule and check the error bound");
  add_common(verify, verify_f);
  auto* calib = app.add_subcommand("calibrate", "calibrate xi and c0 on the config's calibration_grid");
  add_common(calib, calibrate_f);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    if (*recover) return cmd_recover(recover_f, theta_path, y_path, measurements_dir);
    if (*sweep) return cmd_sweep(sweep_f);
    if (*geometry) return cmd_geometry(geometry_f);
    if (*verify) return cmd_verify(verify_f);
    if (*calib) return cmd_calibrate(calibrate_f);
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const unsupported_operation& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  }
  return 0;
}
