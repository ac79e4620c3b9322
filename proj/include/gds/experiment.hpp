#pragma once

// Config-driven recovery experiments: ground truths, sweeps over the number of
// measurements, geometry reports, bound verification and calibration of the
// unspecified absolute constants xi and c0.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gds/geometry.hpp"
#include "gds/io.hpp"
#include "gds/solver.hpp"

namespace gds {

enum class SpectrumKind { Flat, LinearDecay, Custom };
enum class LambdaRuleKind { Theory, Empirical, Fixed };

struct LambdaRule {
  LambdaRuleKind kind = LambdaRuleKind::Empirical;
  double value = 0.0;      // Fixed only
  double quantile = 0.95;  // Empirical only
  int mc_samples = 200;
  // lambda is raised to at least floor_rel * R*(sum_i y_i X_i); keeps the
  // noiseless case (where both data-driven rules give 0) well posed.
  double floor_rel = 1e-6;
};

inline std::string to_string(LambdaRuleKind k) {
  switch (k) {
    case LambdaRuleKind::Theory: return "theory";
    case LambdaRuleKind::Empirical: return "empirical";
    case LambdaRuleKind::Fixed: return "fixed";
  }
  return "unknown";
}

struct GeometryOptions {
  int cone_samples = 2000;
  int ball_samples = 2000;
  std::optional<double> xi;  // unset: calibration file, then 1
  std::optional<double> c0;
};

struct Calibration {
  double xi = 1.0;
  double c0 = 1.0;
};

inline Calibration load_calibration(const std::filesystem::path& path) {
  const json j = io::read_json_file(path);
  Calibration c;
  c.xi = j.at("xi").get<double>();
  c.c0 = j.at("c0").get<double>();
  if (!(c.xi > 0.0) || !(c.c0 > 0.0)) throw config_error(path.string() + ": xi and c0 must be positive");
  return c;
}

struct ExperimentConfig {
  int d = 0;
  int p = 0;
  int r = 1;
  SpectrumKind spectrum = SpectrumKind::Flat;
  std::vector<double> custom_spectrum;
  bool normalize = true;  // scale the spectrum to unit l2 norm
  json norm = {{"kind", "trace"}};
  Ensemble ensemble;
  Noise noise;
  std::vector<Eigen::Index> n_grid;
  int trials = 1;
  LambdaRule lambda;
  SolverOptions solver;
  GeometryOptions geometry;
  std::string calibration_file;
  std::uint64_t seed = 1;
  int threads = 1;
  std::string output_dir = "out";
  double failure_fraction = 0.0;  // tolerated fraction of non-converged solves

  Gauge gauge() const { return io::gauge_from_json(norm, std::min(d, p)); }
  SpectralNorm spectral_norm() const { return SpectralNorm(gauge(), d, p); }

  /// Constants in effect: explicit config values, then the calibration file, then 1.
  Calibration constants() const {
    Calibration c;
    if (!calibration_file.empty() && (!geometry.xi || !geometry.c0)) c = load_calibration(calibration_file);
    if (geometry.xi) c.xi = *geometry.xi;
    if (geometry.c0) c.c0 = *geometry.c0;
    return c;
  }

  void validate() const {
    if (d < 1 || p < 1) throw config_error("shape must be positive");
    if (!(r >= 1 && r <= d && d <= p)) throw config_error("need 1 <= r <= d <= p");
    if (spectrum == SpectrumKind::Custom) {
      if (static_cast<int>(custom_spectrum.size()) != r)
        throw config_error("custom spectrum has " + std::to_string(custom_spectrum.size()) + " values, rank is " +
                           std::to_string(r));
      for (double s : custom_spectrum)
        if (!(s > 0.0)) throw config_error("custom spectrum values must be positive");
    }
    if (n_grid.empty()) throw config_error("n_grid is empty");
    for (std::size_t i = 0; i < n_grid.size(); ++i) {
      if (n_grid[i] < 1) throw config_error("n_grid entries must be >= 1");
      if (i > 0 && n_grid[i] <= n_grid[i - 1]) throw config_error("n_grid must be strictly ascending");
    }
    if (trials < 1) throw config_error("trials must be >= 1");
    if (threads < 1) throw config_error("threads must be >= 1");
    if (lambda.kind == LambdaRuleKind::Fixed && !(lambda.value > 0.0))
      throw config_error("fixed lambda rule needs a positive value");
    if (!(lambda.quantile > 0.0 && lambda.quantile < 1.0)) throw config_error("lambda quantile must lie in (0, 1)");
    if (lambda.kind == LambdaRuleKind::Empirical && lambda.mc_samples < 1 && noise.tau > 0.0)
      throw config_error("empirical lambda rule needs mc_samples >= 1");
    if (lambda.floor_rel < 0.0) throw config_error("lambda floor_rel must be nonnegative");
    if (geometry.cone_samples < 100 || geometry.ball_samples < 100)
      throw config_error("geometry sample counts must be >= 100");
    if (failure_fraction < 0.0 || failure_fraction > 1.0) throw config_error("failure_fraction must lie in [0, 1]");
    gauge();
    ensemble.validate();
  }

  /// `base_dir` resolves a relative calibration_file.
  static ExperimentConfig from_json(const json& j, const std::filesystem::path& base_dir = {}) {
    ExperimentConfig c;
    try {
      c.d = j.at("shape").at("d").get<int>();
      c.p = j.at("shape").at("p").get<int>();
      c.r = j.at("rank").get<int>();
      if (j.contains("spectrum")) {
        const auto& s = j.at("spectrum");
        if (s.is_array()) {
          c.spectrum = SpectrumKind::Custom;
          c.custom_spectrum = s.get<std::vector<double>>();
        } else {
          const std::string name = s.get<std::string>();
          if (name == "flat") c.spectrum = SpectrumKind::Flat;
          else if (name == "linear_decay" || name == "linear-decay") c.spectrum = SpectrumKind::LinearDecay;
          else throw config_error("unknown spectrum \"" + name + "\"");
        }
      }
      c.normalize = j.value("normalize", true);
      if (j.contains("norm")) c.norm = j.at("norm");
      c.ensemble = io::ensemble_from_json(j.value("ensemble", json::object()), c.d, c.p);
      c.noise = io::noise_from_json(j.value("noise", json::object()));
      c.n_grid = j.at("n_grid").get<std::vector<Eigen::Index>>();
      c.trials = j.value("trials", 1);
      if (j.contains("lambda")) {
        const auto& l = j.at("lambda");
        const std::string rule = l.value("rule", std::string("empirical"));
        if (rule == "theory") c.lambda.kind = LambdaRuleKind::Theory;
        else if (rule == "empirical") c.lambda.kind = LambdaRuleKind::Empirical;
        else if (rule == "fixed") c.lambda.kind = LambdaRuleKind::Fixed;
        else throw config_error("unknown lambda rule \"" + rule + "\"");
        c.lambda.value = l.value("value", 0.0);
        c.lambda.quantile = l.value("quantile", c.lambda.quantile);
        c.lambda.mc_samples = l.value("mc_samples", c.lambda.mc_samples);
        c.lambda.floor_rel = l.value("floor_rel", c.lambda.floor_rel);
      }
      c.solver = io::solver_options_from_json(j.value("solver", json()));
      if (j.contains("geometry")) {
        const auto& g = j.at("geometry");
        c.geometry.cone_samples = g.value("cone_samples", c.geometry.cone_samples);
        c.geometry.ball_samples = g.value("ball_samples", c.geometry.ball_samples);
        if (g.contains("xi")) c.geometry.xi = g.at("xi").get<double>();
        if (g.contains("c0")) c.geometry.c0 = g.at("c0").get<double>();
      }
      if (j.contains("calibration_file")) {
        std::filesystem::path cal = j.at("calibration_file").get<std::string>();
        if (cal.is_relative() && !base_dir.empty()) cal = base_dir / cal;
        c.calibration_file = cal.string();
      }
      c.seed = j.value("seed", c.seed);
      c.threads = j.value("threads", c.threads);
      c.output_dir = j.value("output_dir", c.output_dir);
      c.failure_fraction = j.value("failure_fraction", c.failure_fraction);
    } catch (const json::exception& e) {
      throw config_error(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
  }

  static ExperimentConfig from_file(const std::filesystem::path& path) {
    return from_json(io::read_json_file(path), path.parent_path());
  }

  json to_json() const {
    json j;
    j["shape"] = {{"d", d}, {"p", p}};
    j["rank"] = r;
    if (spectrum == SpectrumKind::Custom) j["spectrum"] = custom_spectrum;
    else j["spectrum"] = spectrum == SpectrumKind::Flat ? "flat" : "linear_decay";
    j["normalize"] = normalize;
    j["norm"] = io::gauge_to_json(gauge());
    j["ensemble"] = io::ensemble_to_json(ensemble);
    j["noise"] = io::noise_to_json(noise);
    j["n_grid"] = n_grid;
    j["trials"] = trials;
    j["lambda"] = {{"rule", to_string(lambda.kind)},
                   {"value", lambda.value},
                   {"quantile", lambda.quantile},
                   {"mc_samples", lambda.mc_samples},
                   {"floor_rel", lambda.floor_rel}};
    j["solver"] = io::solver_options_to_json(solver);
    j["geometry"] = {{"cone_samples", geometry.cone_samples}, {"ball_samples", geometry.ball_samples}};
    if (geometry.xi) j["geometry"]["xi"] = *geometry.xi;
    if (geometry.c0) j["geometry"]["c0"] = *geometry.c0;
    if (!calibration_file.empty()) j["calibration_file"] = calibration_file;
    j["seed"] = seed;
    j["threads"] = threads;
    j["output_dir"] = output_dir;
    j["failure_fraction"] = failure_fraction;
    return j;
  }
};

// ---------------------------------------------------------------------------
// Ground truth

inline Vec make_spectrum(const ExperimentConfig& c) {
  Vec s;
  switch (c.spectrum) {
    case SpectrumKind::Flat: s = Vec::Ones(c.r); break;
    case SpectrumKind::LinearDecay: s = c.r == 1 ? Vec::Ones(1) : Vec(Vec::LinSpaced(c.r, 1.0, 1.0 / c.r)); break;
    case SpectrumKind::Custom:
      if (static_cast<int>(c.custom_spectrum.size()) != c.r) throw config_error("custom spectrum length must equal rank");
      s = Eigen::Map<const Vec>(c.custom_spectrum.data(), c.r);
      std::sort(s.data(), s.data() + s.size(), std::greater<>());
      break;
  }
  if (c.normalize) s /= s.norm();
  return s;
}

/// Theta* = U diag(sigma*) V^T with U, V orthonormal factors of Gaussian matrices.
inline Mat make_ground_truth(const ExperimentConfig& c, std::uint64_t seed) {
  const Vec s = make_spectrum(c);
  Rng rng = make_rng(seed, 0x7472757468ULL);
  const Mat u = random_orthonormal(c.d, c.r, rng);
  const Mat v = random_orthonormal(c.p, c.r, rng);
  return u * s.asDiagonal() * v.transpose();
}

// ---------------------------------------------------------------------------
// Geometry report

struct GeometryPoint {
  Eigen::Index n = 0;
  double alpha = 0.0;  // 0: bound vacuous at this n
  double lambda_theory = 0.0;
  double lambda_empirical = 0.0;
  double lambda_rule = 0.0;  // value of the configured rule, before the per-trial floor
};

struct GeometryReport {
  json norm;
  int d = 0, p = 0, r = 0;
  Rho rho;
  std::optional<double> psi;
  McEstimate width_cone;
  double width_cone_bound = 0.0;
  McEstimate width_ball;
  double width_ball_bound = 0.0;
  double kappa = 1.0;
  Calibration constants;
  int cone_samples = 0;
  int ball_samples = 0;
  double lambda_quantile = 0.0;
  int lambda_mc_samples = 0;
  std::uint64_t seed = 0;
  std::vector<GeometryPoint> points;

  const GeometryPoint& at(Eigen::Index n) const {
    for (const auto& pt : points)
      if (pt.n == n) return pt;
    throw std::out_of_range("GeometryReport: no entry for n = " + std::to_string(n));
  }

  json to_json() const {
    json j;
    j["norm"] = norm;
    j["d"] = d;
    j["p"] = p;
    j["rank"] = r;
    j["rho"] = rho.infinite ? json("inf") : json(rho.value);
    j["psi_bound"] = psi ? json(*psi) : json(nullptr);
    j["width_cone_mc"] = {{"estimate", width_cone.estimate}, {"stderr", width_cone.stderr_}, {"samples", width_cone.samples}};
    j["width_cone_bound"] = width_cone_bound;
    j["width_ball_mc"] = {{"estimate", width_ball.estimate}, {"stderr", width_ball.stderr_}, {"samples", width_ball.samples}};
    j["width_ball_bound"] = width_ball_bound;
    j["config"] = {{"xi", constants.xi},
                   {"c0", constants.c0},
                   {"kappa", kappa},
                   {"cone_samples", cone_samples},
                   {"ball_samples", ball_samples},
                   {"lambda_quantile", lambda_quantile},
                   {"lambda_mc_samples", lambda_mc_samples},
                   {"seed", seed}};
    j["points"] = json::array();
    for (const auto& pt : points)
      j["points"].push_back({{"n", pt.n},
                             {"alpha", pt.alpha},
                             {"lambda_theory", pt.lambda_theory},
                             {"lambda_empirical", pt.lambda_empirical},
                             {"lambda_rule", pt.lambda_rule}});
    return j;
  }
};

/// Widths, compatibility bound, and per-n alpha and lambda values for the
/// ground truth `theta`.
inline GeometryReport compute_geometry(const ExperimentConfig& c, const Mat& theta) {
  const SpectralNorm norm = c.spectral_norm();
  const auto dec = norm.decompose(theta);
  GeometryReport rep;
  rep.norm = io::gauge_to_json(norm.gauge());
  rep.d = c.d;
  rep.p = c.p;
  rep.r = dec.rank;
  rep.rho = dec.rho;
  rep.psi = psi_bound(norm.gauge().constants(), dec.rank, dec.rho);
  rep.width_cone = width_cone_mc(dec, c.geometry.cone_samples, stream_seed(c.seed, 0x636f6e65ULL), c.threads);
  rep.width_cone_bound = width_cone_bound(c.d, c.p, dec.rank, dec.rho);
  rep.width_ball = width_ball_mc(norm, c.geometry.ball_samples, stream_seed(c.seed, 0x62616c6cULL), c.threads);
  rep.width_ball_bound = width_ball_bound(norm.gauge().constants().nu, c.d, c.p);
  rep.kappa = c.ensemble.kappa;
  rep.constants = c.constants();
  rep.cone_samples = c.geometry.cone_samples;
  rep.ball_samples = c.geometry.ball_samples;
  rep.lambda_quantile = c.lambda.quantile;
  rep.lambda_mc_samples = c.lambda.mc_samples;
  rep.seed = c.seed;
  for (const auto n : c.n_grid) {
    GeometryPoint pt;
    pt.n = n;
    pt.alpha = alpha_pred(rep.kappa, static_cast<double>(n), rep.width_cone.estimate, rep.constants.xi);
    const auto rules = lambda_rules(norm, c.ensemble, n, c.noise, rep.kappa, rep.constants.c0, c.lambda.mc_samples,
                                    c.lambda.quantile, stream_seed(c.seed, static_cast<std::uint64_t>(n), 0x6c616dULL),
                                    c.threads);
    pt.lambda_theory = rules.lambda_theory;
    pt.lambda_empirical = rules.lambda_empirical;
    switch (c.lambda.kind) {
      case LambdaRuleKind::Theory: pt.lambda_rule = pt.lambda_theory; break;
      case LambdaRuleKind::Empirical: pt.lambda_rule = pt.lambda_empirical; break;
      case LambdaRuleKind::Fixed: pt.lambda_rule = c.lambda.value; break;
    }
    rep.points.push_back(pt);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Sweeps

struct TrialRecord {
  std::string norm;
  Eigen::Index n = 0;
  int trial = 0;
  std::uint64_t seed = 0;
  double lambda = 0.0;
  double error = 0.0;
  double relative_error = 0.0;
  double norm_hat = 0.0;
  double norm_true = 0.0;
  double residual = 0.0;
  double feas_tol = 0.0;
  int iterations = 0;
  bool converged = false;
  double noise_correlation = 0.0;  // R*(sum_i omega_i X_i)
  bool eq8_holds = true;           // lambda >= noise_correlation
  double wall_time = 0.0;          // seconds
};

inline std::string records_csv_header() {
  return "norm,n,trial,seed,lambda,error,relative_error,norm_hat,norm_true,residual,feas_tol,iterations,converged,"
         "noise_correlation,eq8_holds,wall_time";
}

inline std::string record_to_csv(const TrialRecord& r) {
  using io::format_double;
  std::ostringstream os;
  os << r.norm << "," << r.n << "," << r.trial << "," << r.seed << "," << format_double(r.lambda) << ","
     << format_double(r.error) << "," << format_double(r.relative_error) << "," << format_double(r.norm_hat) << ","
     << format_double(r.norm_true) << "," << format_double(r.residual) << "," << format_double(r.feas_tol) << ","
     << r.iterations << ","
     << (r.converged ? 1 : 0) << "," << format_double(r.noise_correlation) << "," << (r.eq8_holds ? 1 : 0) << ","
     << format_double(r.wall_time);
  return os.str();
}

inline std::string records_to_csv(const std::vector<TrialRecord>& records) {
  std::string out = records_csv_header() + "\n";
  for (const auto& r : records) out += record_to_csv(r) + "\n";
  return out;
}

struct TrialSeeds {
  std::uint64_t trial, design, noise;
};

inline TrialSeeds trial_seeds(std::uint64_t seed, Eigen::Index n, int trial) {
  const std::uint64_t t = stream_seed(seed, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(trial));
  return {t, stream_seed(t, 1), stream_seed(t, 2)};
}

struct TrialOutcome {
  TrialRecord record;
  GdsSolution solution;
};

/// Fresh measurements and noise for (n, trial), then one solve.
inline TrialOutcome run_trial(const ExperimentConfig& c, const SpectralNorm& norm, const Mat& theta,
                              const GeometryPoint& pt, int trial) {
  const auto seeds = trial_seeds(c.seed, pt.n, trial);
  const Design design = Design::sample(c.ensemble, pt.n, seeds.design);
  const Vec omega = sample_noise(c.noise, pt.n, seeds.noise);
  const Vec y = design.forward(theta) + omega;

  TrialRecord rec;
  rec.norm = norm.gauge().name();
  rec.n = pt.n;
  rec.trial = trial;
  rec.seed = seeds.trial;
  rec.noise_correlation = norm.dual_eval(design.adjoint(omega));
  rec.lambda = std::max(pt.lambda_rule, c.lambda.floor_rel * norm.dual_eval(design.adjoint(y)));
  rec.eq8_holds = rec.lambda >= rec.noise_correlation;

  const auto start = std::chrono::steady_clock::now();
  auto sol = solve(GdsProblem::make(norm, design, y, rec.lambda), c.solver);
  rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  rec.error = (sol.theta_hat - theta).norm();
  rec.relative_error = rec.error / theta.norm();
  rec.norm_hat = sol.objective;
  rec.norm_true = norm.eval(theta);
  rec.residual = std::max(sol.constraint_residual, 0.0);
  rec.feas_tol = sol.feas_tol;
  rec.iterations = sol.iterations;
  rec.converged = sol.converged;
  return {rec, std::move(sol)};
}

struct SweepResult {
  Mat theta_star;
  GeometryReport report;
  std::vector<TrialRecord> records;  // sorted by (n, trial)
  int failures = 0;

  bool failures_exceed(double fraction) const {
    return static_cast<double>(failures) > fraction * static_cast<double>(records.size());
  }
};

inline SweepResult run_sweep(const ExperimentConfig& c) {
  c.validate();
  SweepResult out;
  out.theta_star = make_ground_truth(c, c.seed);
  out.report = compute_geometry(c, out.theta_star);
  const SpectralNorm norm = c.spectral_norm();
  const std::size_t per_n = static_cast<std::size_t>(c.trials);
  out.records.resize(c.n_grid.size() * per_n);
  // Job i writes slot i, so the records come out sorted by (n, trial).
  parallel_for(out.records.size(), c.threads, [&](std::size_t i) {
    const auto& pt = out.report.points[i / per_n];
    out.records[i] = run_trial(c, norm, out.theta_star, pt, static_cast<int>(i % per_n)).record;
  });
  for (const auto& r : out.records) out.failures += r.converged ? 0 : 1;
  return out;
}

// ---------------------------------------------------------------------------
// Scaling summaries

inline double median(std::vector<double> xs) {
  if (xs.empty()) throw std::invalid_argument("median: empty sample");
  std::sort(xs.begin(), xs.end());
  const std::size_t m = xs.size() / 2;
  return xs.size() % 2 ? xs[m] : 0.5 * (xs[m - 1] + xs[m]);
}

struct ScalingPoint {
  Eigen::Index n = 0;
  double median_error = 0.0;
  double median_relative_error = 0.0;
};

/// Median errors per n, in the order the n values first appear.
inline std::vector<ScalingPoint> median_errors(const std::vector<TrialRecord>& records) {
  std::vector<ScalingPoint> out;
  std::vector<Eigen::Index> ns;
  for (const auto& r : records)
    if (std::find(ns.begin(), ns.end(), r.n) == ns.end()) ns.push_back(r.n);
  for (const auto n : ns) {
    std::vector<double> err, rel;
    for (const auto& r : records)
      if (r.n == n) err.push_back(r.error), rel.push_back(r.relative_error);
    out.push_back({n, median(err), median(rel)});
  }
  return out;
}

/// Least-squares slope of log(median error) against log(n).
inline double loglog_slope(const std::vector<ScalingPoint>& pts) {
  if (pts.size() < 2) throw std::invalid_argument("loglog_slope: need at least two points");
  double mx = 0.0, my = 0.0;
  for (const auto& pt : pts) mx += std::log(static_cast<double>(pt.n)), my += std::log(pt.median_error);
  mx /= static_cast<double>(pts.size());
  my /= static_cast<double>(pts.size());
  double sxy = 0.0, sxx = 0.0;
  for (const auto& pt : pts) {
    const double dx = std::log(static_cast<double>(pt.n)) - mx;
    sxy += dx * (std::log(pt.median_error) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

/// Number of adjacent pairs where the median error goes up with n.
inline int monotonicity_inversions(const std::vector<ScalingPoint>& pts) {
  int count = 0;
  for (std::size_t i = 1; i < pts.size(); ++i) count += pts[i].median_error > pts[i - 1].median_error ? 1 : 0;
  return count;
}

// ---------------------------------------------------------------------------
// Bound verification

struct BoundSummary {
  int total = 0;
  int excluded_eq8 = 0;  // lambda below the realized R*(sum_i omega_i X_i)
  int vacuous = 0;       // alpha_pred == 0 or psi unbounded
  int considered = 0;
  int satisfied = 0;
  double fraction = 1.0;
  bool all_vacuous = false;
  bool cone_width_ok = false;
  bool ball_width_ok = false;
  double threshold = 0.95;
  bool pass = false;
  std::string message;
  std::vector<json> per_trial;

  json to_json() const {
    return {{"total", total},
            {"excluded_eq8", excluded_eq8},
            {"vacuous", vacuous},
            {"considered", considered},
            {"satisfied", satisfied},
            {"fraction", fraction},
            {"all_vacuous", all_vacuous},
            {"cone_width_ok", cone_width_ok},
            {"ball_width_ok", ball_width_ok},
            {"threshold", threshold},
            {"pass", pass},
            {"message", message},
            {"trials", per_trial}};
  }
};

inline BoundSummary verify_bounds(const std::vector<TrialRecord>& records, const GeometryReport& report,
                                  double threshold = 0.95) {
  BoundSummary s;
  s.threshold = threshold;
  s.total = static_cast<int>(records.size());
  for (const auto& r : records) {
    json t = {{"n", r.n}, {"trial", r.trial}, {"error", r.error}, {"lambda", r.lambda}};
    if (!r.eq8_holds) {
      ++s.excluded_eq8;
      t["status"] = "condition on lambda violated";
      s.per_trial.push_back(t);
      continue;
    }
    const double alpha = report.at(r.n).alpha;
    const auto bound = report.psi ? error_bound_pred(*report.psi, r.lambda, alpha) : std::nullopt;
    if (!bound) {
      ++s.vacuous;
      t["status"] = "vacuous";
      s.per_trial.push_back(t);
      continue;
    }
    ++s.considered;
    const bool ok = r.error <= *bound;
    s.satisfied += ok ? 1 : 0;
    t["bound"] = *bound;
    t["status"] = ok ? "within bound" : "above bound";
    s.per_trial.push_back(t);
  }
  s.all_vacuous = s.considered == 0;
  s.fraction = s.all_vacuous ? 1.0 : static_cast<double>(s.satisfied) / s.considered;
  s.cone_width_ok = report.width_cone.estimate <= report.width_cone_bound + 3.0 * report.width_cone.stderr_;
  s.ball_width_ok = report.width_ball.estimate <= report.width_ball_bound + 3.0 * report.width_ball.stderr_;
  s.pass = (s.all_vacuous || s.fraction >= threshold) && s.cone_width_ok && s.ball_width_ok;
  std::ostringstream msg;
  if (s.all_vacuous) {
    msg << "bound vacuous at all n";
  } else {
    msg << s.satisfied << "/" << s.considered << " trials within the error bound (" << 100.0 * s.fraction << "%)";
  }
  if (s.excluded_eq8 > 0) msg << "; " << s.excluded_eq8 << " excluded (lambda below noise correlation)";
  if (!s.cone_width_ok) msg << "; cone width estimate exceeds its bound";
  if (!s.ball_width_ok) msg << "; ball width estimate exceeds its bound";
  s.message = msg.str();
  return s;
}

// ---------------------------------------------------------------------------
// Calibration of xi and c0
//
// c0: smallest value with lambda_theory >= the `quantile` quantile of
//     R*(sum_i omega_i X_i) at every grid point.
// xi: smallest value with alpha_pred / n <= the measured restricted eigenvalue
//     on the tangent space of Theta* at every grid point and design draw.

struct CalibrationGrid {
  std::vector<std::pair<int, int>> shapes = {{10, 10}, {15, 15}};
  int rank = 2;
  std::vector<double> n_over_dp = {1.0, 2.0, 4.0, 8.0};
  std::vector<json> norms = {{{"kind", "trace"}}, {{"kind", "ksupport"}, {"k", 2}}};
  json ensemble = {{"kind", "gaussian"}};
  Noise noise{NoiseKind::Gaussian, 0.1};
  int mc_samples = 400;
  double quantile = 0.99;
  int design_draws = 3;
  int cone_samples = 2000;
  std::uint64_t seed = 20240611;
  int threads = 1;

  static CalibrationGrid from_json(const json& j) {
    CalibrationGrid g;
    try {
      if (j.contains("shapes")) {
        g.shapes.clear();
        for (const auto& s : j.at("shapes")) g.shapes.emplace_back(s.at(0).get<int>(), s.at(1).get<int>());
      }
      g.rank = j.value("rank", g.rank);
      if (j.contains("n_over_dp")) g.n_over_dp = j.at("n_over_dp").get<std::vector<double>>();
      if (j.contains("norms")) g.norms = j.at("norms").get<std::vector<json>>();
      if (j.contains("ensemble")) g.ensemble = j.at("ensemble");
      if (j.contains("noise")) g.noise = io::noise_from_json(j.at("noise"));
      g.mc_samples = j.value("mc_samples", g.mc_samples);
      g.quantile = j.value("quantile", g.quantile);
      g.design_draws = j.value("design_draws", g.design_draws);
      g.cone_samples = j.value("cone_samples", g.cone_samples);
      g.seed = j.value("seed", g.seed);
      g.threads = j.value("threads", g.threads);
    } catch (const json::exception& e) {
      throw config_error(std::string("calibration grid: ") + e.what());
    }
    if (g.shapes.empty() || g.n_over_dp.empty() || g.norms.empty()) throw config_error("calibration grid is empty");
    if (!(g.noise.tau > 0.0)) throw config_error("calibration needs noise with tau > 0");
    if (g.mc_samples < 1 || g.design_draws < 1 || g.cone_samples < 100) throw config_error("calibration sample counts too small");
    for (const auto& [d, p] : g.shapes)
      if (!(g.rank >= 1 && g.rank <= d && d <= p)) throw config_error("calibration shapes need 1 <= rank <= d <= p");
    return g;
  }

  json to_json() const {
    json shapes_j = json::array();
    for (const auto& [d, p] : shapes) shapes_j.push_back({d, p});
    return {{"shapes", shapes_j},   {"rank", rank},         {"n_over_dp", n_over_dp},
            {"norms", norms},       {"ensemble", ensemble}, {"noise", io::noise_to_json(noise)},
            {"mc_samples", mc_samples}, {"quantile", quantile}, {"design_draws", design_draws},
            {"cone_samples", cone_samples}, {"seed", seed}};
  }
};

struct CalibrationResult {
  Calibration constants;
  CalibrationGrid grid;
  std::vector<json> points;

  json to_json() const {
    return {{"xi", constants.xi}, {"c0", constants.c0}, {"grid", grid.to_json()}, {"points", points}};
  }
};

inline CalibrationResult calibrate(const CalibrationGrid& grid) {
  CalibrationResult out;
  out.grid = grid;
  double xi = 0.0, c0 = 0.0;
  for (const auto& [d, p] : grid.shapes) {
    ExperimentConfig c;
    c.d = d;
    c.p = p;
    c.r = grid.rank;
    const Ensemble e = io::ensemble_from_json(grid.ensemble, d, p);
    const Mat theta = make_ground_truth(c, stream_seed(grid.seed, static_cast<std::uint64_t>(d), static_cast<std::uint64_t>(p)));
    for (const auto& norm_j : grid.norms) {
      const SpectralNorm norm(io::gauge_from_json(norm_j, d), d, p);
      const auto dec = norm.decompose(theta);
      const double w = width_cone_mc(dec, grid.cone_samples, stream_seed(grid.seed, 0x636f6e65ULL), grid.threads).estimate;
      for (const double ratio : grid.n_over_dp) {
        const auto n = static_cast<Eigen::Index>(std::llround(ratio * d * p));
        const std::uint64_t point_seed = stream_seed(grid.seed, static_cast<std::uint64_t>(d * 1000 + p),
                                                     static_cast<std::uint64_t>(n));
        const auto rules = lambda_rules(norm, e, n, grid.noise, e.kappa, 1.0, grid.mc_samples, grid.quantile,
                                        point_seed, grid.threads);
        // lambda_theory is linear in c0, so with c0 = 1 the ratio is the requirement.
        const double c0_req = rules.lambda_empirical / rules.lambda_theory;
        double re_min = std::numeric_limits<double>::infinity();
        for (int k = 0; k < grid.design_draws; ++k) {
          const Design x = Design::sample(e, n, stream_seed(point_seed, 0x7265ULL, static_cast<std::uint64_t>(k)));
          re_min = std::min(re_min, tangent_restricted_eigenvalue(x.gram(), n, dec));
        }
        const double xi_req = (1.0 - re_min) * std::sqrt(static_cast<double>(n)) / (e.kappa * e.kappa * w);
        c0 = std::max(c0, c0_req);
        xi = std::max(xi, xi_req);
        out.points.push_back({{"d", d},
                              {"p", p},
                              {"n", n},
                              {"norm", io::gauge_to_json(norm.gauge())},
                              {"lambda_quantile", rules.lambda_empirical},
                              {"c0_required", c0_req},
                              {"width_cone_mc", w},
                              {"restricted_eigenvalue_min", re_min},
                              {"xi_required", xi_req}});
      }
    }
  }
  out.constants = {xi, c0};
  return out;
}

// ---------------------------------------------------------------------------
// Plot script written next to sweep output.

inline const char* plot_script() {
  return R"(#!/usr/bin/env python3
"""Log-log plot of median recovery error against n from records.csv files."""
import csv
import math
import sys
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def load(paths):
    errors = defaultdict(lambda: defaultdict(list))
    for path in paths:
        with open(path) as f:
            for row in csv.DictReader(f):
                errors[row["norm"]][int(row["n"])].append(float(row["error"]))
    return errors


def median(xs):
    xs = sorted(xs)
    m = len(xs) // 2
    return xs[m] if len(xs) % 2 else 0.5 * (xs[m - 1] + xs[m])


def main():
    paths = sys.argv[1:] or ["records.csv"]
    errors = load(paths)
    fig, ax = plt.subplots(figsize=(5, 4))
    for norm, by_n in sorted(errors.items()):
        ns = sorted(by_n)
        med = [median(by_n[n]) for n in ns]
        ax.loglog(ns, med, "o-", label=norm)
        if len(ns) > 1 and all(m > 0 for m in med):
            lx = [math.log(n) for n in ns]
            ly = [math.log(m) for m in med]
            mx, my = sum(lx) / len(lx), sum(ly) / len(ly)
            slope = sum((a - mx) * (b - my) for a, b in zip(lx, ly)) / sum((a - mx) ** 2 for a in lx)
            print(f"{norm}: log-log slope {slope:.3f}")
    ax.set_xlabel("n")
    ax.set_ylabel("median |Theta_hat - Theta*|_F")
    ax.legend()
    fig.tight_layout()
    fig.savefig("error_vs_n.png", dpi=150)
    print("wrote error_vs_n.png")


if __name__ == "__main__":
    main()
)";
}

/// records.csv, geometry.json, config.json and plot.py under `dir`.
inline void write_sweep_outputs(const std::filesystem::path& dir, const ExperimentConfig& c, const SweepResult& s) {
  std::filesystem::create_directories(dir);
  io::write_text_file(dir / "records.csv", records_to_csv(s.records));
  io::write_json_file(dir / "geometry.json", s.report.to_json());
  io::write_json_file(dir / "config.json", c.to_json());
  io::write_matrix_csv(dir / "theta_star.csv", s.theta_star);
  io::write_text_file(dir / "plot.py", plot_script());
}

}  // namespace gds
