#pragma once

// Serialization: JSON descriptors for gauges, ensembles, noise and solver
// options; CSV matrices and vectors; measurement-set directories.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "gds/measurements.hpp"
#include "gds/solver.hpp"

namespace gds {

using json = nlohmann::json;

/// Malformed or inconsistent configuration input.
class config_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace io {

inline std::string format_double(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

// ---------------------------------------------------------------------------
// JSON descriptors

/// {"kind": "trace"|"l1"|"frobenius"|"l2"|"owl"|"ksupport"|"kyfan", "k": .., "weights": [..], "dim": ..}
/// `dim` defaults to `default_dim` and must match it when both are given.
inline Gauge gauge_from_json(const json& j, int default_dim) {
  if (!j.is_object() || !j.contains("kind")) throw config_error("norm descriptor needs a \"kind\"");
  const std::string kind = j.at("kind").get<std::string>();
  const int dim = j.value("dim", default_dim);
  if (default_dim > 0 && dim != default_dim)
    throw config_error("norm dim " + std::to_string(dim) + " does not match min(d, p) = " + std::to_string(default_dim));
  try {
    if (kind == "trace" || kind == "l1" || kind == "nuclear") return Gauge::l1(dim);
    if (kind == "frobenius" || kind == "l2") return Gauge::l2(dim);
    if (kind == "ksupport") return Gauge::ksupport(j.at("k").get<int>(), dim);
    if (kind == "kyfan") return Gauge::ky_fan(j.at("k").get<int>(), dim);
    if (kind == "owl") {
      const auto w = j.at("weights").get<std::vector<double>>();
      if (static_cast<int>(w.size()) != dim) throw config_error("owl weights must have length " + std::to_string(dim));
      return Gauge::owl(Eigen::Map<const Vec>(w.data(), static_cast<Eigen::Index>(w.size())));
    }
  } catch (const std::invalid_argument& e) {
    throw config_error(std::string("invalid norm descriptor: ") + e.what());
  }
  throw config_error("unknown norm kind \"" + kind + "\"");
}

inline json gauge_to_json(const Gauge& g) {
  json j;
  j["dim"] = g.dim();
  switch (g.kind()) {
    case GaugeKind::L1: j["kind"] = "trace"; break;
    case GaugeKind::L2: j["kind"] = "frobenius"; break;
    case GaugeKind::KSupport: j["kind"] = "ksupport"; j["k"] = g.k(); break;
    case GaugeKind::KyFan: j["kind"] = "kyfan"; j["k"] = g.k(); break;
    case GaugeKind::OWL:
      j["kind"] = "owl";
      j["weights"] = std::vector<double>(g.weights().data(), g.weights().data() + g.weights().size());
      break;
  }
  return j;
}

inline EnsembleKind ensemble_kind_from_string(const std::string& s) {
  if (s == "gaussian") return EnsembleKind::Gaussian;
  if (s == "rademacher") return EnsembleKind::Rademacher;
  if (s == "sparse_sign") return EnsembleKind::SparseSign;
  throw config_error("unknown ensemble kind \"" + s + "\"");
}

/// {"kind": "gaussian"|"rademacher"|"sparse_sign", "sparsity": s, "kappa": k}; shape is supplied separately.
inline Ensemble ensemble_from_json(const json& j, int rows, int cols) {
  Ensemble e;
  e.kind = ensemble_kind_from_string(j.value("kind", std::string("gaussian")));
  e.rows = rows;
  e.cols = cols;
  e.sparsity = j.value("sparsity", 1);
  e.kappa = j.value("kappa", 1.0);
  try {
    e.validate();
  } catch (const std::invalid_argument& err) {
    throw config_error(err.what());
  }
  return e;
}

inline json ensemble_to_json(const Ensemble& e) {
  return {{"kind", e.name()}, {"sparsity", e.sparsity}, {"kappa", e.kappa}};
}

inline Noise noise_from_json(const json& j) {
  Noise n;
  n.tau = j.value("tau", 0.0);
  const std::string kind = j.value("kind", std::string(n.tau > 0.0 ? "gaussian" : "none"));
  if (kind == "none") n.kind = NoiseKind::None;
  else if (kind == "gaussian") n.kind = NoiseKind::Gaussian;
  else if (kind == "rademacher") n.kind = NoiseKind::Rademacher;
  else throw config_error("unknown noise kind \"" + kind + "\"");
  if (n.tau < 0.0) throw config_error("noise tau must be nonnegative");
  if (n.kind == NoiseKind::None) n.tau = 0.0;
  return n;
}

inline json noise_to_json(const Noise& n) { return {{"kind", n.name()}, {"tau", n.tau}}; }

/// Reads max_iter, feas_tol, opt_tol, step_scale, log_every (and the finer
/// knobs when present); absent keys keep their defaults.
inline SolverOptions solver_options_from_json(const json& j) {
  SolverOptions o;
  if (j.is_null()) return o;
  o.max_iter = j.value("max_iter", o.max_iter);
  o.feas_tol = j.value("feas_tol", o.feas_tol);
  o.opt_tol = j.value("opt_tol", o.opt_tol);
  o.step_scale = j.value("step_scale", o.step_scale);
  o.log_every = j.value("log_every", o.log_every);
  o.window = j.value("window", o.window);
  o.primal_weight = j.value("primal_weight", o.primal_weight);
  o.weight_update_every = j.value("weight_update_every", o.weight_update_every);
  if (o.max_iter < 1) throw config_error("solver.max_iter must be >= 1");
  if (!(o.opt_tol > 0.0)) throw config_error("solver.opt_tol must be positive");
  if (!(o.step_scale > 0.0 && o.step_scale < 1.0)) throw config_error("solver.step_scale must lie in (0, 1)");
  return o;
}

inline json solver_options_to_json(const SolverOptions& o) {
  return {{"max_iter", o.max_iter},     {"feas_tol", o.feas_tol},
          {"opt_tol", o.opt_tol},       {"step_scale", o.step_scale},
          {"log_every", o.log_every},   {"window", o.window},
          {"primal_weight", o.primal_weight}, {"weight_update_every", o.weight_update_every}};
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw config_error(path.string() + ": " + e.what());
  }
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

inline void write_json_file(const std::filesystem::path& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

// ---------------------------------------------------------------------------
// CSV

/// "# rows,cols" header followed by one comma-separated line per row.
inline std::string matrix_to_csv(const Mat& a) {
  std::ostringstream os;
  os << "# " << a.rows() << "," << a.cols() << "\n";
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) os << (j ? "," : "") << format_double(a(i, j));
    os << "\n";
  }
  return os.str();
}

inline Mat matrix_from_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("#", 0) != 0) throw config_error("matrix CSV: missing \"# rows,cols\" header");
  long rows = 0, cols = 0;
  char comma = 0;
  std::istringstream header(line.substr(1));
  if (!(header >> rows >> comma >> cols) || comma != ',' || rows < 0 || cols < 0)
    throw config_error("matrix CSV: malformed header \"" + line + "\"");
  Mat a(rows, cols);
  for (long i = 0; i < rows; ++i) {
    if (!std::getline(in, line)) throw config_error("matrix CSV: expected " + std::to_string(rows) + " rows");
    std::istringstream row(line);
    std::string cell;
    long j = 0;
    for (; std::getline(row, cell, ','); ++j) {
      if (j >= cols) throw config_error("matrix CSV: too many columns in row " + std::to_string(i));
      try {
        a(i, j) = std::stod(cell);
      } catch (const std::exception&) {
        throw config_error("matrix CSV: bad number \"" + cell + "\"");
      }
    }
    if (j != cols) throw config_error("matrix CSV: row " + std::to_string(i) + " has " + std::to_string(j) + " columns");
  }
  return a;
}

inline void write_matrix_csv(const std::filesystem::path& path, const Mat& a) { write_text_file(path, matrix_to_csv(a)); }

inline Mat read_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open " + path.string());
  return matrix_from_csv(in);
}

/// One value per line.
inline void write_vector_csv(const std::filesystem::path& path, const Vec& v) {
  std::ostringstream os;
  for (Eigen::Index i = 0; i < v.size(); ++i) os << format_double(v(i)) << "\n";
  write_text_file(path, os.str());
}

inline Vec read_vector_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open " + path.string());
  std::vector<double> xs;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    try {
      xs.push_back(std::stod(line));
    } catch (const std::exception&) {
      throw config_error(path.string() + ": bad number \"" + line + "\"");
    }
  }
  return Eigen::Map<const Vec>(xs.data(), static_cast<Eigen::Index>(xs.size()));
}

inline std::string iteration_log_to_csv(const std::vector<IterationLog>& log) {
  std::ostringstream os;
  os << "iter,objective,residual,gap\n";
  for (const auto& e : log)
    os << e.iter << "," << format_double(e.objective) << "," << format_double(e.residual) << "," << format_double(e.gap)
       << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Measurement sets: meta.json describes how to regenerate the X_i, y.csv holds y.

inline void save_measurements(const std::filesystem::path& dir, const MeasurementSet& m) {
  std::filesystem::create_directories(dir);
  json meta = {{"rows", m.ensemble.rows},
               {"cols", m.ensemble.cols},
               {"ensemble", ensemble_to_json(m.ensemble)},
               {"n", m.n},
               {"seed", m.seed},
               {"noise", noise_to_json(m.noise)},
               {"noise_seed", m.noise_seed}};
  write_json_file(dir / "meta.json", meta);
  write_vector_csv(dir / "y.csv", m.y);
}

inline MeasurementSet load_measurements(const std::filesystem::path& dir) {
  const json meta = read_json_file(dir / "meta.json");
  MeasurementSet m;
  m.ensemble = ensemble_from_json(meta.at("ensemble"), meta.at("rows").get<int>(), meta.at("cols").get<int>());
  m.n = meta.at("n").get<Eigen::Index>();
  m.seed = meta.at("seed").get<std::uint64_t>();
  m.noise = noise_from_json(meta.at("noise"));
  m.noise_seed = meta.at("noise_seed").get<std::uint64_t>();
  m.y = read_vector_csv(dir / "y.csv");
  if (m.y.size() != m.n) throw config_error("y.csv has " + std::to_string(m.y.size()) + " entries, meta says n = " +
                                            std::to_string(m.n));
  return m;
}

}  // namespace io
}  // namespace gds
