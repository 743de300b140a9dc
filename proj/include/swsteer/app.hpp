#pragma once

#include <charconv>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <ostream>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

#include "swsteer/checks.hpp"
#include "swsteer/core.hpp"
#include "swsteer/errors.hpp"
#include "swsteer/particles.hpp"
#include "swsteer/steering.hpp"
#include "swsteer/version.hpp"

namespace swsteer {

using nlohmann::json;

/// Shortest round-trip decimal rendering; independent of the C locale.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

struct OutputsConfig {
  std::string dir = "out";
  std::string prefix = "run";
  bool snapshots = true;
  bool moments = true;
  int ellipse_points = 64;
  int checkpoints = 11;
};

struct AppConfig {
  // problem
  Vector m0;
  Matrix sigma0;
  Vector mf;
  Matrix sigmaf;
  double horizon = 1.0;
  // sim
  SimConfig sim;
  bool particles_enabled = true;
  int compare_steps = 100000;
  // dirs
  DirsSpec dirs;
  // outputs / checks
  OutputsConfig outputs;
  CheckOptions check;
  json echo;  // the parsed document, for the manifest

  SteeringProblem problem() const {
    return SteeringProblem(GaussianLaw(m0, sigma0), GaussianLaw(mf, sigmaf),
                           horizon);
  }
};

namespace detail {

inline void expect_keys(const json& obj, const char* section,
                        std::initializer_list<const char*> allowed) {
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* key : allowed) {
      if (item.key() == key) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw ConfigError(std::string("unknown key '") + item.key() +
                        "' in section '" + section + "'");
    }
  }
}

inline double as_double(const json& j, const std::string& field) {
  if (!j.is_number()) {
    throw ConfigError("field '" + field + "' must be a number");
  }
  return j.get<double>();
}

inline int as_int(const json& j, const std::string& field) {
  if (!j.is_number_integer()) {
    throw ConfigError("field '" + field + "' must be an integer");
  }
  return j.get<int>();
}

inline std::uint64_t as_seed(const json& j, const std::string& field) {
  if (!j.is_number_unsigned() && !j.is_number_integer()) {
    throw ConfigError("field '" + field + "' must be an integer seed");
  }
  return j.get<std::uint64_t>();
}

inline bool as_bool(const json& j, const std::string& field) {
  if (!j.is_boolean()) {
    throw ConfigError("field '" + field + "' must be a boolean");
  }
  return j.get<bool>();
}

inline Vector as_vector(const json& j, const std::string& field) {
  if (!j.is_array() || j.empty()) {
    throw ConfigError("field '" + field + "' must be a non-empty array");
  }
  Vector v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v[i] = as_double(j[i], field);
  return v;
}

inline Matrix as_matrix(const json& j, const std::string& field) {
  if (!j.is_array() || j.empty()) {
    throw ConfigError("field '" + field + "' must be an array of rows");
  }
  const std::size_t rows = j.size();
  Matrix m(rows, rows);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != rows) {
      throw ConfigError("field '" + field + "' must be a square matrix");
    }
    for (std::size_t c = 0; c < rows; ++c) {
      m(r, c) = as_double(j[r][c], field);
    }
  }
  return m;
}

inline Controller controller_from_name(const std::string& name) {
  if (name == "iterative-sliced") return Controller::iterative_sliced;
  if (name == "receding-horizon") return Controller::receding_horizon;
  if (name == "orthogonal-basis") return Controller::orthogonal_basis;
  if (name == "ideal-affine") return Controller::ideal_affine;
  if (name == "min-energy") return Controller::min_energy;
  throw ConfigError("unknown controller '" + name + "'");
}

inline const char* controller_name(Controller c) {
  switch (c) {
    case Controller::iterative_sliced: return "iterative-sliced";
    case Controller::receding_horizon: return "receding-horizon";
    case Controller::orthogonal_basis: return "orthogonal-basis";
    case Controller::ideal_affine: return "ideal-affine";
    default: return "min-energy";
  }
}

inline DirScheme scheme_from_name(const std::string& name) {
  if (name == "deterministic-angular") return DirScheme::deterministic_angular;
  if (name == "monte-carlo") return DirScheme::monte_carlo;
  throw ConfigError("unknown direction scheme '" + name + "'");
}

}  // namespace detail

/// The default scenario: the anisotropic planar Gaussian pair used
/// throughout the experiments, unit horizon, deterministic 512-angle
/// quadrature, iterative-sliced controller.
inline AppConfig default_config() {
  AppConfig cfg;
  cfg.m0 = Vector(2);
  cfg.m0 << -2.0, 2.0;
  cfg.sigma0 = Matrix(2, 2);
  cfg.sigma0 << 1.0, 0.2, 0.2, 0.5;
  cfg.mf = Vector(2);
  cfg.mf << -8.0, 4.0;
  cfg.sigmaf = Matrix(2, 2);
  cfg.sigmaf << 0.1, 0.0, 0.0, 0.04;
  cfg.horizon = 1.0;
  cfg.sim.horizon = 1.0;
  cfg.sim.steps = 1000;
  cfg.sim.particles = 5000;
  cfg.sim.record_every = 100;
  cfg.echo = json::object();
  return cfg;
}

inline AppConfig parse_config(const json& doc) {
  if (!doc.is_object()) {
    throw ConfigError("config document must be a JSON object");
  }
  detail::expect_keys(doc, "(top level)",
                      {"problem", "sim", "dirs", "outputs", "check"});
  AppConfig cfg = default_config();
  cfg.echo = doc;

  if (doc.contains("problem")) {
    const json& p = doc["problem"];
    detail::expect_keys(p, "problem",
                        {"n", "m0", "Sigma0", "mf", "Sigmaf", "T"});
    if (p.contains("m0")) cfg.m0 = detail::as_vector(p["m0"], "problem.m0");
    if (p.contains("mf")) cfg.mf = detail::as_vector(p["mf"], "problem.mf");
    if (p.contains("Sigma0")) {
      cfg.sigma0 = detail::as_matrix(p["Sigma0"], "problem.Sigma0");
    }
    if (p.contains("Sigmaf")) {
      cfg.sigmaf = detail::as_matrix(p["Sigmaf"], "problem.Sigmaf");
    }
    if (p.contains("T")) {
      cfg.horizon = detail::as_double(p["T"], "problem.T");
      if (!(cfg.horizon > 0.0)) {
        throw ConfigError("field 'problem.T' must be positive");
      }
    }
    if (p.contains("n")) {
      const int n = detail::as_int(p["n"], "problem.n");
      if (n != cfg.m0.size()) {
        throw ConfigError("field 'problem.n' disagrees with m0 length");
      }
    }
    if (cfg.m0.size() != cfg.mf.size() ||
        cfg.sigma0.rows() != cfg.m0.size() ||
        cfg.sigmaf.rows() != cfg.m0.size()) {
      throw ConfigError("problem section has inconsistent dimensions");
    }
  }
  cfg.sim.horizon = cfg.horizon;

  if (doc.contains("sim")) {
    const json& s = doc["sim"];
    detail::expect_keys(
        s, "sim",
        {"Td", "N", "seed", "controller", "record_every", "threads",
         "low_discrepancy", "per_step_sw2", "sw2_grid", "flow_steps",
         "flow_epsilon", "compare_Td", "particles"});
    if (s.contains("Td")) {
      cfg.sim.steps = detail::as_int(s["Td"], "sim.Td");
      if (cfg.sim.steps < 1) throw ConfigError("field 'sim.Td' must be >= 1");
    }
    if (s.contains("N")) {
      cfg.sim.particles = detail::as_int(s["N"], "sim.N");
      if (cfg.sim.particles < 2) {
        throw ConfigError("field 'sim.N' must be >= 2");
      }
    }
    if (s.contains("seed")) cfg.sim.seed = detail::as_seed(s["seed"], "sim.seed");
    if (s.contains("controller")) {
      if (!s["controller"].is_string()) {
        throw ConfigError("field 'sim.controller' must be a string");
      }
      cfg.sim.controller =
          detail::controller_from_name(s["controller"].get<std::string>());
    }
    if (s.contains("record_every")) {
      cfg.sim.record_every = detail::as_int(s["record_every"], "sim.record_every");
      if (cfg.sim.record_every < 0) {
        throw ConfigError("field 'sim.record_every' must be >= 0");
      }
    }
    if (s.contains("threads")) {
      cfg.sim.threads = detail::as_int(s["threads"], "sim.threads");
      if (cfg.sim.threads < 1) {
        throw ConfigError("field 'sim.threads' must be >= 1");
      }
    }
    if (s.contains("low_discrepancy")) {
      cfg.sim.low_discrepancy =
          detail::as_bool(s["low_discrepancy"], "sim.low_discrepancy");
    }
    if (s.contains("per_step_sw2")) {
      cfg.sim.track_sw2 = detail::as_bool(s["per_step_sw2"], "sim.per_step_sw2");
    }
    if (s.contains("sw2_grid")) {
      cfg.sim.sw2_grid = detail::as_int(s["sw2_grid"], "sim.sw2_grid");
    }
    if (s.contains("flow_steps")) {
      cfg.sim.flow_steps = detail::as_int(s["flow_steps"], "sim.flow_steps");
      if (cfg.sim.flow_steps < 10) {
        throw ConfigError("field 'sim.flow_steps' must be >= 10");
      }
    }
    if (s.contains("flow_epsilon")) {
      cfg.sim.flow_epsilon =
          detail::as_double(s["flow_epsilon"], "sim.flow_epsilon");
      if (!(cfg.sim.flow_epsilon > 0.0)) {
        throw ConfigError("field 'sim.flow_epsilon' must be positive");
      }
    }
    if (s.contains("compare_Td")) {
      cfg.compare_steps = detail::as_int(s["compare_Td"], "sim.compare_Td");
      if (cfg.compare_steps < 1) {
        throw ConfigError("field 'sim.compare_Td' must be >= 1");
      }
    }
    if (s.contains("particles")) {
      cfg.particles_enabled = detail::as_bool(s["particles"], "sim.particles");
    }
  }

  if (doc.contains("dirs")) {
    const json& d = doc["dirs"];
    detail::expect_keys(d, "dirs", {"scheme", "count", "seed"});
    if (d.contains("scheme")) {
      if (!d["scheme"].is_string()) {
        throw ConfigError("field 'dirs.scheme' must be a string");
      }
      cfg.dirs.scheme =
          detail::scheme_from_name(d["scheme"].get<std::string>());
    }
    if (d.contains("count")) {
      cfg.dirs.count = detail::as_int(d["count"], "dirs.count");
      if (cfg.dirs.count < 1) throw ConfigError("field 'dirs.count' must be >= 1");
    }
    if (d.contains("seed")) cfg.dirs.seed = detail::as_seed(d["seed"], "dirs.seed");
  }
  cfg.sim.dirs = cfg.dirs;

  if (doc.contains("outputs")) {
    const json& o = doc["outputs"];
    detail::expect_keys(o, "outputs",
                        {"dir", "prefix", "snapshots", "moments",
                         "ellipse_points", "checkpoints"});
    if (o.contains("dir")) {
      if (!o["dir"].is_string()) {
        throw ConfigError("field 'outputs.dir' must be a string");
      }
      cfg.outputs.dir = o["dir"].get<std::string>();
    }
    if (o.contains("prefix")) {
      if (!o["prefix"].is_string()) {
        throw ConfigError("field 'outputs.prefix' must be a string");
      }
      cfg.outputs.prefix = o["prefix"].get<std::string>();
    }
    if (o.contains("snapshots")) {
      cfg.outputs.snapshots = detail::as_bool(o["snapshots"], "outputs.snapshots");
    }
    if (o.contains("moments")) {
      cfg.outputs.moments = detail::as_bool(o["moments"], "outputs.moments");
    }
    if (o.contains("ellipse_points")) {
      cfg.outputs.ellipse_points =
          detail::as_int(o["ellipse_points"], "outputs.ellipse_points");
      if (cfg.outputs.ellipse_points < 3) {
        throw ConfigError("field 'outputs.ellipse_points' must be >= 3");
      }
    }
    if (o.contains("checkpoints")) {
      cfg.outputs.checkpoints =
          detail::as_int(o["checkpoints"], "outputs.checkpoints");
      if (cfg.outputs.checkpoints < 2) {
        throw ConfigError("field 'outputs.checkpoints' must be >= 2");
      }
    }
  }

  if (doc.contains("check")) {
    const json& c = doc["check"];
    detail::expect_keys(c, "check",
                        {"flow_steps", "epsilon", "fd_step", "times",
                         "derivative_tolerance", "sigma_tolerance",
                         "mean_tolerance", "energy_rtol", "property_seed",
                         "property_pairs", "oracle_angles", "oracle_grid"});
    if (c.contains("flow_steps")) {
      cfg.check.flow_steps = detail::as_int(c["flow_steps"], "check.flow_steps");
    }
    if (c.contains("epsilon")) {
      cfg.check.epsilon = detail::as_double(c["epsilon"], "check.epsilon");
    }
    if (c.contains("fd_step")) {
      cfg.check.fd_step = detail::as_double(c["fd_step"], "check.fd_step");
    }
    if (c.contains("times")) {
      const Vector v = detail::as_vector(c["times"], "check.times");
      cfg.check.derivative_times.assign(v.data(), v.data() + v.size());
    }
    if (c.contains("derivative_tolerance")) {
      cfg.check.derivative_tolerance =
          detail::as_double(c["derivative_tolerance"],
                            "check.derivative_tolerance");
    }
    if (c.contains("sigma_tolerance")) {
      cfg.check.sigma_tolerance =
          detail::as_double(c["sigma_tolerance"], "check.sigma_tolerance");
    }
    if (c.contains("mean_tolerance")) {
      cfg.check.mean_tolerance =
          detail::as_double(c["mean_tolerance"], "check.mean_tolerance");
    }
    if (c.contains("energy_rtol")) {
      cfg.check.energy_rtol =
          detail::as_double(c["energy_rtol"], "check.energy_rtol");
    }
    if (c.contains("property_seed")) {
      cfg.check.property_seed =
          detail::as_seed(c["property_seed"], "check.property_seed");
    }
    if (c.contains("property_pairs")) {
      cfg.check.property_pairs =
          detail::as_int(c["property_pairs"], "check.property_pairs");
    }
    if (c.contains("oracle_angles")) {
      cfg.check.oracle_angles =
          detail::as_int(c["oracle_angles"], "check.oracle_angles");
    }
    if (c.contains("oracle_grid")) {
      cfg.check.oracle_grid =
          detail::as_int(c["oracle_grid"], "check.oracle_grid");
    }
  }
  return cfg;
}

inline AppConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " +
                      e.what());
  }
  return parse_config(doc);
}

namespace detail {

class OutputSet {
 public:
  OutputSet(const OutputsConfig& outputs, const std::string& command)
      : dir_(outputs.dir), prefix_(outputs.prefix), command_(command) {
    std::filesystem::create_directories(dir_);
  }

  std::string path_for(const std::string& stem) const {
    return (std::filesystem::path(dir_) / (prefix_ + "_" + stem)).string();
  }

  std::ofstream open(const std::string& stem, const std::string& logical) {
    const std::string path = path_for(stem);
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw NumericError("cannot open output file '" + path + "'");
    written_.emplace_back(logical, path);
    return out;
  }

  void note(const std::string& logical, const std::string& path) {
    written_.emplace_back(logical, path);
  }

  /// Writes the manifest last, so its existence certifies the other files.
  void write_manifest(const json& config_echo, std::uint64_t seed,
                      double wall_seconds, const json& extra) {
    json outputs = json::object();
    for (const auto& [logical, path] : written_) outputs[logical] = path;
    json manifest{{"command", command_},
                  {"version", std::string(kVersion)},
                  {"seed", seed},
                  {"wall_time_s", wall_seconds},
                  {"config", config_echo},
                  {"outputs", outputs}};
    for (const auto& item : extra.items()) manifest[item.key()] = item.value();
    const std::string path = path_for("manifest.json");
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw NumericError("cannot open manifest '" + path + "'");
    out << manifest.dump(2) << "\n";
  }

 private:
  std::string dir_;
  std::string prefix_;
  std::string command_;
  std::vector<std::pair<std::string, std::string>> written_;
};

inline void write_snapshots_csv(std::ofstream& out,
                                const std::vector<ParticleEnsemble>& snaps) {
  const int dim = snaps.front().dim();
  out << "t,particle_id";
  for (int c = 0; c < dim; ++c) out << ",x_" << (c + 1);
  out << "\n";
  for (const auto& snap : snaps) {
    for (int i = 0; i < snap.size(); ++i) {
      out << format_double(snap.time()) << "," << i;
      for (int c = 0; c < dim; ++c) {
        out << "," << format_double(snap.points()(i, c));
      }
      out << "\n";
    }
  }
}

inline void write_moments_header(std::ofstream& out, int dim) {
  out << "t";
  for (int c = 0; c < dim; ++c) out << ",m_" << (c + 1);
  for (int r = 0; r < dim; ++r) {
    for (int c = 0; c < dim; ++c) out << ",Sigma_" << (r + 1) << (c + 1);
  }
  out << "\n";
}

inline void write_moments_row(std::ofstream& out, double t, const Vector& m,
                              const Matrix& sigma) {
  out << format_double(t);
  for (int c = 0; c < m.size(); ++c) out << "," << format_double(m[c]);
  for (int r = 0; r < sigma.rows(); ++r) {
    for (int c = 0; c < sigma.cols(); ++c) {
      out << "," << format_double(sigma(r, c));
    }
  }
  out << "\n";
}

/// Max deviation of the time-augmented path (t_k, x_k) from the straight
/// chord between its endpoints; zero for constant-velocity motion.
inline double max_path_chord_deviation(
    const std::vector<ParticleEnsemble>& snaps) {
  if (snaps.size() < 3) return 0.0;
  const int n_particles = snaps.front().size();
  const int dim = snaps.front().dim();
  const int n_snaps = static_cast<int>(snaps.size());
  double worst = 0.0;
  Vector a(dim + 1), b(dim + 1), p(dim + 1);
  for (int i = 0; i < n_particles; ++i) {
    a[0] = snaps.front().time();
    a.tail(dim) = snaps.front().points().row(i).transpose();
    b[0] = snaps.back().time();
    b.tail(dim) = snaps.back().points().row(i).transpose();
    const Vector chord = b - a;
    const double len2 = chord.squaredNorm();
    for (int k = 1; k + 1 < n_snaps; ++k) {
      p[0] = snaps[k].time();
      p.tail(dim) = snaps[k].points().row(i).transpose();
      const Vector rel = p - a;
      const double s = len2 > 0.0 ? rel.dot(chord) / len2 : 0.0;
      const double clamped = std::min(1.0, std::max(0.0, s));
      worst = std::max(worst, (rel - clamped * chord).norm());
    }
  }
  return worst;
}

inline void ellipse_vertices(std::ofstream& out, const std::string& name,
                             double t, const Vector& mean, const Matrix& sigma,
                             int points) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(sigma);
  if (es.info() != Eigen::Success) {
    throw NumericError("ellipse: eigendecomposition failed");
  }
  const Vector scale = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  for (int v = 0; v < points; ++v) {
    const double ang = 2.0 * std::numbers::pi * v / points;
    Vector unit(2);
    unit << std::cos(ang), std::sin(ang);
    const Vector vertex =
        mean + 3.0 * (es.eigenvectors() * scale.asDiagonal() * unit);
    out << name << "," << format_double(t) << "," << v << ","
        << format_double(vertex[0]) << "," << format_double(vertex[1])
        << "\n";
  }
}

}  // namespace detail

/// `steer`: run the configured controller and emit snapshots, moments, the
/// accumulated energy, and a manifest.
inline int cmd_steer(const AppConfig& cfg, std::ostream& log) {
  const auto t_start = std::chrono::steady_clock::now();
  const SteeringProblem problem = cfg.problem();
  log << "steer: controller=" << detail::controller_name(cfg.sim.controller)
      << " Td=" << cfg.sim.steps << " N=" << cfg.sim.particles
      << " seed=" << cfg.sim.seed << "\n";

  detail::OutputSet out(cfg.outputs, "steer");
  json extra = json::object();

  if (!cfg.particles_enabled) {
    if (cfg.sim.controller != Controller::ideal_affine) {
      throw ConfigError(
          "sim.particles=false requires controller='ideal-affine'");
    }
    const DirectionSet dirs = sample_directions(
        problem.dim(), cfg.dirs.count, cfg.dirs.scheme, cfg.dirs.seed);
    const double eps = cfg.sim.flow_epsilon > 0.0 ? cfg.sim.flow_epsilon
                                                  : 1e-6 * problem.horizon;
    const GaussianFlow flow =
        integrate_covariance(problem, dirs, cfg.sim.flow_steps, eps);
    auto moments = out.open("moments.csv", "moments");
    detail::write_moments_header(moments, problem.dim());
    const int stride = std::max(1, flow.size() / 1000);
    for (int i = 0; i < flow.size(); i += stride) {
      detail::write_moments_row(moments, flow.time(i), flow.mean(i),
                                flow.covariance(i));
    }
    // Terminal row snapped to the target, which the flow approaches as
    // t -> T.
    detail::write_moments_row(moments, problem.horizon, problem.target.mean(),
                              problem.target.covariance());
    extra["flow_terminal_time"] = flow.terminal_time();
  } else {
    const SimResult result = run(cfg.sim, problem);
    if (cfg.outputs.snapshots) {
      auto snd = out.open("snapshots.csv", "snapshots");
      detail::write_snapshots_csv(snd, result.snapshots);
    }
    if (cfg.outputs.moments) {
      auto moments = out.open("moments.csv", "moments");
      detail::write_moments_header(moments, problem.dim());
      for (const auto& snap : result.snapshots) {
        detail::write_moments_row(moments, snap.time(), snap.mean(),
                                  snap.covariance());
      }
    }
    if (cfg.sim.track_sw2) {
      auto series = out.open("sw2.csv", "per_step_sw2");
      series << "k,sw2\n";
      for (std::size_t k = 0; k < result.per_step_sw2.size(); ++k) {
        series << k << "," << format_double(result.per_step_sw2[k]) << "\n";
      }
    }
    {
      auto energy = out.open("energy.txt", "energy");
      energy << format_double(result.energy) << "\n";
    }
    extra["energy"] = result.energy;
    extra["weighted_energy"] = result.weighted_energy;
    if (cfg.sim.controller == Controller::min_energy) {
      const double dev = detail::max_path_chord_deviation(result.snapshots);
      extra["paths_collinear"] = dev <= 1e-9;
      extra["max_chord_deviation"] = dev;
    }
  }

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  out.write_manifest(cfg.echo, cfg.sim.seed, wall, extra);
  log << "steer: wrote outputs under " << cfg.outputs.dir << "\n";
  return 0;
}

/// `compare`: covariance evolution and 3-sigma ellipses for the iterative,
/// direction-averaged, and minimum-energy controllers on one problem.
inline int cmd_compare(const AppConfig& cfg, std::ostream& log) {
  const auto t_start = std::chrono::steady_clock::now();
  const SteeringProblem problem = cfg.problem();
  if (problem.dim() != 2) {
    throw ConfigError("compare: ellipse output requires n = 2");
  }
  const int segments = cfg.outputs.checkpoints - 1;
  if (cfg.compare_steps % segments != 0) {
    throw ConfigError(
        "compare: sim.compare_Td must be divisible by checkpoints-1");
  }
  log << "compare: Td=" << cfg.compare_steps << " N=" << cfg.sim.particles
      << " seed=" << cfg.sim.seed << "\n";

  const DirectionSet dirs = sample_directions(2, cfg.dirs.count,
                                              cfg.dirs.scheme, cfg.dirs.seed);
  const double eps = cfg.sim.flow_epsilon > 0.0 ? cfg.sim.flow_epsilon
                                                : 1e-6 * problem.horizon;
  const GaussianFlow flow =
      integrate_covariance(problem, dirs, cfg.sim.flow_steps, eps);
  const AffineMap brenier = brenier_map_gaussian(problem);

  SimConfig iter_cfg = cfg.sim;
  iter_cfg.controller = Controller::iterative_sliced;
  iter_cfg.steps = cfg.compare_steps;
  iter_cfg.record_every = cfg.compare_steps / segments;
  iter_cfg.track_sw2 = false;
  const SimResult iterative = run(iter_cfg, problem);

  detail::OutputSet out(cfg.outputs, "compare");
  auto ellipse = out.open("ellipse.csv", "ellipse");
  ellipse << "controller,t,vertex_index,x_1,x_2\n";

  const auto moments_for = [&](const char* name) {
    return out.open(std::string("moments_") + name + ".csv",
                    std::string("moments_") + name);
  };

  {
    auto m = moments_for("iterative-sliced");
    detail::write_moments_header(m, 2);
    for (const auto& snap : iterative.snapshots) {
      detail::write_moments_row(m, snap.time(), snap.mean(),
                                snap.covariance());
      detail::ellipse_vertices(ellipse, "iterative-sliced", snap.time(),
                               snap.mean(), snap.covariance(),
                               cfg.outputs.ellipse_points);
    }
  }
  {
    auto m = moments_for("ideal-affine");
    detail::write_moments_header(m, 2);
    for (int j = 0; j <= segments; ++j) {
      const double t = problem.horizon * j / segments;
      const bool terminal = (j == segments);
      const Vector mean = terminal ? problem.target.mean()
                                   : mean_trajectory(problem, t);
      const Matrix sigma = terminal ? problem.target.covariance()
                                    : flow.covariance_at(t);
      detail::write_moments_row(m, t, mean, sigma);
      detail::ellipse_vertices(ellipse, "ideal-affine", t, mean, sigma,
                               cfg.outputs.ellipse_points);
    }
  }
  {
    auto m = moments_for("min-energy");
    detail::write_moments_header(m, 2);
    for (int j = 0; j <= segments; ++j) {
      const double t = problem.horizon * j / segments;
      const double alpha = t / problem.horizon;
      const Matrix interp =
          (1.0 - alpha) * Matrix::Identity(2, 2) + alpha * brenier.A;
      const Vector mean = interp * problem.initial.mean() + alpha * brenier.b;
      const Matrix sigma =
          interp * problem.initial.covariance() * interp.transpose();
      detail::write_moments_row(m, t, mean, sigma);
      detail::ellipse_vertices(ellipse, "min-energy", t, mean, sigma,
                               cfg.outputs.ellipse_points);
    }
  }

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  out.write_manifest(cfg.echo, cfg.sim.seed, wall, json::object());
  log << "compare: wrote outputs under " << cfg.outputs.dir << "\n";
  return 0;
}

/// `check`: run the certification suite, emit the JSON report, and return
/// 0 only if every check passes.
inline int cmd_check(const AppConfig& cfg, std::ostream& log) {
  const auto t_start = std::chrono::steady_clock::now();
  const SteeringProblem problem = cfg.problem();
  const DirectionSet dirs = sample_directions(
      problem.dim(), cfg.dirs.count, cfg.dirs.scheme, cfg.dirs.seed);
  log << "check: dirs=" << cfg.dirs.count << " seed=" << cfg.sim.seed << "\n";

  const std::vector<CheckReport> reports =
      run_all_checks(problem, dirs, cfg.check);

  detail::OutputSet out(cfg.outputs, "check");
  {
    auto report = out.open("report.json", "report");
    report << reports_to_json(reports).dump(2) << "\n";
  }
  bool all_pass = true;
  for (const auto& r : reports) {
    log << (r.passed() ? "PASS" : (r.status == CheckStatus::inconclusive
                                       ? "INCONCLUSIVE"
                                       : "FAIL"))
        << "  " << r.name << "  measured=" << format_double(r.measured)
        << " expected=" << format_double(r.expected)
        << " tol=" << format_double(r.tolerance) << "\n";
    all_pass = all_pass && r.passed();
  }
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  json extra{{"all_pass", all_pass}};
  out.write_manifest(cfg.echo, cfg.sim.seed, wall, extra);
  return all_pass ? 0 : 1;
}

}  // namespace swsteer
