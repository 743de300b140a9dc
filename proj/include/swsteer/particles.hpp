#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "swsteer/core.hpp"
#include "swsteer/errors.hpp"
#include "swsteer/rng.hpp"
#include "swsteer/steering.hpp"
#include "swsteer/threading.hpp"

namespace swsteer {

inline constexpr std::uint64_t kDefaultSeed = 12648430ull;

enum class Controller {
  iterative_sliced,
  receding_horizon,
  orthogonal_basis,
  ideal_affine,
  min_energy,
};

/// Direction-quadrature request; materialized by sample_directions.
struct DirsSpec {
  DirScheme scheme = DirScheme::deterministic_angular;
  int count = 512;
  std::uint64_t seed = 0;
};

struct SimConfig {
  double horizon = 1.0;  // T (seconds); must match the problem's horizon
  int steps = 1000;      // T_d, so h = horizon / steps
  int particles = 5000;  // N
  std::uint64_t seed = kDefaultSeed;
  Controller controller = Controller::iterative_sliced;
  DirsSpec dirs;          // quadrature for the ideal-affine flow / diagnostics
  int flow_steps = 4000;  // tau steps behind the ideal-affine controller
  double flow_epsilon = 0.0;  // 0 -> 1e-6 * horizon
  int record_every = 0;       // snapshot stride; 0 -> first and last only
  int threads = 1;
  bool low_discrepancy = false;  // golden-angle schedule instead of uniform
  bool track_sw2 = false;        // per-step SW2^2 diagnostic series
  int sw2_grid = 0;              // 0 -> particle count
};

using TargetDist = std::variant<GaussianLaw, ParticleEnsemble>;

struct SimResult {
  std::vector<ParticleEnsemble> snapshots;
  /// Accumulated sum_k h * mean_i ||u_{k,i}||^2 under the zero-order hold.
  double energy = 0.0;
  /// Horizon-weighted effort sum_k h (T - t_k) * mean_i ||u_{k,i}||^2; this
  /// is the quantity tied to the squared sliced distance.
  double weighted_energy = 0.0;
  std::vector<double> per_step_sw2;
};

namespace detail {

struct SlicedWorkspace {
  std::vector<double> proj;
  std::vector<double> mapped;
  std::vector<std::pair<double, int>> order;  // (projection, particle index)
  std::vector<double> target_proj;
  std::vector<int> rank_to_target;  // per-rank index into sorted target
  int rank_map_n = 0;
  int rank_map_nt = 0;
};

/// Projects particles on theta, ranks them with index tie-breaks, and maps
/// each particle's own projection through the 1D optimal transport map onto
/// the target's projection. Midpoint ranks make the map evaluation at the
/// r-th sorted sample equal Q_target((r + 0.5)/N), which is what ot_map_1d
/// produces at the sample points.
inline void mapped_projection(const Matrix& pts, const TargetDist& target,
                              const Direction& theta, SlicedWorkspace& ws) {
  const int n_particles = static_cast<int>(pts.rows());
  ws.proj.resize(n_particles);
  ws.mapped.resize(n_particles);
  ws.order.resize(n_particles);
  Eigen::Map<Vector>(ws.proj.data(), n_particles) = pts * theta.vec();
  for (int i = 0; i < n_particles; ++i) ws.order[i] = {ws.proj[i], i};
  std::sort(ws.order.begin(), ws.order.end());

  if (std::holds_alternative<GaussianLaw>(target)) {
    const GaussianLaw& law = std::get<GaussianLaw>(target);
    const Dist1D marginal = project_gaussian(law, theta);
    const double m = marginal.mean();
    const double sd = marginal.stddev();
    const std::vector<double>& z = midpoint_normal_quantiles(n_particles);
    for (int r = 0; r < n_particles; ++r) {
      ws.mapped[ws.order[r].second] = m + sd * z[r];
    }
    return;
  }

  const ParticleEnsemble& tgt = std::get<ParticleEnsemble>(target);
  const int nt = tgt.size();
  ws.target_proj.resize(nt);
  Eigen::Map<Vector>(ws.target_proj.data(), nt) = tgt.points() * theta.vec();
  std::sort(ws.target_proj.begin(), ws.target_proj.end());
  if (ws.rank_map_n != n_particles || ws.rank_map_nt != nt) {
    ws.rank_to_target.resize(n_particles);
    for (int r = 0; r < n_particles; ++r) {
      int idx = static_cast<int>(
          std::ceil((r + 0.5) * static_cast<double>(nt) / n_particles));
      ws.rank_to_target[r] = std::max(1, std::min(nt, idx)) - 1;
    }
    ws.rank_map_n = n_particles;
    ws.rank_map_nt = nt;
  }
  for (int r = 0; r < n_particles; ++r) {
    ws.mapped[ws.order[r].second] = ws.target_proj[ws.rank_to_target[r]];
  }
}

/// Applies x += coef * (mapped - proj) * theta and returns the mean squared
/// 1D mismatch (1/N) sum (mapped_i - proj_i)^2 before the update.
inline double apply_displacement(Matrix& pts, const Direction& theta,
                                 double coef, SlicedWorkspace& ws,
                                 int threads) {
  const int n_particles = static_cast<int>(pts.rows());
  const int dim = static_cast<int>(pts.cols());
  const Vector& th = theta.vec();
  parallel_for(static_cast<std::size_t>(n_particles), threads,
               [&](std::size_t lo, std::size_t hi) {
                 for (std::size_t i = lo; i < hi; ++i) {
                   const double d = coef * (ws.mapped[i] - ws.proj[i]);
                   for (int c = 0; c < dim; ++c) pts(i, c) += d * th[c];
                 }
               });
  double acc = 0.0;
  for (int i = 0; i < n_particles; ++i) {
    const double d = ws.mapped[i] - ws.proj[i];
    acc += d * d;
  }
  return acc / n_particles;
}

inline void check_step_preconditions(int k, const SimConfig& config) {
  if (config.steps < 1 || !(config.horizon > 0.0)) {
    throw ConfigError("invalid simulation configuration");
  }
  if (k < 0 || k >= config.steps) {
    throw DomainError("step index outside [0, T_d)");
  }
}

}  // namespace detail

/// One update of the iterative sliced controller along theta_k:
/// x_{k+1} = x_k + h u_k with u_k the first input of the 1D fixed-endpoint
/// problem, gain 1/(T - t_k). The remaining horizon is computed as
/// h * (T_d - k) so the final step lands each projection exactly on its
/// mapped value.
inline ParticleEnsemble iterative_step(const ParticleEnsemble& ens, int k,
                                       const SimConfig& config,
                                       const TargetDist& target,
                                       const Direction& theta) {
  detail::check_step_preconditions(k, config);
  const double h = config.horizon / config.steps;
  const double remaining = h * (config.steps - k);
  detail::SlicedWorkspace ws;
  detail::mapped_projection(ens.points(), target, theta, ws);
  Matrix pts = ens.points();
  detail::apply_displacement(pts, theta, h / remaining, ws, config.threads);
  return ParticleEnsemble(std::move(pts), (k + 1) * h);
}

/// Receding-horizon variant: the remaining horizon is held at T, so the
/// update is the gradient-descent-style x_{k+1} = x_k - (1/T)(s - map(s))
/// theta with constant step size 1/T and no terminal exactness.
inline ParticleEnsemble receding_horizon_step(const ParticleEnsemble& ens,
                                              int k, const SimConfig& config,
                                              const TargetDist& target,
                                              const Direction& theta) {
  detail::check_step_preconditions(k, config);
  const double h = config.horizon / config.steps;
  detail::SlicedWorkspace ws;
  detail::mapped_projection(ens.points(), target, theta, ws);
  Matrix pts = ens.points();
  detail::apply_displacement(pts, theta, 1.0 / config.horizon, ws,
                             config.threads);
  return ParticleEnsemble(std::move(pts), (k + 1) * h);
}

/// Applies the receding-horizon update simultaneously along all n columns
/// of an orthonormal basis; with the identity basis this matches the
/// coordinatewise distribution-transfer sweep.
inline ParticleEnsemble orthogonal_basis_step(const ParticleEnsemble& ens,
                                              int k, const SimConfig& config,
                                              const TargetDist& target,
                                              const Matrix& basis) {
  detail::check_step_preconditions(k, config);
  const int n = ens.dim();
  if (basis.rows() != n || basis.cols() != n ||
      (basis.transpose() * basis - Matrix::Identity(n, n))
              .cwiseAbs()
              .maxCoeff() > 1e-10) {
    throw ConfigError("orthogonal_basis_step: basis is not orthonormal");
  }
  const double h = config.horizon / config.steps;
  detail::SlicedWorkspace ws;
  Matrix pts = ens.points();
  Matrix disp = Matrix::Zero(pts.rows(), pts.cols());
  for (int j = 0; j < n; ++j) {
    const Direction theta(Vector(basis.col(j)));
    detail::mapped_projection(ens.points(), target, theta, ws);
    const double coef = 1.0 / config.horizon;
    for (int i = 0; i < pts.rows(); ++i) {
      const double d = coef * (ws.mapped[i] - ws.proj[i]);
      disp.row(i) += d * theta.vec().transpose();
    }
  }
  pts += disp;
  return ParticleEnsemble(std::move(pts), (k + 1) * h);
}

namespace detail {

inline Matrix random_rotation(int n, Rng& rng) {
  if (n == 1) return Matrix::Ones(1, 1);
  if (n == 2) {
    const double a = rng.uniform() * 2.0 * std::numbers::pi;
    Matrix q(2, 2);
    q << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
    return q;
  }
  Matrix g(n, n);
  for (int i = 0; i < n; ++i) g.row(i) = rng.normal_vector(n).transpose();
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < n; ++j) {
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  return q;
}

}  // namespace detail

/// Runs the configured controller for k = 0..T_d-1 from a seeded sample of
/// the initial law. Identical (config, seed) give bit-identical results for
/// any thread count: random draws happen sequentially before each parallel
/// section and all reductions run in fixed index order.
inline SimResult run(const SimConfig& config, const SteeringProblem& problem) {
  if (config.steps < 1) throw ConfigError("run: T_d must be >= 1");
  if (config.particles < 2) throw ConfigError("run: need at least 2 particles");
  if (!(config.horizon > 0.0)) throw ConfigError("run: horizon must be > 0");
  if (std::abs(config.horizon - problem.horizon) >
      1e-12 * std::max(1.0, problem.horizon)) {
    throw ConfigError("run: config horizon differs from problem horizon");
  }
  const int n = problem.dim();
  const int n_particles = config.particles;
  const int t_d = config.steps;
  const double horizon = problem.horizon;
  const double h = horizon / t_d;

  Rng rng(config.seed);
  Matrix pts(n_particles, n);
  {
    Eigen::LLT<Matrix> llt(problem.initial.covariance());
    if (llt.info() != Eigen::Success) {
      throw NumericError("run: initial covariance is not SPD");
    }
    const Matrix chol = llt.matrixL();
    const Vector& m0 = problem.initial.mean();
    for (int i = 0; i < n_particles; ++i) {
      pts.row(i) = (m0 + chol * rng.normal_vector(n)).transpose();
    }
  }

  const TargetDist target = problem.target;
  const bool needs_dirs = config.controller == Controller::ideal_affine ||
                          config.track_sw2;
  std::vector<DirectionSet> dirs_holder;
  if (needs_dirs) {
    dirs_holder.push_back(sample_directions(n, config.dirs.count,
                                            config.dirs.scheme,
                                            config.dirs.seed));
  }

  GaussianFlow flow(std::vector<double>{}, std::vector<double>{},
                    std::vector<Vector>{}, std::vector<Matrix>{}, horizon);
  AffineMap brenier{Matrix::Identity(n, n), Vector::Zero(n)};
  if (config.controller == Controller::ideal_affine) {
    const double eps =
        config.flow_epsilon > 0.0 ? config.flow_epsilon : 1e-6 * horizon;
    if (h < eps) {
      throw ConfigError(
          "run: step size below the flow cutoff; raise flow_epsilon or "
          "lower T_d");
    }
    flow = integrate_covariance(problem, dirs_holder.front(),
                                config.flow_steps, eps);
  } else if (config.controller == Controller::min_energy) {
    brenier = brenier_map_gaussian(problem);
  }

  SimResult result;
  const int stride = config.record_every > 0 ? config.record_every : t_d;
  result.snapshots.emplace_back(pts, 0.0);
  if (config.track_sw2) result.per_step_sw2.reserve(t_d);

  detail::SlicedWorkspace ws;
  Matrix velocity(n_particles, n);
  double golden_phase = 0.0;
  if (config.low_discrepancy) golden_phase = rng.uniform() * std::numbers::pi;
  constexpr double kGoldenAngle = 1.9416110387254506;  // pi (sqrt(5) - 1) / 2

  for (int k = 0; k < t_d; ++k) {
    const double t_k = k * h;
    const double remaining = h * (t_d - k);
    double mean_sq_u = 0.0;

    switch (config.controller) {
      case Controller::iterative_sliced:
      case Controller::receding_horizon: {
        Direction theta = [&] {
          if (config.low_discrepancy && n == 2) {
            const double phi = std::fmod(
                golden_phase + k * kGoldenAngle, std::numbers::pi);
            Vector v(2);
            v << std::cos(phi), std::sin(phi);
            return Direction::normalized(v);
          }
          return Direction(rng.unit_vector(n));
        }();
        detail::mapped_projection(pts, target, theta, ws);
        const bool receding =
            config.controller == Controller::receding_horizon;
        const double coef = receding ? 1.0 / horizon : h / remaining;
        const double ms2 =
            detail::apply_displacement(pts, theta, coef, ws, config.threads);
        const double u_scale = coef / h;  // u = (coef/h)(mapped - s) theta
        mean_sq_u = ms2 * u_scale * u_scale;
        break;
      }
      case Controller::orthogonal_basis: {
        const Matrix basis = detail::random_rotation(n, rng);
        velocity.setZero();
        double sq = 0.0;
        for (int j = 0; j < n; ++j) {
          const Direction theta(Vector(basis.col(j)));
          detail::mapped_projection(pts, target, theta, ws);
          const double coef = 1.0 / horizon;
          for (int i = 0; i < n_particles; ++i) {
            const double d = coef * (ws.mapped[i] - ws.proj[i]);
            velocity.row(i) += d * theta.vec().transpose();
            sq += d * d;  // orthonormal columns: norms add
          }
        }
        pts += velocity;
        mean_sq_u = sq / (h * h) / n_particles;
        break;
      }
      case Controller::ideal_affine: {
        const AffineController ctrl =
            controller_at(t_k, flow, problem, dirs_holder.front());
        parallel_for(static_cast<std::size_t>(n_particles), config.threads,
                     [&](std::size_t lo, std::size_t hi) {
                       for (std::size_t i = lo; i < hi; ++i) {
                         velocity.row(i) =
                             (ctrl.gain * pts.row(i).transpose() + ctrl.offset)
                                 .transpose();
                       }
                     });
        double acc = 0.0;
        for (int i = 0; i < n_particles; ++i) {
          acc += velocity.row(i).squaredNorm();
        }
        mean_sq_u = acc / n_particles;
        pts += h * velocity;
        break;
      }
      case Controller::min_energy: {
        parallel_for(
            static_cast<std::size_t>(n_particles), config.threads,
            [&](std::size_t lo, std::size_t hi) {
              for (std::size_t i = lo; i < hi; ++i) {
                velocity.row(i) =
                    min_energy_velocity(t_k, pts.row(i).transpose(), problem,
                                        brenier)
                        .transpose();
              }
            });
        double acc = 0.0;
        for (int i = 0; i < n_particles; ++i) {
          acc += velocity.row(i).squaredNorm();
        }
        mean_sq_u = acc / n_particles;
        pts += h * velocity;
        break;
      }
    }

    result.energy += h * mean_sq_u;
    result.weighted_energy += h * remaining * mean_sq_u;

    const bool last = (k + 1 == t_d);
    const double t_next = last ? horizon : (k + 1) * h;
    if (config.track_sw2) {
      const ParticleEnsemble snapshot(pts, t_next);
      const int grid = config.sw2_grid > 0 ? config.sw2_grid : n_particles;
      result.per_step_sw2.push_back(
          sw2(snapshot, problem.target, dirs_holder.front(), grid));
    }
    if (last || (k + 1) % stride == 0) {
      result.snapshots.emplace_back(pts, t_next);
    }
  }
  return result;
}

/// Accumulated control energy of a finished run (stored, not recomputed).
inline double empirical_energy(const SimResult& result) {
  return result.energy;
}

}  // namespace swsteer
