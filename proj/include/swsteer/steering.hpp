#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "swsteer/core.hpp"
#include "swsteer/errors.hpp"

namespace swsteer {

/// Steering task: move N(m0, Sigma0) to N(mf, Sigmaf) over [0, T].
struct SteeringProblem {
  SteeringProblem(GaussianLaw initial_, GaussianLaw target_, double horizon_)
      : initial(std::move(initial_)),
        target(std::move(target_)),
        horizon(horizon_) {
    if (initial.dim() != target.dim()) {
      throw DomainError("SteeringProblem: dimension mismatch");
    }
    if (!(horizon > 0.0)) {
      throw DomainError("SteeringProblem: horizon must be positive");
    }
  }

  GaussianLaw initial;
  GaussianLaw target;
  double horizon;

  int dim() const { return initial.dim(); }
};

/// Affine feedback u = gain * x + offset, valid at one instant.
struct AffineController {
  Matrix gain;
  Vector offset;
  double time = 0.0;
};

namespace detail {

inline void require_spd(const Matrix& sigma, const char* who) {
  Eigen::LLT<Matrix> llt(sigma);
  if (llt.info() != Eigen::Success) {
    throw DomainError(std::string(who) + ": covariance is not SPD");
  }
}

/// Quadrature of r(theta) theta theta^T with r = sqrt(th'Sf th / th'S th),
/// symmetrized. This is the integral appearing in the feedback gain.
inline Matrix ratio_quadrature(const Matrix& sigma, const Matrix& target_sigma,
                               const DirectionSet& dirs) {
  const int n = static_cast<int>(sigma.rows());
  Matrix acc = Matrix::Zero(n, n);
  for (int j = 0; j < dirs.size(); ++j) {
    const Vector& th = dirs.dir(j).vec();
    const double d = th.dot(sigma * th);
    const double g = th.dot(target_sigma * th);
    if (!(d > 0.0)) {
      throw DomainError("ratio_quadrature: projected variance not positive");
    }
    acc.noalias() += (dirs.weight(j) * std::sqrt(g / d)) * (th * th.transpose());
  }
  return ((acc + acc.transpose()) * 0.5).eval();
}

/// Gain with the 1/(T-t) factor removed: R(Sigma) - I/n.
inline Matrix gain_core(const Matrix& sigma, const Matrix& target_sigma,
                        const DirectionSet& dirs) {
  const int n = static_cast<int>(sigma.rows());
  return ratio_quadrature(sigma, target_sigma, dirs) -
         Matrix::Identity(n, n) / n;
}

}  // namespace detail

/// Feedback gain K(t, Sigma) of the direction-averaged sliced controller.
inline Matrix gain_matrix(double t, const Matrix& sigma,
                          const Matrix& target_sigma, double horizon,
                          const DirectionSet& dirs) {
  if (!(t < horizon)) {
    throw DomainError("gain_matrix: t must be strictly below the horizon");
  }
  detail::require_spd(sigma, "gain_matrix");
  const double lambda = 1.0 / (horizon - t);
  return lambda * detail::gain_core(sigma, target_sigma, dirs);
}

/// Offset eta(t, Sigma) computed from the identity
/// K m + eta = -(lambda/n) (m - mf), which makes the induced mean dynamics
/// exact in floating point regardless of quadrature error.
inline Vector offset_vector(double t, const Matrix& sigma, const Vector& m,
                            const SteeringProblem& problem,
                            const DirectionSet& dirs) {
  const Matrix k = gain_matrix(t, sigma, problem.target.covariance(),
                               problem.horizon, dirs);
  const double lambda = 1.0 / (problem.horizon - t);
  const int n = problem.dim();
  return (-(k * m) - (lambda / n) * (m - problem.target.mean())).eval();
}

/// Closed-form mean path m(t) = mf + ((T-t)/T)^(1/n) (m0 - mf).
inline Vector mean_trajectory(const SteeringProblem& problem, double t) {
  if (!(t >= 0.0 && t <= problem.horizon)) {
    throw DomainError("mean_trajectory: t outside [0, T]");
  }
  const int n = problem.dim();
  const double frac =
      std::pow((problem.horizon - t) / problem.horizon, 1.0 / n);
  return problem.target.mean() +
         frac * (problem.initial.mean() - problem.target.mean());
}

/// Mean/covariance trajectory of the steered Gaussian law on a grid of the
/// log-horizon time tau = -log(T - t); covariances interpolate linearly in
/// tau between nodes.
class GaussianFlow {
 public:
  GaussianFlow(std::vector<double> times, std::vector<double> taus,
               std::vector<Vector> means, std::vector<Matrix> covariances,
               double horizon)
      : times_(std::move(times)),
        taus_(std::move(taus)),
        means_(std::move(means)),
        covs_(std::move(covariances)),
        horizon_(horizon) {}

  int size() const { return static_cast<int>(times_.size()); }
  const std::vector<double>& times() const { return times_; }
  const std::vector<double>& taus() const { return taus_; }
  double time(int i) const { return times_[i]; }
  double tau(int i) const { return taus_[i]; }
  const Vector& mean(int i) const { return means_[i]; }
  const Matrix& covariance(int i) const { return covs_[i]; }
  double horizon() const { return horizon_; }
  double terminal_time() const { return times_.back(); }

  Matrix covariance_at(double t) const {
    if (!(t >= 0.0 && t < horizon_)) {
      throw DomainError("GaussianFlow: t outside [0, T)");
    }
    const double tau = -std::log(horizon_ - t);
    if (tau < taus_.front() - 1e-12 || tau > taus_.back() + 1e-12) {
      throw DomainError(
          "GaussianFlow: t outside the integrated grid (extrapolation)");
    }
    const auto it = std::upper_bound(taus_.begin(), taus_.end(), tau);
    int hi = static_cast<int>(it - taus_.begin());
    hi = std::max(1, std::min(size() - 1, hi));
    const int lo = hi - 1;
    const double a = (tau - taus_[lo]) / (taus_[hi] - taus_[lo]);
    return ((1.0 - a) * covs_[lo] + a * covs_[hi]).eval();
  }

 private:
  std::vector<double> times_;
  std::vector<double> taus_;
  std::vector<Vector> means_;
  std::vector<Matrix> covs_;
  double horizon_;
};

namespace detail {

/// d Sigma / d tau = Kbar(Sigma) Sigma + Sigma Kbar(Sigma)^T. The equation
/// is autonomous in tau: the 1/(T-t) gain cancels against dt/dtau = T - t,
/// which is the whole point of the reparametrization.
inline Matrix covariance_rhs_tau(const Matrix& sigma,
                                 const Matrix& target_sigma,
                                 const DirectionSet& dirs) {
  const Matrix kbar = gain_core(sigma, target_sigma, dirs);
  return kbar * sigma + sigma * kbar.transpose();
}

inline Matrix rk4_tau_step(const Matrix& sigma, const Matrix& target_sigma,
                           const DirectionSet& dirs, double dtau) {
  const Matrix k1 = covariance_rhs_tau(sigma, target_sigma, dirs);
  const Matrix k2 =
      covariance_rhs_tau(sigma + 0.5 * dtau * k1, target_sigma, dirs);
  const Matrix k3 =
      covariance_rhs_tau(sigma + 0.5 * dtau * k2, target_sigma, dirs);
  const Matrix k4 = covariance_rhs_tau(sigma + dtau * k3, target_sigma, dirs);
  Matrix next = sigma + (dtau / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  return ((next + next.transpose()) * 0.5).eval();
}

}  // namespace detail

/// Integrates the covariance ODE with fixed-step RK4 in tau = -log(T - t)
/// from t = 0 to t = T - epsilon. Each node is symmetrized and checked SPD.
inline GaussianFlow integrate_covariance(const SteeringProblem& problem,
                                         const DirectionSet& dirs, int steps,
                                         double epsilon) {
  if (steps < 10) {
    throw DomainError("integrate_covariance: steps must be >= 10");
  }
  const double horizon = problem.horizon;
  if (!(epsilon > 0.0 && epsilon < horizon)) {
    throw DomainError("integrate_covariance: epsilon must lie in (0, T)");
  }
  const Matrix& target_sigma = problem.target.covariance();
  const double tau0 = -std::log(horizon);
  const double tau_end = -std::log(epsilon);
  const double dtau = (tau_end - tau0) / steps;

  std::vector<double> times(steps + 1), taus(steps + 1);
  std::vector<Vector> means(steps + 1);
  std::vector<Matrix> covs(steps + 1);

  Matrix sigma = problem.initial.covariance();
  for (int i = 0; i <= steps; ++i) {
    const double tau = tau0 + i * dtau;
    const double t = horizon - std::exp(-tau);
    const double t_clamped = std::max(0.0, t);
    taus[i] = tau;
    times[i] = t_clamped;
    means[i] = mean_trajectory(problem, t_clamped);
    covs[i] = sigma;
    Eigen::LLT<Matrix> llt(sigma);
    if (llt.info() != Eigen::Success) {
      throw NumericError("integrate_covariance: covariance lost positive "
                         "definiteness at t = " +
                         std::to_string(t_clamped));
    }
    if (i < steps) {
      sigma = detail::rk4_tau_step(sigma, target_sigma, dirs, dtau);
    }
  }
  return GaussianFlow(std::move(times), std::move(taus), std::move(means),
                      std::move(covs), horizon);
}

/// Covariance at a single time, from a dedicated RK4 integration whose final
/// node lands exactly on t. Used by finite-difference certifications, which
/// need Sigma at off-grid times to full integrator accuracy.
inline Matrix covariance_at(const SteeringProblem& problem,
                            const DirectionSet& dirs, double t, int steps) {
  if (!(t >= 0.0 && t < problem.horizon)) {
    throw DomainError("covariance_at: t outside [0, T)");
  }
  if (t == 0.0) return problem.initial.covariance();
  if (steps < 10) throw DomainError("covariance_at: steps must be >= 10");
  const double tau0 = -std::log(problem.horizon);
  const double tau_end = -std::log(problem.horizon - t);
  const double dtau = (tau_end - tau0) / steps;
  Matrix sigma = problem.initial.covariance();
  const Matrix& target_sigma = problem.target.covariance();
  for (int i = 0; i < steps; ++i) {
    sigma = detail::rk4_tau_step(sigma, target_sigma, dirs, dtau);
  }
  detail::require_spd(sigma, "covariance_at");
  return sigma;
}

/// Gain and offset of the sliced controller at time t, with Sigma(t) read
/// off the integrated flow.
inline AffineController controller_at(double t, const GaussianFlow& flow,
                                      const SteeringProblem& problem,
                                      const DirectionSet& dirs) {
  const Matrix sigma = flow.covariance_at(t);
  AffineController c;
  c.gain = gain_matrix(t, sigma, problem.target.covariance(), problem.horizon,
                       dirs);
  const Vector m = mean_trajectory(problem, t);
  const double lambda = 1.0 / (problem.horizon - t);
  c.offset =
      (-(c.gain * m) - (lambda / problem.dim()) * (m - problem.target.mean()))
          .eval();
  c.time = t;
  return c;
}

/// Velocity of the direction-averaged sliced controller at (t, x).
inline Vector ideal_velocity(double t, const Vector& x,
                             const GaussianFlow& flow,
                             const SteeringProblem& problem,
                             const DirectionSet& dirs) {
  const AffineController c = controller_at(t, flow, problem, dirs);
  return c.gain * x + c.offset;
}

/// SPD square root via symmetric eigendecomposition with an eigenvalue
/// floor of 1e-14 * trace against roundoff.
inline Matrix spd_sqrt(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  if (es.info() != Eigen::Success) {
    throw NumericError("spd_sqrt: eigendecomposition failed");
  }
  const double floor = 1e-14 * std::max(0.0, m.trace());
  Vector vals = es.eigenvalues();
  for (int i = 0; i < vals.size(); ++i) {
    vals[i] = std::sqrt(std::max(vals[i], floor));
  }
  return (es.eigenvectors() * vals.asDiagonal() *
          es.eigenvectors().transpose())
      .eval();
}

/// Affine map x -> A x + b.
struct AffineMap {
  Matrix A;
  Vector b;
  Vector operator()(const Vector& x) const { return A * x + b; }
};

/// Gaussian optimal transport map: A = S0^{-1/2} (S0^{1/2} Sf S0^{1/2})^{1/2}
/// S0^{-1/2}, b = mf - A m0. A is SPD.
inline AffineMap brenier_map_gaussian(const SteeringProblem& problem) {
  const Matrix root0 = spd_sqrt(problem.initial.covariance());
  const Matrix root0_inv = root0.inverse();
  const Matrix middle =
      spd_sqrt(root0 * problem.target.covariance() * root0);
  Matrix a = root0_inv * middle * root0_inv;
  a = ((a + a.transpose()) * 0.5).eval();
  return AffineMap{a, problem.target.mean() - a * problem.initial.mean()};
}

/// Velocity of the minimum-energy (displacement interpolation) controller:
/// particles travel the straight line x(t) = (1 - t/T) x0 + (t/T) T(x0), so
/// v(t, x) = (T(z) - z)/T at z = interp^{-1}(x).
inline Vector min_energy_velocity(double t, const Vector& x,
                                  const SteeringProblem& problem,
                                  const AffineMap& map) {
  if (!(t >= 0.0 && t < problem.horizon)) {
    throw DomainError("min_energy_velocity: t outside [0, T)");
  }
  const int n = problem.dim();
  const double alpha = t / problem.horizon;
  const Matrix interp =
      (1.0 - alpha) * Matrix::Identity(n, n) + alpha * map.A;
  const Vector z = interp.partialPivLu().solve(x - alpha * map.b);
  return ((map.A - Matrix::Identity(n, n)) * z + map.b) / problem.horizon;
}

inline Vector min_energy_velocity(double t, const Vector& x,
                                  const SteeringProblem& problem) {
  return min_energy_velocity(t, x, problem, brenier_map_gaussian(problem));
}

/// Control effort of the sliced flow in log-horizon time:
///   integral of E ||Kbar x + etabar||^2 dtau
///   = integral of (T - t) E ||u(t, x)||^2 dt,
/// accumulated by the trapezoid rule on the flow grid. The expectation
/// splits as tr(Kbar Sigma Kbar^T) + ||m - mf||^2 / n^2.
inline double ideal_energy(const SteeringProblem& problem,
                           const GaussianFlow& flow,
                           const DirectionSet& dirs) {
  const Matrix& target_sigma = problem.target.covariance();
  const Vector& mf = problem.target.mean();
  const int n = problem.dim();
  const int nodes = flow.size();
  std::vector<double> integrand(nodes);
  for (int i = 0; i < nodes; ++i) {
    const Matrix kbar = detail::gain_core(flow.covariance(i), target_sigma,
                                          dirs);
    Eigen::LLT<Matrix> llt(flow.covariance(i));
    if (llt.info() != Eigen::Success) {
      throw NumericError("ideal_energy: non-SPD covariance on the flow grid");
    }
    const Matrix kl = kbar * Matrix(llt.matrixL());
    const double tr_term = kl.squaredNorm();  // tr(Kbar Sigma Kbar^T) >= 0
    const Vector dm = flow.mean(i) - mf;
    integrand[i] = tr_term + dm.squaredNorm() / (static_cast<double>(n) * n);
  }
  double acc = 0.0;
  for (int i = 0; i + 1 < nodes; ++i) {
    acc += 0.5 * (integrand[i] + integrand[i + 1]) *
           (flow.tau(i + 1) - flow.tau(i));
  }
  return acc;
}

inline double ideal_energy(const SteeringProblem& problem,
                           const DirectionSet& dirs, int steps,
                           double epsilon) {
  return ideal_energy(problem, integrate_covariance(problem, dirs, steps,
                                                    epsilon),
                      dirs);
}

}  // namespace swsteer
