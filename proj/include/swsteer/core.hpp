#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "swsteer/errors.hpp"
#include "swsteer/normal.hpp"
#include "swsteer/rng.hpp"

namespace swsteer {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kUnitNormTol = 1e-12;
inline constexpr double kWeightSumTol = 1e-12;
inline constexpr double kSymmetryTol = 1e-12;

/// A unit vector on S^{n-1}.
class Direction {
 public:
  explicit Direction(Vector v) : v_(std::move(v)) {
    if (std::abs(v_.norm() - 1.0) > kUnitNormTol) {
      throw DomainError("Direction: vector is not unit length");
    }
  }

  static Direction normalized(const Vector& v) {
    const double nrm = v.norm();
    if (!(nrm > 0.0)) throw DomainError("Direction: zero vector");
    return Direction(Vector(v / nrm));
  }

  const Vector& vec() const { return v_; }
  int dim() const { return static_cast<int>(v_.size()); }
  double project(const Vector& x) const { return v_.dot(x); }

 private:
  Vector v_;
};

enum class DirScheme { deterministic_angular, monte_carlo, custom };

/// Quadrature for integrals over the uniform measure on the sphere:
/// directions with nonnegative weights summing to one.
class DirectionSet {
 public:
  /// Equispaced midpoint angles on the half circle [0, pi); n = 2 only.
  /// The half circle suffices because every integrand used here is even
  /// in theta.
  static DirectionSet deterministic_angular(int count) {
    if (count < 1) throw ConfigError("DirectionSet: count must be >= 1");
    std::vector<Direction> dirs;
    dirs.reserve(count);
    for (int j = 0; j < count; ++j) {
      const double phi = (j + 0.5) * std::numbers::pi / count;
      Vector v(2);
      v << std::cos(phi), std::sin(phi);
      dirs.push_back(Direction::normalized(v));
    }
    return DirectionSet(std::move(dirs),
                        std::vector<double>(count, 1.0 / count),
                        DirScheme::deterministic_angular);
  }

  static DirectionSet monte_carlo(int n, int count, std::uint64_t seed) {
    if (n < 1) throw ConfigError("DirectionSet: dimension must be >= 1");
    if (count < 1) throw ConfigError("DirectionSet: count must be >= 1");
    Rng rng(seed);
    std::vector<Direction> dirs;
    dirs.reserve(count);
    for (int j = 0; j < count; ++j) {
      dirs.push_back(Direction(rng.unit_vector(n)));
    }
    return DirectionSet(std::move(dirs),
                        std::vector<double>(count, 1.0 / count),
                        DirScheme::monte_carlo);
  }

  static DirectionSet from_vectors(std::vector<Direction> dirs,
                                   std::vector<double> weights) {
    return DirectionSet(std::move(dirs), std::move(weights),
                        DirScheme::custom);
  }

  int size() const { return static_cast<int>(dirs_.size()); }
  int dim() const { return dirs_.front().dim(); }
  const Direction& dir(int j) const { return dirs_[j]; }
  double weight(int j) const { return weights_[j]; }
  DirScheme scheme() const { return scheme_; }

 private:
  DirectionSet(std::vector<Direction> dirs, std::vector<double> weights,
               DirScheme scheme)
      : dirs_(std::move(dirs)), weights_(std::move(weights)), scheme_(scheme) {
    if (dirs_.empty() || dirs_.size() != weights_.size()) {
      throw ConfigError("DirectionSet: directions/weights size mismatch");
    }
    const int n = dirs_.front().dim();
    double sum = 0.0;
    double carry = 0.0;  // Kahan: naive summation drifts past 1e-12 for
                         // million-direction Monte Carlo sets
    for (std::size_t j = 0; j < dirs_.size(); ++j) {
      if (dirs_[j].dim() != n) {
        throw ConfigError("DirectionSet: mixed dimensions");
      }
      if (weights_[j] < 0.0) {
        throw ConfigError("DirectionSet: negative weight");
      }
      const double y = weights_[j] - carry;
      const double t = sum + y;
      carry = (t - sum) - y;
      sum = t;
    }
    if (std::abs(sum - 1.0) > kWeightSumTol) {
      throw ConfigError("DirectionSet: weights must sum to 1");
    }
  }

  std::vector<Direction> dirs_;
  std::vector<double> weights_;
  DirScheme scheme_;
};

inline DirectionSet sample_directions(int n, int count, DirScheme scheme,
                                      std::uint64_t seed = 0) {
  switch (scheme) {
    case DirScheme::deterministic_angular:
      if (n != 2) {
        throw ConfigError(
            "sample_directions: deterministic-angular requires n = 2");
      }
      return DirectionSet::deterministic_angular(count);
    case DirScheme::monte_carlo:
      return DirectionSet::monte_carlo(n, count, seed);
    default:
      throw ConfigError("sample_directions: unsupported scheme");
  }
}

/// One-dimensional marginal: Gaussian parameters or sorted samples.
class Dist1D {
 public:
  static Dist1D gaussian(double mean, double variance) {
    if (!(variance > 0.0)) {
      throw DomainError("Dist1D: Gaussian variance must be positive");
    }
    Dist1D d;
    d.gaussian_ = true;
    d.mean_ = mean;
    d.variance_ = variance;
    return d;
  }

  static Dist1D empirical(std::vector<double> samples) {
    if (samples.empty()) throw DomainError("Dist1D: empty sample set");
    for (double s : samples) {
      if (!std::isfinite(s)) throw DomainError("Dist1D: non-finite sample");
    }
    std::sort(samples.begin(), samples.end());
    Dist1D d;
    d.gaussian_ = false;
    d.samples_ = std::move(samples);
    return d;
  }

  bool is_gaussian() const { return gaussian_; }
  double mean() const { return mean_; }
  double variance() const { return variance_; }
  double stddev() const { return std::sqrt(variance_); }
  const std::vector<double>& samples() const { return samples_; }
  int size() const { return static_cast<int>(samples_.size()); }

  /// Left-continuous generalized inverse of the CDF. Gaussian branch is the
  /// closed form; empirical branch returns the ceil(p*N)-th smallest sample.
  double quantile(double p) const {
    if (!(p > 0.0 && p < 1.0)) {
      throw DomainError("Dist1D::quantile: p outside (0,1)");
    }
    if (gaussian_) return mean_ + stddev() * normal_quantile(p);
    const int n = size();
    int idx = static_cast<int>(std::ceil(p * n));
    idx = std::max(1, std::min(n, idx));
    return samples_[idx - 1];
  }

  /// CDF used when composing transport maps. The empirical branch uses
  /// midpoint ranks (i - 0.5)/N with linear interpolation between samples,
  /// clamped to [0.5/N, 1 - 0.5/N]; this makes the sample-to-sample map the
  /// sort-matching map for equal sizes and keeps Gaussian targets finite.
  double cdf(double s) const {
    if (gaussian_) return normal_cdf((s - mean_) / stddev());
    const int n = size();
    const double lo = 0.5 / n;
    if (s <= samples_.front()) return lo;
    if (s >= samples_.back()) return 1.0 - lo;
    // Largest i with samples_[i] <= s; the bracket [i, i+1] has positive
    // width because samples_[i] <= s < samples_[i+1].
    const auto it =
        std::upper_bound(samples_.begin(), samples_.end(), s) - 1;
    const int i = static_cast<int>(it - samples_.begin());
    const double pi = (i + 0.5) / n;
    const double pj = (i + 1.5) / n;
    const double x0 = samples_[i];
    const double x1 = samples_[i + 1];
    return pi + (pj - pi) * (s - x0) / (x1 - x0);
  }

 private:
  Dist1D() = default;
  bool gaussian_ = false;
  double mean_ = 0.0;
  double variance_ = 1.0;
  std::vector<double> samples_;
};

inline double quantile(const Dist1D& d, double p) { return d.quantile(p); }

/// Monotone 1D transport map: affine for Gaussian-Gaussian pairs, otherwise
/// the quantile composition s -> Q_target(F_source(s)).
class Map1D {
 public:
  static Map1D affine(double slope, double intercept) {
    if (!(slope > 0.0)) throw DomainError("Map1D: slope must be positive");
    Map1D m;
    m.affine_ = true;
    m.slope_ = slope;
    m.intercept_ = intercept;
    return m;
  }

  static Map1D quantile_composed(Dist1D source, Dist1D target) {
    Map1D m;
    m.affine_ = false;
    m.source_.emplace_back(std::move(source));
    m.source_.emplace_back(std::move(target));
    return m;
  }

  bool is_affine() const { return affine_; }
  double slope() const { return slope_; }
  double intercept() const { return intercept_; }

  double operator()(double s) const {
    if (affine_) return slope_ * s + intercept_;
    const Dist1D& src = source_[0];
    const Dist1D& tgt = source_[1];
    double p = src.cdf(s);
    // A Gaussian source CDF can evaluate to 0 or 1 in the far tail.
    const double eps = 1e-16;
    p = std::min(1.0 - eps, std::max(eps, p));
    return tgt.quantile(p);
  }

 private:
  Map1D() = default;
  bool affine_ = false;
  double slope_ = 1.0;
  double intercept_ = 0.0;
  std::vector<Dist1D> source_;  // [source, target] for the composed variant
};

inline Map1D ot_map_1d(const Dist1D& source, const Dist1D& target) {
  if (source.is_gaussian() && target.is_gaussian()) {
    const double slope = std::sqrt(target.variance() / source.variance());
    return Map1D::affine(slope, target.mean() - slope * source.mean());
  }
  return Map1D::quantile_composed(source, target);
}

/// Gaussian law on R^n with SPD covariance.
class GaussianLaw {
 public:
  GaussianLaw(Vector mean, Matrix covariance)
      : mean_(std::move(mean)), cov_(std::move(covariance)) {
    if (cov_.rows() != cov_.cols() || cov_.rows() != mean_.size()) {
      throw DomainError("GaussianLaw: dimension mismatch");
    }
    const double scale = std::max(1.0, cov_.cwiseAbs().maxCoeff());
    if ((cov_ - cov_.transpose()).cwiseAbs().maxCoeff() >
        kSymmetryTol * scale) {
      throw DomainError("GaussianLaw: covariance is not symmetric");
    }
    cov_ = ((cov_ + cov_.transpose()) * 0.5).eval();
    Eigen::SelfAdjointEigenSolver<Matrix> es(cov_);
    if (es.info() != Eigen::Success) {
      throw NumericError("GaussianLaw: eigendecomposition failed");
    }
    if (!(es.eigenvalues().minCoeff() > 0.0)) {
      throw DomainError("GaussianLaw: covariance is not positive definite");
    }
  }

  const Vector& mean() const { return mean_; }
  const Matrix& covariance() const { return cov_; }
  int dim() const { return static_cast<int>(mean_.size()); }

 private:
  Vector mean_;
  Matrix cov_;
};

/// N points in R^n sharing a timestamp; the empirical stand-in for a law.
class ParticleEnsemble {
 public:
  ParticleEnsemble(Matrix points, double time)
      : points_(std::move(points)), time_(time) {
    if (points_.rows() < 2) {
      throw DomainError("ParticleEnsemble: need at least 2 particles");
    }
    if (!points_.allFinite()) {
      throw DomainError("ParticleEnsemble: non-finite coordinate");
    }
    if (!(time_ >= 0.0)) {
      throw DomainError("ParticleEnsemble: negative timestamp");
    }
  }

  const Matrix& points() const { return points_; }
  double time() const { return time_; }
  int size() const { return static_cast<int>(points_.rows()); }
  int dim() const { return static_cast<int>(points_.cols()); }

  Vector mean() const { return points_.colwise().mean(); }

  Matrix covariance() const {
    const Matrix centered = points_.rowwise() - points_.colwise().mean();
    return (centered.transpose() * centered) / static_cast<double>(size());
  }

 private:
  Matrix points_;
  double time_;
};

inline Dist1D project_gaussian(const GaussianLaw& law, const Direction& theta) {
  if (law.dim() != theta.dim()) {
    throw DomainError("project_gaussian: dimension mismatch");
  }
  const Vector& th = theta.vec();
  return Dist1D::gaussian(th.dot(law.mean()),
                          th.dot(law.covariance() * th));
}

inline Dist1D project_ensemble(const ParticleEnsemble& ens,
                               const Direction& theta) {
  if (ens.dim() != theta.dim()) {
    throw DomainError("project_ensemble: dimension mismatch");
  }
  const Vector proj = ens.points() * theta.vec();
  return Dist1D::empirical(
      std::vector<double>(proj.data(), proj.data() + proj.size()));
}

namespace detail {

/// Phi^{-1}((j - 0.5)/grid) for j = 1..grid, cached per thread. The midpoint
/// grid is shared by every Gaussian marginal of a quadrature sweep.
inline const std::vector<double>& midpoint_normal_quantiles(int grid) {
  thread_local int cached_grid = 0;
  thread_local std::vector<double> cache;
  if (cached_grid != grid) {
    cache.resize(grid);
    for (int j = 0; j < grid; ++j) {
      cache[j] = normal_quantile((j + 0.5) / grid);
    }
    cached_grid = grid;
  }
  return cache;
}

inline double marginal_quantile(const Dist1D& d, int j, int grid,
                                const std::vector<double>& zmid) {
  if (d.is_gaussian()) return d.mean() + d.stddev() * zmid[j];
  // ceil(z*N) with z = (j + 0.5)/grid; midpoints stay away from integers.
  const int n = d.size();
  int idx = static_cast<int>(
      std::ceil((j + 0.5) * static_cast<double>(n) / grid));
  idx = std::max(1, std::min(n, idx));
  return d.samples()[idx - 1];
}

}  // namespace detail

/// Squared 1D Wasserstein-2 distance. Gaussian-Gaussian pairs use the
/// closed form; any other pairing integrates the squared quantile gap with
/// the midpoint rule on `quantile_grid` points.
inline double w2_1d(const Dist1D& mu, const Dist1D& nu, int quantile_grid) {
  if (mu.is_gaussian() && nu.is_gaussian()) {
    const double dm = mu.mean() - nu.mean();
    const double ds = mu.stddev() - nu.stddev();
    return dm * dm + ds * ds;
  }
  if (quantile_grid < 1) {
    throw DomainError("w2_1d: quantile_grid must be >= 1");
  }
  static const std::vector<double> kEmpty;
  const bool need_normal_grid = mu.is_gaussian() || nu.is_gaussian();
  const std::vector<double>& z =
      need_normal_grid ? detail::midpoint_normal_quantiles(quantile_grid)
                       : kEmpty;
  double acc = 0.0;
  for (int j = 0; j < quantile_grid; ++j) {
    const double qa = detail::marginal_quantile(mu, j, quantile_grid, z);
    const double qb = detail::marginal_quantile(nu, j, quantile_grid, z);
    const double d = qa - qb;
    acc += d * d;
  }
  return acc / quantile_grid;
}

namespace detail {

template <class ProjA, class ProjB>
double sw2_impl(ProjA&& project_a, ProjB&& project_b, const DirectionSet& dirs,
                int quantile_grid) {
  double acc = 0.0;  // fixed-order reduction
  for (int j = 0; j < dirs.size(); ++j) {
    const Direction& th = dirs.dir(j);
    acc += dirs.weight(j) * w2_1d(project_a(th), project_b(th), quantile_grid);
  }
  return acc;
}

}  // namespace detail

/// Squared sliced Wasserstein-2 distance under the given direction
/// quadrature. Mixed Gaussian/empirical pairs project each side by its own
/// rule. Returns the square; callers take roots.
inline double sw2(const GaussianLaw& mu, const GaussianLaw& nu,
                  const DirectionSet& dirs, int quantile_grid = 4096) {
  return detail::sw2_impl(
      [&](const Direction& th) { return project_gaussian(mu, th); },
      [&](const Direction& th) { return project_gaussian(nu, th); }, dirs,
      quantile_grid);
}

inline double sw2(const ParticleEnsemble& mu, const ParticleEnsemble& nu,
                  const DirectionSet& dirs, int quantile_grid = 4096) {
  return detail::sw2_impl(
      [&](const Direction& th) { return project_ensemble(mu, th); },
      [&](const Direction& th) { return project_ensemble(nu, th); }, dirs,
      quantile_grid);
}

inline double sw2(const ParticleEnsemble& mu, const GaussianLaw& nu,
                  const DirectionSet& dirs, int quantile_grid = 4096) {
  return detail::sw2_impl(
      [&](const Direction& th) { return project_ensemble(mu, th); },
      [&](const Direction& th) { return project_gaussian(nu, th); }, dirs,
      quantile_grid);
}

inline double sw2(const GaussianLaw& mu, const ParticleEnsemble& nu,
                  const DirectionSet& dirs, int quantile_grid = 4096) {
  return detail::sw2_impl(
      [&](const Direction& th) { return project_gaussian(mu, th); },
      [&](const Direction& th) { return project_ensemble(nu, th); }, dirs,
      quantile_grid);
}

}  // namespace swsteer
