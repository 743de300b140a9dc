#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace swsteer {

/// Seeded generator with explicit uniform/normal transforms so that a given
/// (seed, draw sequence) produces the same stream on every platform and
/// standard library. Distributions from <random> are not used on purpose:
/// their output is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller (no cached spare: fixed consumption of
  /// two uniforms per draw keeps the stream layout obvious).
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1], log is safe
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  Eigen::VectorXd normal_vector(int n) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

  /// Uniform direction on the unit sphere S^{n-1}.
  Eigen::VectorXd unit_vector(int n) {
    Eigen::VectorXd v = normal_vector(n);
    double nrm = v.norm();
    while (nrm < 1e-300) {  // astronomically unlikely; redraw keeps it total
      v = normal_vector(n);
      nrm = v.norm();
    }
    return v / nrm;
  }

  std::uint64_t raw() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace swsteer
