// Acceptance suite: one line per criterion, nonzero exit if any selected
// criterion fails. `--only N` runs a single criterion, `--skip-slow` skips
// the long iterative-vs-flow agreement run (criterion 6).

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "swsteer/checks.hpp"
#include "swsteer/core.hpp"
#include "swsteer/particles.hpp"
#include "swsteer/rng.hpp"
#include "swsteer/steering.hpp"

using namespace swsteer;

namespace {

SteeringProblem paper_problem() {
  Vector m0(2), mf(2);
  m0 << -2.0, 2.0;
  mf << -8.0, 4.0;
  Matrix s0(2, 2), sf(2, 2);
  s0 << 1.0, 0.2, 0.2, 0.5;
  sf << 0.1, 0.0, 0.0, 0.04;
  return SteeringProblem(GaussianLaw(m0, s0), GaussianLaw(mf, sf), 1.0);
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(6);
  ss << v;
  return ss.str();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

// 1. Energy identity: weighted control effort equals half the squared
//    sliced distance within 0.5% (M = 512 angles, 4000 tau steps).
Outcome criterion_energy_identity() {
  const SteeringProblem p = paper_problem();
  const DirectionSet dirs = DirectionSet::deterministic_angular(512);
  const double energy = ideal_energy(p, dirs, 4000, 1e-6);
  const double half = 0.5 * sw2(p.initial, p.target, dirs);
  const double rel = std::abs(energy - half) / half;
  return {rel <= 0.005, "effort " + fmt(energy) + " vs half-SW2^2 " +
                            fmt(half) + ", rel err " + fmt(rel) +
                            " (tol 5e-3)"};
}

// 2. Convergence: Sigma residual at T - 1e-6 within 1e-3 Frobenius and the
//    closed-form mean residual reproduced to 1e-9.
Outcome criterion_convergence() {
  const SteeringProblem p = paper_problem();
  const DirectionSet dirs = DirectionSet::deterministic_angular(512);
  const GaussianFlow flow = integrate_covariance(p, dirs, 4000, 1e-6);
  const int last = flow.size() - 1;
  const double sigma_resid =
      (flow.covariance(last) - p.target.covariance()).norm();
  const double mean_resid = (flow.mean(last) - p.target.mean()).norm();
  const double mean_expected = std::sqrt(1e-6) *
                               (p.initial.mean() - p.target.mean()).norm() /
                               std::sqrt(p.horizon);
  const double mean_gap = std::abs(mean_resid - mean_expected);
  const bool sigma_ok = sigma_resid <= 1e-3;
  const bool mean_ok = mean_gap <= 1e-9;
  std::string detail = "||Sigma(T-eps)-Sigma_f||_F = " + fmt(sigma_resid) +
                       " (tol 1e-3), mean-residual gap " + fmt(mean_gap) +
                       " (tol 1e-9)";
  if (!sigma_ok) {
    detail +=
        "; the covariance residual is the true flow value at eps = 1e-6 "
        "(step-doubling leaves it unchanged): the traceless component "
        "contracts like (T-t)^(1/4) in n = 2, so the 1e-3 budget is not "
        "reachable at this cutoff";
  }
  return {sigma_ok && mean_ok, detail};
}

// 3. Derivative certification at t in {0.1, 0.3, 0.5, 0.7}, fd step 1e-5,
//    1e-4 relative agreement, nonpositive rate on the whole flow grid.
Outcome criterion_derivative() {
  const SteeringProblem p = paper_problem();
  const DirectionSet dirs = DirectionSet::deterministic_angular(512);
  const CheckReport r = check_sw2_derivative(p, dirs, {0.1, 0.3, 0.5, 0.7},
                                             1e-5, 1e-4, 2000, 4000, 1e-6);
  return {r.passed(), "max relative FD error " + fmt(r.measured) +
                          " (tol 1e-4); " + r.details};
}

// 4. Gain fixed point at the target covariance plus 20 SPD probes.
Outcome criterion_fixed_point() {
  const SteeringProblem p = paper_problem();
  const DirectionSet dirs = DirectionSet::deterministic_angular(512);
  const CheckReport r = check_fixed_point(p.target, dirs, 0.0, p.horizon);
  return {r.passed() && r.measured <= 1e-10,
          "||K(0, Sigma_f)||_F = " + fmt(r.measured) + " (tol 1e-10); " +
              r.details};
}

// 5. Iterative controller trend: median terminal sqrt(SW2) over 10 seeds
//    decreases across T_d in {100, 1000, 10000} and reaches 10% of the
//    initial distance at T_d = 1000 (N = 5000).
Outcome criterion_iterative_trend() {
  const SteeringProblem p = paper_problem();
  const DirectionSet dirs = DirectionSet::deterministic_angular(512);
  const double initial = std::sqrt(sw2(p.initial, p.target, dirs));
  std::vector<double> medians;
  for (int td : {100, 1000, 10000}) {
    std::vector<double> terminal;
    for (std::uint64_t s = 0; s < 10; ++s) {
      SimConfig cfg;
      cfg.steps = td;
      cfg.particles = 5000;
      cfg.seed = 100 + s;
      const SimResult r = run(cfg, p);
      terminal.push_back(std::sqrt(
          sw2(r.snapshots.back(), p.target, dirs, cfg.particles)));
    }
    medians.push_back(median(terminal));
  }
  const bool monotone = medians[0] > medians[1] && medians[1] > medians[2];
  const bool small = medians[1] <= 0.1 * initial;
  return {monotone && small,
          "median terminal sqrt(SW2) = {" + fmt(medians[0]) + ", " +
              fmt(medians[1]) + ", " + fmt(medians[2]) +
              "} for T_d = {100, 1000, 10000}; initial " + fmt(initial) +
              ", bound at T_d=1000 is " + fmt(0.1 * initial)};
}

// 6. (slow) Iterative-vs-flow agreement: empirical covariance under the
//    iterative controller with T_d = 1e5, N = 2e4 within 0.02 Frobenius of
//    the flow covariance at 10 checkpoints.
Outcome criterion_iterative_vs_flow() {
  const SteeringProblem p = paper_problem();
  const DirectionSet dirs = DirectionSet::deterministic_angular(512);
  const GaussianFlow flow = integrate_covariance(p, dirs, 4000, 1e-6);
  SimConfig cfg;
  cfg.steps = 100000;
  cfg.particles = 20000;
  cfg.seed = 2024;
  cfg.record_every = 5000;  // snapshots every 0.05 T
  const SimResult r = run(cfg, p);

  const std::vector<double> checkpoints = {0.05, 0.1, 0.2, 0.3, 0.4,
                                           0.5, 0.6, 0.7, 0.8, 0.9};
  double worst = 0.0;
  int matched = 0;
  for (const auto& snap : r.snapshots) {
    for (double t : checkpoints) {
      if (std::abs(snap.time() - t) <= 1e-9) {
        ++matched;
        worst = std::max(worst,
                         (snap.covariance() - flow.covariance_at(t)).norm());
      }
    }
  }
  return {matched == 10 && worst <= 0.02,
          "max Frobenius gap over " + std::to_string(matched) +
              " checkpoints = " + fmt(worst) + " (tol 0.02)"};
}

double chord_deviation(const std::vector<ParticleEnsemble>& snaps) {
  double worst = 0.0;
  const int n_particles = snaps.front().size();
  const int dim = snaps.front().dim();
  Vector a(dim + 1), b(dim + 1), q(dim + 1);
  for (int i = 0; i < n_particles; ++i) {
    a[0] = snaps.front().time();
    a.tail(dim) = snaps.front().points().row(i).transpose();
    b[0] = snaps.back().time();
    b.tail(dim) = snaps.back().points().row(i).transpose();
    const Vector chord = b - a;
    const double len2 = chord.squaredNorm();
    for (std::size_t k = 1; k + 1 < snaps.size(); ++k) {
      q[0] = snaps[k].time();
      q.tail(dim) = snaps[k].points().row(i).transpose();
      const Vector rel = q - a;
      const double s =
          len2 > 0.0 ? std::clamp(rel.dot(chord) / len2, 0.0, 1.0) : 0.0;
      worst = std::max(worst, (rel - s * chord).norm());
    }
  }
  return worst;
}

// 7. Trajectory geometry: minimum-energy paths are straight in (t, x) to
//    1e-9; the direction-averaged controller's paths bend by more than 0.05.
Outcome criterion_geometry() {
  const SteeringProblem p = paper_problem();
  SimConfig cfg;
  cfg.steps = 1000;
  cfg.particles = 2000;
  cfg.seed = 33;
  cfg.record_every = 50;

  cfg.controller = Controller::min_energy;
  const double straight = chord_deviation(run(cfg, p).snapshots);

  cfg.controller = Controller::ideal_affine;
  const double curved = chord_deviation(run(cfg, p).snapshots);

  return {straight <= 1e-9 && curved > 0.05,
          "min-energy deviation " + fmt(straight) +
              " (tol 1e-9); sliced deviation " + fmt(curved) +
              " (must exceed 0.05)"};
}

// 8. Oracle equivalence: closed-form sw2 vs the brute-force sweep on 20
//    random pairs within 1e-4 relative; the 1D sort-matching map equals
//    the quantile-composed map exactly on equal-size empirical pairs.
Outcome criterion_oracle_equivalence() {
  const DirectionSet dirs = DirectionSet::deterministic_angular(512);
  Rng rng(808);
  double worst_rel = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    Vector m1 = 4.0 * rng.normal_vector(2), m2 = 4.0 * rng.normal_vector(2);
    Matrix w1(2, 2), w2m(2, 2);
    for (int i = 0; i < 2; ++i) {
      w1.row(i) = rng.normal_vector(2).transpose();
      w2m.row(i) = rng.normal_vector(2).transpose();
    }
    const GaussianLaw a(m1,
                        Matrix(w1 * w1.transpose() + 0.05 * Matrix::Identity(2, 2)));
    const GaussianLaw b(m2,
                        Matrix(w2m * w2m.transpose() + 0.05 * Matrix::Identity(2, 2)));
    const double closed = sw2(a, b, dirs);
    const double oracle = oracle_sw2_bruteforce(a, b, 512, 50000);
    worst_rel = std::max(worst_rel, std::abs(closed - oracle) / oracle);
  }

  bool matching_exact = true;
  for (int rep = 0; rep < 20 && matching_exact; ++rep) {
    const int n = 2 + static_cast<int>(rng.uniform() * 198);
    std::vector<double> src(n), tgt(n);
    for (double& v : src) v = 3.0 * rng.normal();
    for (double& v : tgt) v = 1.0 + 2.0 * rng.normal();
    std::vector<double> ssrc = src, stgt = tgt;
    std::sort(ssrc.begin(), ssrc.end());
    std::sort(stgt.begin(), stgt.end());
    const Map1D map = ot_map_1d(Dist1D::empirical(src), Dist1D::empirical(tgt));
    for (int i = 0; i < n; ++i) {
      if (map(ssrc[i]) != stgt[i]) {
        matching_exact = false;
        break;
      }
    }
  }
  return {worst_rel <= 1e-4 && matching_exact,
          "worst closed-vs-oracle relative gap " + fmt(worst_rel) +
              " (tol 1e-4); sort-matching equality " +
              (matching_exact ? "exact" : "VIOLATED")};
}

// 9. Metric and reproducibility properties: sw2 axioms, map monotonicity,
//    and bit-identical runs regardless of thread count.
Outcome criterion_property_suite() {
  const CheckReport props = check_sliced_core_properties(4242, 20, 512, 50000);

  const SteeringProblem p = paper_problem();
  SimConfig cfg;
  cfg.steps = 100;
  cfg.particles = 4096;
  cfg.seed = 55;
  cfg.record_every = 25;
  SimConfig threaded = cfg;
  threaded.threads = 3;
  const SimResult a = run(cfg, p);
  const SimResult b = run(threaded, p);
  const SimResult c = run(cfg, p);
  bool identical = a.energy == b.energy && a.energy == c.energy &&
                   a.snapshots.size() == b.snapshots.size();
  for (std::size_t s = 0; identical && s < a.snapshots.size(); ++s) {
    identical = a.snapshots[s].points() == b.snapshots[s].points() &&
                a.snapshots[s].points() == c.snapshots[s].points();
  }
  return {props.passed() && identical,
          "property sweep: " + std::string(to_string(props.status)) +
              " (worst normalized violation " + fmt(props.measured) +
              "); thread-count invariance " +
              (identical ? "bit-exact" : "VIOLATED")};
}

struct Criterion {
  int id;
  const char* title;
  std::function<Outcome()> fn;
  bool slow;
};

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  bool skip_slow = false;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) {
      only = std::atoi(argv[++i]);
    } else if (std::strcmp(argv[i], "--skip-slow") == 0) {
      skip_slow = true;
    } else {
      std::cerr << "usage: acceptance [--only N] [--skip-slow]\n";
      return 2;
    }
  }

  const std::vector<Criterion> criteria = {
      {1, "energy identity", criterion_energy_identity, false},
      {2, "terminal convergence", criterion_convergence, false},
      {3, "SW2 derivative certification", criterion_derivative, false},
      {4, "gain fixed point", criterion_fixed_point, false},
      {5, "iterative controller trend", criterion_iterative_trend, false},
      {6, "iterative-vs-flow agreement", criterion_iterative_vs_flow, true},
      {7, "trajectory geometry", criterion_geometry, false},
      {8, "oracle equivalence", criterion_oracle_equivalence, false},
      {9, "metric and reproducibility suite", criterion_property_suite, false},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    if (only != 0 && c.id != only) continue;
    if (only == 0 && skip_slow && c.slow) {
      std::cout << "[SKIP] criterion " << c.id << ": " << c.title
                << " (slow)\n";
      continue;
    }
    Outcome outcome;
    try {
      outcome = c.fn();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (outcome.pass ? "[PASS]" : "[FAIL]") << " criterion " << c.id
              << ": " << c.title << " — " << outcome.detail << "\n";
    if (!outcome.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
