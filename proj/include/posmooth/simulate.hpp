#pragma once

// Cluttered multi-target scenario generator. Targets follow a
// nearly-constant-velocity model in the plane, appear as a Poisson stream
// with uniform positions inside a square window, survive step to step with
// fixed probability, and are detected with fixed probability through a
// linear-Gaussian sensor buried in uniform Poisson clutter.

#include "posmooth/common.hpp"
#include "posmooth/multiobject.hpp"
#include "posmooth/state_filter.hpp"

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace posmooth {

struct SimParams {
  int K = 50;
  double window_lo = -60.0;
  double window_hi = 60.0;
  double dt = 1.0;
  double sigma_a = 0.05;    // acceleration noise driving Q
  double sigma_obs = 0.3;   // R = sigma_obs^2 I
  double lambda_fa = 10.0;  // clutter per scan
  double lambda_b = 0.1;    // births per scan
  double p_d = 0.9;
  double p_s = 0.99;
  double sigma_v_sim = 0.5;  // initial speed scale of new targets

  LinearGaussianModel model() const {
    LinearGaussianModel m;
    const double d = dt;
    m.F = Mat::Identity(4, 4);
    m.F(0, 2) = d;
    m.F(1, 3) = d;
    const double s2 = sigma_a * sigma_a;
    m.Q = Mat::Zero(4, 4);
    m.Q(0, 0) = m.Q(1, 1) = s2 * d * d * d / 3.0;
    m.Q(0, 2) = m.Q(2, 0) = s2 * d * d / 2.0;
    m.Q(1, 3) = m.Q(3, 1) = s2 * d * d / 2.0;
    m.Q(2, 2) = m.Q(3, 3) = s2 * d;
    m.H = Mat::Zero(2, 4);
    m.H(0, 0) = 1.0;
    m.H(1, 1) = 1.0;
    m.R = sigma_obs * sigma_obs * Mat::Identity(2, 2);
    m.validate();
    return m;
  }
};

inline SimParams sim_preset(const std::string& name) {
  SimParams p;
  if (name == "simple") {
    p.lambda_fa = 10.0;
    p.lambda_b = 0.1;
    p.p_d = 0.9;
  } else if (name == "high_fa") {
    p.lambda_fa = 100.0;
    p.lambda_b = 0.5;
    p.p_d = 0.8;
  } else if (name == "low_pd") {
    p.lambda_fa = 25.0;
    p.lambda_b = 0.5;
    p.p_d = 0.5;
  } else {
    throw UsageError("unknown preset: " + name +
                     " (expected simple, high_fa or low_pd)");
  }
  return p;
}

struct SimTarget {
  int birth_k = 0;
  int death_k = 0;              // last step present
  std::vector<Vec> states;      // states[j]: state at birth_k + j
  std::vector<ObsId> detections;

  const Vec& state_at(int k) const {
    if (k < birth_k || k > death_k)
      throw UsageError("SimTarget: step outside lifetime");
    return states[static_cast<std::size_t>(k - birth_k)];
  }
};

struct Scenario {
  SimParams params;
  std::uint64_t seed = 0;
  ObsSet obs;
  std::vector<int> labels;  // per gid: target index, or -1 for clutter
  std::vector<SimTarget> targets;
};

inline Scenario simulate(const SimParams& p, std::uint64_t seed) {
  if (p.K < 1) throw UsageError("simulate: K must be positive");
  Scenario sc;
  sc.params = p;
  sc.seed = seed;
  sc.obs = ObsSet(p.K, 2);
  Rng rng(seed, 0x53494d55ULL);

  const LinearGaussianModel model = p.model();
  Eigen::LLT<Mat> qllt(model.Q);
  if (qllt.info() != Eigen::Success)
    throw NumericalError("simulate: Q not SPD");
  const Mat Lq = qllt.matrixL();
  const double span = p.window_hi - p.window_lo;

  std::vector<std::size_t> alive;  // indices into sc.targets

  struct PendingObs {
    Vec z;
    int label;
  };

  for (int k = 1; k <= p.K; ++k) {
    // survival and motion of existing targets
    for (std::size_t idx = 0; idx < alive.size();) {
      SimTarget& tg = sc.targets[alive[idx]];
      if (rng.uniform01() < p.p_s) {
        Vec xi(4);
        for (int d = 0; d < 4; ++d) xi(d) = rng.normal();
        tg.states.push_back(model.F * tg.states.back() + Lq * xi);
        tg.death_k = k;
        ++idx;
      } else {
        alive.erase(alive.begin() + static_cast<std::ptrdiff_t>(idx));
      }
    }

    // births
    const int n_b = rng.poisson(p.lambda_b);
    for (int b = 0; b < n_b; ++b) {
      SimTarget tg;
      tg.birth_k = k;
      tg.death_k = k;
      Vec x(4);
      x(0) = p.window_lo + span * rng.uniform01();
      x(1) = p.window_lo + span * rng.uniform01();
      x(2) = p.sigma_v_sim * rng.normal();
      x(3) = p.sigma_v_sim * rng.normal();
      tg.states.push_back(std::move(x));
      sc.targets.push_back(std::move(tg));
      alive.push_back(sc.targets.size() - 1);
    }

    // detections, then clutter
    std::vector<PendingObs> scan;
    for (std::size_t ti : alive) {
      if (rng.uniform01() < p.p_d) {
        const Vec& x = sc.targets[ti].states.back();
        Vec z(2);
        z(0) = x(0) + p.sigma_obs * rng.normal();
        z(1) = x(1) + p.sigma_obs * rng.normal();
        scan.push_back(PendingObs{std::move(z), static_cast<int>(ti)});
      }
    }
    const int n_fa = rng.poisson(p.lambda_fa);
    for (int f = 0; f < n_fa; ++f) {
      Vec z(2);
      z(0) = p.window_lo + span * rng.uniform01();
      z(1) = p.window_lo + span * rng.uniform01();
      scan.push_back(PendingObs{std::move(z), -1});
    }

    // shuffle so scan indices carry no information about origin
    for (std::size_t j = scan.size(); j > 1; --j) {
      const std::size_t r = rng.uniform_int(j);
      std::swap(scan[j - 1], scan[r]);
    }

    for (const PendingObs& po : scan) {
      const ObsId id = sc.obs.add(k, po.z);
      sc.labels.push_back(po.label);
      if (po.label >= 0)
        sc.targets[static_cast<std::size_t>(po.label)].detections.push_back(
            id);
    }
  }
  return sc;
}

// Track set induced by the generating process: one track per target that was
// detected at least once, carrying its detections and true lifetime.
inline TrackSet ground_truth_tracks(const Scenario& sc) {
  TrackSet out;
  for (const SimTarget& tg : sc.targets) {
    if (tg.detections.empty()) continue;
    Path p;
    p.hits = tg.detections;
    out.push_back(Track{std::move(p), tg.birth_k, tg.death_k});
  }
  return out;
}

}  // namespace posmooth
