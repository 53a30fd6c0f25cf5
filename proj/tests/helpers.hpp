#pragma once

// Shared oracles and utilities for the test suites. Everything here is
// implemented independently of the library code paths it checks: the
// water-filling oracle solves the dual level by bisection and certifies the
// KKT conditions, the Kalman oracle is the textbook probabilistic filter,
// and the assignment oracle enumerates injective maps directly.

#include "posmooth/common.hpp"
#include "posmooth/multiobject.hpp"
#include "posmooth/possibility.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace testhelp {

using posmooth::Mat;
using posmooth::Vec;

// ------------------------------------------------------------ random inputs

inline Mat random_spd(int n, posmooth::Rng& rng, double jitter = 0.5) {
  Mat a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = rng.normal();
  Mat s = a * a.transpose() / n;
  s += jitter * Mat::Identity(n, n);
  return s;
}

inline Vec random_vec(int n, posmooth::Rng& rng, double scale = 1.0) {
  Vec v(n);
  for (int i = 0; i < n; ++i) v(i) = scale * rng.normal();
  return v;
}

// --------------------------------------------- max-entropy pmf oracle (dual)

// Solves sum_i min(c_i, lam) = 1 for lam by bisection on [1/n, 1] in linear
// space, then checks the KKT conditions of
//   max H(p) s.t. 0 <= p_i <= c_i, sum p = 1:
// every i with p_i < c_i shares the common level lam, and no clipped entry
// exceeds it.
struct MaxentOracle {
  std::vector<double> p;
  double lam = 0.0;
};

inline MaxentOracle maxent_oracle(const std::vector<double>& cred) {
  const std::size_t n = cred.size();
  double total = 0.0;
  for (double c : cred) total += c;
  if (total < 1.0 - 1e-12)
    throw std::runtime_error("maxent oracle: bounds sum below one");
  const auto mass = [&](double lam) {
    double s = 0.0;
    for (double c : cred) s += std::min(c, lam);
    return s;
  };
  double lo = 1.0 / static_cast<double>(n), hi = 1.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mass(mid) >= 1.0 ? hi : lo) = mid;
  }
  MaxentOracle out;
  out.lam = hi;
  out.p.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.p[i] = std::min(cred[i], out.lam);
  // the bisection leaves a residual; spread it over the unclipped entries so
  // the oracle pmf sums to one exactly
  double clipped = 0.0;
  int free_count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (out.p[i] < cred[i] - 1e-15) ++free_count;
    else clipped += out.p[i];
  }
  if (free_count > 0) {
    const double level = (1.0 - clipped) / free_count;
    for (std::size_t i = 0; i < n; ++i)
      if (out.p[i] < cred[i] - 1e-15) out.p[i] = level;
  }
  return out;
}

inline bool kkt_certificate(const std::vector<double>& cred,
                            const std::vector<double>& p, double tol) {
  const std::size_t n = cred.size();
  double sum = 0.0;
  double level = -1.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (p[i] < -tol || p[i] > cred[i] + tol) return false;
    sum += p[i];
    if (p[i] < cred[i] - tol) level = std::max(level, p[i]);
  }
  if (std::abs(sum - 1.0) > tol * n) return false;
  if (level < 0.0) return true;  // fully clipped
  for (std::size_t i = 0; i < n; ++i) {
    // unclipped entries share the level; clipped entries sit at or below it
    if (p[i] < cred[i] - tol && std::abs(p[i] - level) > tol) return false;
    if (p[i] >= cred[i] - tol && cred[i] > level + tol) return false;
  }
  return true;
}

// -------------------------------------------------- classical Kalman oracle

// Textbook probabilistic Kalman filter; the possibilistic recursion must
// reproduce its means and covariances exactly.
struct KalmanOracle {
  Vec m;
  Mat P;

  void predict(const Mat& F, const Mat& Q) {
    m = F * m;
    P = F * P * F.transpose() + Q;
  }

  // returns the Gaussian innovation exponent -(1/2) nu' S^-1 nu
  double update(const Mat& H, const Mat& R, const Vec& z) {
    const Vec nu = z - H * m;
    const Mat S = H * P * H.transpose() + R;
    const Mat K = P * H.transpose() * S.inverse();
    m = m + K * nu;
    P = P - K * H * P;
    return -0.5 * nu.dot(S.inverse() * nu);
  }
};

// ----------------------------------------- injective assignment enumeration

// Exhaustive maximum over injective maps from paths to observations or
// absence: sum of logL[o][sigma(o)] (or logLphi[o]) plus log alpha_fa for
// every unassigned observation.
inline double assignment_max_oracle(
    const std::vector<std::vector<double>>& logL,
    const std::vector<double>& logLphi, double log_alpha_fa) {
  const std::size_t n_o = logL.size();
  const std::size_t n_z = n_o == 0 ? 0 : logL[0].size();
  double best = posmooth::kNegInf;
  std::vector<int> choice(n_o, -1);  // -1: absence, else observation index
  std::function<void(std::size_t, double, std::size_t)> rec =
      [&](std::size_t o, double acc, std::size_t used_mask) {
        if (o == n_o) {
          const double n_used =
              static_cast<double>(__builtin_popcountll(used_mask));
          const double value =
              acc + (static_cast<double>(n_z) - n_used) * log_alpha_fa;
          best = std::max(best, value);
          return;
        }
        rec(o + 1, acc + logLphi[o], used_mask);
        for (std::size_t z = 0; z < n_z; ++z)
          if (!(used_mask & (std::size_t{1} << z)))
            rec(o + 1, acc + logL[o][z], used_mask | (std::size_t{1} << z));
      };
  if (n_o == 0) return static_cast<double>(n_z) * log_alpha_fa;
  rec(0, 0.0, 0);
  return best;
}

// The product form equals the injective maximum when per-path preferences do
// not contend: for every pair of paths, assigning both their unconstrained
// argmaxes must be jointly feasible or dominated within tolerance.
inline bool domination_holds(const std::vector<std::vector<double>>& logL,
                             const std::vector<double>& logLphi,
                             double log_alpha_fa, double tol) {
  const double prod = [&] {
    double acc =
        static_cast<double>(logL.empty() ? 0 : logL[0].size()) * log_alpha_fa;
    for (std::size_t o = 0; o < logL.size(); ++o) {
      double best = logLphi[o];
      for (double v : logL[o]) best = std::max(best, v - log_alpha_fa);
      acc += best;
    }
    return acc;
  }();
  return std::abs(prod - assignment_max_oracle(logL, logLphi, log_alpha_fa)) <=
         tol * std::max(1.0, std::abs(prod));
}

// ------------------------------------------------------------- chi-square

inline double chi_square_p_value(const std::vector<double>& expected,
                                 const std::vector<long long>& observed) {
  if (expected.size() != observed.size() || expected.size() < 2)
    throw std::runtime_error("chi-square: bad bins");
  double stat = 0.0;
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const double diff = static_cast<double>(observed[i]) - expected[i];
    if (expected[i] <= 0.0)
      throw std::runtime_error("chi-square: nonpositive expected count");
    stat += diff * diff / expected[i];
  }
  boost::math::chi_squared dist(static_cast<double>(expected.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

// ------------------------------------------------- track set enumeration

inline std::string track_set_key(const posmooth::TrackSet& t) {
  posmooth::TrackSet s = t;
  std::sort(s.begin(), s.end(), [](const posmooth::Track& a,
                                   const posmooth::Track& b) {
    if (!(a.path == b.path)) return a.path < b.path;
    if (a.m != b.m) return a.m < b.m;
    return a.n < b.n;
  });
  std::ostringstream os;
  for (const posmooth::Track& tr : s) {
    os << "[" << tr.m << ";" << tr.n << ";";
    for (const posmooth::ObsId& h : tr.path.hits)
      os << h.k << "," << h.i << " ";
    os << "]";
  }
  return os.str();
}

// All associations of an observation set: every family of disjoint,
// time-increasing paths. Exponential; only for tiny scenarios.
inline void enumerate_associations(
    const posmooth::ObsSet& obs,
    const std::function<void(const posmooth::Association&)>& visit) {
  std::vector<posmooth::ObsId> ids;
  for (int k = 1; k <= obs.K(); ++k)
    for (int i = 0; i < obs.count(k); ++i) ids.push_back({k, i});

  posmooth::Association cur;
  std::function<void(std::size_t)> rec = [&](std::size_t next) {
    if (next == ids.size()) {
      visit(cur);
      return;
    }
    const posmooth::ObsId id = ids[next];
    rec(next + 1);  // id stays unassigned
    // append to an existing path (time must strictly increase)
    for (posmooth::Path& p : cur) {
      if (p.last_k() < id.k) {
        p.hits.push_back(id);
        rec(next + 1);
        p.hits.pop_back();
      }
    }
    // open a new path; to avoid duplicates only if id would be its seed
    posmooth::Path np;
    np.hits.push_back(id);
    cur.push_back(np);
    rec(next + 1);
    cur.pop_back();
  };
  rec(0);
}

// All track sets: associations crossed with every valid interval choice.
inline void enumerate_track_sets(
    const posmooth::ObsSet& obs,
    const std::function<void(const posmooth::TrackSet&)>& visit) {
  enumerate_associations(obs, [&](const posmooth::Association& a) {
    posmooth::TrackSet cur;
    std::function<void(std::size_t)> rec = [&](std::size_t i) {
      if (i == a.size()) {
        visit(cur);
        return;
      }
      for (int m = 1; m <= a[i].first_k(); ++m)
        for (int n = a[i].last_k(); n <= obs.K(); ++n) {
          cur.push_back(posmooth::Track{a[i], m, n});
          rec(i + 1);
          cur.pop_back();
        }
    };
    rec(0);
  });
}

}  // namespace testhelp
