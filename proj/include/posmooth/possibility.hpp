#pragma once

// Possibility functions on finite sets and Gaussian possibility functions on
// R^d, with the operations the rest of the library is built from:
//   - credibility evaluation (linear and log),
//   - probability bounds induced by a possibility function,
//   - most-credible outcome (mode) and upper expectation,
//   - maximum-entropy probability distribution dominated pointwise by a
//     possibility function (exact water-filling).
//
// A possibility function is normalized when its supremum equals 1; discrete
// credibilities are kept in log space so long products over time steps do
// not underflow.

#include "posmooth/common.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <utility>
#include <vector>

namespace posmooth {

// ------------------------------------------------------------ water-filling
//
// Maximum-entropy pmf dominated by a finite possibility function:
// maximize H(p) subject to sum p = 1, 0 <= p_i <= c_i. The optimum clips all
// entries to a common level: p_i = min(c_i, lambda) with lambda solving
// sum_i min(c_i, lambda) = 1. Solved exactly by a sorted prefix-sum scan.
//
// Input: log credibilities with max(log_c) == 0 (sup-normalized).
// Output: per-entry log probabilities min(log_c_i, log lambda) and lambda.
// lambda >= 1/n, so the level itself never underflows; entries far below the
// level keep their exact log credibility as log probability.

struct WaterFill {
  std::vector<double> log_pmf;
  double lambda = 0.0;
};

inline WaterFill water_fill_log(const std::vector<double>& log_cred) {
  const std::size_t n = log_cred.size();
  if (n == 0) throw UsageError("water_fill_log: empty support");

  double maxlog = kNegInf;
  for (double lc : log_cred) maxlog = std::max(maxlog, lc);
  if (!(std::abs(maxlog) < 1e-12))
    throw UsageError("water_fill_log: input not sup-normalized");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (log_cred[a] != log_cred[b]) return log_cred[a] > log_cred[b];
    return a < b;
  });

  std::vector<double> cred(n);
  for (std::size_t r = 0; r < n; ++r) cred[r] = std::exp(log_cred[order[r]]);

  // suffix[r] = sum of cred over ranks >= r
  std::vector<double> suffix(n + 1, 0.0);
  for (std::size_t r = n; r-- > 0;) suffix[r] = suffix[r + 1] + cred[r];

  // With the j largest entries clipped to lambda:
  //   j * lambda + suffix[j] = 1,  valid while cred[j] <= lambda <= cred[j-1].
  double lambda = 1.0;
  bool found = false;
  for (std::size_t j = 1; j <= n; ++j) {
    const double cand = (1.0 - suffix[j]) / static_cast<double>(j);
    const double hi = cred[j - 1];
    const double lo = (j < n) ? cred[j] : 0.0;
    if (cand <= hi * (1.0 + 1e-12) + 1e-300 && cand >= lo * (1.0 - 1e-12)) {
      lambda = std::min(cand, hi);
      found = true;
      break;
    }
  }
  if (!found) {
    // Fall back to bisection on the monotone level equation; unreachable for
    // well-formed input but keeps the routine total under adversarial
    // rounding.
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      double s = 0.0;
      for (std::size_t r = 0; r < n; ++r) s += std::min(cred[r], mid);
      (s < 1.0 ? lo : hi) = mid;
    }
    lambda = 0.5 * (lo + hi);
  }

  const double log_lambda = std::log(lambda);
  WaterFill out;
  out.lambda = lambda;
  out.log_pmf.resize(n);
  for (std::size_t idx = 0; idx < n; ++idx)
    out.log_pmf[idx] = std::min(log_cred[idx], log_lambda);
  return out;
}

// ------------------------------------------------------------- discrete pmf

template <class K>
class Pmf {
 public:
  Pmf() = default;
  Pmf(std::vector<K> keys, std::vector<double> log_p)
      : keys_(std::move(keys)), log_p_(std::move(log_p)) {
    if (keys_.size() != log_p_.size() || keys_.empty())
      throw UsageError("Pmf: inconsistent construction");
    double s = 0.0;
    for (double lp : log_p_) s += std::exp(lp);
    if (std::abs(s - 1.0) > 1e-9)
      throw UsageError("Pmf: probabilities do not sum to 1");
  }

  std::size_t size() const { return keys_.size(); }
  const K& key(std::size_t idx) const { return keys_[idx]; }
  double log_p_at(std::size_t idx) const { return log_p_[idx]; }

  double log_p(const K& k) const {
    for (std::size_t idx = 0; idx < keys_.size(); ++idx)
      if (keys_[idx] == k) return log_p_[idx];
    return kNegInf;
  }
  double p(const K& k) const { return std::exp(log_p(k)); }

  // Index of the sampled key; iteration order is storage order.
  std::size_t sample_index(Rng& rng) const {
    const double u = rng.uniform01();
    double acc = 0.0;
    for (std::size_t idx = 0; idx < log_p_.size(); ++idx) {
      acc += std::exp(log_p_[idx]);
      if (u < acc) return idx;
    }
    return log_p_.size() - 1;
  }
  const K& sample(Rng& rng) const { return keys_[sample_index(rng)]; }

 private:
  std::vector<K> keys_;
  std::vector<double> log_p_;
};

// ----------------------------------------------------- discrete possibility

template <class K>
class DiscretePossibility {
 public:
  DiscretePossibility() = default;

  // Linear credibilities in [0, 1].
  static DiscretePossibility from_linear(std::vector<K> keys,
                                         const std::vector<double>& cred) {
    std::vector<double> lc(cred.size());
    for (std::size_t i = 0; i < cred.size(); ++i) {
      if (cred[i] < 0.0 || cred[i] > 1.0 + 1e-12)
        throw UsageError("DiscretePossibility: credibility outside [0,1]");
      lc[i] = std::log(cred[i]);
    }
    return DiscretePossibility(std::move(keys), std::move(lc));
  }

  static DiscretePossibility from_log(std::vector<K> keys,
                                      std::vector<double> log_cred) {
    return DiscretePossibility(std::move(keys), std::move(log_cred));
  }

  std::size_t size() const { return keys_.size(); }
  bool empty() const { return keys_.empty(); }
  const K& key(std::size_t idx) const { return keys_[idx]; }
  double log_cred_at(std::size_t idx) const { return log_cred_[idx]; }

  double log_cred(const K& k) const {
    for (std::size_t idx = 0; idx < keys_.size(); ++idx)
      if (keys_[idx] == k) return log_cred_[idx];
    return kNegInf;
  }
  double cred(const K& k) const { return std::exp(log_cred(k)); }

  double max_log_cred() const {
    double m = kNegInf;
    for (double lc : log_cred_) m = std::max(m, lc);
    return m;
  }

  bool is_normalized(double tol = 1e-12) const {
    return std::abs(max_log_cred()) <= tol;
  }

  // Divides by the supremum. An identically-zero function carries no
  // information and normalizes to the uninformative possibility (all ones).
  DiscretePossibility normalized() const {
    if (empty()) throw UsageError("normalized: empty support");
    const double m = max_log_cred();
    std::vector<double> lc(log_cred_);
    if (m == kNegInf) {
      std::fill(lc.begin(), lc.end(), 0.0);
    } else {
      for (double& v : lc) v -= m;
    }
    return DiscretePossibility(std::vector<K>(keys_), std::move(lc));
  }

  // Most credible outcome; ties resolved toward the smallest key so results
  // are reproducible across runs and platforms.
  const K& argmax() const {
    if (empty()) throw UsageError("argmax: empty support");
    std::size_t best = 0;
    for (std::size_t idx = 1; idx < keys_.size(); ++idx) {
      if (log_cred_[idx] > log_cred_[best] ||
          (log_cred_[idx] == log_cred_[best] && keys_[idx] < keys_[best]))
        best = idx;
    }
    return keys_[best];
  }

  // Upper expectation sup_x phi(x) f(x) of a non-negative function.
  double max_expectation(const std::function<double(const K&)>& phi) const {
    if (empty()) throw UsageError("max_expectation: empty support");
    double best = 0.0;
    for (std::size_t idx = 0; idx < keys_.size(); ++idx) {
      const double v = phi(keys_[idx]);
      if (v < 0.0) throw UsageError("max_expectation: negative integrand");
      best = std::max(best, v * std::exp(log_cred_[idx]));
    }
    return best;
  }

  // Maximum-entropy pmf dominated by this possibility function.
  // Requires sup-normalization (feasibility: sum of credibilities >= 1).
  Pmf<K> max_entropy_pmf() const {
    if (!is_normalized())
      throw UsageError("max_entropy_pmf: possibility not sup-normalized");
    WaterFill wf = water_fill_log(log_cred_);
    return Pmf<K>(std::vector<K>(keys_), std::move(wf.log_pmf));
  }

 private:
  DiscretePossibility(std::vector<K> keys, std::vector<double> log_cred)
      : keys_(std::move(keys)), log_cred_(std::move(log_cred)) {
    if (keys_.size() != log_cred_.size())
      throw UsageError("DiscretePossibility: inconsistent construction");
    for (double lc : log_cred_)
      if (lc > 1e-12) throw UsageError("DiscretePossibility: credibility > 1");
  }

  std::vector<K> keys_;
  std::vector<double> log_cred_;
};

// Bounds the probability of the event B (given by membership on the support):
//   1 - sup_{B^c} f  <=  p(B)  <=  sup_B f.
// Sup over an empty set is 0, so p(full support) is bounded by [1, 1] for a
// normalized possibility function.
template <class K>
inline std::pair<double, double> probability_bounds(
    const DiscretePossibility<K>& f, const std::function<bool(const K&)>& inB) {
  if (!f.is_normalized())
    throw UsageError("probability_bounds: possibility not sup-normalized");
  double sup_in = 0.0, sup_out = 0.0;
  for (std::size_t idx = 0; idx < f.size(); ++idx) {
    const double c = std::exp(f.log_cred_at(idx));
    if (inB(f.key(idx)))
      sup_in = std::max(sup_in, c);
    else
      sup_out = std::max(sup_out, c);
  }
  return {1.0 - sup_out, sup_in};
}

// -------------------------------------------------------- Gaussian family

// Un-normalized Gaussian possibility function
//   N(x; m, S) = exp(-(x - m)^T S^{-1} (x - m) / 2),
// value 1 at the mode; there is no determinant prefactor.
class GaussianPossibility {
 public:
  GaussianPossibility() = default;
  GaussianPossibility(Vec mean, Mat cov)
      : mean_(std::move(mean)), cov_(std::move(cov)) {
    if (cov_.rows() != cov_.cols() || cov_.rows() != mean_.size())
      throw UsageError("GaussianPossibility: dimension mismatch");
  }

  Eigen::Index dim() const { return mean_.size(); }
  const Vec& mean() const { return mean_; }
  const Mat& cov() const { return cov_; }

  double log_eval(const Vec& x) const {
    if (x.size() != mean_.size())
      throw UsageError("GaussianPossibility: evaluation dimension mismatch");
    Eigen::LLT<Mat> llt(cov_);
    if (llt.info() != Eigen::Success)
      throw NumericalError("GaussianPossibility: covariance not SPD");
    const Vec d = x - mean_;
    return -0.5 * d.dot(llt.solve(d));
  }

  double eval(const Vec& x) const { return std::exp(log_eval(x)); }

  // Most credible outcome.
  const Vec& mode() const { return mean_; }

  // Spread parameter recovered from the curvature of -log f at the mode;
  // exposed for the scalar case only, where it equals the variance.
  double variance_star() const {
    if (dim() != 1) throw UsageError("variance_star: scalar case only");
    return cov_(0, 0);
  }

 private:
  Vec mean_;
  Mat cov_;
};

}  // namespace posmooth
