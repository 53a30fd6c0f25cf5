#pragma once

// Global move proposal over associations: remove a consistency-linked subset
// of the current paths, draw seeds for replacement paths, and regenerate
// paths with the seeded filter. All selection distributions are max-entropy
// pmfs of restricted (sup-normalized) possibility functions, and every factor
// of the move probability is computed exactly in both directions, including
// the sums over the orders in which an unordered selection could have been
// drawn (evaluated by subset dynamic programming, identical to the
// permutation sum).

#include "posmooth/common.hpp"
#include "posmooth/consistency.hpp"
#include "posmooth/hisp.hpp"
#include "posmooth/multiobject.hpp"
#include "posmooth/possibility.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

namespace posmooth {

struct ProposalParams {
  double lambda_r = 1.0;
  // change of path count relative to the removed set: delta in {-1, 0, +1}
  std::array<double, 3> ptilde = {0.5, 0.25, 0.25};
};

inline ProposalParams with_focus(ProposalParams p, int focus) {
  switch (focus) {
    case -1: p.ptilde = {0.5, 0.25, 0.25}; break;
    case 0: p.ptilde = {0.25, 0.5, 0.25}; break;
    case +1: p.ptilde = {0.25, 0.25, 0.5}; break;
    case 2: p.ptilde = {1.0 / 3, 1.0 / 3, 1.0 / 3}; break;  // uniform
    default: throw UsageError("with_focus: focus must be -1, 0, +1 or 2");
  }
  return p;
}

// --------------------------------------------------------- count proposals

inline double truncated_poisson_log_pmf(double lambda, int s, int n) {
  if (n < 0 || n > s) return kNegInf;
  if (lambda <= 0.0) return n == 0 ? 0.0 : kNegInf;
  const double log_lambda = std::log(lambda);
  double norm = kNegInf;
  for (int j = 0; j <= s; ++j) {
    const double lw = j * log_lambda - std::lgamma(j + 1.0);
    norm = norm == kNegInf ? lw : std::max(norm, lw) +
           std::log1p(std::exp(-std::abs(norm - lw)));
  }
  return n * log_lambda - std::lgamma(n + 1.0) - norm;
}

struct CountDraw {
  int n_r = 0;
  int n_c = 0;
  double log_p = 0.0;
};

// p(n_r | s) * p(n_c | n_r); n_c is 1 when nothing is removed, otherwise
// n_r + delta.
inline double counts_log_pmf(const ProposalParams& p, int s, int n_r,
                             int n_c) {
  const double lp_r = truncated_poisson_log_pmf(p.lambda_r, s, n_r);
  if (lp_r == kNegInf) return kNegInf;
  if (n_r == 0) return n_c == 1 ? lp_r : kNegInf;
  const int delta = n_c - n_r;
  if (delta < -1 || delta > 1) return kNegInf;
  return lp_r + std::log(p.ptilde[static_cast<std::size_t>(delta + 1)]);
}

inline CountDraw sample_counts(const ProposalParams& p, int s, Rng& rng) {
  CountDraw out;
  // truncated Poisson draw by inverse cdf on the exact pmf
  {
    const double u = rng.uniform01();
    double acc = 0.0;
    out.n_r = s;
    for (int n = 0; n <= s; ++n) {
      acc += std::exp(truncated_poisson_log_pmf(p.lambda_r, s, n));
      if (u < acc) {
        out.n_r = n;
        break;
      }
    }
  }
  if (out.n_r == 0) {
    out.n_c = 1;
  } else {
    const double u = rng.uniform01();
    int delta = +1;
    double acc = 0.0;
    for (int d = -1; d <= 1; ++d) {
      acc += p.ptilde[static_cast<std::size_t>(d + 1)];
      if (u < acc) {
        delta = d;
        break;
      }
    }
    out.n_c = out.n_r + delta;
  }
  out.log_p = counts_log_pmf(p, s, out.n_r, out.n_c);
  return out;
}

// ------------------------------------------------- restricted selection pmf

// Max-entropy pmf of a possibility function restricted to the non-excluded
// part of a fixed universe and sup-normalized there. An identically-zero
// restriction carries no information and yields the uniform pmf. The
// universe is sorted once; every restricted level is then found in one scan.
class RestrictedSelector {
 public:
  explicit RestrictedSelector(std::vector<double> log_cred)
      : log_cred_(std::move(log_cred)) {
    const std::size_t n = log_cred_.size();
    order_.resize(n);
    for (std::size_t i = 0; i < n; ++i) order_[i] = i;
    std::sort(order_.begin(), order_.end(),
              [&](std::size_t a, std::size_t b) {
                if (log_cred_[a] != log_cred_[b])
                  return log_cred_[a] > log_cred_[b];
                return a < b;
              });
  }

  std::size_t size() const { return log_cred_.size(); }
  double log_cred(std::size_t i) const { return log_cred_[i]; }

  struct Level {
    bool uniform = false;      // all remaining credibilities are zero
    double log_max = 0.0;      // sup over the restriction
    double log_level = 0.0;    // clip level of the normalized restriction
    std::size_t remaining = 0;
  };

  Level solve(const std::vector<char>& excluded) const {
    const std::size_t n = log_cred_.size();
    Level lv;
    scratch_.clear();
    for (std::size_t r = 0; r < n; ++r)
      if (!excluded[order_[r]]) scratch_.push_back(std::exp(log_cred_[order_[r]]));
    lv.remaining = scratch_.size();
    if (lv.remaining == 0)
      throw UsageError("RestrictedSelector: nothing left to select");
    const double M = scratch_.front();
    if (M <= 0.0) {
      lv.uniform = true;
      return lv;
    }
    lv.log_max = std::log(M);
    // level Lam solving sum min(c_r, Lam) = M over the restriction
    double tail = 0.0;
    for (double c : scratch_) tail += c;
    double lam = M;
    for (std::size_t j = 1; j <= scratch_.size(); ++j) {
      tail -= scratch_[j - 1];
      const double cand = (M - tail) / static_cast<double>(j);
      const double hi = scratch_[j - 1];
      const double lo = j < scratch_.size() ? scratch_[j] : 0.0;
      if (cand <= hi * (1.0 + 1e-12) + 1e-300 && cand >= lo * (1.0 - 1e-12)) {
        lam = std::min(cand, hi);
        break;
      }
    }
    lv.log_level = std::log(lam) - lv.log_max;
    return lv;
  }

  double log_pmf(const Level& lv, std::size_t idx) const {
    if (lv.uniform) return -std::log(static_cast<double>(lv.remaining));
    return std::min(log_cred_[idx] - lv.log_max, lv.log_level);
  }

  std::size_t sample(const Level& lv, const std::vector<char>& excluded,
                     Rng& rng) const {
    const double u = rng.uniform01();
    double acc = 0.0;
    std::size_t last = log_cred_.size();
    for (std::size_t i = 0; i < log_cred_.size(); ++i) {
      if (excluded[i]) continue;
      last = i;
      acc += std::exp(log_pmf(lv, i));
      if (u < acc) return i;
    }
    if (last == log_cred_.size())
      throw UsageError("RestrictedSelector: nothing left to select");
    return last;
  }

 private:
  std::vector<double> log_cred_;
  std::vector<std::size_t> order_;
  mutable std::vector<double> scratch_;
};

// Probability (log) of obtaining the unordered set `members` by sequential
// draws without replacement, summed over all draw orders. Subset DP; the
// member count is small by construction (Poisson-tailed).
inline double log_draw_set_prob(const RestrictedSelector& sel,
                                std::vector<char> excluded,
                                const std::vector<std::size_t>& members) {
  const std::size_t n = members.size();
  if (n == 0) return 0.0;
  if (n > 20) throw UsageError("log_draw_set_prob: selection too large");
  const std::size_t full = (std::size_t{1} << n) - 1;
  std::vector<double> W(full + 1, kNegInf);
  W[full] = 0.0;
  // masks descending: all supersets of a mask are processed first
  for (std::size_t mask = full; mask-- > 0;) {
    for (std::size_t j = 0; j < n; ++j)
      if (mask & (std::size_t{1} << j)) excluded[members[j]] = 1;
    const RestrictedSelector::Level lv = sel.solve(excluded);
    double acc = kNegInf;
    for (std::size_t j = 0; j < n; ++j) {
      if (mask & (std::size_t{1} << j)) continue;
      const double term =
          sel.log_pmf(lv, members[j]) + W[mask | (std::size_t{1} << j)];
      if (term == kNegInf) continue;
      acc = acc == kNegInf
                ? term
                : std::max(acc, term) +
                      std::log1p(std::exp(-std::abs(acc - term)));
    }
    W[mask] = acc;
    for (std::size_t j = 0; j < n; ++j)
      if (mask & (std::size_t{1} << j)) excluded[members[j]] = 0;
  }
  return W[0];
}

// ------------------------------------------------------- reassign selection

// Consistency of every path of `assoc` with the anchor path.
inline RestrictedSelector reassign_selector(const ConsistencyIndex& index,
                                            const Association& assoc,
                                            std::size_t anchor) {
  std::vector<double> lc(assoc.size(), kNegInf);
  for (std::size_t j = 0; j < assoc.size(); ++j)
    if (j != anchor)
      lc[j] = index.path_path_log(assoc[anchor], assoc[j]);
  return RestrictedSelector(std::move(lc));
}

// Probability (log) of selecting the unordered subset `members` of `assoc`:
// the first element is uniform over the association, the rest follow the
// anchored consistency pmfs; summed over all selection orders.
inline double eval_select_reassign(const ConsistencyIndex& index,
                                   const Association& assoc,
                                   const std::vector<std::size_t>& members) {
  if (members.empty()) return 0.0;
  const double log_s = std::log(static_cast<double>(assoc.size()));
  double acc = kNegInf;
  for (std::size_t a = 0; a < members.size(); ++a) {
    const std::size_t anchor = members[a];
    RestrictedSelector sel = reassign_selector(index, assoc, anchor);
    std::vector<char> excluded(assoc.size(), 0);
    excluded[anchor] = 1;
    std::vector<std::size_t> rest;
    for (std::size_t j = 0; j < members.size(); ++j)
      if (j != a) rest.push_back(members[j]);
    const double term = log_draw_set_prob(sel, std::move(excluded), rest);
    if (term == kNegInf) continue;
    acc = acc == kNegInf ? term
                         : std::max(acc, term) +
                               std::log1p(std::exp(-std::abs(acc - term)));
  }
  return acc == kNegInf ? kNegInf : acc - log_s;
}

struct ReassignDraw {
  std::vector<std::size_t> members;  // indices into the association
  double log_p = 0.0;
};

inline ReassignDraw select_reassign(const ConsistencyIndex& index,
                                    const Association& assoc, int n_r,
                                    Rng& rng) {
  ReassignDraw out;
  if (n_r == 0) return out;
  if (static_cast<std::size_t>(n_r) > assoc.size())
    throw UsageError("select_reassign: more removals than paths");
  const std::size_t anchor = rng.uniform_int(assoc.size());
  out.members.push_back(anchor);
  if (n_r > 1) {
    RestrictedSelector sel = reassign_selector(index, assoc, anchor);
    std::vector<char> excluded(assoc.size(), 0);
    excluded[anchor] = 1;
    for (int i = 1; i < n_r; ++i) {
      const RestrictedSelector::Level lv = sel.solve(excluded);
      const std::size_t pick = sel.sample(lv, excluded, rng);
      excluded[pick] = 1;
      out.members.push_back(pick);
    }
  }
  std::sort(out.members.begin(), out.members.end());
  out.log_p = eval_select_reassign(index, assoc, out.members);
  return out;
}

// ----------------------------------------------------------- seed selection

// Seed credibility over the available observations: best forward
// continuation when nothing is removed, consistency with the removed paths
// otherwise.
inline RestrictedSelector seed_selector(const ConsistencyIndex& index,
                                        const std::vector<ObsId>& available,
                                        const Association& removed) {
  std::vector<double> lc(available.size(), kNegInf);
  for (std::size_t j = 0; j < available.size(); ++j) {
    if (removed.empty()) {
      lc[j] = index.marginal_log(available[j]);
    } else {
      double best = kNegInf;
      for (const Path& p : removed)
        best = std::max(best, index.obs_path_log(available[j], p));
      lc[j] = best;
    }
  }
  return RestrictedSelector(std::move(lc));
}

struct SeedDraw {
  std::vector<std::size_t> members;  // indices into the available list
  double log_p = 0.0;
};

inline double eval_select_seeds(const RestrictedSelector& sel,
                                const std::vector<std::size_t>& members) {
  return log_draw_set_prob(sel, std::vector<char>(sel.size(), 0), members);
}

inline SeedDraw select_seeds(const RestrictedSelector& sel, int n_c,
                             Rng& rng) {
  SeedDraw out;
  if (n_c == 0) return out;
  std::vector<char> excluded(sel.size(), 0);
  for (int i = 0; i < n_c; ++i) {
    const RestrictedSelector::Level lv = sel.solve(excluded);
    const std::size_t pick = sel.sample(lv, excluded, rng);
    excluded[pick] = 1;
    out.members.push_back(pick);
  }
  std::sort(out.members.begin(), out.members.end());
  out.log_p = eval_select_seeds(sel, out.members);
  return out;
}

// --------------------------------------------------------- interval proposal

// Appearance/disappearance intervals are drawn per path from max-entropy
// pmfs whose bounds are exactly the objective's tail factors: the
// disappearance lag l in {0..K-last_k} is bounded by
// a_ns^{1(l < K-last_k)} a_nd^l, the appearance lag in {0..first_k-1} by
// a_nd^l.

inline Pmf<int> interval_minus_pmf(double log_alpha_nd, double log_alpha_ns,
                                   int slack) {
  std::vector<int> keys(slack + 1);
  std::vector<double> lc(slack + 1);
  for (int l = 0; l <= slack; ++l) {
    keys[l] = l;
    lc[l] = (l < slack ? log_alpha_ns : 0.0) + l * log_alpha_nd;
  }
  return DiscretePossibility<int>::from_log(std::move(keys), std::move(lc))
      .normalized()
      .max_entropy_pmf();
}

inline Pmf<int> interval_plus_pmf(double log_alpha_nd, int slack) {
  std::vector<int> keys(slack + 1);
  std::vector<double> lc(slack + 1);
  for (int l = 0; l <= slack; ++l) {
    keys[l] = l;
    lc[l] = l * log_alpha_nd;
  }
  return DiscretePossibility<int>::from_log(std::move(keys), std::move(lc))
      .normalized()
      .max_entropy_pmf();
}

struct IntervalDraw {
  int m = 0;
  int n = 0;
  double log_p = 0.0;
};

inline IntervalDraw sample_intervals(const TargetParams& tp, int K,
                                     const Path& path, Rng& rng) {
  const Pmf<int> pm_minus =
      interval_minus_pmf(tp.log_alpha_nd, tp.log_alpha_ns, K - path.last_k());
  const Pmf<int> pm_plus =
      interval_plus_pmf(tp.log_alpha_nd, path.first_k() - 1);
  const std::size_t im = pm_minus.sample_index(rng);
  const std::size_t ip = pm_plus.sample_index(rng);
  IntervalDraw out;
  out.n = path.last_k() + pm_minus.key(im);
  out.m = path.first_k() - pm_plus.key(ip);
  out.log_p = pm_minus.log_p_at(im) + pm_plus.log_p_at(ip);
  return out;
}

inline double eval_intervals(const TargetParams& tp, int K, const Track& tr) {
  const Pmf<int> pm_minus = interval_minus_pmf(
      tp.log_alpha_nd, tp.log_alpha_ns, K - tr.path.last_k());
  const Pmf<int> pm_plus =
      interval_plus_pmf(tp.log_alpha_nd, tr.path.first_k() - 1);
  return pm_minus.log_p(tr.n - tr.path.last_k()) +
         pm_plus.log_p(tr.path.first_k() - tr.m);
}

// ------------------------------------------------------------ full proposal

struct ProposalOutcome {
  bool rejected = false;
  Association removed;   // A_r
  Association created;   // A_c
  Association proposed;  // (A \ A_r) u A_c, canonical
  std::vector<ObsId> seeds;
  int n_r = 0, n_c = 0;
  double log_phi_fwd = kNegInf;
  double log_phi_rev = kNegInf;
  double log_pc_fwd = kNegInf;  // filter draw probability (forward)
  std::vector<std::vector<char>> used;  // mask of the untouched paths
};

inline ProposalOutcome propose_paths(const Association& assoc,
                                     const ObsSet& obs,
                                     const ConsistencyIndex& index,
                                     const HispFilter& filter,
                                     const ProposalParams& pp, Rng& rng) {
  ProposalOutcome out;
  const int s = static_cast<int>(assoc.size());
  const CountDraw counts = sample_counts(pp, s, rng);
  out.n_r = counts.n_r;
  out.n_c = counts.n_c;

  const ReassignDraw rd = select_reassign(index, assoc, counts.n_r, rng);
  for (std::size_t idx : rd.members) out.removed.push_back(assoc[idx]);
  canonicalize(out.removed);

  Association kept = assoc_minus(assoc, out.removed);
  out.used = used_mask(obs, kept);

  // available observations, in (k, i) order
  std::vector<ObsId> available;
  for (int k = 1; k <= obs.K(); ++k)
    for (int i = 0; i < obs.count(k); ++i)
      if (!out.used[k - 1][i]) available.push_back(ObsId{k, i});

  if (static_cast<int>(available.size()) < counts.n_c) {
    out.rejected = true;
    return out;
  }

  const RestrictedSelector fwd_seed_sel =
      seed_selector(index, available, out.removed);
  const SeedDraw sd = select_seeds(fwd_seed_sel, counts.n_c, rng);
  for (std::size_t idx : sd.members) out.seeds.push_back(available[idx]);

  const FilterResult fr = filter.run(out.seeds, out.used, rng);
  if (fr.overlap) {
    out.rejected = true;
    return out;
  }
  out.log_pc_fwd = fr.log_prob;
  out.created = fr.created;
  canonicalize(out.created);

  // the removed and created sets must differ for the move to be recoverable
  for (const Path& p : out.created)
    if (std::find(out.removed.begin(), out.removed.end(), p) !=
        out.removed.end()) {
      out.rejected = true;
      return out;
    }

  out.proposed = kept;
  out.proposed.insert(out.proposed.end(), out.created.begin(),
                      out.created.end());
  canonicalize(out.proposed);

  out.log_phi_fwd = counts.log_p + rd.log_p + sd.log_p + fr.log_prob;

  // ---- reverse move: remove `created`, re-create `removed` from its seeds
  const int s_rev = static_cast<int>(out.proposed.size());
  const int n_r_rev = counts.n_c;
  const int n_c_rev = counts.n_r;
  double log_rev = counts_log_pmf(pp, s_rev, n_r_rev, n_c_rev);

  if (log_rev != kNegInf && n_r_rev > 0) {
    std::vector<std::size_t> members;
    for (const Path& p : out.created) {
      const auto it =
          std::find(out.proposed.begin(), out.proposed.end(), p);
      members.push_back(
          static_cast<std::size_t>(it - out.proposed.begin()));
    }
    log_rev += eval_select_reassign(index, out.proposed, members);
  }

  if (log_rev != kNegInf && n_c_rev > 0) {
    std::vector<ObsId> seeds_rev;
    for (const Path& p : out.removed) seeds_rev.push_back(p.seed());
    std::sort(seeds_rev.begin(), seeds_rev.end());

    const RestrictedSelector rev_seed_sel =
        seed_selector(index, available, out.created);
    std::vector<std::size_t> members;
    for (const ObsId& sdd : seeds_rev) {
      const auto it = std::lower_bound(available.begin(), available.end(), sdd);
      if (it == available.end() || !(*it == sdd))
        throw UsageError("propose_paths: removed path seed is not available");
      members.push_back(static_cast<std::size_t>(it - available.begin()));
    }
    log_rev += eval_select_seeds(rev_seed_sel, members);

    if (log_rev != kNegInf) {
      const FilterResult rev =
          filter.evaluate(out.removed, seeds_rev, out.used);
      log_rev += rev.log_prob;
    }
  }

  if (log_rev == kNegInf) {
    out.rejected = true;
    return out;
  }
  out.log_phi_rev = log_rev;
  return out;
}

}  // namespace posmooth
