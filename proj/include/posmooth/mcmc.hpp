#pragma once

// Annealed Metropolis-Hastings samplers over track sets. The global sampler
// proposes whole-association rewrites through the seeded filter and redraws
// every appearance/disappearance interval jointly; a path-level variant
// targets the interval-maximized association credibility instead. The
// baseline sampler uses eight local reversible moves. Both run against the
// same objective and emit the same trace records.

#include "posmooth/common.hpp"
#include "posmooth/consistency.hpp"
#include "posmooth/hisp.hpp"
#include "posmooth/multiobject.hpp"
#include "posmooth/proposal.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace posmooth {

// rho_t = (1-c)^{-t}, computed in closed form so that late iterations keep
// full relative precision.
struct AnnealSchedule {
  double c = 0.0;

  double rho(long long t) const {
    if (c < 0.0 || c >= 1.0)
      throw UsageError("AnnealSchedule: c must lie in [0, 1)");
    return std::exp(-static_cast<double>(t) * std::log1p(-c));
  }
};

struct TraceRecord {
  long long iteration = 0;
  double wall_ms = 0.0;
  double rho = 1.0;
  std::string move_kind;
  bool accepted = false;
  double log_pi_current = 0.0;
  double log_pi_best = 0.0;
  int n_tracks = 0;
};

struct ChainConfig {
  long long iters = 10000;
  double wall_secs = 0.0;  // 0 disables the wall-clock budget
  double anneal_c = 0.0;
  ProposalParams proposal;
  bool track_level = true;  // joint interval redraw; false: path-level target
  long long recheck_every = 1000;
  bool record_trace = true;
  std::function<void(const TrackSet&)> state_hook;  // after every iteration
};

struct RunResult {
  TrackSet best;
  double best_log_pi = kNegInf;
  TrackSet final_state;
  double final_log_pi = kNegInf;
  long long iters_done = 0;
  bool hit_wall = false;
  std::vector<TraceRecord> trace;
};

namespace detail {

inline double accept_log_ratio_clamped(double x) {
  return x > 0.0 ? 0.0 : x;
}

inline bool mh_accept(double log_ratio, Rng& rng) {
  if (log_ratio >= 0.0) return true;
  if (log_ratio == kNegInf) return false;
  return rng.uniform01() < std::exp(log_ratio);
}

inline double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - t0)
      .count();
}

}  // namespace detail

// ------------------------------------------------------------ global chain

inline RunResult run_chain(const TrackObjective& objective,
                           const ConsistencyIndex& index,
                           const HispFilter& filter, const ObsSet& obs,
                           const ChainConfig& cfg, Rng& rng) {
  const auto t0 = std::chrono::steady_clock::now();
  const AnnealSchedule schedule{cfg.anneal_c};
  const TargetParams& tp = objective.params();
  const int K = obs.K();

  RunResult out;
  TrackSet state;  // empty initial state
  double log_pi = objective.track_set_log(state);
  Association assoc;  // paths of `state`, kept canonical

  double assoc_log = kNegInf;  // path-level objective cache
  if (!cfg.track_level) assoc_log = objective.assoc_log_marginal(assoc);

  out.best = state;
  out.best_log_pi = cfg.track_level ? log_pi : assoc_log;

  for (long long t = 1; t <= cfg.iters; ++t) {
    const double rho = schedule.rho(t);
    bool accepted = false;

    ProposalOutcome move =
        propose_paths(assoc, obs, index, filter, cfg.proposal, rng);

    if (!move.rejected && cfg.track_level) {
      // fresh intervals for every path of the proposed association
      TrackSet proposed;
      double log_psi_fwd = 0.0;
      for (const Path& p : move.proposed) {
        const IntervalDraw d = sample_intervals(tp, K, p, rng);
        proposed.push_back(Track{p, d.m, d.n});
        log_psi_fwd += d.log_p;
      }
      double log_psi_rev = 0.0;
      for (const Track& tr : state) log_psi_rev += eval_intervals(tp, K, tr);

      const double log_pi_new = objective.track_set_log(proposed);
      const double log_ratio = rho * (log_pi_new - log_pi) + log_psi_rev +
                               move.log_phi_rev - log_psi_fwd -
                               move.log_phi_fwd;
      if (detail::mh_accept(log_ratio, rng)) {
        accepted = true;
        state = std::move(proposed);
        assoc = std::move(move.proposed);
        log_pi = log_pi_new;
        if (log_pi > out.best_log_pi) {
          out.best_log_pi = log_pi;
          out.best = state;
        }
      }
    } else if (!move.rejected) {
      const double assoc_log_new =
          objective.assoc_log_marginal(move.proposed);
      const double log_ratio = rho * (assoc_log_new - assoc_log) +
                               move.log_phi_rev - move.log_phi_fwd;
      if (detail::mh_accept(log_ratio, rng)) {
        accepted = true;
        assoc = std::move(move.proposed);
        assoc_log = assoc_log_new;
        TrackSet cur;
        objective.assoc_log_marginal(assoc, &cur);
        state = std::move(cur);
        log_pi = objective.track_set_log(state);
        if (assoc_log > out.best_log_pi) {
          out.best_log_pi = assoc_log;
          out.best = state;
        }
      }
    }

    if (cfg.recheck_every > 0 && t % cfg.recheck_every == 0) {
      const double ref = cfg.track_level
                             ? objective.track_set_log(state)
                             : objective.assoc_log_marginal(assoc);
      const double cur = cfg.track_level ? log_pi : assoc_log;
      if (std::abs(ref - cur) > 1e-9 * std::max(1.0, std::abs(ref)))
        throw NumericalError("run_chain: cached objective diverged");
    }

    if (cfg.record_trace) {
      TraceRecord rec;
      rec.iteration = t;
      rec.wall_ms = detail::elapsed_ms(t0);
      rec.rho = rho;
      rec.move_kind = "global";
      rec.accepted = accepted;
      rec.log_pi_current = cfg.track_level ? log_pi : assoc_log;
      rec.log_pi_best = out.best_log_pi;
      rec.n_tracks = static_cast<int>(assoc.size());
      out.trace.push_back(std::move(rec));
    }
    if (cfg.state_hook) cfg.state_hook(state);

    out.iters_done = t;
    if (cfg.wall_secs > 0.0 &&
        detail::elapsed_ms(t0) >= cfg.wall_secs * 1e3) {
      out.hit_wall = t < cfg.iters;
      break;
    }
  }

  out.final_state = state;
  out.final_log_pi = cfg.track_level ? log_pi : assoc_log;
  return out;
}

// -------------------------------------------------------------- baseline

// Eight local moves: birth / death of singleton tracks, extend / reduce by
// one observation, split / merge, a tail switch between two tracks, and an
// interval redraw. Moves that change a path redraw the affected intervals
// from the same max-entropy interval pmfs the global sampler uses, and each
// move's forward and reverse proposal probabilities are written out exactly;
// distinct move kinds cannot produce the same transition, so kind
// probabilities cancel.
namespace baseline_detail {

struct BaselineState {
  TrackSet tracks;
  std::vector<std::vector<char>> used;
  int assigned = 0;
  double log_pi = 0.0;

  int n_singletons() const {
    int n = 0;
    for (const Track& t : tracks)
      if (t.path.hits.size() == 1) ++n;
    return n;
  }
  int n_multi() const {
    int n = 0;
    for (const Track& t : tracks)
      if (t.path.hits.size() >= 2) ++n;
    return n;
  }
};

inline void mark(BaselineState& st, const Path& p, char v) {
  for (const ObsId& h : p.hits) {
    st.used[h.k - 1][static_cast<std::size_t>(h.i)] = v;
    st.assigned += v ? 1 : -1;
  }
}

}  // namespace baseline_detail

inline RunResult run_baseline(const TrackObjective& objective,
                              const ObsSet& obs, const ChainConfig& cfg,
                              Rng& rng) {
  using namespace baseline_detail;
  const auto t0 = std::chrono::steady_clock::now();
  const AnnealSchedule schedule{cfg.anneal_c};
  const int K = obs.K();
  const int total = obs.total();
  const TargetParams& tp = objective.params();
  const double log_a_fa = tp.log_alpha_fa;
  const double log_a_plus = tp.log_alpha_plus;

  BaselineState st;
  st.used.assign(static_cast<std::size_t>(K), {});
  for (int k = 1; k <= K; ++k)
    st.used[k - 1].assign(static_cast<std::size_t>(obs.count(k)), 0);
  st.log_pi = objective.track_set_log(st.tracks);

  RunResult out;
  out.best = st.tracks;
  out.best_log_pi = st.log_pi;

  const char* kind_names[8] = {"birth", "death",  "extend", "reduce",
                               "split", "merge",  "switch", "interval"};

  // uniform over unused observations; O(total) scan
  const auto pick_unused = [&](Rng& r) -> ObsId {
    const int n_u = total - st.assigned;
    std::size_t target = r.uniform_int(static_cast<std::size_t>(n_u));
    for (int k = 1; k <= K; ++k)
      for (int i = 0; i < obs.count(k); ++i)
        if (!st.used[k - 1][static_cast<std::size_t>(i)]) {
          if (target == 0) return ObsId{k, i};
          --target;
        }
    throw NumericalError("run_baseline: unused scan out of sync");
  };

  const auto ordered_pairs = [&]() {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t a = 0; a < st.tracks.size(); ++a)
      for (std::size_t b = 0; b < st.tracks.size(); ++b)
        if (a != b &&
            st.tracks[a].path.last_k() < st.tracks[b].path.first_k())
          pairs.emplace_back(a, b);
    return pairs;
  };

  for (long long t = 1; t <= cfg.iters; ++t) {
    const double rho = schedule.rho(t);
    const int kind = static_cast<int>(rng.uniform_int(8));
    bool accepted = false;

    switch (kind) {
      case 0: {  // birth
        const int n_u = total - st.assigned;
        if (n_u == 0) break;
        const ObsId z = pick_unused(rng);
        Path p;
        p.hits = {z};
        const IntervalDraw d = sample_intervals(tp, K, p, rng);
        const double delta =
            log_a_plus + objective.path_log_cred(p, d.m, d.n) - log_a_fa;
        const double log_q_fwd =
            -std::log(static_cast<double>(n_u)) + d.log_p;
        const double log_q_rev =
            -std::log(static_cast<double>(st.n_singletons() + 1));
        if (detail::mh_accept(rho * delta + log_q_rev - log_q_fwd, rng)) {
          accepted = true;
          st.tracks.push_back(Track{p, d.m, d.n});
          mark(st, p, 1);
          st.log_pi += delta;
        }
        break;
      }
      case 1: {  // death
        const int n_s = st.n_singletons();
        if (n_s == 0) break;
        std::size_t target = rng.uniform_int(static_cast<std::size_t>(n_s));
        std::size_t victim = st.tracks.size();
        for (std::size_t j = 0; j < st.tracks.size(); ++j)
          if (st.tracks[j].path.hits.size() == 1 && target-- == 0) {
            victim = j;
            break;
          }
        const Track& tr = st.tracks[victim];
        const double delta =
            log_a_fa - log_a_plus -
            objective.path_log_cred(tr.path, tr.m, tr.n);
        const int n_u_after = total - st.assigned + 1;
        const double log_q_fwd = -std::log(static_cast<double>(n_s));
        const double log_q_rev =
            -std::log(static_cast<double>(n_u_after)) +
            eval_intervals(tp, K, tr);
        if (detail::mh_accept(rho * delta + log_q_rev - log_q_fwd, rng)) {
          accepted = true;
          mark(st, tr.path, 0);
          st.tracks.erase(st.tracks.begin() +
                          static_cast<std::ptrdiff_t>(victim));
          st.log_pi += delta;
        }
        break;
      }
      case 2: {  // extend
        if (st.tracks.empty()) break;
        const std::size_t j = rng.uniform_int(st.tracks.size());
        const Track& tr = st.tracks[j];
        // unused observations at steps where the path has no hit
        std::vector<ObsId> addable;
        for (int k = 1; k <= K; ++k) {
          if (tr.path.at(k)) continue;
          for (int i = 0; i < obs.count(k); ++i)
            if (!st.used[k - 1][static_cast<std::size_t>(i)])
              addable.push_back(ObsId{k, i});
        }
        if (addable.empty()) break;
        const ObsId z = addable[rng.uniform_int(addable.size())];
        Path np = tr.path;
        np.hits.insert(std::upper_bound(np.hits.begin(), np.hits.end(), z),
                       z);
        const IntervalDraw d = sample_intervals(tp, K, np, rng);
        const double delta = objective.path_log_cred(np, d.m, d.n) -
                             objective.path_log_cred(tr.path, tr.m, tr.n) -
                             log_a_fa;
        const double log_q_fwd =
            -std::log(static_cast<double>(st.tracks.size())) -
            std::log(static_cast<double>(addable.size())) + d.log_p;
        const double log_q_rev =
            -std::log(static_cast<double>(st.tracks.size())) -
            std::log(static_cast<double>(np.hits.size())) +
            eval_intervals(tp, K, tr);
        if (detail::mh_accept(rho * delta + log_q_rev - log_q_fwd, rng)) {
          accepted = true;
          st.used[z.k - 1][static_cast<std::size_t>(z.i)] = 1;
          ++st.assigned;
          st.tracks[j] = Track{np, d.m, d.n};
          st.log_pi += delta;
        }
        break;
      }
      case 3: {  // reduce
        if (st.tracks.empty()) break;
        const std::size_t j = rng.uniform_int(st.tracks.size());
        const Track& tr = st.tracks[j];
        const std::size_t h = tr.path.hits.size();
        if (h < 2) break;
        const std::size_t drop = rng.uniform_int(h);
        const ObsId z = tr.path.hits[drop];
        Path np = tr.path;
        np.hits.erase(np.hits.begin() + static_cast<std::ptrdiff_t>(drop));
        const IntervalDraw d = sample_intervals(tp, K, np, rng);
        // addable count of the reduced track in the reduced state
        int n_add = 0;
        for (int k = 1; k <= K; ++k) {
          if (np.at(k)) continue;
          for (int i = 0; i < obs.count(k); ++i) {
            const bool freed = (k == z.k && i == z.i);
            if (freed || !st.used[k - 1][static_cast<std::size_t>(i)])
              ++n_add;
          }
        }
        const double delta = objective.path_log_cred(np, d.m, d.n) -
                             objective.path_log_cred(tr.path, tr.m, tr.n) +
                             log_a_fa;
        const double log_q_fwd =
            -std::log(static_cast<double>(st.tracks.size())) -
            std::log(static_cast<double>(h)) + d.log_p;
        const double log_q_rev =
            -std::log(static_cast<double>(st.tracks.size())) -
            std::log(static_cast<double>(n_add)) +
            eval_intervals(tp, K, tr);
        if (detail::mh_accept(rho * delta + log_q_rev - log_q_fwd, rng)) {
          accepted = true;
          st.used[z.k - 1][static_cast<std::size_t>(z.i)] = 0;
          --st.assigned;
          st.tracks[j] = Track{np, d.m, d.n};
          st.log_pi += delta;
        }
        break;
      }
      case 4: {  // split
        const int n_m = st.n_multi();
        if (n_m == 0) break;
        std::size_t target = rng.uniform_int(static_cast<std::size_t>(n_m));
        std::size_t j = st.tracks.size();
        for (std::size_t q = 0; q < st.tracks.size(); ++q)
          if (st.tracks[q].path.hits.size() >= 2 && target-- == 0) {
            j = q;
            break;
          }
        const Track& tr = st.tracks[j];
        const std::size_t h = tr.path.hits.size();
        const std::size_t cut = 1 + rng.uniform_int(h - 1);
        Path a, b;
        a.hits.assign(tr.path.hits.begin(),
                      tr.path.hits.begin() + static_cast<std::ptrdiff_t>(cut));
        b.hits.assign(tr.path.hits.begin() + static_cast<std::ptrdiff_t>(cut),
                      tr.path.hits.end());
        const IntervalDraw da = sample_intervals(tp, K, a, rng);
        const IntervalDraw db = sample_intervals(tp, K, b, rng);
        const double delta = log_a_plus +
                             objective.path_log_cred(a, da.m, da.n) +
                             objective.path_log_cred(b, db.m, db.n) -
                             objective.path_log_cred(tr.path, tr.m, tr.n);
        // reverse: merge must pick the ordered pair (a, b)
        std::vector<const Path*> after;
        for (std::size_t q = 0; q < st.tracks.size(); ++q)
          after.push_back(q == j ? &a : &st.tracks[q].path);
        after.push_back(&b);
        int n_pairs_after = 0;
        for (const Path* px : after)
          for (const Path* py : after)
            if (px != py && px->last_k() < py->first_k()) ++n_pairs_after;
        const double log_q_fwd =
            -std::log(static_cast<double>(n_m)) -
            std::log(static_cast<double>(h - 1)) + da.log_p + db.log_p;
        const double log_q_rev =
            -std::log(static_cast<double>(n_pairs_after)) +
            eval_intervals(tp, K, tr);
        if (detail::mh_accept(rho * delta + log_q_rev - log_q_fwd, rng)) {
          accepted = true;
          st.tracks[j] = Track{a, da.m, da.n};
          st.tracks.push_back(Track{b, db.m, db.n});
          st.log_pi += delta;
        }
        break;
      }
      case 5: {  // merge
        const auto pairs = ordered_pairs();
        if (pairs.empty()) break;
        const auto [ia, ib] = pairs[rng.uniform_int(pairs.size())];
        const Track& ta = st.tracks[ia];
        const Track& tb = st.tracks[ib];
        Path mp = ta.path;
        mp.hits.insert(mp.hits.end(), tb.path.hits.begin(),
                       tb.path.hits.end());
        const IntervalDraw d = sample_intervals(tp, K, mp, rng);
        const double delta =
            objective.path_log_cred(mp, d.m, d.n) -
            objective.path_log_cred(ta.path, ta.m, ta.n) -
            objective.path_log_cred(tb.path, tb.m, tb.n) - log_a_plus;
        const int n_multi_after = st.n_multi() -
                                  (ta.path.hits.size() >= 2 ? 1 : 0) -
                                  (tb.path.hits.size() >= 2 ? 1 : 0) + 1;
        const double log_q_fwd =
            -std::log(static_cast<double>(pairs.size())) + d.log_p;
        const double log_q_rev =
            -std::log(static_cast<double>(n_multi_after)) -
            std::log(static_cast<double>(mp.hits.size() - 1)) +
            eval_intervals(tp, K, ta) + eval_intervals(tp, K, tb);
        if (detail::mh_accept(rho * delta + log_q_rev - log_q_fwd, rng)) {
          accepted = true;
          st.tracks[ia] = Track{mp, d.m, d.n};
          st.tracks.erase(st.tracks.begin() +
                          static_cast<std::ptrdiff_t>(ib));
          st.log_pi += delta;
        }
        break;
      }
      case 6: {  // switch tails at a uniform cut time
        if (st.tracks.size() < 2) break;
        const std::size_t n = st.tracks.size();
        const std::size_t pair_count = n * (n - 1) / 2;
        std::size_t pick = rng.uniform_int(pair_count);
        std::size_t ia = 0, ib = 1;
        for (std::size_t a = 0; a < n; ++a) {
          const std::size_t row = n - 1 - a;
          if (pick < row) {
            ia = a;
            ib = a + 1 + pick;
            break;
          }
          pick -= row;
        }
        const int kcut = 1 + static_cast<int>(
                                 rng.uniform_int(static_cast<std::size_t>(K)));
        const Track& ta = st.tracks[ia];
        const Track& tb = st.tracks[ib];
        Path pa, pb;
        for (const ObsId& hh : ta.path.hits)
          (hh.k < kcut ? pa : pb).hits.push_back(hh);
        for (const ObsId& hh : tb.path.hits)
          (hh.k < kcut ? pb : pa).hits.push_back(hh);
        std::sort(pa.hits.begin(), pa.hits.end());
        std::sort(pb.hits.begin(), pb.hits.end());
        if (pa.hits.empty() || pb.hits.empty()) break;
        const bool unchanged =
            (pa.hits == ta.path.hits && pb.hits == tb.path.hits) ||
            (pa.hits == tb.path.hits && pb.hits == ta.path.hits);
        if (unchanged) break;
        const IntervalDraw da = sample_intervals(tp, K, pa, rng);
        const IntervalDraw db = sample_intervals(tp, K, pb, rng);
        const double delta = objective.path_log_cred(pa, da.m, da.n) +
                             objective.path_log_cred(pb, db.m, db.n) -
                             objective.path_log_cred(ta.path, ta.m, ta.n) -
                             objective.path_log_cred(tb.path, tb.m, tb.n);
        // pair and cut probabilities cancel; the cut multiplicity is equal
        // in both directions because the tail swap is an involution
        const double log_q_fwd = da.log_p + db.log_p;
        const double log_q_rev =
            eval_intervals(tp, K, ta) + eval_intervals(tp, K, tb);
        if (detail::mh_accept(rho * delta + log_q_rev - log_q_fwd, rng)) {
          accepted = true;
          st.tracks[ia] = Track{pa, da.m, da.n};
          st.tracks[ib] = Track{pb, db.m, db.n};
          st.log_pi += delta;
        }
        break;
      }
      case 7: {  // interval redraw
        if (st.tracks.empty()) break;
        const std::size_t j = rng.uniform_int(st.tracks.size());
        const Track& tr = st.tracks[j];
        const IntervalDraw d = sample_intervals(tp, K, tr.path, rng);
        const double delta = objective.path_log_cred(tr.path, d.m, d.n) -
                             objective.path_log_cred(tr.path, tr.m, tr.n);
        const double log_q_diff = eval_intervals(tp, K, tr) - d.log_p;
        if (detail::mh_accept(rho * delta + log_q_diff, rng)) {
          accepted = true;
          st.tracks[j] = Track{tr.path, d.m, d.n};
          st.log_pi += delta;
        }
        break;
      }
    }

    if (st.log_pi > out.best_log_pi) {
      out.best_log_pi = st.log_pi;
      out.best = st.tracks;
    }

    if (cfg.recheck_every > 0 && t % cfg.recheck_every == 0) {
      const double ref = objective.track_set_log(st.tracks);
      if (std::abs(ref - st.log_pi) > 1e-9 * std::max(1.0, std::abs(ref)))
        throw NumericalError("run_baseline: cached objective diverged");
      st.log_pi = ref;
    }

    if (cfg.record_trace) {
      TraceRecord rec;
      rec.iteration = t;
      rec.wall_ms = detail::elapsed_ms(t0);
      rec.rho = rho;
      rec.move_kind = kind_names[kind];
      rec.accepted = accepted;
      rec.log_pi_current = st.log_pi;
      rec.log_pi_best = out.best_log_pi;
      rec.n_tracks = static_cast<int>(st.tracks.size());
      out.trace.push_back(std::move(rec));
    }
    if (cfg.state_hook) cfg.state_hook(st.tracks);

    out.iters_done = t;
    if (cfg.wall_secs > 0.0 &&
        detail::elapsed_ms(t0) >= cfg.wall_secs * 1e3) {
      out.hit_wall = t < cfg.iters;
      break;
    }
  }

  out.final_state = st.tracks;
  out.final_log_pi = st.log_pi;
  return out;
}

}  // namespace posmooth
