#include "helpers.hpp"

#include "posmooth/common.hpp"
#include "posmooth/consistency.hpp"
#include "posmooth/hisp.hpp"
#include "posmooth/mcmc.hpp"
#include "posmooth/multiobject.hpp"
#include "posmooth/simulate.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <string>
#include <vector>

using namespace posmooth;

namespace {

// three observations, one per scan, close enough for moderate credibilities;
// the full track-set space is enumerable
struct TinySpace {
  ObsSet obs{3, 2};
  TargetParams tp;

  TinySpace() {
    Vec a(2), b(2), c(2);
    a << 0.0, 0.0;
    b << 0.4, 0.2;
    c << 0.7, 0.1;
    obs.add(1, a);
    obs.add(2, b);
    obs.add(3, c);
    tp.model = SimParams{}.model();
    tp.log_alpha_fa = std::log(0.3);
    tp.log_alpha_plus = std::log(0.5);
    tp.log_alpha_nd = std::log(0.4);
    tp.log_alpha_ns = std::log(0.6);
  }
};

std::map<std::string, double> exact_track_set_law(const TrackObjective& obj) {
  std::map<std::string, double> law;
  testhelp::enumerate_track_sets(obj.obs(), [&](const TrackSet& ts) {
    law[testhelp::track_set_key(ts)] = obj.track_set_log(ts);
  });
  double mx = kNegInf;
  for (const auto& kv : law) mx = std::max(mx, kv.second);
  double z = 0.0;
  for (const auto& kv : law) z += std::exp(kv.second - mx);
  const double log_z = mx + std::log(z);
  for (auto& kv : law) kv.second = std::exp(kv.second - log_z);
  return law;
}

std::string assoc_key(const Association& a) {
  TrackSet ts;
  for (const Path& p : a) ts.push_back(Track{p, 1, p.last_k()});
  return testhelp::track_set_key(ts);
}

double law_chi_square(const std::map<std::string, double>& law,
                      const std::map<std::string, long long>& visits,
                      long long n_samples) {
  std::vector<double> expected;
  std::vector<long long> observed;
  double etail = 0.0;
  long long otail = 0;
  for (const auto& kv : law) {
    const double e = n_samples * kv.second;
    const auto it = visits.find(kv.first);
    const long long o = it == visits.end() ? 0 : it->second;
    if (e >= 10.0) {
      expected.push_back(e);
      observed.push_back(o);
    } else {
      etail += e;
      otail += o;
    }
  }
  if (etail > 0.0) {
    expected.push_back(etail);
    observed.push_back(otail);
  }
  return testhelp::chi_square_p_value(expected, observed);
}

}  // namespace

TEST_CASE("anneal schedule matches a compounded long-double product",
          "[mcmc]") {
  for (double c : {0.0005, 0.001, 0.002, 0.01}) {
    // stay clear of double overflow for the steepest rate
    const long long tmax = c > 0.005 ? 60000 : 100000;
    const AnnealSchedule s{c};
    long double r = 1.0L;
    const long double f = 1.0L / (1.0L - static_cast<long double>(c));
    for (long long t = 1; t <= tmax; ++t) {
      r *= f;
      if (t <= 64 || t % 977 == 0 || t == tmax) {
        const double want = static_cast<double>(r);
        REQUIRE(std::abs(s.rho(t) - want) <= 1e-12 * want);
      }
    }
  }
  const AnnealSchedule flat{0.0};
  for (long long t : {1LL, 7LL, 100000LL}) REQUIRE(flat.rho(t) == 1.0);

  REQUIRE_THROWS_AS(AnnealSchedule{-0.1}.rho(1), UsageError);
  REQUIRE_THROWS_AS(AnnealSchedule{1.0}.rho(1), UsageError);
  REQUIRE_THROWS_AS(AnnealSchedule{1.5}.rho(1), UsageError);
}

TEST_CASE("baseline sampler has the exact stationary law at c = 0",
          "[mcmc][slow]") {
  const TinySpace w;
  const TrackObjective obj(w.tp, w.obs);
  const std::map<std::string, double> law = exact_track_set_law(obj);
  REQUIRE(law.size() > 30);

  const long long burn = 20000, iters = 420000, thin = 40;
  std::map<std::string, long long> visits;
  long long n_samples = 0, seen = 0;

  ChainConfig cfg;
  cfg.iters = iters;
  cfg.anneal_c = 0.0;
  cfg.record_trace = false;
  cfg.recheck_every = 10000;
  cfg.state_hook = [&](const TrackSet& ts) {
    if (++seen <= burn || seen % thin != 0) return;
    ++visits[testhelp::track_set_key(ts)];
    ++n_samples;
  };

  Rng rng(4242);
  run_baseline(obj, w.obs, cfg, rng);

  for (const auto& kv : visits) REQUIRE(law.count(kv.first) == 1);
  REQUIRE(law_chi_square(law, visits, n_samples) > 1e-3);
}

TEST_CASE("global sampler has the exact stationary law at c = 0",
          "[mcmc][slow]") {
  const TinySpace w;
  const TrackObjective obj(w.tp, w.obs);
  const std::map<std::string, double> law = exact_track_set_law(obj);

  const ConsistencyIndex index(w.obs, w.tp.model, w.tp.sigma_v_prior,
                               w.tp.log_alpha_nd, 1e-3);
  HispParams hp;
  hp.log_alpha_fa = w.tp.log_alpha_fa;
  hp.log_alpha_nd = w.tp.log_alpha_nd;
  hp.log_alpha_ns = w.tp.log_alpha_ns;
  const HispFilter filter(w.tp.model, hp, w.tp.sigma_v_prior, w.obs);

  const long long burn = 20000, iters = 320000, thin = 30;
  std::map<std::string, long long> visits;
  long long n_samples = 0, seen = 0;

  ChainConfig cfg;
  cfg.iters = iters;
  cfg.anneal_c = 0.0;
  cfg.track_level = true;
  cfg.record_trace = false;
  cfg.recheck_every = 10000;
  cfg.proposal = with_focus(ProposalParams{}, 2);
  cfg.state_hook = [&](const TrackSet& ts) {
    if (++seen <= burn || seen % thin != 0) return;
    ++visits[testhelp::track_set_key(ts)];
    ++n_samples;
  };

  Rng rng(1717);
  run_chain(obj, index, filter, w.obs, cfg, rng);

  for (const auto& kv : visits) REQUIRE(law.count(kv.first) == 1);
  REQUIRE(law_chi_square(law, visits, n_samples) > 1e-3);
}

TEST_CASE("path-level sampler targets the interval-maximized association law",
          "[mcmc][slow]") {
  const TinySpace w;
  const TrackObjective obj(w.tp, w.obs);

  std::map<std::string, double> law;
  testhelp::enumerate_associations(w.obs, [&](const Association& a) {
    Association c = a;
    canonicalize(c);
    law[assoc_key(c)] = obj.assoc_log_marginal(c);
  });
  double mx = kNegInf;
  for (const auto& kv : law) mx = std::max(mx, kv.second);
  double z = 0.0;
  for (const auto& kv : law) z += std::exp(kv.second - mx);
  const double log_z = mx + std::log(z);
  for (auto& kv : law) kv.second = std::exp(kv.second - log_z);

  const ConsistencyIndex index(w.obs, w.tp.model, w.tp.sigma_v_prior,
                               w.tp.log_alpha_nd, 1e-3);
  HispParams hp;
  hp.log_alpha_fa = w.tp.log_alpha_fa;
  hp.log_alpha_nd = w.tp.log_alpha_nd;
  hp.log_alpha_ns = w.tp.log_alpha_ns;
  const HispFilter filter(w.tp.model, hp, w.tp.sigma_v_prior, w.obs);

  const long long burn = 20000, iters = 320000, thin = 30;
  std::map<std::string, long long> visits;
  long long n_samples = 0, seen = 0;

  ChainConfig cfg;
  cfg.iters = iters;
  cfg.anneal_c = 0.0;
  cfg.track_level = false;
  cfg.record_trace = false;
  cfg.recheck_every = 10000;
  cfg.state_hook = [&](const TrackSet& ts) {
    if (++seen <= burn || seen % thin != 0) return;
    Association a = paths_of(ts);
    canonicalize(a);
    ++visits[assoc_key(a)];
    ++n_samples;
  };

  Rng rng(2718);
  run_chain(obj, index, filter, w.obs, cfg, rng);

  for (const auto& kv : visits) REQUIRE(law.count(kv.first) == 1);
  REQUIRE(law_chi_square(law, visits, n_samples) > 1e-3);
}

TEST_CASE("wall-clock budget interrupts long runs", "[mcmc]") {
  const TinySpace w;
  const TrackObjective obj(w.tp, w.obs);

  ChainConfig cfg;
  cfg.iters = 4000000000LL;
  cfg.wall_secs = 0.15;
  cfg.anneal_c = 0.0;
  cfg.record_trace = false;

  Rng rng(5);
  const RunResult r = run_baseline(obj, w.obs, cfg, rng);
  REQUIRE(r.hit_wall);
  REQUIRE(r.iters_done >= 1);
  REQUIRE(r.iters_done < cfg.iters);

  // an iteration-bounded run does not report a wall stop
  cfg.iters = 200;
  cfg.wall_secs = 3600.0;
  const RunResult r2 = run_baseline(obj, w.obs, cfg, rng);
  REQUIRE_FALSE(r2.hit_wall);
  REQUIRE(r2.iters_done == 200);
}

TEST_CASE("trace records are internally consistent", "[mcmc]") {
  SimParams sp;
  sp.K = 8;
  sp.lambda_fa = 1.0;
  sp.lambda_b = 0.4;
  const Scenario sc = simulate(sp, 5);

  TargetParams tp;
  tp.model = sp.model();
  tp.log_alpha_fa = std::log(0.01);
  tp.log_alpha_plus = std::log(1e-4);
  tp.log_alpha_nd = std::log(0.1);
  tp.log_alpha_ns = std::log(0.01);
  const TrackObjective obj(tp, sc.obs);
  const ConsistencyIndex index(sc.obs, tp.model, tp.sigma_v_prior,
                               tp.log_alpha_nd, 1e-3);
  HispParams hp;
  hp.log_alpha_fa = tp.log_alpha_fa;
  hp.log_alpha_nd = tp.log_alpha_nd;
  hp.log_alpha_ns = tp.log_alpha_ns;
  const HispFilter filter(tp.model, hp, tp.sigma_v_prior, sc.obs);

  ChainConfig cfg;
  cfg.iters = 2000;
  cfg.anneal_c = 1e-3;
  cfg.track_level = true;
  cfg.record_trace = true;
  cfg.recheck_every = 500;

  std::vector<int> hook_sizes;
  cfg.state_hook = [&](const TrackSet& ts) {
    hook_sizes.push_back(static_cast<int>(ts.size()));
  };

  Rng rng(777);
  const RunResult r = run_chain(obj, index, filter, sc.obs, cfg, rng);

  REQUIRE(r.iters_done == 2000);
  REQUIRE(r.trace.size() == 2000);
  const AnnealSchedule sched{cfg.anneal_c};
  int n_accepted = 0;
  double prev_best = kNegInf, prev_ms = 0.0;
  for (std::size_t i = 0; i < r.trace.size(); ++i) {
    const TraceRecord& rec = r.trace[i];
    REQUIRE(rec.iteration == static_cast<long long>(i + 1));
    REQUIRE(rec.rho == sched.rho(rec.iteration));
    REQUIRE(rec.move_kind == "global");
    REQUIRE(rec.wall_ms >= prev_ms);
    REQUIRE(rec.log_pi_best >= prev_best);
    REQUIRE(rec.log_pi_best >= rec.log_pi_current);
    REQUIRE(rec.n_tracks == hook_sizes[i]);
    prev_best = rec.log_pi_best;
    prev_ms = rec.wall_ms;
    n_accepted += rec.accepted ? 1 : 0;
  }
  REQUIRE(n_accepted > 0);
  REQUIRE(n_accepted < 2000);
  REQUIRE(r.final_log_pi == r.trace.back().log_pi_current);
  REQUIRE(r.best_log_pi == r.trace.back().log_pi_best);
  REQUIRE(obj.track_set_log(r.best) == r.best_log_pi);
  REQUIRE(obj.track_set_log(r.final_state) == r.final_log_pi);

  // the baseline emits its eight move kinds
  const TinySpace w;
  const TrackObjective tiny_obj(w.tp, w.obs);
  ChainConfig bcfg;
  bcfg.iters = 4000;
  bcfg.anneal_c = 0.0;
  bcfg.record_trace = true;
  Rng brng(21);
  const RunResult b = run_baseline(tiny_obj, w.obs, bcfg, brng);
  std::map<std::string, int> kinds;
  for (const TraceRecord& rec : b.trace) ++kinds[rec.move_kind];
  for (const char* k :
       {"birth", "death", "extend", "reduce", "split", "merge", "switch",
        "interval"})
    REQUIRE(kinds.count(k) == 1);

  // invalid annealing rates surface as usage errors
  ChainConfig bad;
  bad.iters = 10;
  bad.anneal_c = 1.0;
  Rng bad_rng(1);
  REQUIRE_THROWS_AS(run_baseline(tiny_obj, w.obs, bad, bad_rng), UsageError);
}
