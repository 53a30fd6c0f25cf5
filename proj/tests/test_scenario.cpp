#include "helpers.hpp"

#include "posmooth/common.hpp"
#include "posmooth/metrics.hpp"
#include "posmooth/multiobject.hpp"
#include "posmooth/scenario_io.hpp"
#include "posmooth/simulate.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>
#include <string>

using namespace posmooth;

namespace {

// hand-built scenario: two targets, four observations, one clutter point
Scenario toy_scenario() {
  Scenario sc;
  sc.params.K = 3;
  sc.obs = ObsSet(3, 2);
  const auto put = [&](int k, double x, double y, int label) {
    Vec z(2);
    z << x, y;
    const ObsId id = sc.obs.add(k, z);
    sc.labels.push_back(label);
    return id;
  };
  const ObsId a = put(1, 0.0, 0.0, 0);
  const ObsId b = put(2, 0.2, 0.1, 0);
  put(2, 5.0, 5.0, -1);
  const ObsId d = put(3, -3.0, 1.0, 1);

  SimTarget t0;
  t0.birth_k = 1;
  t0.death_k = 3;
  t0.detections = {a, b};
  SimTarget t1;
  t1.birth_k = 2;
  t1.death_k = 3;
  t1.detections = {d};
  sc.targets = {t0, t1};
  return sc;
}

Track make_track(std::vector<ObsId> hits, int m, int n) {
  Path p;
  p.hits = std::move(hits);
  return Track{p, m, n};
}

}  // namespace

TEST_CASE("simulation is deterministic in the seed", "[scenario]") {
  SimParams sp = sim_preset("simple");
  sp.K = 20;
  const Scenario a = simulate(sp, 42);
  const Scenario b = simulate(sp, 42);

  REQUIRE(a.obs.total() == b.obs.total());
  for (int g = 0; g < a.obs.total(); ++g) {
    const ObsId id = a.obs.from_gid(g);
    REQUIRE(b.obs.from_gid(g) == id);
    REQUIRE(a.obs.z(id)(0) == b.obs.z(id)(0));
    REQUIRE(a.obs.z(id)(1) == b.obs.z(id)(1));
  }
  REQUIRE(a.labels == b.labels);
  REQUIRE(a.targets.size() == b.targets.size());
  for (std::size_t t = 0; t < a.targets.size(); ++t) {
    REQUIRE(a.targets[t].birth_k == b.targets[t].birth_k);
    REQUIRE(a.targets[t].death_k == b.targets[t].death_k);
    REQUIRE(a.targets[t].detections == b.targets[t].detections);
    REQUIRE(a.targets[t].states.size() == b.targets[t].states.size());
    for (std::size_t j = 0; j < a.targets[t].states.size(); ++j)
      for (int d = 0; d < 4; ++d)
        REQUIRE(a.targets[t].states[j](d) == b.targets[t].states[j](d));
  }

  const Scenario c = simulate(sp, 43);
  bool differs = c.obs.total() != a.obs.total();
  if (!differs && a.obs.total() > 0)
    differs = a.obs.z(a.obs.from_gid(0))(0) != c.obs.z(c.obs.from_gid(0))(0);
  REQUIRE(differs);

  SimParams bad = sp;
  bad.K = 0;
  REQUIRE_THROWS_AS(simulate(bad, 1), UsageError);
}

TEST_CASE("simulated scans have the synthesized statistics", "[scenario]") {
  const SimParams sp = sim_preset("simple");  // K=50, lambda_fa=10, p_d=0.9
  const Scenario sc = simulate(sp, 2024);

  long long clutter = 0;
  for (int lbl : sc.labels)
    if (lbl < 0) ++clutter;
  // Poisson(K * lambda_fa) = Poisson(500); 4 sigma ~ 90
  REQUIRE(clutter > 400);
  REQUIRE(clutter < 600);

  // Poisson(K * lambda_b) = Poisson(5) births
  REQUIRE(sc.targets.size() >= 1);
  REQUIRE(sc.targets.size() <= 16);

  long long alive_steps = 0, detections = 0;
  for (const SimTarget& tg : sc.targets) {
    REQUIRE(tg.birth_k >= 1);
    REQUIRE(tg.death_k >= tg.birth_k);
    REQUIRE(tg.death_k <= sp.K);
    REQUIRE(tg.states.size() ==
            static_cast<std::size_t>(tg.death_k - tg.birth_k + 1));
    alive_steps += tg.death_k - tg.birth_k + 1;
    detections += static_cast<long long>(tg.detections.size());
  }
  REQUIRE(alive_steps > 0);
  const double det_rate =
      static_cast<double>(detections) / static_cast<double>(alive_steps);
  REQUIRE(det_rate > sp.p_d - 0.12);
  REQUIRE(det_rate < sp.p_d + 0.1);

  // clutter fills the window uniformly; detections sit near their target
  for (int g = 0; g < sc.obs.total(); ++g) {
    if (sc.labels[static_cast<std::size_t>(g)] >= 0) continue;
    const Vec z = sc.obs.z(sc.obs.from_gid(g));
    REQUIRE(z(0) >= sp.window_lo);
    REQUIRE(z(0) <= sp.window_hi);
    REQUIRE(z(1) >= sp.window_lo);
    REQUIRE(z(1) <= sp.window_hi);
  }
}

TEST_CASE("labels align observations with generating targets", "[scenario]") {
  SimParams sp = sim_preset("simple");
  sp.K = 30;
  const Scenario sc = simulate(sp, 99);

  std::vector<long long> per_target(sc.targets.size(), 0);
  for (int g = 0; g < sc.obs.total(); ++g) {
    const int lbl = sc.labels[static_cast<std::size_t>(g)];
    if (lbl < 0) continue;
    REQUIRE(lbl < static_cast<int>(sc.targets.size()));
    ++per_target[static_cast<std::size_t>(lbl)];
    // membership in the target's detection list
    const ObsId id = sc.obs.from_gid(g);
    const auto& dets = sc.targets[static_cast<std::size_t>(lbl)].detections;
    REQUIRE(std::find(dets.begin(), dets.end(), id) != dets.end());
  }
  for (std::size_t t = 0; t < sc.targets.size(); ++t) {
    const SimTarget& tg = sc.targets[t];
    REQUIRE(per_target[t] == static_cast<long long>(tg.detections.size()));
    int prev_k = 0;
    for (const ObsId& id : tg.detections) {
      REQUIRE(id.k > prev_k);  // at most one detection per scan
      prev_k = id.k;
      REQUIRE(id.k >= tg.birth_k);
      REQUIRE(id.k <= tg.death_k);
      // the measurement is the observed head of the true state
      const Vec z = sc.obs.z(id);
      const Vec& x = tg.state_at(id.k);
      REQUIRE(std::abs(z(0) - x(0)) < 8.0 * sp.sigma_obs);
      REQUIRE(std::abs(z(1) - x(1)) < 8.0 * sp.sigma_obs);
    }
  }

  REQUIRE_THROWS_AS(sc.targets.front().state_at(0), UsageError);
}

TEST_CASE("ground-truth tracks form a valid track set", "[scenario]") {
  SimParams sp = sim_preset("simple");
  sp.K = 30;
  const Scenario sc = simulate(sp, 7);
  const TrackSet gt = ground_truth_tracks(sc);

  int detected = 0;
  for (const SimTarget& tg : sc.targets)
    if (!tg.detections.empty()) ++detected;
  REQUIRE(static_cast<int>(gt.size()) == detected);

  Association a = paths_of(gt);
  REQUIRE(paths_disjoint(a));
  for (const Track& tr : gt) {
    tr.path.validate();
    REQUIRE(tr.m >= 1);
    REQUIRE(tr.m <= tr.path.first_k());
    REQUIRE(tr.n >= tr.path.last_k());
    REQUIRE(tr.n <= sp.K);
  }

  // the generating state has a finite objective value
  TargetParams tp;
  tp.model = sp.model();
  tp.log_alpha_fa = std::log(0.05);
  tp.log_alpha_plus = std::log(1e-4);
  tp.log_alpha_nd = std::log(1.0 - sp.p_d);
  tp.log_alpha_ns = std::log(1.0 - sp.p_s);
  const TrackObjective obj(tp, sc.obs);
  REQUIRE(std::isfinite(obj.track_set_log(gt)));

  const Metrics m = compute_metrics(sc, gt);
  REQUIRE(m.association_accuracy == 1.0);
  REQUIRE(m.track_count_error == 0);
  REQUIRE(m.clutter_precision == 1.0);
  REQUIRE(m.clutter_recall == 1.0);
}

TEST_CASE("presets pin their parameters", "[scenario]") {
  const SimParams simple = sim_preset("simple");
  REQUIRE(simple.lambda_fa == 10.0);
  REQUIRE(simple.lambda_b == 0.1);
  REQUIRE(simple.p_d == 0.9);

  const SimParams high_fa = sim_preset("high_fa");
  REQUIRE(high_fa.lambda_fa == 100.0);
  REQUIRE(high_fa.lambda_b == 0.5);
  REQUIRE(high_fa.p_d == 0.8);

  const SimParams low_pd = sim_preset("low_pd");
  REQUIRE(low_pd.lambda_fa == 25.0);
  REQUIRE(low_pd.lambda_b == 0.5);
  REQUIRE(low_pd.p_d == 0.5);

  for (const SimParams* p : {&simple, &high_fa, &low_pd}) {
    REQUIRE(p->K == 50);
    REQUIRE(p->window_lo == -60.0);
    REQUIRE(p->window_hi == 60.0);
    REQUIRE(p->sigma_obs == 0.3);
    REQUIRE(p->p_s == 0.99);
  }

  REQUIRE_THROWS_AS(sim_preset("medium"), UsageError);
}

TEST_CASE("scenario files round-trip exactly", "[scenario]") {
  SimParams sp = sim_preset("simple");
  sp.K = 12;
  sp.lambda_fa = 3.0;
  const Scenario sc = simulate(sp, 9);

  std::ostringstream first;
  write_scenario(first, sc);
  std::istringstream in(first.str());
  const Scenario rt = read_scenario(in);
  std::ostringstream second;
  write_scenario(second, rt);
  REQUIRE(first.str() == second.str());

  REQUIRE(rt.seed == sc.seed);
  REQUIRE(rt.params.K == sp.K);
  REQUIRE(rt.params.lambda_fa == sp.lambda_fa);
  REQUIRE(rt.obs.total() == sc.obs.total());
  REQUIRE(rt.labels == sc.labels);
  REQUIRE(rt.targets.size() == sc.targets.size());
  for (std::size_t t = 0; t < sc.targets.size(); ++t) {
    REQUIRE(rt.targets[t].detections == sc.targets[t].detections);
    REQUIRE(rt.targets[t].states.size() == sc.targets[t].states.size());
    for (std::size_t j = 0; j < sc.targets[t].states.size(); ++j)
      for (int d = 0; d < 4; ++d)
        REQUIRE(rt.targets[t].states[j](d) == sc.targets[t].states[j](d));
  }
  for (int g = 0; g < sc.obs.total(); ++g) {
    const ObsId id = sc.obs.from_gid(g);
    REQUIRE(rt.obs.z(id)(0) == sc.obs.z(id)(0));
    REQUIRE(rt.obs.z(id)(1) == sc.obs.z(id)(1));
  }
}

TEST_CASE("malformed scenario files are rejected", "[scenario]") {
  const std::string params =
      "param K 3\n"
      "param window_lo -60\n"
      "param window_hi 60\n"
      "param dt 1\n"
      "param sigma_a 0.05\n"
      "param sigma_obs 0.3\n"
      "param lambda_fa 10\n"
      "param lambda_b 0.1\n"
      "param p_d 0.9\n"
      "param p_s 0.99\n"
      "param sigma_v_sim 0.5\n"
      "seed 7\n";
  const auto parse = [](const std::string& text) {
    std::istringstream is(text);
    return read_scenario(is);
  };

  // a well-formed minimal file parses
  REQUIRE_NOTHROW(
      parse("posmooth-scenario v1\n" + params + "obs 1 0.5 0.25 -1\nend\n"));

  REQUIRE_THROWS_AS(parse("posmooth-scenario v2\n" + params + "end\n"),
                    DataError);
  REQUIRE_THROWS_AS(parse("posmooth-scenario v1\n" + params),  // no end
                    DataError);
  REQUIRE_THROWS_AS(
      parse("posmooth-scenario v1\n" + params + "obs 1 0.5 0.25\nend\n"),
      DataError);
  REQUIRE_THROWS_AS(
      parse("posmooth-scenario v1\n" + params + "obs 1 0.5.1 0.25 -1\nend\n"),
      DataError);
  REQUIRE_THROWS_AS(
      parse("posmooth-scenario v1\n" + params + "obs 9 0.5 0.25 -1\nend\n"),
      DataError);
  REQUIRE_THROWS_AS(
      parse("posmooth-scenario v1\n" + params + "obs 1 0.5 0.25 4\nend\n"),
      DataError);
  REQUIRE_THROWS_AS(
      parse("posmooth-scenario v1\n" + params + "wat 1 2 3\nend\n"),
      DataError);
  REQUIRE_THROWS_AS(parse("posmooth-scenario v1\nseed 7\nend\n"), DataError);
  // state rows must match the declared lifetime
  REQUIRE_THROWS_AS(
      parse("posmooth-scenario v1\n" + params +
            "target 1 2\nstate 1 0 0 0 0\nend\n"),
      DataError);
  REQUIRE_THROWS_AS(
      parse("posmooth-scenario v1\n" + params + "target 2 1\nend\n"),
      DataError);
}

TEST_CASE("metrics grade hand-built estimates", "[scenario]") {
  const Scenario sc = toy_scenario();
  const ObsId a{1, 0}, b{2, 0}, c{2, 1}, d{3, 0};

  {
    // perfect reconstruction
    const TrackSet est = {make_track({a, b}, 1, 3), make_track({d}, 2, 3)};
    const Metrics m = compute_metrics(sc, est);
    REQUIRE(m.n_true_tracks == 2);
    REQUIRE(m.n_est_tracks == 2);
    REQUIRE(m.track_count_error == 0);
    REQUIRE(m.n_target_obs == 3);
    REQUIRE(m.association_accuracy == 1.0);
    REQUIRE(m.clutter_precision == 1.0);
    REQUIRE(m.clutter_recall == 1.0);
  }
  {
    // one track absorbing a clutter point, the second target missed
    const TrackSet est = {make_track({a, c}, 1, 3)};
    const Metrics m = compute_metrics(sc, est);
    REQUIRE(m.track_count_error == -1);
    REQUIRE(m.association_accuracy == Catch::Approx(1.0 / 3).margin(1e-15));
    // declared clutter {b, d} contains no true clutter; c is absorbed
    REQUIRE(m.clutter_precision == 0.0);
    REQUIRE(m.clutter_recall == 0.0);
  }
  {
    // empty estimate: everything declared clutter
    const Metrics m = compute_metrics(sc, {});
    REQUIRE(m.track_count_error == -2);
    REQUIRE(m.association_accuracy == 0.0);
    REQUIRE(m.clutter_precision == Catch::Approx(0.25).margin(1e-15));
    REQUIRE(m.clutter_recall == 1.0);
  }
  {
    // mixed track: plurality vote goes to the smaller label on a tie
    const TrackSet est = {make_track({a}, 1, 1), make_track({b, d}, 1, 3)};
    const Metrics m = compute_metrics(sc, est);
    REQUIRE(m.association_accuracy == Catch::Approx(2.0 / 3).margin(1e-15));
    REQUIRE(m.track_count_error == 0);
  }
}
