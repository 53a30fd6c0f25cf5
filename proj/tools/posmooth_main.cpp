// Command-line front end: simulate scenarios, smooth them with either
// sampler, evaluate estimated track sets, and export traces.

#include "posmooth/config.hpp"
#include "posmooth/consistency.hpp"
#include "posmooth/hisp.hpp"
#include "posmooth/mcmc.hpp"
#include "posmooth/metrics.hpp"
#include "posmooth/scenario_io.hpp"
#include "posmooth/simulate.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace posmooth;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void apply_sets(Config& cfg, const std::vector<std::string>& sets) {
  for (const std::string& s : sets) {
    const std::size_t eq = s.find('=');
    if (eq == std::string::npos || eq == 0)
      throw UsageError("--set expects KEY=VALUE, got: " + s);
    cfg.set(s.substr(0, eq), s.substr(eq + 1));
  }
}

std::ifstream open_in(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path);
  return is;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path);
  return os;
}

struct SimulateArgs {
  std::string preset = "simple";
  std::string config_file;
  std::vector<std::string> sets;
  std::uint64_t seed = 1;
  std::string out;
};

int run_simulate(const SimulateArgs& a) {
  Config cfg;
  cfg.apply_preset(a.preset);
  if (!a.config_file.empty()) {
    std::ifstream is = open_in(a.config_file);
    cfg.load(is);
  }
  apply_sets(cfg, a.sets);
  const Scenario sc = simulate(cfg.sim, a.seed);
  std::ofstream os = open_out(a.out);
  write_scenario(os, sc);
  int detected = 0;
  for (const SimTarget& tg : sc.targets)
    if (!tg.detections.empty()) ++detected;
  std::cout << "scenario " << a.out << "\n"
            << "targets " << sc.targets.size() << "\n"
            << "targets_detected " << detected << "\n"
            << "observations " << sc.obs.total() << "\n";
  return 0;
}

struct SmoothArgs {
  std::string scenario;
  std::string sampler = "hisp";
  std::string out = "smooth";
  std::string config_file;
  std::vector<std::string> sets;
  long long iters = -1;
  double wall_secs = -1.0;
  int repeats = -1;
  std::uint64_t seed = 0;
  bool have_seed = false;
  double lambda_r = -1.0;
  double anneal_c = -1.0;
  double tau_prime = -1.0;
  std::string pc_focus;
  int particles = -1;
  bool path_level = false;
};

struct SmootherStack {
  TargetParams tp;
  TrackObjective objective;
  ConsistencyIndex index;
  HispFilter filter;

  SmootherStack(const Config& cfg, const ObsSet& obs)
      : tp(cfg.target_params()),
        objective(tp, obs),
        index(obs, tp.model, tp.sigma_v_prior, tp.log_alpha_nd,
              cfg.tau_prime),
        filter(tp.model,
               HispParams{tp.log_alpha_fa, tp.log_alpha_nd, tp.log_alpha_ns},
               tp.sigma_v_prior, obs) {
    if (cfg.particles > 0)
      objective.set_particles(cfg.particles, Rng::mix(cfg.seed, 0x50415254ULL));
  }
};

int run_smooth(const SmoothArgs& a) {
  std::ifstream is = open_in(a.scenario);
  const Scenario sc = read_scenario(is);

  Config cfg;
  cfg.sim = sc.params;
  if (!a.config_file.empty()) {
    std::ifstream cs = open_in(a.config_file);
    cfg.load(cs);
  }
  apply_sets(cfg, a.sets);
  if (a.iters >= 0) cfg.iters = a.iters;
  if (a.wall_secs >= 0.0) cfg.wall_secs = a.wall_secs;
  if (a.repeats >= 0) cfg.repeats = a.repeats;
  if (a.have_seed) cfg.seed = a.seed;
  if (a.lambda_r >= 0.0) cfg.lambda_r = a.lambda_r;
  if (a.anneal_c >= 0.0) cfg.anneal_c = a.anneal_c;
  if (a.tau_prime >= 0.0) cfg.tau_prime = a.tau_prime;
  if (a.particles >= 0) cfg.particles = a.particles;
  if (a.path_level) cfg.track_level = false;
  if (!a.pc_focus.empty()) {
    if (a.pc_focus == "uniform") cfg.pc_focus = 2;
    else if (a.pc_focus == "-1" || a.pc_focus == "0" || a.pc_focus == "+1" ||
             a.pc_focus == "1")
      cfg.pc_focus = a.pc_focus == "-1" ? -1 : (a.pc_focus == "0" ? 0 : 1);
    else
      throw UsageError("--pc-focus expects -1, 0, +1 or uniform");
  }
  if (cfg.repeats < 1) throw UsageError("repeats must be at least 1");

  std::vector<std::string> samplers;
  if (a.sampler == "hisp" || a.sampler == "baseline") {
    samplers.push_back(a.sampler);
  } else if (a.sampler == "both") {
    samplers = {"hisp", "baseline"};
  } else {
    throw UsageError("--sampler expects hisp, baseline or both");
  }

  const SmootherStack st(cfg, sc.obs);

  ChainConfig cc;
  cc.iters = cfg.iters;
  cc.wall_secs = cfg.wall_secs;
  cc.anneal_c = cfg.anneal_c;
  cc.proposal = cfg.proposal_params();
  cc.track_level = cfg.track_level;

  bool any_partial = false;
  for (const std::string& sampler : samplers) {
    for (int rep = 0; rep < cfg.repeats; ++rep) {
      Rng rng(cfg.seed, Rng::mix(sampler == "hisp" ? 1 : 2,
                                 static_cast<std::uint64_t>(rep)));
      const RunResult rr =
          sampler == "hisp"
              ? run_chain(st.objective, st.index, st.filter, sc.obs, cc, rng)
              : run_baseline(st.objective, sc.obs, cc, rng);

      std::ostringstream tag;
      tag << a.out;
      if (samplers.size() > 1) tag << "-" << sampler;
      if (cfg.repeats > 1) tag << "-rep" << rep;

      {
        std::ofstream os = open_out(tag.str() + ".tracks");
        write_tracks(os, rr.best, rr.best_log_pi);
      }
      {
        std::ofstream os = open_out(tag.str() + ".trace.csv");
        write_trace_csv(os, rr.trace);
      }
      std::cout << "sampler " << sampler << " repeat " << rep << " iters "
                << rr.iters_done << " best_log_pi " << fmt(rr.best_log_pi)
                << " tracks " << rr.best.size()
                << (rr.hit_wall ? " partial" : "") << "\n";
      if (rr.hit_wall) any_partial = true;
    }
  }
  if (any_partial)
    std::cerr << "note: wall-clock budget exhausted before the iteration "
                 "budget; results above are partial\n";
  return 0;
}

struct EvaluateArgs {
  std::string scenario;
  std::string tracks;
  std::string config_file;
  std::vector<std::string> sets;
};

int run_evaluate(const EvaluateArgs& a) {
  std::ifstream is = open_in(a.scenario);
  const Scenario sc = read_scenario(is);
  std::ifstream ts = open_in(a.tracks);
  const TracksFile tf = read_tracks(ts);

  for (const Track& tr : tf.tracks)
    for (const ObsId& h : tr.path.hits) {
      if (h.k < 1 || h.k > sc.obs.K() || h.i < 0 ||
          h.i >= sc.obs.count(h.k))
        throw DataError("tracks: hit outside the scenario's observations");
      if (tr.n > sc.params.K)
        throw DataError("tracks: interval beyond the scenario horizon");
    }

  Config cfg;
  cfg.sim = sc.params;
  if (!a.config_file.empty()) {
    std::ifstream cs = open_in(a.config_file);
    cfg.load(cs);
  }
  apply_sets(cfg, a.sets);

  const TargetParams tp = cfg.target_params();
  TrackObjective objective(tp, sc.obs);

  const Metrics m = compute_metrics(sc, tf.tracks);
  const double log_pi = objective.track_set_log(tf.tracks);
  const TrackSet truth = ground_truth_tracks(sc);
  const double log_pi_truth = objective.track_set_log(truth);

  std::cout << "n_est_tracks " << m.n_est_tracks << "\n"
            << "n_true_tracks " << m.n_true_tracks << "\n"
            << "track_count_error " << m.track_count_error << "\n"
            << "association_accuracy " << fmt(m.association_accuracy) << "\n"
            << "n_target_obs " << m.n_target_obs << "\n"
            << "clutter_precision " << fmt(m.clutter_precision) << "\n"
            << "clutter_recall " << fmt(m.clutter_recall) << "\n"
            << "log_pi " << fmt(log_pi) << "\n"
            << "log_pi_stored " << fmt(tf.log_pi) << "\n"
            << "log_pi_truth " << fmt(log_pi_truth) << "\n";
  return 0;
}

struct TraceExportArgs {
  std::vector<std::string> inputs;
  std::string out;
  bool average = false;
};

int run_trace_export(const TraceExportArgs& a) {
  std::vector<std::vector<TraceRecord>> runs;
  for (const std::string& path : a.inputs) {
    std::ifstream is = open_in(path);
    runs.push_back(read_trace_csv(is));
  }
  if (runs.empty()) throw UsageError("trace-export: no input traces");
  std::ofstream os = open_out(a.out);
  if (a.average) {
    write_trace_average_csv(os, runs);
  } else {
    os << "run," << trace_csv_header() << "\n";
    for (std::size_t r = 0; r < runs.size(); ++r)
      for (const TraceRecord& rec : runs[r])
        os << r << "," << rec.iteration << "," << fmt(rec.wall_ms) << ","
           << fmt(rec.log_pi_current) << "," << fmt(rec.log_pi_best) << ","
           << fmt(rec.rho) << "," << rec.move_kind << ","
           << (rec.accepted ? 1 : 0) << "," << rec.n_tracks << "\n";
  }
  std::cout << "wrote " << a.out << " (" << runs.size() << " runs)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"batch multi-object smoothing under possibility theory"};
  app.require_subcommand(1);

  SimulateArgs sim_args;
  CLI::App* sim = app.add_subcommand(
      "simulate", "generate a cluttered multi-target scenario");
  sim->add_option("--preset", sim_args.preset,
                  "scenario preset: simple, high_fa, low_pd");
  sim->add_option("--config", sim_args.config_file, "key-value config file");
  sim->add_option("--set", sim_args.sets, "override KEY=VALUE")
      ->take_all();
  sim->add_option("--seed", sim_args.seed, "simulation seed");
  sim->add_option("--out", sim_args.out, "output scenario file")
      ->required();

  SmoothArgs smooth_args;
  CLI::App* smooth = app.add_subcommand(
      "smooth", "recover tracks from a scenario by annealed sampling");
  smooth->add_option("--scenario", smooth_args.scenario, "scenario file")
      ->required();
  smooth->add_option("--sampler", smooth_args.sampler,
                     "hisp, baseline or both");
  smooth->add_option("--out", smooth_args.out, "output file prefix");
  smooth->add_option("--config", smooth_args.config_file,
                     "key-value config file");
  smooth->add_option("--set", smooth_args.sets, "override KEY=VALUE")
      ->take_all();
  smooth->add_option("--iters", smooth_args.iters, "iteration budget");
  smooth->add_option("--wall-secs", smooth_args.wall_secs,
                     "wall-clock budget per run (seconds)");
  smooth->add_option("--repeats", smooth_args.repeats,
                     "independent repeats per sampler");
  smooth
      ->add_option("--seed", smooth_args.seed,
                   "base seed for the sampler runs")
      ->each([&](const std::string&) { smooth_args.have_seed = true; });
  smooth->add_option("--lambda-r", smooth_args.lambda_r,
                     "mean number of reassigned paths per move");
  smooth->add_option("--c", smooth_args.anneal_c,
                     "annealing rate; rho_t = (1-c)^-t");
  smooth->add_option("--tau-prime", smooth_args.tau_prime,
                     "consistency threshold");
  smooth->add_option("--pc-focus", smooth_args.pc_focus,
                     "path-count change emphasis: -1, 0, +1 or uniform");
  smooth->add_option("--particles", smooth_args.particles,
                     "particle count for the objective (0: exact)");
  smooth->add_flag("--path-level", smooth_args.path_level,
                   "sample associations with per-path interval maxima");

  EvaluateArgs eval_args;
  CLI::App* eval = app.add_subcommand(
      "evaluate", "score an estimated track set against a scenario");
  eval->add_option("--scenario", eval_args.scenario, "scenario file")
      ->required();
  eval->add_option("--tracks", eval_args.tracks, "estimated tracks file")
      ->required();
  eval->add_option("--config", eval_args.config_file,
                   "key-value config file");
  eval->add_option("--set", eval_args.sets, "override KEY=VALUE")
      ->take_all();

  TraceExportArgs trace_args;
  CLI::App* texp = app.add_subcommand(
      "trace-export", "merge or average chain trace files");
  texp->add_option("--in", trace_args.inputs, "input trace csv files")
      ->required()
      ->take_all();
  texp->add_option("--out", trace_args.out, "output csv file")->required();
  texp->add_flag("--average", trace_args.average,
                 "emit per-iteration means across runs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (sim->parsed()) return run_simulate(sim_args);
    if (smooth->parsed()) return run_smooth(smooth_args);
    if (eval->parsed()) return run_evaluate(eval_args);
    if (texp->parsed()) return run_trace_export(trace_args);
    throw posmooth::UsageError("no subcommand given");
  } catch (const posmooth::UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const posmooth::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}
