#pragma once

// Flat key-value run configuration. Every knob has a default; presets adjust
// the scenario block; individual keys can then be overridden from a file or
// from command-line definitions, later settings winning.

#include "posmooth/common.hpp"
#include "posmooth/multiobject.hpp"
#include "posmooth/proposal.hpp"
#include "posmooth/simulate.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

namespace posmooth {

struct Config {
  SimParams sim;

  // objective constants; negative alpha_nd / alpha_ns mean "derive from the
  // scenario's p_d and p_s"
  double alpha_fa = 1e-2;
  double alpha_plus = 1e-4;
  double alpha_nd = -1.0;
  double alpha_ns = -1.0;
  double sigma_v_prior = 1.0;

  // consistency index
  double tau_prime = 1e-3;

  // sampler
  double lambda_r = 1.0;
  double anneal_c = 0.001;
  int pc_focus = -1;  // -1, 0, +1, or 2 for uniform
  long long iters = 50000;
  double wall_secs = 0.0;
  int repeats = 1;
  std::uint64_t seed = 1;
  int particles = 0;  // 0: exact filtering in the objective
  bool track_level = true;

  double resolved_alpha_nd() const {
    const double a = alpha_nd >= 0.0 ? alpha_nd : 1.0 - sim.p_d;
    if (a <= 0.0 || a >= 1.0)
      throw UsageError("alpha_nd must lie in (0, 1)");
    return a;
  }
  double resolved_alpha_ns() const {
    const double a = alpha_ns >= 0.0 ? alpha_ns : 1.0 - sim.p_s;
    if (a <= 0.0 || a >= 1.0)
      throw UsageError("alpha_ns must lie in (0, 1)");
    return a;
  }

  TargetParams target_params() const {
    TargetParams tp;
    tp.model = sim.model();
    if (alpha_fa <= 0.0 || alpha_plus <= 0.0)
      throw UsageError("alpha_fa and alpha_plus must be positive");
    tp.log_alpha_fa = std::log(alpha_fa);
    tp.log_alpha_plus = std::log(alpha_plus);
    tp.log_alpha_nd = std::log(resolved_alpha_nd());
    tp.log_alpha_ns = std::log(resolved_alpha_ns());
    tp.sigma_v_prior = sigma_v_prior;
    return tp;
  }

  ProposalParams proposal_params() const {
    ProposalParams pp;
    pp.lambda_r = lambda_r;
    return with_focus(pp, pc_focus);
  }

  void apply_preset(const std::string& name) { sim = sim_preset(name); }

  void set(const std::string& key, const std::string& value) {
    const auto d = [&] {
      std::size_t pos = 0;
      double v;
      try {
        v = std::stod(value, &pos);
      } catch (const std::exception&) {
        throw UsageError("config: bad number for " + key + ": " + value);
      }
      if (pos != value.size())
        throw UsageError("config: bad number for " + key + ": " + value);
      return v;
    };
    const auto i = [&] {
      const double v = d();
      if (v != std::floor(v))
        throw UsageError("config: " + key + " must be an integer");
      return static_cast<long long>(v);
    };
    if (key == "K") sim.K = static_cast<int>(i());
    else if (key == "window_lo") sim.window_lo = d();
    else if (key == "window_hi") sim.window_hi = d();
    else if (key == "dt") sim.dt = d();
    else if (key == "sigma_a") sim.sigma_a = d();
    else if (key == "sigma_obs") sim.sigma_obs = d();
    else if (key == "lambda_fa") sim.lambda_fa = d();
    else if (key == "lambda_b") sim.lambda_b = d();
    else if (key == "p_d") sim.p_d = d();
    else if (key == "p_s") sim.p_s = d();
    else if (key == "sigma_v_sim") sim.sigma_v_sim = d();
    else if (key == "alpha_fa") alpha_fa = d();
    else if (key == "alpha_plus") alpha_plus = d();
    else if (key == "alpha_nd") alpha_nd = d();
    else if (key == "alpha_ns") alpha_ns = d();
    else if (key == "sigma_v_prior") sigma_v_prior = d();
    else if (key == "tau_prime") tau_prime = d();
    else if (key == "lambda_r") lambda_r = d();
    else if (key == "anneal_c") anneal_c = d();
    else if (key == "pc_focus") pc_focus = static_cast<int>(i());
    else if (key == "iters") iters = i();
    else if (key == "wall_secs") wall_secs = d();
    else if (key == "repeats") repeats = static_cast<int>(i());
    else if (key == "seed") seed = static_cast<std::uint64_t>(i());
    else if (key == "particles") particles = static_cast<int>(i());
    else if (key == "track_level") track_level = i() != 0;
    else throw UsageError("config: unknown key " + key);
  }

  // lines of "key value" or "key=value"; '#' starts a comment
  void load(std::istream& is) {
    std::string line;
    while (std::getline(is, line)) {
      const std::size_t hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      for (char& c : line)
        if (c == '=') c = ' ';
      std::istringstream ls(line);
      std::string key, value, extra;
      if (!(ls >> key)) continue;
      if (!(ls >> value) || (ls >> extra))
        throw UsageError("config: malformed line: " + line);
      set(key, value);
    }
  }

  void dump(std::ostream& os) const {
    const auto w = [&os](const char* k, double v) {
      char buf[40];
      std::snprintf(buf, sizeof buf, "%.17g", v);
      os << k << " " << buf << "\n";
    };
    os << "K " << sim.K << "\n";
    w("window_lo", sim.window_lo);
    w("window_hi", sim.window_hi);
    w("dt", sim.dt);
    w("sigma_a", sim.sigma_a);
    w("sigma_obs", sim.sigma_obs);
    w("lambda_fa", sim.lambda_fa);
    w("lambda_b", sim.lambda_b);
    w("p_d", sim.p_d);
    w("p_s", sim.p_s);
    w("sigma_v_sim", sim.sigma_v_sim);
    w("alpha_fa", alpha_fa);
    w("alpha_plus", alpha_plus);
    w("alpha_nd", alpha_nd);
    w("alpha_ns", alpha_ns);
    w("sigma_v_prior", sigma_v_prior);
    w("tau_prime", tau_prime);
    w("lambda_r", lambda_r);
    w("anneal_c", anneal_c);
    os << "pc_focus " << pc_focus << "\n";
    os << "iters " << iters << "\n";
    w("wall_secs", wall_secs);
    os << "repeats " << repeats << "\n";
    os << "seed " << seed << "\n";
    os << "particles " << particles << "\n";
    os << "track_level " << (track_level ? 1 : 0) << "\n";
  }
};

}  // namespace posmooth
