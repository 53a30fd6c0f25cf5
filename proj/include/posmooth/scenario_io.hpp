#pragma once

// Plain-text round-trip formats for scenarios, track sets, and chain traces.
// Floating-point fields are written with %.17g so re-reading reproduces the
// exact doubles.

#include "posmooth/common.hpp"
#include "posmooth/mcmc.hpp"
#include "posmooth/multiobject.hpp"
#include "posmooth/simulate.hpp"

#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace posmooth {

namespace io_detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& s) {
  std::size_t pos = 0;
  double v;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw DataError("malformed number: " + s);
  }
  if (pos != s.size()) throw DataError("malformed number: " + s);
  return v;
}

inline long long parse_int(const std::string& s) {
  std::size_t pos = 0;
  long long v;
  try {
    v = std::stoll(s, &pos);
  } catch (const std::exception&) {
    throw DataError("malformed integer: " + s);
  }
  if (pos != s.size()) throw DataError("malformed integer: " + s);
  return v;
}

inline std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

}  // namespace io_detail

// ----------------------------------------------------------------- scenario

inline void write_scenario(std::ostream& os, const Scenario& sc) {
  using io_detail::fmt_double;
  const SimParams& p = sc.params;
  os << "posmooth-scenario v1\n";
  os << "param K " << p.K << "\n";
  os << "param window_lo " << fmt_double(p.window_lo) << "\n";
  os << "param window_hi " << fmt_double(p.window_hi) << "\n";
  os << "param dt " << fmt_double(p.dt) << "\n";
  os << "param sigma_a " << fmt_double(p.sigma_a) << "\n";
  os << "param sigma_obs " << fmt_double(p.sigma_obs) << "\n";
  os << "param lambda_fa " << fmt_double(p.lambda_fa) << "\n";
  os << "param lambda_b " << fmt_double(p.lambda_b) << "\n";
  os << "param p_d " << fmt_double(p.p_d) << "\n";
  os << "param p_s " << fmt_double(p.p_s) << "\n";
  os << "param sigma_v_sim " << fmt_double(p.sigma_v_sim) << "\n";
  os << "seed " << sc.seed << "\n";
  for (int k = 1; k <= sc.obs.K(); ++k)
    for (int i = 0; i < sc.obs.count(k); ++i) {
      const Vec z = sc.obs.z(ObsId{k, i});
      const int gid = sc.obs.gid(ObsId{k, i});
      os << "obs " << k << " " << fmt_double(z(0)) << " " << fmt_double(z(1))
         << " " << sc.labels[static_cast<std::size_t>(gid)] << "\n";
    }
  for (const SimTarget& tg : sc.targets) {
    os << "target " << tg.birth_k << " " << tg.death_k << "\n";
    for (std::size_t j = 0; j < tg.states.size(); ++j) {
      const Vec& x = tg.states[j];
      os << "state " << (tg.birth_k + static_cast<int>(j));
      for (int d = 0; d < 4; ++d) os << " " << fmt_double(x(d));
      os << "\n";
    }
  }
  os << "end\n";
}

inline Scenario read_scenario(std::istream& is) {
  using namespace io_detail;
  std::string line;
  if (!std::getline(is, line) || line != "posmooth-scenario v1")
    throw DataError("scenario: missing or unsupported header");

  Scenario sc;
  std::map<std::string, double> params;
  bool have_k = false;
  long long k_value = 0;
  std::vector<std::pair<int, Vec>> raw_obs;
  std::vector<int> raw_labels;
  bool ended = false;

  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> tok = split_ws(line);
    if (tok[0] == "end") {
      ended = true;
      break;
    }
    if (tok[0] == "param") {
      if (tok.size() != 3) throw DataError("scenario: malformed param line");
      if (tok[1] == "K") {
        k_value = parse_int(tok[2]);
        have_k = true;
      } else {
        params[tok[1]] = parse_double(tok[2]);
      }
    } else if (tok[0] == "seed") {
      if (tok.size() != 2) throw DataError("scenario: malformed seed line");
      sc.seed = static_cast<std::uint64_t>(parse_int(tok[1]));
    } else if (tok[0] == "obs") {
      if (tok.size() != 5) throw DataError("scenario: malformed obs line");
      Vec z(2);
      z(0) = parse_double(tok[2]);
      z(1) = parse_double(tok[3]);
      raw_obs.emplace_back(static_cast<int>(parse_int(tok[1])), std::move(z));
      raw_labels.push_back(static_cast<int>(parse_int(tok[4])));
    } else if (tok[0] == "target") {
      if (tok.size() != 3) throw DataError("scenario: malformed target line");
      SimTarget tg;
      tg.birth_k = static_cast<int>(parse_int(tok[1]));
      tg.death_k = static_cast<int>(parse_int(tok[2]));
      sc.targets.push_back(std::move(tg));
    } else if (tok[0] == "state") {
      if (tok.size() != 6 || sc.targets.empty())
        throw DataError("scenario: malformed state line");
      Vec x(4);
      for (int d = 0; d < 4; ++d) x(d) = parse_double(tok[2 + d]);
      sc.targets.back().states.push_back(std::move(x));
    } else {
      throw DataError("scenario: unknown record " + tok[0]);
    }
  }
  if (!ended) throw DataError("scenario: missing end marker");
  if (!have_k) throw DataError("scenario: missing K");

  const auto get = [&](const char* name) {
    const auto it = params.find(name);
    if (it == params.end())
      throw DataError(std::string("scenario: missing param ") + name);
    return it->second;
  };
  sc.params.K = static_cast<int>(k_value);
  sc.params.window_lo = get("window_lo");
  sc.params.window_hi = get("window_hi");
  sc.params.dt = get("dt");
  sc.params.sigma_a = get("sigma_a");
  sc.params.sigma_obs = get("sigma_obs");
  sc.params.lambda_fa = get("lambda_fa");
  sc.params.lambda_b = get("lambda_b");
  sc.params.p_d = get("p_d");
  sc.params.p_s = get("p_s");
  sc.params.sigma_v_sim = get("sigma_v_sim");
  if (sc.params.K < 1) throw DataError("scenario: K must be positive");

  sc.obs = ObsSet(sc.params.K, 2);
  for (std::size_t j = 0; j < raw_obs.size(); ++j) {
    if (raw_obs[j].first < 1 || raw_obs[j].first > sc.params.K)
      throw DataError("scenario: obs step out of range");
    sc.obs.add(raw_obs[j].first, raw_obs[j].second);
    sc.labels.push_back(raw_labels[j]);
  }

  // rebuild per-target detection lists from the labels
  for (int g = 0; g < sc.obs.total(); ++g) {
    const int lbl = sc.labels[static_cast<std::size_t>(g)];
    if (lbl < 0) continue;
    if (lbl >= static_cast<int>(sc.targets.size()))
      throw DataError("scenario: label references unknown target");
    sc.targets[static_cast<std::size_t>(lbl)].detections.push_back(
        sc.obs.from_gid(g));
  }
  for (const SimTarget& tg : sc.targets) {
    if (tg.death_k < tg.birth_k || tg.death_k > sc.params.K ||
        tg.birth_k < 1)
      throw DataError("scenario: invalid target lifetime");
    if (!tg.states.empty() &&
        tg.states.size() !=
            static_cast<std::size_t>(tg.death_k - tg.birth_k + 1))
      throw DataError("scenario: state count does not match lifetime");
  }
  return sc;
}

// --------------------------------------------------------------- track sets

inline void write_tracks(std::ostream& os, const TrackSet& t,
                         double log_pi) {
  os << "posmooth-tracks v1\n";
  os << "log_pi " << io_detail::fmt_double(log_pi) << "\n";
  for (const Track& tr : t) {
    os << "track " << tr.m << " " << tr.n << " " << tr.path.hits.size()
       << "\n";
    for (const ObsId& h : tr.path.hits)
      os << "hit " << h.k << " " << h.i << "\n";
  }
  os << "end\n";
}

struct TracksFile {
  TrackSet tracks;
  double log_pi = kNegInf;
};

inline TracksFile read_tracks(std::istream& is) {
  using namespace io_detail;
  std::string line;
  if (!std::getline(is, line) || line != "posmooth-tracks v1")
    throw DataError("tracks: missing or unsupported header");
  TracksFile out;
  bool ended = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> tok = split_ws(line);
    if (tok[0] == "end") {
      ended = true;
      break;
    }
    if (tok[0] == "log_pi") {
      if (tok.size() != 2) throw DataError("tracks: malformed log_pi");
      out.log_pi = parse_double(tok[1]);
    } else if (tok[0] == "track") {
      if (tok.size() != 4) throw DataError("tracks: malformed track line");
      Track tr;
      tr.m = static_cast<int>(parse_int(tok[1]));
      tr.n = static_cast<int>(parse_int(tok[2]));
      out.tracks.push_back(std::move(tr));
    } else if (tok[0] == "hit") {
      if (tok.size() != 3 || out.tracks.empty())
        throw DataError("tracks: malformed hit line");
      out.tracks.back().path.hits.push_back(
          ObsId{static_cast<int>(parse_int(tok[1])),
                static_cast<int>(parse_int(tok[2]))});
    } else {
      throw DataError("tracks: unknown record " + tok[0]);
    }
  }
  if (!ended) throw DataError("tracks: missing end marker");
  for (const Track& tr : out.tracks) {
    tr.path.validate();
    if (tr.m > tr.path.first_k() || tr.n < tr.path.last_k() || tr.m < 1)
      throw DataError("tracks: interval does not cover assignments");
  }
  return out;
}

// -------------------------------------------------------------- trace files

inline const char* trace_csv_header() {
  return "iteration,wall_ms,log_pi_current,log_pi_best,rho,move_kind,"
         "accepted,n_tracks";
}

inline void write_trace_csv(std::ostream& os,
                            const std::vector<TraceRecord>& trace) {
  using io_detail::fmt_double;
  os << trace_csv_header() << "\n";
  for (const TraceRecord& r : trace) {
    os << r.iteration << "," << fmt_double(r.wall_ms) << ","
       << fmt_double(r.log_pi_current) << "," << fmt_double(r.log_pi_best)
       << "," << fmt_double(r.rho) << "," << r.move_kind << ","
       << (r.accepted ? 1 : 0) << "," << r.n_tracks << "\n";
  }
}

inline std::vector<TraceRecord> read_trace_csv(std::istream& is) {
  using namespace io_detail;
  std::string line;
  if (!std::getline(is, line) || line != trace_csv_header())
    throw DataError("trace: missing or unsupported csv header");
  std::vector<TraceRecord> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::string cur;
    for (char ch : line) {
      if (ch == ',') {
        f.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(ch);
      }
    }
    f.push_back(cur);
    if (f.size() != 8) throw DataError("trace: malformed row");
    TraceRecord r;
    r.iteration = parse_int(f[0]);
    r.wall_ms = parse_double(f[1]);
    r.log_pi_current = parse_double(f[2]);
    r.log_pi_best = parse_double(f[3]);
    r.rho = parse_double(f[4]);
    r.move_kind = f[5];
    r.accepted = parse_int(f[6]) != 0;
    r.n_tracks = static_cast<int>(parse_int(f[7]));
    out.push_back(std::move(r));
  }
  return out;
}

// Tidy per-iteration summary across repeated runs: mean of the current and
// best objective and of the wall clock at each iteration index present in
// every run (rows stop at the shortest trace).
inline void write_trace_average_csv(
    std::ostream& os, const std::vector<std::vector<TraceRecord>>& runs) {
  using io_detail::fmt_double;
  if (runs.empty()) throw UsageError("trace average: no runs");
  std::size_t rows = runs.front().size();
  for (const auto& r : runs) rows = std::min(rows, r.size());
  os << "iteration,n_runs,mean_wall_ms,mean_log_pi_current,mean_log_pi_best,"
        "accept_rate\n";
  for (std::size_t i = 0; i < rows; ++i) {
    double wall = 0.0, cur = 0.0, best = 0.0, acc = 0.0;
    for (const auto& r : runs) {
      wall += r[i].wall_ms;
      cur += r[i].log_pi_current;
      best += r[i].log_pi_best;
      acc += r[i].accepted ? 1.0 : 0.0;
    }
    const double n = static_cast<double>(runs.size());
    os << runs.front()[i].iteration << "," << runs.size() << ","
       << fmt_double(wall / n) << "," << fmt_double(cur / n) << ","
       << fmt_double(best / n) << "," << fmt_double(acc / n) << "\n";
  }
}

}  // namespace posmooth
