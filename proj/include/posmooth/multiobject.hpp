#pragma once

// Multi-object representation and the batch smoothing objective.
//
// A path assigns at most one observation per time step (absence elsewhere);
// an association is a set of pairwise-disjoint paths; a track extends a path
// with an appearance/disappearance interval [m, n] covering all of its
// assignments. The unnormalized objective of a track set multiplies a
// false-alarm factor for uncovered observations, a per-track appearance
// factor, and each track's trajectory credibility obtained by running the
// single-object filter over [m, n].

#include "posmooth/common.hpp"
#include "posmooth/possibility.hpp"
#include "posmooth/state_filter.hpp"

#include <algorithm>
#include <optional>
#include <vector>

namespace posmooth {

// ----------------------------------------------------------------- obs set

class ObsSet {
 public:
  ObsSet() = default;
  ObsSet(int K, int dz) : K_(K), dz_(dz), scans_(K) {
    if (K <= 0 || dz <= 0) throw UsageError("ObsSet: need K > 0, dz > 0");
    for (auto& s : scans_) s.resize(dz, 0);
    rebuild_offsets();
  }

  int K() const { return K_; }
  int dz() const { return dz_; }
  int total() const { return total_; }

  int count(int k) const {
    check_k(k);
    return static_cast<int>(scans_[k - 1].cols());
  }

  // dz x n_k matrix of the scan at step k
  const Mat& scan(int k) const {
    check_k(k);
    return scans_[k - 1];
  }

  Vec z(ObsId id) const {
    check_id(id);
    return scans_[id.k - 1].col(id.i);
  }

  // Appends an observation at step k and returns its id.
  ObsId add(int k, const Vec& z) {
    check_k(k);
    if (z.size() != dz_) throw UsageError("ObsSet: observation dim mismatch");
    Mat& s = scans_[k - 1];
    s.conservativeResize(dz_, s.cols() + 1);
    s.col(s.cols() - 1) = z;
    rebuild_offsets();
    return ObsId{k, static_cast<int>(s.cols() - 1)};
  }

  // Dense global index in [0, total), ordered by (k, i).
  int gid(ObsId id) const {
    check_id(id);
    return offsets_[id.k - 1] + id.i;
  }

  // First gid of scan k (also valid for empty scans).
  int scan_offset(int k) const {
    check_k(k);
    return offsets_[k - 1];
  }
  ObsId from_gid(int g) const {
    if (g < 0 || g >= total_) throw UsageError("ObsSet: gid out of range");
    const auto it = std::upper_bound(offsets_.begin(), offsets_.end(), g);
    const int k = static_cast<int>(it - offsets_.begin());
    return ObsId{k, g - offsets_[k - 1]};
  }

 private:
  void check_k(int k) const {
    if (k < 1 || k > K_) throw UsageError("ObsSet: step out of range");
  }
  void check_id(ObsId id) const {
    check_k(id.k);
    if (id.i < 0 || id.i >= scans_[id.k - 1].cols())
      throw UsageError("ObsSet: observation index out of range");
  }
  void rebuild_offsets() {
    offsets_.assign(K_, 0);
    int acc = 0;
    for (int k = 0; k < K_; ++k) {
      offsets_[k] = acc;
      acc += static_cast<int>(scans_[k].cols());
    }
    total_ = acc;
  }

  int K_ = 0;
  int dz_ = 0;
  std::vector<Mat> scans_;
  std::vector<int> offsets_;
  int total_ = 0;
};

// -------------------------------------------------------------------- path

// Assignments sorted by strictly increasing time step.
struct Path {
  std::vector<ObsId> hits;

  bool empty() const { return hits.empty(); }
  int first_k() const { return hits.front().k; }
  int last_k() const { return hits.back().k; }
  ObsId seed() const { return hits.front(); }

  // Observation at step k, if assigned.
  std::optional<ObsId> at(int k) const {
    for (const ObsId& h : hits) {
      if (h.k == k) return h;
      if (h.k > k) break;
    }
    return std::nullopt;
  }

  void validate() const {
    if (hits.empty()) throw UsageError("Path: no assignments");
    for (std::size_t j = 1; j < hits.size(); ++j)
      if (!(hits[j - 1].k < hits[j].k))
        throw UsageError("Path: steps must be strictly increasing");
  }

  friend auto operator<=>(const Path&, const Path&) = default;
};

struct Track {
  Path path;
  int m = 0;  // appearance step
  int n = 0;  // disappearance step

  friend auto operator<=>(const Track&, const Track&) = default;
};

using Association = std::vector<Path>;
using TrackSet = std::vector<Track>;

inline void canonicalize(Association& a) { std::sort(a.begin(), a.end()); }
inline void canonicalize(TrackSet& t) { std::sort(t.begin(), t.end()); }

inline Association paths_of(const TrackSet& t) {
  Association a;
  a.reserve(t.size());
  for (const Track& tr : t) a.push_back(tr.path);
  canonicalize(a);
  return a;
}

// Set difference on canonical associations (paths compared by value).
inline Association assoc_minus(const Association& a, const Association& b) {
  Association out;
  for (const Path& p : a)
    if (std::find(b.begin(), b.end(), p) == b.end()) out.push_back(p);
  canonicalize(out);
  return out;
}

inline bool paths_disjoint(const Association& a) {
  std::vector<ObsId> all;
  for (const Path& p : a) all.insert(all.end(), p.hits.begin(), p.hits.end());
  std::sort(all.begin(), all.end());
  return std::adjacent_find(all.begin(), all.end()) == all.end();
}

// used[k-1][i] == 1 iff observation (k, i) is assigned by some path.
inline std::vector<std::vector<char>> used_mask(const ObsSet& obs,
                                                const Association& a) {
  std::vector<std::vector<char>> used(obs.K());
  for (int k = 1; k <= obs.K(); ++k) used[k - 1].assign(obs.count(k), 0);
  for (const Path& p : a)
    for (const ObsId& h : p.hits) {
      if (used[h.k - 1][h.i])
        throw UsageError("used_mask: paths not pairwise disjoint");
      used[h.k - 1][h.i] = 1;
    }
  return used;
}

inline int assigned_count(const Association& a) {
  int n = 0;
  for (const Path& p : a) n += static_cast<int>(p.hits.size());
  return n;
}

// -------------------------------------------------------------- evaluation

struct TargetParams {
  LinearGaussianModel model;
  double log_alpha_fa = 0.0;    // per uncovered observation
  double log_alpha_plus = 0.0;  // per track
  double log_alpha_nd = 0.0;    // per in-interval step without assignment
  double log_alpha_ns = 0.0;    // disappearance before the final step
  double sigma_v_prior = 1.0;   // birth-prior velocity spread
};

struct PathMarginal {
  int m = 0;
  int n = 0;
  double log_cred = kNegInf;
};

// Evaluates trajectory credibilities and the track-set objective against a
// fixed observation set. Construction validates the model's birth-prior
// block structure once.
class TrackObjective {
 public:
  TrackObjective(TargetParams params, const ObsSet& obs)
      : params_(std::move(params)), bs_(birth_structure(params_.model)),
        obs_(&obs) {}

  const TargetParams& params() const { return params_; }
  const ObsSet& obs() const { return *obs_; }

  // Evaluate path credibilities with a particle filter instead of the exact
  // Kalman recursion. Each path uses a stream derived from its own content,
  // so the value never depends on evaluation order.
  void set_particles(int count, std::uint64_t seed) {
    if (count < 0) throw UsageError("set_particles: negative count");
    particles_ = count;
    particle_seed_ = seed;
  }
  int particles() const { return particles_; }

  // log of the trajectory credibility of (path, m, n): birth prior at m,
  // filter update for each assignment (marginal factors), absence factor for
  // each unassigned in-interval step, termination factor when n < K.
  double path_log_cred(const Path& path, int m, int n) const {
    path.validate();
    const int K = obs_->K();
    if (m < 1 || n > K || m > n)
      throw UsageError("path_log_cred: invalid interval");
    if (m > path.first_k() || n < path.last_k())
      throw UsageError("path_log_cred: interval must cover assignments");
    // Steps after the last assignment contribute absence factors only; the
    // filter pass covers [m, last_k].
    return path_body_log_cred(path, m) +
           (n - path.last_k()) * params_.log_alpha_nd +
           (n < K ? params_.log_alpha_ns : 0.0);
  }

  // Exhaustive maximization of path_log_cred over the valid interval pairs
  // m in [1, first_k], n in [last_k, K]; ties resolve to the smallest (m, n).
  PathMarginal path_marginal(const Path& path) const {
    path.validate();
    const int K = obs_->K();
    PathMarginal best;
    for (int m = 1; m <= path.first_k(); ++m) {
      const double body = path_body_log_cred(path, m);
      for (int n = path.last_k(); n <= K; ++n) {
        double v = body +
                   (n - path.last_k()) * params_.log_alpha_nd +
                   (n < K ? params_.log_alpha_ns : 0.0);
        if (v > best.log_cred) best = PathMarginal{m, n, v};
      }
    }
    return best;
  }

  double false_alarm_log(const Association& a) const {
    return (obs_->total() - assigned_count(a)) * params_.log_alpha_fa;
  }

  double appearance_log(std::size_t n_tracks) const {
    return static_cast<double>(n_tracks) * params_.log_alpha_plus;
  }

  // log objective of a track set (unnormalized).
  double track_set_log(const TrackSet& t) const {
    Association a = paths_of(t);
    if (!paths_disjoint(a))
      throw UsageError("track_set_log: paths not pairwise disjoint");
    double acc = false_alarm_log(a) + appearance_log(t.size());
    for (const Track& tr : t) acc += path_log_cred(tr.path, tr.m, tr.n);
    return acc;
  }

  // log of the association-level objective: per-path interval maxima.
  double assoc_log_marginal(const Association& a,
                            TrackSet* argmax = nullptr) const {
    if (!paths_disjoint(a))
      throw UsageError("assoc_log_marginal: paths not pairwise disjoint");
    double acc = false_alarm_log(a) + appearance_log(a.size());
    if (argmax) argmax->clear();
    for (const Path& p : a) {
      PathMarginal pm = path_marginal(p);
      acc += pm.log_cred;
      if (argmax) argmax->push_back(Track{p, pm.m, pm.n});
    }
    return acc;
  }

 private:
  // Credibility of the segment [m, last_k] (everything except the trailing
  // absence run and the termination factor).
  double path_body_log_cred(const Path& path, int m) const {
    return particles_ > 0 ? body_particle(path, m) : body_exact(path, m);
  }

  double body_exact(const Path& path, int m) const {
    double acc = 0.0;
    std::size_t next = 0;
    BirthBelief unlocalized = birth_belief(bs_, params_.sigma_v_prior);
    GaussianPossibility belief;
    bool localized = false;
    for (int k = m; k <= path.last_k(); ++k) {
      if (k > m) {
        if (localized)
          belief = predict(params_.model, belief);
        else
          unlocalized = birth_predict(bs_, unlocalized);
      }
      if (next < path.hits.size() && path.hits[next].k == k) {
        const Vec z = obs_->z(path.hits[next]);
        ++next;
        if (!localized) {
          belief = birth_first_update(params_.model, bs_, unlocalized, z);
          localized = true;
        } else {
          UpdateResult ur = update(params_.model, belief, z);
          acc += ur.log_marginal;
          belief = std::move(ur.posterior);
        }
      } else {
        acc += params_.log_alpha_nd;
      }
    }
    return acc;
  }

  // Same forward pass with the post-first-hit recursion replaced by a
  // particle approximation. The segment before the first assignment is kept
  // exact: the unlocalized prior has no density to sample from, and its
  // first conditioning has credibility one by construction.
  double body_particle(const Path& path, int m) const {
    std::uint64_t h = particle_seed_;
    for (const ObsId& hit : path.hits)
      h = Rng::mix(h, static_cast<std::uint64_t>(obs_->gid(hit)));
    Rng rng(Rng::mix(h, static_cast<std::uint64_t>(m)));

    double acc = 0.0;
    std::size_t next = 0;
    BirthBelief unlocalized = birth_belief(bs_, params_.sigma_v_prior);
    ParticleBelief belief;
    bool localized = false;
    for (int k = m; k <= path.last_k(); ++k) {
      if (k > m) {
        if (localized)
          particle_predict(params_.model, belief, rng);
        else
          unlocalized = birth_predict(bs_, unlocalized);
      }
      if (next < path.hits.size() && path.hits[next].k == k) {
        const Vec z = obs_->z(path.hits[next]);
        ++next;
        if (!localized) {
          const GaussianPossibility g =
              birth_first_update(params_.model, bs_, unlocalized, z);
          belief = particles_from_gaussian(g, particles_, rng);
          localized = true;
        } else {
          const double lm = particle_update(params_.model, belief, z);
          acc += lm;
        }
      } else {
        acc += params_.log_alpha_nd;
      }
    }
    return acc;
  }

  TargetParams params_;
  BirthStructure bs_;
  const ObsSet* obs_;
  int particles_ = 0;
  std::uint64_t particle_seed_ = 0;
};

}  // namespace posmooth
