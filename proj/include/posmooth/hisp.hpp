#pragma once

// Filter-driven path generation. Seeded paths are propagated forward through
// the scans; at each step every live path receives an association pmf built
// from its own marginal observation credibilities and a product-form
// leave-one-out factor for the other live paths, then draws one assignment
// (an available observation or absence). Draw probabilities are accumulated
// exactly, and the same code path replays a prescribed set of target paths,
// returning the probability the sampler would have produced them; replays of
// sampled runs are bit-identical to the sampled probability.
//
// Overlapping draws (two paths claiming one observation) reject the whole
// run; the caller treats this as a rejected proposal.

#include "posmooth/common.hpp"
#include "posmooth/multiobject.hpp"
#include "posmooth/possibility.hpp"
#include "posmooth/state_filter.hpp"

#include <algorithm>
#include <optional>
#include <vector>

namespace posmooth {

struct HispParams {
  double log_alpha_fa = 0.0;
  double log_alpha_nd = 0.0;
  double log_alpha_ns = 0.0;
};

// Survival and termination credibilities of a path with current absence run
// l, renormalized as a pair: hat_s = a_nd^l / (a_ns v a_nd^l),
// hat_ns = a_ns / (a_ns v a_nd^l).
struct SurvivalLog {
  double hat_s;
  double hat_ns;
};

inline SurvivalLog survival_log(const HispParams& p, int gap) {
  const double s = gap * p.log_alpha_nd;
  const double mx = std::max(p.log_alpha_ns, s);
  return {s - mx, p.log_alpha_ns - mx};
}

// Absence likelihood: hat_ns v hat_s * (a_ns v a_nd).
inline double absence_log(const HispParams& p, int gap) {
  const SurvivalLog sv = survival_log(p, gap);
  return std::max(sv.hat_ns,
                  sv.hat_s + std::max(p.log_alpha_ns, p.log_alpha_nd));
}

// ------------------------------------------------- product-form step factor

// Per-step association likelihoods of the live paths: logL[o][z] over the
// available observations and logLphi[o] for absence.
struct AssocLikTable {
  std::vector<std::vector<double>> logL;
  std::vector<double> logLphi;

  std::size_t n_paths() const { return logLphi.size(); }
  std::size_t n_obs() const { return logL.empty() ? 0 : logL[0].size(); }
};

// Product form of the step factor:
//   Gamma(Z|O) = f_fa(Z) * prod_o [ L(phi|o) v max_z L(z|o)/alpha_fa ].
inline double gamma_product_log(const HispParams& p, const AssocLikTable& t) {
  double acc = static_cast<double>(t.n_obs()) * p.log_alpha_fa;
  for (std::size_t o = 0; o < t.n_paths(); ++o) {
    double best = kNegInf;
    for (double lz : t.logL[o]) best = std::max(best, lz - p.log_alpha_fa);
    acc += std::max(t.logLphi[o], best);
  }
  return acc;
}

// All leave-one-out step factors Gamma(Z \ {z} | O \ {o}), plus the
// absence column Gamma(Z | O \ {o}); built in O(|O| |Z|) from the best and
// second-best observation of every path.
struct LeaveOneOut {
  std::vector<std::vector<double>> without;  // [o][z]
  std::vector<double> without_phi;           // [o]
};

inline LeaveOneOut leave_one_out(const HispParams& p, const AssocLikTable& t) {
  const std::size_t no = t.n_paths();
  const std::size_t nz = t.n_obs();

  std::vector<double> best1(no, kNegInf), best2(no, kNegInf);
  std::vector<std::ptrdiff_t> arg1(no, -1);
  for (std::size_t o = 0; o < no; ++o) {
    for (std::size_t z = 0; z < nz; ++z) {
      const double v = t.logL[o][z] - p.log_alpha_fa;
      if (v > best1[o]) {
        best2[o] = best1[o];
        best1[o] = v;
        arg1[o] = static_cast<std::ptrdiff_t>(z);
      } else if (v > best2[o]) {
        best2[o] = v;
      }
    }
  }

  std::vector<double> bracket(no), bracket_drop(no);
  double total = 0.0;
  for (std::size_t o = 0; o < no; ++o) {
    bracket[o] = std::max(t.logLphi[o], best1[o]);
    bracket_drop[o] = std::max(t.logLphi[o], best2[o]);
    total += bracket[o];
  }

  // Removing observation z only affects paths whose best observation is z.
  std::vector<double> delta(nz, 0.0);
  for (std::size_t o = 0; o < no; ++o)
    if (arg1[o] >= 0)
      delta[static_cast<std::size_t>(arg1[o])] +=
          bracket_drop[o] - bracket[o];

  LeaveOneOut out;
  out.without.assign(no, std::vector<double>(nz, 0.0));
  out.without_phi.assign(no, 0.0);
  const double fa_all = static_cast<double>(nz) * p.log_alpha_fa;
  for (std::size_t o = 0; o < no; ++o) {
    out.without_phi[o] = fa_all + total - bracket[o];
    for (std::size_t z = 0; z < nz; ++z) {
      const double own = (arg1[o] == static_cast<std::ptrdiff_t>(z))
                             ? bracket_drop[o]
                             : bracket[o];
      out.without[o][z] = fa_all - p.log_alpha_fa + total + delta[z] - own;
    }
  }
  return out;
}

// --------------------------------------------------------------- the filter

struct FilterResult {
  bool overlap = false;        // two paths drew one observation: rejected run
  std::vector<Path> created;   // one per seed, in seed order
  double log_prob = 0.0;       // exact probability of the realized draws
};

class HispFilter {
 public:
  HispFilter(const LinearGaussianModel& model, HispParams params,
             double sigma_v_prior, const ObsSet& obs)
      : model_(model), params_(params), sigma_v_(sigma_v_prior),
        bs_(birth_structure(model)), obs_(&obs) {}

  // Samples one path per seed. `used` marks observations held by untouched
  // paths (unavailable); seeds must be available and are reserved for their
  // own path at their step.
  FilterResult run(const std::vector<ObsId>& seeds,
                   const std::vector<std::vector<char>>& used,
                   Rng& rng) const {
    return core(seeds, used, &rng, nullptr);
  }

  // Probability of producing exactly `targets` (one per seed; each target
  // starts at its seed). Returns -inf log_prob when any forced draw has zero
  // proposal mass, references an unavailable observation, or targets
  // overlap.
  FilterResult evaluate(const std::vector<Path>& targets,
                        const std::vector<ObsId>& seeds,
                        const std::vector<std::vector<char>>& used) const {
    return core(seeds, used, nullptr, &targets);
  }

 private:
  struct Live {
    ObsId seed;
    std::vector<ObsId> hits;
    GaussianPossibility belief;
    int gap = 0;
    const Path* target = nullptr;
  };

  FilterResult core(std::vector<ObsId> seeds,
                    const std::vector<std::vector<char>>& used, Rng* rng,
                    const std::vector<Path>* targets) const {
    const int K = obs_->K();
    if (static_cast<int>(used.size()) != K)
      throw UsageError("filter: used mask has wrong length");
    std::sort(seeds.begin(), seeds.end());
    if (std::adjacent_find(seeds.begin(), seeds.end()) != seeds.end())
      throw UsageError("filter: duplicate seeds");
    for (const ObsId& s : seeds)
      if (used[s.k - 1][s.i]) throw UsageError("filter: seed not available");

    // replay: match each target to its seed
    std::vector<const Path*> target_of(seeds.size(), nullptr);
    if (targets) {
      if (targets->size() != seeds.size())
        throw UsageError("filter: one target per seed required");
      std::vector<char> taken(seeds.size(), 0);
      for (const Path& t : *targets) {
        t.validate();
        const auto it =
            std::lower_bound(seeds.begin(), seeds.end(), t.seed());
        if (it == seeds.end() || *it != t.seed())
          throw UsageError("filter: target does not start at a seed");
        const std::size_t idx = static_cast<std::size_t>(it - seeds.begin());
        if (taken[idx])
          throw UsageError("filter: two targets share a seed");
        taken[idx] = 1;
        target_of[idx] = &t;
      }
    }

    FilterResult res;
    std::vector<Live> live;
    live.reserve(seeds.size());
    std::size_t next_seed = 0;

    std::vector<int> avail;        // observation indices offered this step
    std::vector<double> gamma;     // log association possibility
    std::vector<int> chosen;       // per live path: index into avail, -1 phi
    AssocLikTable table;

    for (int k = 1; k <= K; ++k) {
      // seeds due at this step are reserved for their own paths
      avail.clear();
      const int nk = obs_->count(k);
      for (int i = 0; i < nk; ++i) {
        if (used[k - 1][i]) continue;
        bool reserved = false;
        for (std::size_t s = next_seed; s < seeds.size() && seeds[s].k == k;
             ++s)
          if (seeds[s].i == i) reserved = true;
        if (!reserved) avail.push_back(i);
      }

      if (!live.empty()) {
        const std::size_t no = live.size();
        const std::size_t nz = avail.size();
        table.logL.assign(no, std::vector<double>(nz, 0.0));
        table.logLphi.assign(no, 0.0);

        const Mat& scan = obs_->scan(k);
        for (std::size_t o = 0; o < no; ++o) {
          live[o].belief = predict(model_, live[o].belief);
          const SurvivalLog sv = survival_log(params_, live[o].gap);
          table.logLphi[o] = absence_log(params_, live[o].gap);

          Mat S = model_.H * live[o].belief.cov() * model_.H.transpose() +
                  model_.R;
          S = 0.5 * (S + S.transpose()).eval();
          Eigen::LLT<Mat> llt(S);
          if (llt.info() != Eigen::Success)
            throw NumericalError("filter: innovation covariance not SPD");
          const Vec hm = model_.H * live[o].belief.mean();
          for (std::size_t z = 0; z < nz; ++z) {
            const Vec d = scan.col(avail[z]) - hm;
            table.logL[o][z] = sv.hat_s - 0.5 * d.dot(llt.solve(d));
          }
        }

        const LeaveOneOut loo = leave_one_out(params_, table);
        chosen.assign(no, -1);
        for (std::size_t o = 0; o < no; ++o) {
          const std::size_t nopt = avail.size() + 1;  // observations + phi
          gamma.resize(nopt);
          for (std::size_t z = 0; z < avail.size(); ++z)
            gamma[z] = loo.without[o][z] + table.logL[o][z];
          gamma[avail.size()] = loo.without_phi[o] + table.logLphi[o];

          double mx = kNegInf;
          for (double g : gamma) mx = std::max(mx, g);
          for (double& g : gamma) g -= mx;
          const WaterFill wf = water_fill_log(gamma);

          std::size_t pick;
          if (rng) {
            const double u = rng->uniform01();
            double acc = 0.0;
            pick = nopt - 1;
            for (std::size_t j = 0; j < nopt; ++j) {
              acc += std::exp(wf.log_pmf[j]);
              if (u < acc) {
                pick = j;
                break;
              }
            }
          } else {
            const std::optional<ObsId> forced = live[o].target->at(k);
            if (!forced) {
              pick = nopt - 1;
            } else {
              const auto it =
                  std::find(avail.begin(), avail.end(), forced->i);
              if (it == avail.end()) {
                res.log_prob = kNegInf;
                return finalize(res, live);
              }
              pick = static_cast<std::size_t>(it - avail.begin());
            }
          }
          res.log_prob += wf.log_pmf[pick];
          if (res.log_prob == kNegInf) return finalize(res, live);
          chosen[o] = pick == avail.size() ? -1 : static_cast<int>(pick);
        }

        // whole-run rejection when two paths drew the same observation
        for (std::size_t a = 0; a < no; ++a)
          for (std::size_t b = a + 1; b < no; ++b)
            if (chosen[a] >= 0 && chosen[a] == chosen[b]) {
              if (targets) {
                res.log_prob = kNegInf;
                return finalize(res, live);
              }
              res.overlap = true;
              return finalize(res, live);
            }

        for (std::size_t o = 0; o < no; ++o) {
          if (chosen[o] < 0) {
            live[o].gap += 1;
          } else {
            const ObsId id{k, avail[static_cast<std::size_t>(chosen[o])]};
            UpdateResult ur = update(model_, live[o].belief, obs_->z(id));
            live[o].belief = std::move(ur.posterior);
            live[o].hits.push_back(id);
            live[o].gap = 0;
          }
        }
      }

      // activate seeds due at this step
      while (next_seed < seeds.size() && seeds[next_seed].k == k) {
        Live nw;
        nw.seed = seeds[next_seed];
        nw.hits = {nw.seed};
        nw.belief = birth_first_update(
            model_, bs_, birth_belief(bs_, sigma_v_), obs_->z(nw.seed));
        nw.gap = 0;
        nw.target = target_of[next_seed];
        live.push_back(std::move(nw));
        ++next_seed;
      }
    }

    return finalize(res, live);
  }

  static FilterResult finalize(FilterResult res, const std::vector<Live>& live) {
    res.created.clear();
    if (!res.overlap && res.log_prob != kNegInf)
      for (const Live& l : live) res.created.push_back(Path{l.hits});
    return res;
  }

  LinearGaussianModel model_;
  HispParams params_;
  double sigma_v_;
  BirthStructure bs_;
  const ObsSet* obs_;
};

}  // namespace posmooth
