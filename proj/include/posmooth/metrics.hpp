#pragma once

// Evaluation of an estimated track set against the generating scenario.

#include "posmooth/common.hpp"
#include "posmooth/multiobject.hpp"
#include "posmooth/simulate.hpp"

#include <algorithm>
#include <map>
#include <vector>

namespace posmooth {

struct Metrics {
  // fraction of target-generated observations placed in a track whose
  // plurality label matches the observation's generating target
  double association_accuracy = 0.0;
  int n_target_obs = 0;
  // estimated minus detected-at-least-once true track count
  int track_count_error = 0;
  int n_true_tracks = 0;
  int n_est_tracks = 0;
  // unassigned observations interpreted as declared clutter
  double clutter_precision = 1.0;
  double clutter_recall = 1.0;
};

inline Metrics compute_metrics(const Scenario& sc, const TrackSet& est) {
  Metrics m;
  m.n_est_tracks = static_cast<int>(est.size());
  for (const SimTarget& tg : sc.targets)
    if (!tg.detections.empty()) ++m.n_true_tracks;
  m.track_count_error = m.n_est_tracks - m.n_true_tracks;

  const auto label_of = [&](const ObsId& id) {
    return sc.labels[static_cast<std::size_t>(sc.obs.gid(id))];
  };

  // plurality label per estimated track; clutter hits carry no vote
  std::vector<int> plurality(est.size(), -1);
  for (std::size_t t = 0; t < est.size(); ++t) {
    std::map<int, int> votes;
    for (const ObsId& h : est[t].path.hits) {
      const int lbl = label_of(h);
      if (lbl >= 0) ++votes[lbl];
    }
    int best = -1, best_n = 0;
    for (const auto& [lbl, n] : votes)
      if (n > best_n) {
        best = lbl;
        best_n = n;
      }
    plurality[t] = best;
  }

  std::vector<int> assigned_track(static_cast<std::size_t>(sc.obs.total()),
                                  -1);
  for (std::size_t t = 0; t < est.size(); ++t)
    for (const ObsId& h : est[t].path.hits)
      assigned_track[static_cast<std::size_t>(sc.obs.gid(h))] =
          static_cast<int>(t);

  int correct = 0;
  int true_clutter = 0, declared_clutter = 0;
  int declared_and_true = 0;
  for (int g = 0; g < sc.obs.total(); ++g) {
    const int lbl = sc.labels[static_cast<std::size_t>(g)];
    const int tr = assigned_track[static_cast<std::size_t>(g)];
    if (lbl >= 0) {
      ++m.n_target_obs;
      if (tr >= 0 && plurality[static_cast<std::size_t>(tr)] == lbl)
        ++correct;
    } else {
      ++true_clutter;
    }
    if (tr < 0) {
      ++declared_clutter;
      if (lbl < 0) ++declared_and_true;
    }
  }
  m.association_accuracy =
      m.n_target_obs > 0
          ? static_cast<double>(correct) / m.n_target_obs
          : 1.0;
  m.clutter_precision =
      declared_clutter > 0
          ? static_cast<double>(declared_and_true) / declared_clutter
          : 1.0;
  m.clutter_recall =
      true_clutter > 0
          ? static_cast<double>(declared_and_true) / true_clutter
          : 1.0;
  return m;
}

}  // namespace posmooth
