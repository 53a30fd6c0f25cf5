#pragma once

// Pairwise observation consistency: the credibility that an observation at a
// later step originates from the same object as an observation at an earlier
// step, computed in closed form by pushing the single-observation posterior
// through l prediction steps. Pairs are stored only up to the lag at which
// the per-step absence factor alone drops below a threshold tau'; everything
// beyond is credibility zero.

#include "posmooth/common.hpp"
#include "posmooth/multiobject.hpp"
#include "posmooth/state_filter.hpp"

#include <algorithm>
#include <ostream>
#include <vector>

namespace posmooth {

class ConsistencyIndex {
 public:
  ConsistencyIndex(const ObsSet& obs, const LinearGaussianModel& model,
                   double sigma_v_prior, double log_a_nd, double tau_prime)
      : obs_(&obs) {
    model.validate();
    const int K = obs.K();

    // largest lag with a_nd^l >= tau'
    const double log_tau = std::log(tau_prime);
    lmax_ = 0;
    for (int l = 1; l <= K - 1; ++l) {
      if (l * log_a_nd >= log_tau - 1e-12)
        lmax_ = l;
      else
        break;
    }

    // Lag-l mean map A_l and innovation spread S_l, identical for every
    // conditioning observation: the single-observation posterior has a fixed
    // z-independent covariance.
    const BirthStructure bs = birth_structure(model);
    const Eigen::Index dx = model.dx(), dz = model.dz();
    Mat m_map = Mat::Zero(dx, dz);  // z -> posterior mean
    m_map.topRows(bs.dp) = bs.Hp_inv;
    Mat sigma = Mat::Zero(dx, dx);
    sigma.topLeftCorner(bs.dp, bs.dp) =
        bs.Hp_inv * model.R * bs.Hp_inv.transpose();
    if (bs.dv > 0)
      sigma.bottomRightCorner(bs.dv, bs.dv) =
          sigma_v_prior * sigma_v_prior * Mat::Identity(bs.dv, bs.dv);

    std::vector<Mat> A(lmax_ + 1), Sinv(lmax_ + 1);
    Mat powF = Mat::Identity(dx, dx);
    for (int l = 1; l <= lmax_; ++l) {
      sigma = (model.F * sigma * model.F.transpose() + model.Q).eval();
      powF = (model.F * powF).eval();
      A[l] = model.H * powF * m_map;
      Mat S = model.H * sigma * model.H.transpose() + model.R;
      S = 0.5 * (S + S.transpose()).eval();
      Eigen::LLT<Mat> llt(S);
      if (llt.info() != Eigen::Success)
        throw NumericalError("ConsistencyIndex: lag spread not SPD");
      Sinv[l] = llt.solve(Mat::Identity(dz, dz));
    }

    fwd_.assign(obs.total(), {});
    marginal_.assign(obs.total(), kNegInf);
    for (int k = 1; k <= K; ++k) {
      const Mat& Zk = obs.scan(k);
      const int nk = static_cast<int>(Zk.cols());
      if (nk == 0) continue;
      for (int l = 1; l <= std::min(lmax_, K - k); ++l) {
        const Mat& Zl = obs.scan(k + l);
        const int nl = static_cast<int>(Zl.cols());
        if (nl == 0) continue;
        const Mat B = A[l] * Zk;  // predicted positions of scan-k origins
        const double base = (l - 1) * log_a_nd;
        for (int i = 0; i < nk; ++i) {
          const int g = gid_base(k) + i;
          auto& lst = fwd_[g];
          const Mat D = Zl.colwise() - B.col(i);
          const Vec qf = (D.cwiseProduct(Sinv[l] * D)).colwise().sum();
          for (int j = 0; j < nl; ++j) {
            const double lc = base - 0.5 * qf(j);
            lst.emplace_back(gid_base(k + l) + j, lc);
            marginal_[g] = std::max(marginal_[g], lc);
          }
        }
      }
    }
  }

  int lmax() const { return lmax_; }

  // Credibility (log) that `later` continues `earlier`; -inf when the lag
  // exceeds the stored window.
  double pair_log(ObsId earlier, ObsId later) const {
    if (!(earlier.k < later.k))
      throw UsageError("pair_log: arguments must be time-ordered");
    if (later.k - earlier.k > lmax_) return kNegInf;
    const auto& lst = fwd_[obs_->gid(earlier)];
    const int target = obs_->gid(later);
    auto it = std::lower_bound(
        lst.begin(), lst.end(), target,
        [](const std::pair<int, double>& e, int t) { return e.first < t; });
    if (it == lst.end() || it->first != target) return kNegInf;
    return it->second;
  }

  // Best forward continuation credibility (log); -inf for observations with
  // no successor in range (e.g. the final scan).
  double marginal_log(ObsId z) const { return marginal_[obs_->gid(z)]; }

  // Consistency of a free observation with a path: best pair credibility
  // against any assignment of the path at a different step.
  double obs_path_log(ObsId z, const Path& p) const {
    double best = kNegInf;
    for (const ObsId& h : p.hits) {
      if (h.k == z.k) continue;
      if (std::abs(h.k - z.k) > lmax_) continue;
      best = std::max(best,
                      h.k < z.k ? pair_log(h, z) : pair_log(z, h));
    }
    return best;
  }

  // Consistency of two paths: best cross-pair credibility.
  double path_path_log(const Path& p, const Path& q) const {
    double best = kNegInf;
    for (const ObsId& h : p.hits) best = std::max(best, obs_path_log(h, q));
    return best;
  }

  // Tabular dump: k i k' i' credibility (linear).
  void dump(std::ostream& os) const {
    os.precision(17);
    for (int g = 0; g < obs_->total(); ++g) {
      const ObsId a = obs_->from_gid(g);
      for (const auto& [succ, lc] : fwd_[g]) {
        const ObsId b = obs_->from_gid(succ);
        os << a.k << ' ' << a.i << ' ' << b.k << ' ' << b.i << ' '
           << std::exp(lc) << '\n';
      }
    }
  }

 private:
  int gid_base(int k) const { return obs_->scan_offset(k); }

  const ObsSet* obs_;
  int lmax_ = 0;
  std::vector<std::vector<std::pair<int, double>>> fwd_;
  std::vector<double> marginal_;
};

}  // namespace posmooth
