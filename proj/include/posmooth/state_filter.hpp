#pragma once

// Single-object filtering with Gaussian possibility functions.
//
// The linear-Gaussian recursion is algebraically identical to the Kalman
// filter; the marginal factor produced by an update is the un-normalized
// Gaussian possibility of the innovation (its log is always <= 0), not a
// density value. A particle analogue is provided for non-linear models:
// weights are combined multiplicatively and re-normalized by their maximum,
// and there is no resampling step.

#include "posmooth/common.hpp"
#include "posmooth/possibility.hpp"

#include <utility>
#include <vector>

namespace posmooth {

struct LinearGaussianModel {
  Mat F;  // transition
  Mat Q;  // transition spread
  Mat H;  // observation
  Mat R;  // observation spread

  Eigen::Index dx() const { return F.rows(); }
  Eigen::Index dz() const { return H.rows(); }

  void validate() const {
    if (F.rows() != F.cols()) throw UsageError("model: F must be square");
    if (Q.rows() != F.rows() || Q.cols() != F.cols())
      throw UsageError("model: Q/F dimension mismatch");
    if (H.cols() != F.rows()) throw UsageError("model: H/F dimension mismatch");
    if (R.rows() != H.rows() || R.cols() != H.rows())
      throw UsageError("model: R/H dimension mismatch");
  }
};

// ------------------------------------------------------------------ predict

// Sup-convolution of the posterior with the transition possibility
// N(x; F x', Q): mean F m, spread F P F^T + Q.
inline GaussianPossibility predict(const LinearGaussianModel& model,
                                   const GaussianPossibility& belief) {
  if (belief.dim() != model.dx())
    throw UsageError("predict: belief dimension mismatch");
  Mat P = model.F * belief.cov() * model.F.transpose() + model.Q;
  P = 0.5 * (P + P.transpose()).eval();
  return GaussianPossibility(model.F * belief.mean(), std::move(P));
}

// ------------------------------------------------------------------- update

struct UpdateResult {
  GaussianPossibility posterior;
  double log_marginal = 0.0;  // log sup_x l(z|x) f(x), always <= 0
};

inline UpdateResult update(const LinearGaussianModel& model,
                           const GaussianPossibility& belief, const Vec& z) {
  if (belief.dim() != model.dx())
    throw UsageError("update: belief dimension mismatch");
  if (z.size() != model.dz())
    throw UsageError("update: observation dimension mismatch");

  const Mat& P = belief.cov();
  Mat S = model.H * P * model.H.transpose() + model.R;
  S = 0.5 * (S + S.transpose()).eval();
  Eigen::LLT<Mat> llt(S);
  if (llt.info() != Eigen::Success)
    throw NumericalError("update: innovation covariance not SPD");

  const Vec innov = z - model.H * belief.mean();
  const Mat K = llt.solve(model.H * P.transpose()).transpose();

  UpdateResult out;
  out.log_marginal = -0.5 * innov.dot(llt.solve(innov));

  const Mat I = Mat::Identity(model.dx(), model.dx());
  const Mat A = I - K * model.H;
  // Joseph form keeps the posterior spread symmetric positive definite.
  Mat Ppost = A * P * A.transpose() + K * model.R * K.transpose();
  Ppost = 0.5 * (Ppost + Ppost.transpose()).eval();
  out.posterior = GaussianPossibility(belief.mean() + K * innov,
                                      std::move(Ppost));
  return out;
}

// -------------------------------------------------------------- birth prior
//
// A newly appeared object carries no position information (credibility 1
// everywhere) and a Gaussian velocity possibility with mean zero and spread
// sigma_v^2 I. This family is closed under prediction when the model has the
// block structure
//   x = (p, v),  F = [[F_pp, F_pv], [0, F_vv]],  H = [H_p, 0],
// with H_p square invertible: the position stays uninformative and only the
// velocity spread evolves. The first observation then conditions the prior
// exactly, giving a full Gaussian possibility.

struct BirthStructure {
  Eigen::Index dp = 0;  // observed (position) block size
  Eigen::Index dv = 0;  // remaining (velocity) block size
  Mat Hp_inv;
  Mat F_vv;
  Mat Q_vv;  // velocity block of Q (its sup-marginal over position noise)
};

inline BirthStructure birth_structure(const LinearGaussianModel& model) {
  model.validate();
  BirthStructure s;
  s.dp = model.dz();
  s.dv = model.dx() - s.dp;
  if (s.dv < 0) throw UsageError("birth_structure: dz exceeds dx");
  const Mat Hp = model.H.leftCols(s.dp);
  if (s.dv > 0 && model.H.rightCols(s.dv).cwiseAbs().maxCoeff() > 0.0)
    throw UsageError("birth_structure: H must observe the leading block only");
  Eigen::FullPivLU<Mat> lu(Hp);
  if (!lu.isInvertible())
    throw UsageError("birth_structure: observed block of H not invertible");
  if (s.dv > 0 &&
      model.F.bottomLeftCorner(s.dv, s.dp).cwiseAbs().maxCoeff() > 0.0)
    throw UsageError("birth_structure: F couples velocity back to position");
  s.Hp_inv = lu.inverse();
  s.F_vv = s.dv > 0 ? model.F.bottomRightCorner(s.dv, s.dv) : Mat(0, 0);
  s.Q_vv = s.dv > 0 ? model.Q.bottomRightCorner(s.dv, s.dv) : Mat(0, 0);
  return s;
}

// Velocity spread of the still-unlocalized belief.
struct BirthBelief {
  Mat Sv;
};

inline BirthBelief birth_belief(const BirthStructure& s, double sigma_v) {
  BirthBelief b;
  b.Sv = sigma_v * sigma_v * Mat::Identity(s.dv, s.dv);
  return b;
}

inline BirthBelief birth_predict(const BirthStructure& s,
                                 const BirthBelief& b) {
  BirthBelief out;
  if (s.dv > 0)
    out.Sv = (s.F_vv * b.Sv * s.F_vv.transpose() + s.Q_vv).eval();
  else
    out.Sv = Mat(0, 0);
  return out;
}

// Conditioning the unlocalized belief on its first observation. The marginal
// factor is exactly 1 (the prior puts credibility 1 on the matching
// position), so only the posterior is returned.
inline GaussianPossibility birth_first_update(const LinearGaussianModel& model,
                                              const BirthStructure& s,
                                              const BirthBelief& b,
                                              const Vec& z) {
  if (z.size() != model.dz())
    throw UsageError("birth_first_update: observation dimension mismatch");
  Vec mean = Vec::Zero(model.dx());
  mean.head(s.dp) = s.Hp_inv * z;
  Mat cov = Mat::Zero(model.dx(), model.dx());
  cov.topLeftCorner(s.dp, s.dp) =
      s.Hp_inv * model.R * s.Hp_inv.transpose();
  if (s.dv > 0) cov.bottomRightCorner(s.dv, s.dv) = b.Sv;
  return GaussianPossibility(std::move(mean), std::move(cov));
}

// --------------------------------------------------------- particle analogue

// Weighted particles approximating a possibility function; weights are kept
// in log space with max weight 0 after normalization.
struct ParticleBelief {
  Mat X;        // dx x N
  Vec log_w;    // N

  Eigen::Index count() const { return X.cols(); }

  void renormalize() {
    const double m = log_w.maxCoeff();
    if (m == kNegInf)
      throw NumericalError("particles: degenerate belief (all weights zero)");
    log_w.array() -= m;
  }
};

// Particles drawn from the Gaussian as a sampling distribution, weighted by
// the possibility values at the sampled points.
inline ParticleBelief particles_from_gaussian(const GaussianPossibility& g,
                                              Eigen::Index n, Rng& rng) {
  if (n <= 0) throw UsageError("particles_from_gaussian: need n > 0");
  Eigen::LLT<Mat> llt(g.cov());
  if (llt.info() != Eigen::Success)
    throw NumericalError("particles_from_gaussian: covariance not SPD");
  const Mat L = llt.matrixL();
  ParticleBelief out;
  out.X.resize(g.dim(), n);
  out.log_w.resize(n);
  Vec xi(g.dim());
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index d = 0; d < g.dim(); ++d) xi(d) = rng.normal();
    out.X.col(j) = g.mean() + L * xi;
    // log possibility at the sample, without re-factorizing
    out.log_w(j) = -0.5 * xi.squaredNorm();
  }
  out.renormalize();
  return out;
}

// Moves every particle through the transition sampled as a probability
// distribution; weights are unchanged (transition used as its own proposal),
// then re-normalized by the maximum.
inline void particle_predict(const LinearGaussianModel& model,
                             ParticleBelief& belief, Rng& rng) {
  if (belief.X.rows() != model.dx())
    throw UsageError("particle_predict: dimension mismatch");
  Eigen::LLT<Mat> llt(model.Q);
  if (llt.info() != Eigen::Success)
    throw NumericalError("particle_predict: Q not SPD");
  const Mat L = llt.matrixL();
  Vec xi(model.dx());
  for (Eigen::Index j = 0; j < belief.count(); ++j) {
    for (Eigen::Index d = 0; d < model.dx(); ++d) xi(d) = rng.normal();
    belief.X.col(j) = model.F * belief.X.col(j) + L * xi;
  }
  belief.renormalize();
}

// Multiplies weights by the observation possibility; the marginal estimate is
// the maximum weight before re-normalization.
inline double particle_update(const LinearGaussianModel& model,
                              ParticleBelief& belief, const Vec& z) {
  if (z.size() != model.dz())
    throw UsageError("particle_update: observation dimension mismatch");
  Eigen::LLT<Mat> llt(model.R);
  if (llt.info() != Eigen::Success)
    throw NumericalError("particle_update: R not SPD");
  for (Eigen::Index j = 0; j < belief.count(); ++j) {
    const Vec innov = z - model.H * belief.X.col(j);
    belief.log_w(j) += -0.5 * innov.dot(llt.solve(innov));
  }
  const double log_marginal = belief.log_w.maxCoeff();
  if (log_marginal == kNegInf)
    throw NumericalError("particles: degenerate belief (all weights zero)");
  belief.log_w.array() -= log_marginal;
  return log_marginal;
}

}  // namespace posmooth
