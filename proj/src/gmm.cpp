#include "strand/gmm.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Cholesky>

namespace strand {

void GmmParams::validate() const {
  if (std::abs(weight[0] + weight[1] - 1.0) > 1e-9)
    throw std::invalid_argument("GmmParams: weights must sum to 1");
  for (int k = 0; k < 2; ++k) {
    if (!(weight[k] > 0.0 && weight[k] < 1.0))
      throw std::invalid_argument("GmmParams: weights must lie in (0,1)");
    if ((cov[k] - cov[k].transpose()).cwiseAbs().maxCoeff() > 1e-9)
      throw std::invalid_argument("GmmParams: covariance not symmetric");
    Eigen::SelfAdjointEigenSolver<Mat3> es(cov[k]);
    if (es.eigenvalues().minCoeff() < 0.5 * kCovRegularizer)
      throw std::invalid_argument("GmmParams: covariance below regularization floor");
  }
}

GmmParams m_step(const Image& img, const MembershipField& P) {
  if (img.width != P.width || img.height != P.height)
    throw std::invalid_argument("m_step: image / membership dimensions differ");
  const Eigen::Index n = img.n_pixels();
  const ArrX w1 = P.values;
  const ArrX w2 = 1.0 - P.values;
  const Scalar n1 = w1.sum();
  const Scalar n2 = w2.sum();
  if (n1 < 1e-9 || n2 < 1e-9)
    throw std::invalid_argument("m_step: degenerate cluster (membership all zero or all one)");

  GmmParams out;
  out.weight[0] = n1 / static_cast<Scalar>(n);
  out.weight[1] = n2 / static_cast<Scalar>(n);
  for (int k = 0; k < 2; ++k) {
    const ArrX& w = (k == 0) ? w1 : w2;
    const Scalar wsum = (k == 0) ? n1 : n2;
    const Vec3 mu = (img.pixels.transpose() * w.matrix()) / wsum;
    auto centered = img.pixels.rowwise() - mu.transpose();
    Mat3 cov = (centered.transpose() * w.matrix().asDiagonal() * centered) / wsum;
    cov += kCovRegularizer * Mat3::Identity();
    out.mean[k] = mu;
    out.cov[k] = 0.5 * (cov + cov.transpose());
  }
  return out;
}

MembershipField e_step(const Image& img, const GmmParams& gmm) {
  gmm.validate();
  Eigen::LLT<Mat3> llt[2];
  Scalar log_norm[2];
  for (int k = 0; k < 2; ++k) {
    llt[k].compute(gmm.cov[k]);
    if (llt[k].info() != Eigen::Success)
      throw std::invalid_argument("e_step: covariance not positive definite");
    const Scalar log_det =
        2.0 * llt[k].matrixL().toDenseMatrix().diagonal().array().log().sum();
    log_norm[k] = std::log(gmm.weight[k]) - 0.5 * log_det;
    // The common (2*pi)^{-3/2} factor cancels in the ratio.
  }

  MembershipField out(img.width, img.height);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 3> c1 = img.pixels.rowwise() - gmm.mean[0].transpose();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 3> c2 = img.pixels.rowwise() - gmm.mean[1].transpose();
  // Whiten: rows become L^{-1} (x - mu); quadratic form is the row norm.
  llt[0].matrixL().solveInPlace(c1.transpose());
  llt[1].matrixL().solveInPlace(c2.transpose());
  const ArrX q1 = c1.rowwise().squaredNorm().array();
  const ArrX q2 = c2.rowwise().squaredNorm().array();
  // P = sigmoid(log a1 p1 - log a2 p2), numerically stable for any separation.
  const ArrX margin = (log_norm[0] - 0.5 * q1) - (log_norm[1] - 0.5 * q2);
  out.values = 1.0 / (1.0 + (-margin).exp());
  return out;
}

Scalar image_loss(const MembershipField& P, const MembershipField& P_new) {
  if (P.width != P_new.width || P.height != P_new.height)
    throw std::invalid_argument("image_loss: field dimensions differ");
  const ArrX p = P.values.min(1.0 - kProbClamp).max(kProbClamp);
  const ArrX q = P_new.values.min(1.0 - kProbClamp).max(kProbClamp);
  return -(p * q + (1.0 - p) * (1.0 - q)).log().sum();
}

}  // namespace strand
