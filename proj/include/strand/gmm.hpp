#pragma once

#include "strand/image.hpp"
#include "strand/types.hpp"

namespace strand {

/// Per-pixel membership weight to the rope color cluster, values in [0, 1].
/// Same storage convention as Image (row-major pixel index v * width + u).
struct MembershipField {
  int width = 0;
  int height = 0;
  ArrX values;

  MembershipField() = default;
  MembershipField(int w, int h) : width(w), height(h) { values.setZero(w * h); }
  Scalar& at(int u, int v) { return values(static_cast<Eigen::Index>(v) * width + u); }
  Scalar at(int u, int v) const { return values(static_cast<Eigen::Index>(v) * width + u); }
};

/// Two-component Gaussian mixture in RGB space. Component 1 is the rope
/// cluster, component 2 the background.
struct GmmParams {
  Scalar weight[2] = {0.5, 0.5};
  Vec3 mean[2] = {Vec3::Zero(), Vec3::Zero()};
  Mat3 cov[2] = {Mat3::Identity(), Mat3::Identity()};

  void validate() const;  // throws on non-normalized weights / non-PSD covariance
};

inline constexpr Scalar kCovRegularizer = 1e-4;  // added to covariance diagonals
inline constexpr Scalar kProbClamp = 1e-6;       // probability clamp in the image loss

/// Mixture update from weighted moments: w1 = P, w2 = 1 - P. Covariances get
/// + kCovRegularizer * I. Throws if either cluster has (near) zero total
/// weight.
GmmParams m_step(const Image& img, const MembershipField& P);

/// New membership weights P = a1 p1(x) / (a1 p1(x) + a2 p2(x)) with
/// full-covariance Gaussian densities, evaluated in log space.
MembershipField e_step(const Image& img, const GmmParams& gmm);

/// Sum over pixels of -log[P*Pn + (1-P)(1-Pn)], both fields clamped to
/// [kProbClamp, 1-kProbClamp].
Scalar image_loss(const MembershipField& P, const MembershipField& P_new);

}  // namespace strand
