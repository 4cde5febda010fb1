#pragma once

#include "strand/gmm.hpp"
#include "strand/rope.hpp"

namespace strand {

/// Pixel-wise combination of the per-segment fields exp(-d_j^2/sigma^2).
/// `hard` is the plain maximum; `smooth` is a temperature-controlled softmax
/// average, q_j = exp(P_j/tau) / sum_k exp(P_k/tau), P = sum_j q_j P_j, which
/// stays in [0,1], matches the hard value to ~tau precision, and is
/// differentiable across segment Voronoi boundaries.
enum class MaxMode { hard, smooth };

inline constexpr Scalar kSmoothTau = 0.05;
/// Segments farther than this many sigmas contribute < 2.4e-16 to a pixel and
/// are culled; field values there fall below the loss clamp anyway.
inline constexpr Scalar kCullRadiusSigmas = 6.0;

MembershipField soft_render(const RopeState& state, Scalar sigma, int width, int height,
                            MaxMode mode = MaxMode::hard, Scalar tau = kSmoothTau);

struct ObjectiveConfig {
  MaxMode mode = MaxMode::smooth;
  Scalar tau = kSmoothTau;
  bool clip_occlusion = false;
  bool want_gradient = true;
  int threads = 1;
};

using ClipMask = Eigen::Array<bool, Eigen::Dynamic, 1>;

struct ObjectiveEval {
  Scalar loss = 0.0;       // clip-masked sum when clipping is active
  Scalar full_loss = 0.0;  // unmasked whole-image sum
  Mat2X grad_points;       // 2 x N
  Scalar grad_sigma = 0.0;
  ClipMask clip_mask;      // true = pixel contribution zeroed
};

/// Membership-agreement objective sum_px -log[P*Pn + (1-P)(1-Pn)] at fixed
/// P_new, with analytic gradients through the renderer to the chain points
/// and sigma. With clip_occlusion, pixels where P_new < 0.5 and P > P_new are
/// dropped from gradient and masked loss (occluded rope pixels keep their
/// state). `frozen_mask`, when given, replaces the recomputed clip mask so a
/// line search evaluates a fixed objective.
ObjectiveEval gmm_objective(const RopeState& state, Scalar sigma, const MembershipField& P_new,
                            const ObjectiveConfig& cfg, const ClipMask* frozen_mask = nullptr);

/// Baseline: sum_px |x - P*mu1 - (1-P)*mu2|^2 with the cluster means fixed.
ObjectiveEval l2_objective(const RopeState& state, Scalar sigma, const Image& img,
                           const Vec3& mu1, const Vec3& mu2, const ObjectiveConfig& cfg);

struct ImageLossGrad {
  Mat2X grad_points;
  Scalar grad_sigma = 0.0;
  Scalar loss = 0.0;
};

/// One EM alternation at the current state (render, M step, E step), then
/// loss and gradients with the resulting P_new held constant.
ImageLossGrad image_loss_grad(const RopeState& state, Scalar sigma, const Image& img,
                              const ObjectiveConfig& cfg);

/// L2 baseline loss with cluster means from an M step at the current render.
Scalar l2_baseline_loss(const RopeState& state, Scalar sigma, const Image& img,
                        MaxMode mode = MaxMode::smooth);

}  // namespace strand
