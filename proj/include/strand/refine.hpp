#pragma once

#include <vector>

#include "strand/soft_render.hpp"

namespace strand {

enum class LossKind { gmm, l2 };

/// Refinement schedule: per EM alternation the membership target P_new is
/// recomputed (M step, E step), then up to max_grad_steps backtracking
/// gradient steps move the chain points (and optionally sigma).
struct RenderConfig {
  Scalar sigma = 2.0;  // px; stroke softness
  int em_alternations = 5;
  int max_grad_steps = 50;
  Scalar step_init_px = 0.5;  // backtracking line search start, halved on failure
  int max_backtracks = 12;
  bool clip_occlusion = true;
  bool optimize_sigma = false;
  Scalar min_sigma = 0.3;
  MaxMode mode = MaxMode::smooth;
  Scalar tau = kSmoothTau;
  LossKind loss = LossKind::gmm;
  bool coarse_to_fine = false;        // refine, subdivide, repeat
  Eigen::Index target_segments = 0;   // 0 = stay at the init resolution
  bool reparameterize = true;         // arclength-resample after each level
  int threads = 1;
};

struct RefineRound {
  Eigen::Index level_segments = 0;
  int alternation = 0;
  Scalar loss_before = 0.0;
  Scalar loss_after = 0.0;
  int accepted_steps = 0;
  Scalar sigma = 0.0;
};

struct RefineResult {
  RopeState state;
  Scalar final_loss = 0.0;  // whole-image loss of the chosen kind
  Scalar final_sigma = 0.0;
  std::vector<RefineRound> rounds;
};

RefineResult refine_state(const RopeState& init, const Image& img, const RenderConfig& cfg);

/// Whole-image membership-agreement loss of a state against an image: render,
/// M step, E step, Eq-4 sum. The curriculum's frame score.
Scalar frame_image_loss(const RopeState& state, Scalar sigma, const Image& img,
                        MaxMode mode = MaxMode::smooth, Scalar tau = kSmoothTau);

}  // namespace strand
