#pragma once

#include "strand/rng.hpp"
#include "strand/rope.hpp"

namespace strand {

/// Evaluates a clamped cubic b-spline through the given control points at
/// parameter u in [0, 1].
Vec2 bspline_eval(const Mat2X& control_points, Scalar u);

/// Cubic clamped b-spline through six control points, densely evaluated,
/// then arclength-resampled to n_points equidistant points.
RopeState sample_bspline(const Mat2X& control_points, Eigen::Index n_points,
                         Eigen::Index dense_samples = 16384);

/// Random rope generator: control points drawn uniformly in a box, rejected
/// until the resampled curve length falls inside [min_length, max_length].
/// Curves with kinks tighter than the chain resolution (short chords between
/// equidistant points) are rejected too; they are not representable as a
/// 64-segment rope.
struct RopeGenConfig {
  Eigen::Index n_points = 65;
  Scalar min_length = 0.63;  // meters
  Scalar max_length = 1.25;
  Vec2 box_lo = Vec2(-0.35, -0.35);
  Vec2 box_hi = Vec2(0.35, 0.35);
  Scalar min_chord_ratio = -1.0;  // min/mean chord gap; < 0 picks a resolution-aware default
  int max_rejects = 1000;
};

RopeState random_rope(Rng& rng, const RopeGenConfig& cfg = {});

}  // namespace strand
