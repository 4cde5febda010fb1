#pragma once

#include <vector>

#include "strand/image.hpp"
#include "strand/rope.hpp"

namespace strand {

enum class BackgroundKind { solid, two_tone, checker };

struct Distractor {
  enum class Shape { circle, rect } shape = Shape::circle;
  Vec2 center = Vec2::Zero();  // pixels
  Scalar size = 8.0;           // radius / half-extent, pixels
  Vec3 color = Vec3(0.2, 0.4, 0.8);
};

/// Opaque bar drawn over everything else (robot-arm stand-in).
struct OccluderBar {
  Vec2 center = Vec2::Zero();
  Scalar length = 60.0;
  Scalar width = 10.0;
  Scalar angle = 0.0;  // radians
  Vec3 color = Vec3(0.45, 0.45, 0.5);
};

/// Visual scene description covering the robustness suite: bicolor ropes,
/// non-uniform backgrounds, distractor objects, occlusion, lighting gradients.
struct SceneStyle {
  std::vector<Vec3> rope_colors = {Vec3(0.85, 0.1, 0.1)};  // 2 entries alternate per segment
  int color_period = 8;                                    // segments per color block
  Scalar rope_width = 4.0;                                 // pixels, >= 1
  BackgroundKind background = BackgroundKind::solid;
  Vec3 bg_color = Vec3(0.95, 0.95, 0.95);
  Vec3 bg_color2 = Vec3(0.35, 0.35, 0.38);  // two-tone / checker partner
  bool bg_split_vertical = true;            // two-tone split axis
  int checker_cells = 8;
  std::vector<Distractor> distractors;
  std::vector<OccluderBar> occluders;
  bool lighting_gradient = false;   // multiplicative gain ramp across the image
  Scalar lighting_lo = 0.6;
  Scalar lighting_hi = 1.1;
};

/// Rasterizes the rope (image-frame state) as anti-aliased capsule strokes
/// over the background; distractors under the rope, occluders on top.
/// Supersampled 4x4 per pixel.
Image render_scene(const RopeState& state, const SceneStyle& style, int width, int height);

/// Binary rope mask at the same supersampling, no occluders/distractors;
/// reference for mask-quality tests.
Image render_mask(const RopeState& state, Scalar rope_width, int width, int height);

}  // namespace strand
