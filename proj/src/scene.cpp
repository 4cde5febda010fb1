#include "strand/scene.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace strand {

namespace {

struct Segment {
  Vec2 a, b;
  Vec2 dir;      // b - a
  Scalar len2;
  Vec3 color;
};

Scalar dist2_to_segment(const Vec2& p, const Segment& s) {
  if (s.len2 <= 0.0) return (p - s.a).squaredNorm();
  const Scalar t = std::clamp((p - s.a).dot(s.dir) / s.len2, Scalar(0), Scalar(1));
  return (p - s.a - t * s.dir).squaredNorm();
}

bool inside_bar(const Vec2& p, const OccluderBar& bar) {
  const Scalar c = std::cos(bar.angle), s = std::sin(bar.angle);
  const Vec2 d = p - bar.center;
  const Scalar x = c * d.x() + s * d.y();
  const Scalar y = -s * d.x() + c * d.y();
  return std::abs(x) <= 0.5 * bar.length && std::abs(y) <= 0.5 * bar.width;
}

Vec3 background_at(const SceneStyle& st, Scalar x, Scalar y, int w, int h) {
  switch (st.background) {
    case BackgroundKind::solid:
      return st.bg_color;
    case BackgroundKind::two_tone: {
      const bool first = st.bg_split_vertical ? (x < 0.5 * w) : (y < 0.5 * h);
      return first ? st.bg_color : st.bg_color2;
    }
    case BackgroundKind::checker: {
      const Scalar cell_w = static_cast<Scalar>(w) / st.checker_cells;
      const Scalar cell_h = static_cast<Scalar>(h) / st.checker_cells;
      const int cx = static_cast<int>(std::floor(x / cell_w));
      const int cy = static_cast<int>(std::floor(y / cell_h));
      return ((cx + cy) & 1) == 0 ? st.bg_color : st.bg_color2;
    }
  }
  return st.bg_color;
}

}  // namespace

Image render_scene(const RopeState& state, const SceneStyle& style, int width, int height) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("render_scene: zero-size image");
  if (state.frame != Frame::image)
    throw std::invalid_argument("render_scene: state must be in image frame");
  if (style.rope_width < 1.0) throw std::invalid_argument("render_scene: rope_width must be >= 1 px");
  state.validate();

  std::vector<Segment> segs;
  segs.reserve(static_cast<std::size_t>(state.n_segments()));
  for (Eigen::Index i = 0; i < state.n_segments(); ++i) {
    Segment s;
    s.a = state.points.col(i);
    s.b = state.points.col(i + 1);
    s.dir = s.b - s.a;
    s.len2 = s.dir.squaredNorm();
    const std::size_t block = static_cast<std::size_t>(i) / std::max(1, style.color_period);
    s.color = style.rope_colors[block % std::max<std::size_t>(1, style.rope_colors.size())];
    segs.push_back(s);
  }
  const Scalar radius = 0.5 * style.rope_width;
  const Scalar r2 = radius * radius;

  // Per-segment bounding boxes expanded by the capsule radius plus the pixel
  // footprint, for per-pixel culling.
  std::vector<Eigen::AlignedBox2d> boxes;
  boxes.reserve(segs.size());
  for (const auto& s : segs) {
    Eigen::AlignedBox2d box(s.a.cwiseMin(s.b), s.a.cwiseMax(s.b));
    box.min().array() -= radius + 0.75;
    box.max().array() += radius + 0.75;
    boxes.push_back(box);
  }

  constexpr int kSS = 4;  // 4x4 supersampling
  const Scalar sub = 1.0 / kSS;

  Image img(width, height);
  std::vector<std::size_t> cand;
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      const Vec2 center(u, v);
      cand.clear();
      for (std::size_t i = 0; i < segs.size(); ++i)
        if (boxes[i].contains(center)) cand.push_back(i);

      Vec3 accum = Vec3::Zero();
      for (int sy = 0; sy < kSS; ++sy) {
        for (int sx = 0; sx < kSS; ++sx) {
          // Pixel centers at integer coordinates; samples span [c-0.5, c+0.5).
          const Vec2 p(u - 0.5 + (sx + 0.5) * sub, v - 0.5 + (sy + 0.5) * sub);
          Vec3 color = background_at(style, p.x(), p.y(), width, height);
          for (const auto& d : style.distractors) {
            if (d.shape == Distractor::Shape::circle) {
              if ((p - d.center).squaredNorm() <= d.size * d.size) color = d.color;
            } else {
              if (std::abs(p.x() - d.center.x()) <= d.size &&
                  std::abs(p.y() - d.center.y()) <= d.size)
                color = d.color;
            }
          }
          Scalar best = std::numeric_limits<Scalar>::infinity();
          const Segment* hit = nullptr;
          for (const std::size_t i : cand) {
            const Scalar d2 = dist2_to_segment(p, segs[i]);
            if (d2 <= r2 && d2 < best) {
              best = d2;
              hit = &segs[i];
            }
          }
          if (hit) color = hit->color;
          for (const auto& bar : style.occluders)
            if (inside_bar(p, bar)) color = bar.color;
          accum += color;
        }
      }
      Vec3 color = accum / (kSS * kSS);
      if (style.lighting_gradient) {
        const Scalar t = (static_cast<Scalar>(u) + v) / (width + height - 2.0);
        const Scalar gain = style.lighting_lo + (style.lighting_hi - style.lighting_lo) * t;
        color = (color * gain).cwiseMin(1.0).cwiseMax(0.0);
      }
      img.set_rgb(u, v, color);
    }
  }
  return img;
}

Image render_mask(const RopeState& state, Scalar rope_width, int width, int height) {
  SceneStyle st;
  st.rope_colors = {Vec3(1.0, 1.0, 1.0)};
  st.rope_width = rope_width;
  st.bg_color = Vec3(0.0, 0.0, 0.0);
  return render_scene(state, st, width, height);
}

}  // namespace strand
