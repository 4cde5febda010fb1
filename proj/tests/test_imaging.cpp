#include <doctest.h>

#include <cstdio>

#include "strand/rng.hpp"
#include "strand/scene.hpp"

using namespace strand;

namespace {
RopeState diagonal_rope(int n, Scalar x0, Scalar y0, Scalar x1, Scalar y1) {
  RopeState s;
  s.frame = Frame::image;
  s.points.resize(2, n);
  for (int i = 0; i < n; ++i) {
    const Scalar t = static_cast<Scalar>(i) / (n - 1);
    s.points.col(i) = Vec2(x0 + t * (x1 - x0), y0 + t * (y1 - y0));
  }
  return s;
}
}  // namespace

TEST_CASE("render_scene solid rope on solid background") {
  const RopeState rope = diagonal_rope(9, 8.0, 32.0, 56.0, 32.0);
  SceneStyle style;
  style.rope_width = 5.0;
  const Image img = render_scene(rope, style, 64, 64);

  // centerline pixel exactly rope color
  CHECK((img.rgb(32, 32).transpose() - style.rope_colors[0]).norm() < 1e-12);
  // far background pixel exactly background
  CHECK((img.rgb(32, 5).transpose() - style.bg_color).norm() < 1e-12);
  for (Eigen::Index i = 0; i < img.n_pixels(); ++i) {
    CHECK(img.pixels(i, 0) >= 0.0);
    CHECK(img.pixels(i, 0) <= 1.0);
  }
}

TEST_CASE("render_scene occluders draw last") {
  const RopeState rope = diagonal_rope(9, 8.0, 32.0, 56.0, 32.0);
  SceneStyle style;
  style.rope_width = 5.0;
  OccluderBar bar;
  bar.center = Vec2(32.0, 32.0);
  bar.length = 16.0;
  bar.width = 12.0;
  style.occluders.push_back(bar);
  const Image img = render_scene(rope, style, 64, 64);
  CHECK((img.rgb(32, 32).transpose() - bar.color).norm() < 1e-12);
  CHECK((img.rgb(10, 32).transpose() - style.rope_colors[0]).norm() < 1e-12);
}

TEST_CASE("render_scene bicolor rope alternates per period") {
  const RopeState rope = diagonal_rope(17, 4.0, 32.0, 60.0, 32.0);
  SceneStyle style;
  style.rope_colors = {Vec3(0.9, 0.1, 0.1), Vec3(0.1, 0.1, 0.9)};
  style.color_period = 4;
  style.rope_width = 5.0;
  const Image img = render_scene(rope, style, 64, 64);
  // segment block 0 covers x in [4, 18); block 1 covers [18, 32)
  CHECK((img.rgb(10, 32).transpose() - style.rope_colors[0]).norm() < 1e-12);
  CHECK((img.rgb(24, 32).transpose() - style.rope_colors[1]).norm() < 1e-12);
}

TEST_CASE("render_scene determinism and error paths") {
  const RopeState rope = diagonal_rope(9, 8.0, 30.0, 56.0, 40.0);
  SceneStyle style;
  const Image a = render_scene(rope, style, 64, 64);
  const Image b = render_scene(rope, style, 64, 64);
  CHECK((a.pixels - b.pixels).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(render_scene(rope, style, 0, 64), std::invalid_argument);
  SceneStyle thin;
  thin.rope_width = 0.5;
  CHECK_THROWS_AS(render_scene(rope, thin, 64, 64), std::invalid_argument);
}

TEST_CASE("rendered mask close to supersampled threshold oracle") {
  const RopeState rope = diagonal_rope(9, 10.0, 12.0, 52.0, 50.0);
  const Scalar width = 5.0;
  const Image mask = render_mask(rope, width, 64, 64);

  // 16x supersampled coverage oracle per pixel
  int disagreements = 0;
  for (int v = 0; v < 64; ++v) {
    for (int u = 0; u < 64; ++u) {
      int inside = 0;
      for (int sy = 0; sy < 4; ++sy)
        for (int sx = 0; sx < 4; ++sx) {
          const Vec2 p(u - 0.5 + (sx + 0.5) / 4.0, v - 0.5 + (sy + 0.5) / 4.0);
          Scalar best = std::numeric_limits<Scalar>::infinity();
          for (Eigen::Index j = 0; j + 1 < rope.points.cols(); ++j) {
            const Vec2 a = rope.points.col(j), b = rope.points.col(j + 1), d = b - a;
            Scalar t = d.squaredNorm() > 0 ? (p - a).dot(d) / d.squaredNorm() : 0.0;
            t = std::clamp(t, 0.0, 1.0);
            best = std::min(best, (p - a - t * d).squaredNorm());
          }
          if (best <= width * width / 4.0) ++inside;
        }
      const bool oracle_on = inside >= 8;
      const bool mask_on = mask.rgb(u, v)(0) >= 0.5;
      if (oracle_on != mask_on) ++disagreements;
    }
  }
  CHECK(static_cast<double>(disagreements) / (64.0 * 64.0) < 0.02);
}

TEST_CASE("image save/load round-trip") {
  Rng rng(31);
  Image img(17, 9);
  for (Eigen::Index i = 0; i < img.n_pixels(); ++i)
    for (int c = 0; c < 3; ++c) img.pixels(i, c) = rng.uniform();
  const std::string path = "image_io_test.ppm";
  save_image(img, path);
  const Image back = load_image(path);
  REQUIRE(back.width == img.width);
  REQUIRE(back.height == img.height);
  CHECK((back.pixels - img.pixels).cwiseAbs().maxCoeff() <= 1.0 / 255.0);
  std::remove(path.c_str());

  Image white(1, 1);
  white.pixels.setOnes();
  save_image(white, path);
  const Image wback = load_image(path);
  CHECK((wback.pixels - white.pixels).cwiseAbs().maxCoeff() == 0.0);
  std::remove(path.c_str());

  CHECK_THROWS_AS(load_image("definitely_missing_file.ppm"), std::runtime_error);
}
