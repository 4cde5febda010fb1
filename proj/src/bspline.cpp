#include "strand/bspline.hpp"

#include <algorithm>
#include <stdexcept>
#include <vector>

namespace strand {

namespace {
constexpr int kDegree = 3;

std::vector<Scalar> clamped_knots(Eigen::Index n_ctrl) {
  // n_ctrl + kDegree + 1 knots; first/last (kDegree+1) clamped, interior uniform.
  const Eigen::Index m = n_ctrl + kDegree + 1;
  const Eigen::Index interior = n_ctrl - kDegree - 1;
  std::vector<Scalar> t(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) {
    if (i <= kDegree)
      t[static_cast<std::size_t>(i)] = 0.0;
    else if (i >= m - kDegree - 1)
      t[static_cast<std::size_t>(i)] = 1.0;
    else
      t[static_cast<std::size_t>(i)] =
          static_cast<Scalar>(i - kDegree) / static_cast<Scalar>(interior + 1);
  }
  return t;
}
}  // namespace

Vec2 bspline_eval(const Mat2X& control_points, Scalar u) {
  const Eigen::Index n = control_points.cols();
  if (n < kDegree + 1) throw std::invalid_argument("bspline_eval: need >= 4 control points");
  u = std::clamp(u, Scalar(0), Scalar(1));
  const auto t = clamped_knots(n);

  // Knot span index k with t[k] <= u < t[k+1].
  Eigen::Index k = kDegree;
  while (k + 1 < n && u >= t[static_cast<std::size_t>(k + 1)]) ++k;

  // De Boor recurrence on the kDegree+1 affected control points.
  Vec2 d[kDegree + 1];
  for (int j = 0; j <= kDegree; ++j) d[j] = control_points.col(k - kDegree + j);
  for (int r = 1; r <= kDegree; ++r) {
    for (int j = kDegree; j >= r; --j) {
      const Scalar lo = t[static_cast<std::size_t>(k - kDegree + j)];
      const Scalar hi = t[static_cast<std::size_t>(k + 1 + j - r)];
      const Scalar alpha = hi > lo ? (u - lo) / (hi - lo) : 0.0;
      d[j] = (1.0 - alpha) * d[j - 1] + alpha * d[j];
    }
  }
  return d[kDegree];
}

RopeState sample_bspline(const Mat2X& control_points, Eigen::Index n_points,
                         Eigen::Index dense_samples) {
  if (control_points.cols() < kDegree + 1)
    throw std::invalid_argument("sample_bspline: need >= 4 control points");
  if (n_points < 2) throw std::invalid_argument("sample_bspline: n_points must be >= 2");
  if (dense_samples < n_points) dense_samples = std::max<Eigen::Index>(n_points, 16384);

  bool degenerate = true;
  for (Eigen::Index i = 1; i < control_points.cols() && degenerate; ++i)
    degenerate = (control_points.col(i) - control_points.col(0)).norm() < 1e-12;
  if (degenerate) throw std::invalid_argument("sample_bspline: coincident control points");

  RopeState dense;
  dense.frame = Frame::world;
  dense.points.resize(2, dense_samples);
  for (Eigen::Index i = 0; i < dense_samples; ++i) {
    const Scalar u = static_cast<Scalar>(i) / static_cast<Scalar>(dense_samples - 1);
    dense.points.col(i) = bspline_eval(control_points, u);
  }
  return resample_equidistant(dense, n_points);
}

RopeState random_rope(Rng& rng, const RopeGenConfig& cfg) {
  // Coarse chains bend more per segment, so the kink guard relaxes with
  // resolution.
  Scalar chord_ratio = cfg.min_chord_ratio;
  if (chord_ratio < 0.0)
    chord_ratio = cfg.n_points >= 33 ? 0.98 : (cfg.n_points >= 16 ? 0.9 : 0.75);

  Mat2X ctrl(2, 6);
  for (int attempt = 0; attempt < cfg.max_rejects; ++attempt) {
    for (Eigen::Index i = 0; i < 6; ++i) {
      ctrl(0, i) = rng.uniform(cfg.box_lo.x(), cfg.box_hi.x());
      ctrl(1, i) = rng.uniform(cfg.box_lo.y(), cfg.box_hi.y());
    }
    RopeState rope = sample_bspline(ctrl, cfg.n_points);
    const Scalar len = total_length(rope);
    if (len < cfg.min_length || len > cfg.max_length) continue;
    Scalar min_gap = std::numeric_limits<Scalar>::infinity();
    for (Eigen::Index i = 0; i + 1 < rope.n_points(); ++i)
      min_gap = std::min(min_gap, (rope.points.col(i + 1) - rope.points.col(i)).norm());
    const Scalar mean_gap = len / static_cast<Scalar>(rope.n_segments());
    if (min_gap >= chord_ratio * mean_gap) return rope;
  }
  throw std::runtime_error("random_rope: rejection sampling did not converge; widen the box");
}

}  // namespace strand
