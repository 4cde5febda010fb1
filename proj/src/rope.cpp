#include "strand/rope.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace strand {

void RopeState::validate() const {
  if (points.cols() < 2) throw std::invalid_argument("RopeState: need at least 2 points");
  if (!points.allFinite()) throw std::invalid_argument("RopeState: non-finite coordinate");
}

Scalar total_length(const RopeState& s) {
  Scalar len = 0.0;
  for (Eigen::Index i = 0; i + 1 < s.points.cols(); ++i)
    len += (s.points.col(i + 1) - s.points.col(i)).norm();
  return len;
}

RopeState resample_equidistant(const RopeState& s, Eigen::Index n) {
  s.validate();
  if (n < 2) throw std::invalid_argument("resample_equidistant: n must be >= 2");
  const Eigen::Index m = s.points.cols();

  VecX cum(m);
  cum(0) = 0.0;
  for (Eigen::Index i = 1; i < m; ++i)
    cum(i) = cum(i - 1) + (s.points.col(i) - s.points.col(i - 1)).norm();
  const Scalar length = cum(m - 1);
  if (length <= 0.0) throw std::invalid_argument("resample_equidistant: zero-length rope");

  RopeState out;
  out.frame = s.frame;
  out.points.resize(2, n);
  out.points.col(0) = s.points.col(0);
  out.points.col(n - 1) = s.points.col(m - 1);
  Eigen::Index seg = 0;
  for (Eigen::Index k = 1; k + 1 < n; ++k) {
    const Scalar target = length * static_cast<Scalar>(k) / static_cast<Scalar>(n - 1);
    while (seg + 2 < m && cum(seg + 1) < target) ++seg;
    const Scalar seg_len = cum(seg + 1) - cum(seg);
    const Scalar t = seg_len > 0.0 ? (target - cum(seg)) / seg_len : 0.0;
    out.points.col(k) = s.points.col(seg) + t * (s.points.col(seg + 1) - s.points.col(seg));
  }
  return out;
}

RopeState subdivide(const RopeState& s) {
  s.validate();
  const Eigen::Index k = s.n_segments();
  RopeState out;
  out.frame = s.frame;
  out.points.resize(2, 2 * k + 1);
  for (Eigen::Index i = 0; i < k; ++i) {
    out.points.col(2 * i) = s.points.col(i);
    out.points.col(2 * i + 1) = 0.5 * (s.points.col(i) + s.points.col(i + 1));
  }
  out.points.col(2 * k) = s.points.col(k);
  return out;
}

RopeState coarsen(const RopeState& s, Eigen::Index n_segments) {
  s.validate();
  const Eigen::Index k = s.n_segments();
  if (n_segments < 1 || k % n_segments != 0)
    throw std::invalid_argument("coarsen: requested segment count does not divide current");
  const Eigen::Index stride = k / n_segments;
  RopeState out;
  out.frame = s.frame;
  out.points.resize(2, n_segments + 1);
  for (Eigen::Index i = 0; i <= n_segments; ++i) out.points.col(i) = s.points.col(i * stride);
  return out;
}

namespace {
void check_comparable(const RopeState& a, const RopeState& b) {
  if (a.points.cols() != b.points.cols())
    throw std::invalid_argument("deviation: point counts differ");
  if (a.frame != b.frame) throw std::invalid_argument("deviation: frames differ");
}
}  // namespace

Scalar avg_deviation(const RopeState& a, const RopeState& b) {
  check_comparable(a, b);
  return (a.points - b.points).colwise().norm().mean();
}

Scalar max_deviation(const RopeState& a, const RopeState& b) {
  check_comparable(a, b);
  return (a.points - b.points).colwise().norm().maxCoeff();
}

RopeState world_to_image(const RopeState& s, const CameraTransform& cam) {
  if (s.frame != Frame::world) throw std::invalid_argument("world_to_image: state not in world frame");
  if (!(cam.scale > 0.0)) throw std::invalid_argument("world_to_image: scale must be positive");
  RopeState out;
  out.frame = Frame::image;
  out.points = (cam.scale * s.points).colwise() + cam.offset;
  return out;
}

RopeState image_to_world(const RopeState& s, const CameraTransform& cam) {
  if (s.frame != Frame::image) throw std::invalid_argument("image_to_world: state not in image frame");
  if (!(cam.scale > 0.0)) throw std::invalid_argument("image_to_world: scale must be positive");
  RopeState out;
  out.frame = Frame::world;
  out.points = (s.points.colwise() - cam.offset) / cam.scale;
  return out;
}

std::string rope_to_json(const RopeState& s) {
  nlohmann::json j;
  j["frame"] = frame_name(s.frame);
  auto pts = nlohmann::json::array();
  for (Eigen::Index i = 0; i < s.points.cols(); ++i)
    pts.push_back({s.points(0, i), s.points(1, i)});
  j["points"] = std::move(pts);
  return j.dump();
}

RopeState rope_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  RopeState s;
  const std::string frame = j.at("frame").get<std::string>();
  if (frame == "world")
    s.frame = Frame::world;
  else if (frame == "image")
    s.frame = Frame::image;
  else
    throw std::invalid_argument("rope_from_json: unknown frame '" + frame + "'");
  const auto& pts = j.at("points");
  s.points.resize(2, static_cast<Eigen::Index>(pts.size()));
  for (Eigen::Index i = 0; i < s.points.cols(); ++i) {
    s.points(0, i) = pts[static_cast<std::size_t>(i)].at(0).get<double>();
    s.points(1, i) = pts[static_cast<std::size_t>(i)].at(1).get<double>();
  }
  s.validate();
  return s;
}

void save_rope(const RopeState& s, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_rope: cannot open " + path);
  out << rope_to_json(s) << "\n";
}

RopeState load_rope(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_rope: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return rope_from_json(ss.str());
}

}  // namespace strand
