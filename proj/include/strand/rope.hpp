#pragma once

#include <string>

#include "strand/types.hpp"

namespace strand {

/// Ordered chain of 2D points approximating the rope as straight segments.
/// Full resolution is 65 points (64 segments). Columns of `points` are the
/// node positions, in meters (world frame) or pixels (image frame).
struct RopeState {
  Mat2X points;
  Frame frame = Frame::world;

  Eigen::Index n_points() const { return points.cols(); }
  Eigen::Index n_segments() const { return points.cols() - 1; }

  /// Throws std::invalid_argument if the chain has < 2 points or any
  /// non-finite coordinate.
  void validate() const;
};

/// Grasp one node and drag it by a planar displacement (meters).
struct Action {
  int grasp_index = 0;
  Vec2 delta = Vec2::Zero();
};

/// Top-down projection between world meters and image pixels:
/// pixel = scale * meters + offset. Pixel centers sit at integer coordinates.
struct CameraTransform {
  Scalar scale = 100.0;  // pixels per meter
  Vec2 offset = Vec2::Zero();
};

Scalar total_length(const RopeState& s);

/// n points on the input polyline at equal arclength spacing; endpoints kept.
RopeState resample_equidistant(const RopeState& s, Eigen::Index n);

/// Inserts every segment's midpoint: k segments -> 2k segments.
RopeState subdivide(const RopeState& s);

/// Keeps every (k / n_segments)-th point; n_segments must divide k.
RopeState coarsen(const RopeState& s, Eigen::Index n_segments);

/// Mean / max Euclidean distance over corresponding points. Same N and frame
/// required.
Scalar avg_deviation(const RopeState& a, const RopeState& b);
Scalar max_deviation(const RopeState& a, const RopeState& b);

RopeState world_to_image(const RopeState& s, const CameraTransform& cam);
RopeState image_to_world(const RopeState& s, const CameraTransform& cam);

/// JSON text form: {"frame": "world", "points": [[x, y], ...]}.
std::string rope_to_json(const RopeState& s);
RopeState rope_from_json(const std::string& text);
void save_rope(const RopeState& s, const std::string& path);
RopeState load_rope(const std::string& path);

}  // namespace strand
