#pragma once

#include <string>

#include "strand/types.hpp"

namespace strand {

/// RGB image, channels in [0, 1]. Pixels stored one per row (row-major pixel
/// index v * width + u), so per-channel columns feed directly into the
/// mixture-model math.
struct Image {
  int width = 0;
  int height = 0;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 3> pixels;  // (width*height) x 3

  Image() = default;
  Image(int w, int h) : width(w), height(h) { pixels.setZero(w * h, 3); }

  Eigen::Index n_pixels() const { return pixels.rows(); }
  Eigen::Index idx(int u, int v) const { return static_cast<Eigen::Index>(v) * width + u; }
  Eigen::RowVector3d rgb(int u, int v) const { return pixels.row(idx(u, v)); }
  void set_rgb(int u, int v, const Vec3& c) { pixels.row(idx(u, v)) = c.transpose(); }
};

/// Binary PPM (P6, maxval 255). Lossless for 8-bit data; quantization error
/// on save is at most 1/510 per channel.
void save_image(const Image& img, const std::string& path);
Image load_image(const std::string& path);

}  // namespace strand
