#pragma once

#include <Eigen/Dense>

namespace strand {

using Scalar = double;

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat2X = Eigen::Matrix<Scalar, 2, Eigen::Dynamic>;
using MatX = Eigen::MatrixXd;
using VecX = Eigen::VectorXd;
using ArrX = Eigen::ArrayXd;

/// Coordinate frame of a rope state: meters on the table plane, or pixels.
enum class Frame { world, image };

inline const char* frame_name(Frame f) { return f == Frame::world ? "world" : "image"; }

}  // namespace strand
