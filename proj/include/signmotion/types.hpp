#pragma once

#include <Eigen/Core>

#include <vector>

namespace signmotion {

using Scalar = double;
using Index = Eigen::Index;

template <typename S> using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S> using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <typename S> using MatX3 = Eigen::Matrix<S, Eigen::Dynamic, 3>;
template <typename S> using MatX2 = Eigen::Matrix<S, Eigen::Dynamic, 2>;
template <typename S> using Mat3 = Eigen::Matrix<S, 3, 3>;
template <typename S> using Vec3 = Eigen::Matrix<S, 3, 1>;
template <typename S> using Vec2 = Eigen::Matrix<S, 2, 1>;

using Mat = MatX<Scalar>;
using Vec = VecX<Scalar>;
using Mat3d = Mat3<Scalar>;
using Vec3d = Vec3<Scalar>;
using Vec2d = Vec2<Scalar>;
using MatX3d = MatX3<Scalar>;
using MatX2d = MatX2<Scalar>;

// One J x 3 (or M x 3) point matrix per frame.
using PointTrack = std::vector<MatX3d>;

}  // namespace signmotion
