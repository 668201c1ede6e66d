#pragma once

#include <Eigen/Core>

namespace gchoreo {

// Row-major so a (frames x features) block can be reinterpreted as
// (frames/d x d*features) without copying.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

}  // namespace gchoreo
