#pragma once

#include <Eigen/Dense>

namespace canmatch {

// Points and embeddings are rows, so the dense types are row-major throughout.
template <class Scalar>
using MatT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Mat = MatT<double>;
using Vec = Eigen::VectorXd;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

}  // namespace canmatch
