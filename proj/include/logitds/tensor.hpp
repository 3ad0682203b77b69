#pragma once

#include <Eigen/Core>

namespace logitds {

/// Row-major batch matrix: one row per input, one column per feature.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;

}  // namespace logitds
