#pragma once

#include <Eigen/Dense>

namespace uap {

// Row-major so that one row is one frame.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

}  // namespace uap
