#pragma once

#include <Eigen/Core>

namespace g2cl {

// Row-major dense matrices; one embedding per row.
using MatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace g2cl
