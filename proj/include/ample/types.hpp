#pragma once

#include <Eigen/Dense>

namespace ample {

using Scalar = double;

// Row-major throughout: row i of a node matrix is the feature vector of node i.
// Node-wise transforms must go through stable_product_nt (see numeric.hpp) so
// that a row's value never depends on its position in the matrix.
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
using Index = Eigen::Index;

} // namespace ample
