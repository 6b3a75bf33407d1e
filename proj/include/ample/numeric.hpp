#pragma once

#include <cmath>

#include "ample/types.hpp"

namespace ample {

/// a * b.transpose() computed one output element at a time as a contiguous dot.
///
/// Unlike Eigen's blocked GEMM, the bits of row i depend only on the contents
/// of row i, never on its position or on the total row count. Every node-wise
/// transform in the model goes through this function; that is what makes row
/// permutation and zero-row padding leave per-node outputs bitwise unchanged.
inline Matrix stable_product_nt(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.rows());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < b.rows(); ++j)
      out(i, j) = a.row(i).dot(b.row(j));
  return out;
}

inline bool all_finite(const Matrix& m) {
  for (Index i = 0; i < m.size(); ++i)
    if (!std::isfinite(m.data()[i])) return false;
  return true;
}

} // namespace ample
