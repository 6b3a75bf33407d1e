#pragma once

#include <functional>
#include <vector>

#include "ample/numeric.hpp"
#include "ample/types.hpp"

namespace ample::ad {

/// Handle to a node on a Tape. Valid only for the tape that produced it.
struct Var {
  int idx = -1;
  bool valid() const { return idx >= 0; }
};

/// Minimal reverse-mode tape over matrices. Nodes are appended in evaluation
/// order; backward() runs the recorded closures in reverse, accumulating into
/// dense gradients of the same shape as each value. Domain-specific operations
/// (graph aggregation, attention, convolution) are built on push().
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Matrix& upstream)>;

  Var leaf(Matrix value) { return push(std::move(value), nullptr); }

  Var push(Matrix value, BackwardFn backward) {
    nodes_.push_back({std::move(value), Matrix(), std::move(backward)});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  const Matrix& value(Var v) const { return nodes_[checked(v)].value; }
  const Matrix& grad(Var v) const { return nodes_[checked(v)].grad; }
  Matrix& grad_ref(Var v) { return nodes_[checked(v)].grad; }

  /// Seeds d(root)/d(root) = 1 (root must be 1x1) and runs every recorded
  /// closure in reverse insertion order.
  void backward(Var root);

  size_t size() const { return nodes_.size(); }

  // --- generic operations -------------------------------------------------

  Var add(Var a, Var b);
  /// x * w.transpose(), the uniform storage convention for every learnable
  /// transform (bitwise row-stable; see stable_product_nt).
  Var linear_nt(Var x, Var w);
  /// x with row vector b (1 x cols) added to every row.
  Var add_rowvec(Var x, Var b);
  Var relu(Var x);
  /// x scaled by the scalar coeff(index, 0) of a column of coefficients.
  Var scale_coeff(Var x, Var coeff, int index);
  Var mul_const(Var x, double c);
  /// Sum of all entries as a 1x1 value.
  Var sum_all(Var x);
  /// Cross-entropy of softmax(logits) against `label` (logits are 1 x k).
  /// probs_out, when given, receives the softmax probabilities.
  Var softmax_cross_entropy(Var logits, int label, RowVector* probs_out = nullptr);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    BackwardFn backward;
  };

  size_t checked(Var v) const;

  std::vector<Node> nodes_;
};

/// Numerically stable softmax of a row vector.
RowVector softmax_row(const RowVector& logits);

} // namespace ample::ad
