#include "ample/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace ample::ad {

size_t Tape::checked(Var v) const {
  if (!v.valid() || static_cast<size_t>(v.idx) >= nodes_.size())
    throw std::logic_error("Var does not belong to this tape");
  return static_cast<size_t>(v.idx);
}

void Tape::backward(Var root) {
  const size_t r = checked(root);
  if (nodes_[r].value.size() != 1)
    throw std::logic_error("backward root must be scalar (1x1)");
  for (Node& node : nodes_)
    node.grad = Matrix::Zero(node.value.rows(), node.value.cols());
  nodes_[r].grad(0, 0) = 1.0;
  for (size_t i = nodes_.size(); i-- > 0;) {
    Node& node = nodes_[i];
    if (node.backward) node.backward(*this, node.grad);
  }
}

Var Tape::add(Var a, Var b) {
  Matrix out = value(a) + value(b);
  return push(std::move(out), [a, b](Tape& t, const Matrix& up) {
    t.grad_ref(a) += up;
    t.grad_ref(b) += up;
  });
}

Var Tape::linear_nt(Var x, Var w) {
  Matrix out = stable_product_nt(value(x), value(w));
  return push(std::move(out), [x, w](Tape& t, const Matrix& up) {
    t.grad_ref(x).noalias() += up * t.value(w);
    t.grad_ref(w).noalias() += up.transpose() * t.value(x);
  });
}

Var Tape::add_rowvec(Var x, Var b) {
  Matrix out = value(x);
  out.rowwise() += value(b).row(0);
  return push(std::move(out), [x, b](Tape& t, const Matrix& up) {
    t.grad_ref(x) += up;
    t.grad_ref(b).row(0) += up.colwise().sum();
  });
}

Var Tape::relu(Var x) {
  Matrix out = value(x).cwiseMax(0.0);
  return push(std::move(out), [x](Tape& t, const Matrix& up) {
    const Matrix& v = t.value(x);
    Matrix& gx = t.grad_ref(x);
    for (Index i = 0; i < v.rows(); ++i)
      for (Index j = 0; j < v.cols(); ++j)
        if (v(i, j) > 0.0) gx(i, j) += up(i, j);
  });
}

Var Tape::scale_coeff(Var x, Var coeff, int index) {
  const double c = value(coeff)(index, 0);
  Matrix out = c * value(x);
  return push(std::move(out), [x, coeff, index, c](Tape& t, const Matrix& up) {
    t.grad_ref(x) += c * up;
    t.grad_ref(coeff)(index, 0) += (up.array() * t.value(x).array()).sum();
  });
}

Var Tape::mul_const(Var x, double c) {
  Matrix out = c * value(x);
  return push(std::move(out), [x, c](Tape& t, const Matrix& up) {
    t.grad_ref(x) += c * up;
  });
}

Var Tape::sum_all(Var x) {
  Matrix out(1, 1);
  out(0, 0) = value(x).sum();
  return push(std::move(out), [x](Tape& t, const Matrix& up) {
    t.grad_ref(x).array() += up(0, 0);
  });
}

RowVector softmax_row(const RowVector& logits) {
  const double m = logits.maxCoeff();
  RowVector e = (logits.array() - m).exp();
  return e / e.sum();
}

Var Tape::softmax_cross_entropy(Var logits, int label, RowVector* probs_out) {
  const RowVector probs = softmax_row(value(logits).row(0));
  if (probs_out) *probs_out = probs;
  Matrix out(1, 1);
  out(0, 0) = -std::log(std::max(probs(label), 1e-300));
  return push(std::move(out), [logits, label, probs](Tape& t, const Matrix& up) {
    Matrix& gl = t.grad_ref(logits);
    for (Index j = 0; j < probs.size(); ++j)
      gl(0, j) += up(0, 0) * (probs(j) - (j == label ? 1.0 : 0.0));
  });
}

} // namespace ample::ad
