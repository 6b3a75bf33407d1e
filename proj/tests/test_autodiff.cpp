#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <functional>
#include <random>

#include "ample/autodiff.hpp"

using namespace ample;

namespace {

Matrix random_matrix(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = nd(rng);
  return m;
}

using Builder = std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;

/// Max |analytic - numeric| over every element of every input, with the loss
/// being the scalar the builder returns.
double finite_difference_gap(const Builder& build, std::vector<Matrix> inputs) {
  const double h = 1e-5;
  ad::Tape tape;
  std::vector<ad::Var> leaves;
  for (const Matrix& m : inputs) leaves.push_back(tape.leaf(m));
  ad::Var loss = build(tape, leaves);
  tape.backward(loss);

  auto eval = [&](const std::vector<Matrix>& values) {
    ad::Tape t;
    std::vector<ad::Var> vs;
    for (const Matrix& m : values) vs.push_back(t.leaf(m));
    return t.value(build(t, vs))(0, 0);
  };

  double worst = 0.0;
  for (size_t k = 0; k < inputs.size(); ++k) {
    for (Index i = 0; i < inputs[k].rows(); ++i)
      for (Index j = 0; j < inputs[k].cols(); ++j) {
        std::vector<Matrix> plus = inputs, minus = inputs;
        plus[k](i, j) += h;
        minus[k](i, j) -= h;
        const double numeric = (eval(plus) - eval(minus)) / (2 * h);
        const double analytic = tape.grad(leaves[k])(i, j);
        worst = std::max(worst, std::abs(numeric - analytic));
      }
  }
  return worst;
}

} // namespace

TEST_CASE("add, linear_nt, add_rowvec, relu, sum_all gradients") {
  std::mt19937_64 rng(13);
  std::vector<Matrix> inputs = {random_matrix(4, 3, rng), random_matrix(5, 3, rng),
                                random_matrix(1, 5, rng)};
  const double gap = finite_difference_gap(
      [](ad::Tape& t, const std::vector<ad::Var>& v) {
        ad::Var y = t.linear_nt(v[0], v[1]);     // 4x5
        ad::Var z = t.add_rowvec(y, v[2]);
        ad::Var r = t.relu(z);
        ad::Var s = t.add(r, z);
        return t.sum_all(s);
      },
      inputs);
  CHECK(gap < 1e-8);
}

TEST_CASE("scale_coeff and mul_const gradients") {
  std::mt19937_64 rng(17);
  std::vector<Matrix> inputs = {random_matrix(3, 4, rng), random_matrix(4, 1, rng)};
  const double gap = finite_difference_gap(
      [](ad::Tape& t, const std::vector<ad::Var>& v) {
        ad::Var a = t.scale_coeff(v[0], v[1], 2);
        ad::Var b = t.mul_const(a, 0.7);
        return t.sum_all(b);
      },
      inputs);
  CHECK(gap < 1e-8);
}

TEST_CASE("softmax cross-entropy gradient and probabilities") {
  std::mt19937_64 rng(19);
  std::vector<Matrix> inputs = {random_matrix(1, 2, rng)};
  for (int label = 0; label < 2; ++label) {
    const double gap = finite_difference_gap(
        [label](ad::Tape& t, const std::vector<ad::Var>& v) {
          return t.softmax_cross_entropy(v[0], label);
        },
        inputs);
    CHECK(gap < 1e-8);
  }
  ad::Tape tape;
  ad::Var logits = tape.leaf(Matrix::Zero(1, 2));
  RowVector probs;
  tape.softmax_cross_entropy(logits, 0, &probs);
  CHECK(probs(0) == 0.5);
  CHECK(probs(1) == 0.5);
}

TEST_CASE("gradients accumulate across fan-out") {
  // y = sum(x) + sum(x) must give grad 2 everywhere
  ad::Tape tape;
  ad::Var x = tape.leaf(Matrix::Ones(2, 2));
  ad::Var loss = tape.add(tape.sum_all(x), tape.sum_all(x));
  tape.backward(loss);
  CHECK(tape.grad(x) == Matrix(2.0 * Matrix::Ones(2, 2)));
}

TEST_CASE("backward demands a scalar root") {
  ad::Tape tape;
  ad::Var x = tape.leaf(Matrix::Ones(2, 2));
  CHECK_THROWS_AS(tape.backward(x), std::logic_error);
}

TEST_CASE("stable product matches plain product") {
  std::mt19937_64 rng(23);
  Matrix a = random_matrix(7, 5, rng);
  Matrix b = random_matrix(6, 5, rng);
  Matrix reference = a * b.transpose();
  Matrix stable = stable_product_nt(a, b);
  CHECK((reference - stable).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("stable product is bitwise row-stable under permutation and padding") {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 8; ++trial) {
    const Index n = 4 + trial * 7;
    const Index d = (trial % 2) ? 10 : 33;
    Matrix h = random_matrix(n, d, rng);
    Matrix m = random_matrix(d, d, rng);
    Matrix base = stable_product_nt(h, m);

    std::vector<Index> perm(static_cast<size_t>(n));
    for (Index i = 0; i < n; ++i) perm[static_cast<size_t>(i)] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix hp(n, d);
    for (Index i = 0; i < n; ++i) hp.row(perm[static_cast<size_t>(i)]) = h.row(i);
    Matrix pp = stable_product_nt(hp, m);
    for (Index i = 0; i < n; ++i)
      CHECK(RowVector(pp.row(perm[static_cast<size_t>(i)])) == RowVector(base.row(i)));

    Matrix hz = Matrix::Zero(n + 9, d);
    hz.topRows(n) = h;
    Matrix pz = stable_product_nt(hz, m);
    for (Index i = 0; i < n; ++i)
      CHECK(RowVector(pz.row(i)) == RowVector(base.row(i)));
  }
}
