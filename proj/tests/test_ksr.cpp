#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "ample/ksr.hpp"
#include "oracle_bridge.hpp"

using namespace ample;

namespace {

Matrix random_matrix(Index rows, Index cols, std::mt19937_64& rng, double s = 0.5) {
  std::normal_distribution<double> nd(0.0, s);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = nd(rng);
  return m;
}

ksr::KsrParams random_ksr(int c_in, int c_out, int k_large, int k_small,
                          int fc_hidden, std::mt19937_64& rng) {
  ksr::KsrParams p;
  p.kernel_large_size = k_large;
  p.kernel_small_size = k_small;
  p.kernel_large = random_matrix(c_out, c_in * k_large, rng);
  p.kernel_small = random_matrix(c_out, c_in * k_small, rng);
  p.bias_large = random_matrix(1, c_out, rng);
  p.bias_small = random_matrix(1, c_out, rng);
  p.bn_large = ksr::BatchNormParams::identity(c_out);
  p.bn_small = ksr::BatchNormParams::identity(c_out);
  p.fc1_w = random_matrix(fc_hidden, c_out, rng);
  p.fc1_b = random_matrix(1, fc_hidden, rng);
  p.fc2_w = random_matrix(2, fc_hidden, rng);
  p.fc2_b = random_matrix(1, 2, rng);
  return p;
}

} // namespace

TEST_CASE("batch norm: identity eval mode") {
  ksr::BatchNormParams bn = ksr::BatchNormParams::identity(2, 0.0);
  Vector x(3);
  x << 1.0, -2.0, 0.5;
  Vector out = ksr::batch_norm_channel(x, bn, 0, ksr::Mode::Eval);
  CHECK(out == x);
}

TEST_CASE("batch norm: train mode normalizes by biased statistics") {
  ksr::BatchNormParams bn = ksr::BatchNormParams::identity(1, 0.0);
  Vector x(3);
  x << 1.0, 2.0, 3.0;
  Vector out = ksr::batch_norm_channel(x, bn, 0, ksr::Mode::Train);
  const double expected = std::sqrt(1.5);
  CHECK(out(0) == doctest::Approx(-expected).epsilon(1e-12));
  CHECK(out(1) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(out(2) == doctest::Approx(expected).epsilon(1e-12));
  // running statistics moved toward the batch
  CHECK(bn.running_mean(0, 0) == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(bn.running_var(0, 0) ==
        doctest::Approx(0.9 * 1.0 + 0.1 * (2.0 / 3.0)).epsilon(1e-12));
}

TEST_CASE("batch norm: constant input collapses to beta") {
  ksr::BatchNormParams bn = ksr::BatchNormParams::identity(1);
  Vector x = Vector::Constant(5, 3.25);
  Vector out = ksr::batch_norm_channel(x, bn, 0, ksr::Mode::Train);
  CHECK(out.cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("kernel-scaled output: zeros in, zeros out") {
  std::mt19937_64 rng(5);
  ksr::KsrParams p = random_ksr(3, 4, 5, 3, 4, rng);
  p.bias_large.setZero();
  p.bias_small.setZero();
  Matrix h = Matrix::Zero(6, 3);
  Matrix out = ksr::kernel_scaled_output(h, p, ksr::Mode::Eval);
  CHECK(out.rows() == 4);  // channels x positions
  CHECK(out.cols() == 6);
  CHECK(out.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("kernel-scaled output: equal branches double a single branch") {
  std::mt19937_64 rng(7);
  const int c_in = 2, c_out = 3, k = 3;
  Matrix kernel = random_matrix(c_out, c_in * k, rng);
  Matrix bias = random_matrix(1, c_out, rng);
  Matrix h = random_matrix(5, c_in, rng);

  // emulate equal branch sizes by restructuring the large kernel for k=3:
  // validate() requires small < large, so compare against a direct evaluation
  Matrix cols = ksr::im2col_same(h, k);
  Matrix conv = stable_product_nt(cols, kernel);
  conv.rowwise() += bias.row(0);
  // identity-eval bn on both branches -> sum = 2 * conv
  ksr::KsrParams p;
  p.kernel_large_size = 5;
  p.kernel_small_size = 3;
  // large kernel reproduces the k=3 kernel by zero padding the outer taps
  p.kernel_large = Matrix::Zero(c_out, c_in * 5);
  for (int o = 0; o < c_out; ++o)
    for (int c = 0; c < c_in; ++c)
      for (int t = 0; t < k; ++t)
        p.kernel_large(o, c * 5 + t + 1) = kernel(o, c * k + t);
  p.kernel_small = kernel;
  p.bias_large = bias;
  p.bias_small = bias;
  p.bn_large = ksr::BatchNormParams::identity(c_out, 0.0);
  p.bn_small = ksr::BatchNormParams::identity(c_out, 0.0);
  p.fc1_w = random_matrix(2, c_out, rng);
  p.fc1_b = random_matrix(1, 2, rng);
  p.fc2_w = random_matrix(2, 2, rng);
  p.fc2_b = random_matrix(1, 2, rng);
  Matrix out = ksr::kernel_scaled_output(h, p, ksr::Mode::Eval);
  CHECK((out.transpose() - 2.0 * conv).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("convolution matches the sliding-window reference") {
  std::mt19937_64 rng(11);
  ksr::KsrParams p = random_ksr(2, 3, 3, 1, 3, rng);
  Matrix h = random_matrix(5, 2, rng);
  for (ksr::Mode mode : {ksr::Mode::Train, ksr::Mode::Eval}) {
    Matrix mine = ksr::kernel_scaled_features(h, p, mode);
    oracle::Mat ref = oracle::ksr_features(
        oracle::from_eigen(h), oracle::ksr_from_params(p, mode == ksr::Mode::Train));
    for (Index i = 0; i < mine.rows(); ++i)
      for (Index j = 0; j < mine.cols(); ++j)
        CHECK(mine(i, j) ==
              doctest::Approx(ref[static_cast<size_t>(i)][static_cast<size_t>(j)])
                  .epsilon(1e-12));
  }
}

TEST_CASE("same padding preserves the position count for odd kernels") {
  std::mt19937_64 rng(13);
  for (int k : {1, 3, 5, 7, 11}) {
    Matrix h = random_matrix(9, 2, rng);
    Matrix cols = ksr::im2col_same(h, k);
    CHECK(cols.rows() == 9);
    CHECK(cols.cols() == 2 * k);
  }
  CHECK_THROWS_AS(ksr::im2col_same(Matrix::Zero(3, 2), 4), std::invalid_argument);
}

TEST_CASE("classifier: probabilities sum to one; zero final layer is uniform") {
  std::mt19937_64 rng(17);
  ksr::KsrParams p = random_ksr(3, 4, 5, 3, 4, rng);
  Matrix h = random_matrix(7, 3, rng);
  Matrix k_out = ksr::kernel_scaled_output(h, p, ksr::Mode::Eval);
  auto [p0, p1] = ksr::classify(k_out, p, 7);
  CHECK(p0 + p1 == doctest::Approx(1.0).epsilon(1e-9));

  p.fc2_w.setZero();
  p.fc2_b.setZero();
  auto [u0, u1] = ksr::classify(k_out, p, 7);
  CHECK(u0 == 0.5);
  CHECK(u1 == 0.5);
}

TEST_CASE("classifier matches the scalar reference") {
  std::mt19937_64 rng(19);
  ksr::KsrParams p = random_ksr(4, 5, 5, 3, 4, rng);
  Matrix h = random_matrix(6, 4, rng);
  Matrix features = ksr::kernel_scaled_features(h, p, ksr::Mode::Eval);
  RowVector probs = ksr::classify_probabilities(features, p, 6);
  auto ref = oracle::ksr_classify(oracle::from_eigen(features),
                                  oracle::ksr_from_params(p, false), 6);
  CHECK(probs(0) == doctest::Approx(ref.first).epsilon(1e-10));
  CHECK(probs(1) == doctest::Approx(ref.second).epsilon(1e-10));
}

TEST_CASE("padding invariance: appended zero rows never change classify") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const int c_in = 3;
    const int length = 3 + static_cast<int>(rng() % 9);
    const int pad = 1 + static_cast<int>(rng() % 7);
    ksr::KsrParams p = random_ksr(c_in, 4, 5, 3, 4, rng);
    // make eval statistics non-trivial
    p.bn_large.running_mean = random_matrix(1, 4, rng);
    p.bn_large.running_var = random_matrix(1, 4, rng).cwiseAbs();
    p.bn_small.running_mean = random_matrix(1, 4, rng);
    p.bn_small.running_var = random_matrix(1, 4, rng).cwiseAbs();
    Matrix h = random_matrix(length, c_in, rng);
    Matrix padded = Matrix::Zero(length + pad, c_in);
    padded.topRows(length) = h;

    ksr::KsrParams p_copy = p;
    Matrix k1 = ksr::kernel_scaled_output(h, p, ksr::Mode::Eval);
    Matrix k2 = ksr::kernel_scaled_output(padded, p_copy, ksr::Mode::Eval);
    auto [a0, a1] = ksr::classify(k1, p, length);
    auto [b0, b1] = ksr::classify(k2, p_copy, length);
    CHECK(a0 == b0);
    CHECK(a1 == b1);
  }
}

TEST_CASE("padded batch carries lengths and truncates with a count") {
  std::mt19937_64 rng(29);
  std::vector<Matrix> items = {random_matrix(4, 2, rng), random_matrix(9, 2, rng)};
  int truncated = 0;
  ksr::PaddedBatch batch = ksr::PaddedBatch::from_node_matrices(items, 6, &truncated);
  CHECK(truncated == 1);
  CHECK(batch.lengths == std::vector<int>{4, 6});
  CHECK(batch.items[0].rows() == 6);
  CHECK(batch.items[0].bottomRows(2).cwiseAbs().maxCoeff() == 0.0);

  ksr::KsrParams p = random_ksr(2, 3, 5, 3, 3, rng);
  std::vector<Matrix> features = ksr::kernel_scaled_output(batch, p, ksr::Mode::Eval);
  REQUIRE(features.size() == 2);
  CHECK(features[0].cols() == 6);  // padded to max_nodes positions
  auto probs = ksr::classify(features, p, batch.lengths);
  CHECK(probs.size() == 2);
  CHECK(probs[0].first + probs[0].second == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("tape forward equals the value forward bitwise") {
  std::mt19937_64 rng(31);
  ksr::KsrParams p = random_ksr(3, 4, 5, 3, 4, rng);
  Matrix h = random_matrix(6, 3, rng);
  for (ksr::Mode mode : {ksr::Mode::Train, ksr::Mode::Eval}) {
    Matrix values = ksr::kernel_scaled_features(h, p, mode);
    ad::Tape tape;
    ksr::KsrVars vars = ksr::push_ksr(tape, p);
    ad::Var features = ksr::kernel_scaled_op(tape, tape.leaf(h), p, vars, mode);
    CHECK(tape.value(features) == values);

    RowVector value_probs = ksr::classify_probabilities(values, p, 6);
    ad::Var logits = ksr::classifier_logits_op(tape, features, p, vars, 6);
    RowVector tape_probs = ad::softmax_row(tape.value(logits).row(0));
    CHECK(tape_probs == value_probs);
  }
}

TEST_CASE("readout gradients pass finite differences") {
  std::mt19937_64 rng(37);
  ksr::KsrParams params = random_ksr(3, 4, 5, 3, 4, rng);
  Matrix h = random_matrix(6, 3, rng);
  const int label = 1;

  auto loss_value = [&](const ksr::KsrParams& p) {
    Matrix features = ksr::kernel_scaled_features(h, p, ksr::Mode::Train);
    RowVector probs = ksr::classify_probabilities(features, p, 6);
    return -std::log(probs(label));
  };

  ad::Tape tape;
  ksr::KsrVars vars = ksr::push_ksr(tape, params);
  ad::Var features =
      ksr::kernel_scaled_op(tape, tape.leaf(h), params, vars, ksr::Mode::Train);
  ad::Var logits = ksr::classifier_logits_op(tape, features, params, vars, 6);
  tape.backward(tape.softmax_cross_entropy(logits, label));

  ksr::KsrParams probe = params;
  struct Entry { Matrix* tensor; ad::Var var; };
  std::vector<Entry> entries = {
      {&probe.kernel_large, vars.kernel_large},
      {&probe.kernel_small, vars.kernel_small},
      {&probe.bias_large, vars.bias_large},
      {&probe.bias_small, vars.bias_small},
      {&probe.bn_large.gamma, vars.gamma_large},
      {&probe.bn_large.beta, vars.beta_large},
      {&probe.bn_small.gamma, vars.gamma_small},
      {&probe.bn_small.beta, vars.beta_small},
      {&probe.fc1_w, vars.fc1_w},
      {&probe.fc1_b, vars.fc1_b},
      {&probe.fc2_w, vars.fc2_w},
      {&probe.fc2_b, vars.fc2_b},
  };
  const double step = 1e-3;
  for (const Entry& entry : entries) {
    for (Index i = 0; i < entry.tensor->rows(); ++i)
      for (Index j = 0; j < entry.tensor->cols(); ++j) {
        const double saved = (*entry.tensor)(i, j);
        (*entry.tensor)(i, j) = saved + step;
        const double plus = loss_value(probe);
        (*entry.tensor)(i, j) = saved - step;
        const double minus = loss_value(probe);
        (*entry.tensor)(i, j) = saved;
        const double numeric = (plus - minus) / (2 * step);
        const double analytic = tape.grad(entry.var)(i, j);
        const double gap = std::abs(numeric - analytic);
        CHECK(gap <= std::max(1e-4 * std::max(std::abs(numeric), std::abs(analytic)),
                              1e-7));
      }
  }
}
