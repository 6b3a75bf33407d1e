#include "ample/ksr.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

namespace ample::ksr {

BatchNormParams BatchNormParams::identity(int channels, double epsilon) {
  BatchNormParams bn;
  bn.gamma = Matrix::Ones(1, channels);
  bn.beta = Matrix::Zero(1, channels);
  bn.running_mean = Matrix::Zero(1, channels);
  bn.running_var = Matrix::Ones(1, channels);
  bn.epsilon = epsilon;
  return bn;
}

void KsrParams::validate() const {
  if (kernel_small_size > kernel_large_size)
    throw std::invalid_argument("small kernel must not exceed large kernel");
  if (kernel_large_size % 2 == 0 || kernel_small_size % 2 == 0)
    throw std::invalid_argument("kernel sizes must be odd");
  if (kernel_large.cols() != static_cast<Index>(c_in()) * kernel_large_size ||
      kernel_small.cols() != static_cast<Index>(c_in()) * kernel_small_size ||
      kernel_small.rows() != kernel_large.rows())
    throw std::invalid_argument("kernel tensor shapes inconsistent");
  if (pool != "max" && pool != "mean")
    throw std::invalid_argument("pool must be max or mean");
}

PaddedBatch PaddedBatch::from_node_matrices(const std::vector<Matrix>& matrices,
                                            int max_nodes, int* truncated) {
  PaddedBatch batch;
  batch.max_nodes = max_nodes;
  int clipped = 0;
  for (const Matrix& m : matrices) {
    const int keep = static_cast<int>(std::min<Index>(m.rows(), max_nodes));
    if (m.rows() > max_nodes) ++clipped;
    Matrix padded = Matrix::Zero(max_nodes, m.cols());
    padded.topRows(keep) = m.topRows(keep);
    batch.items.push_back(std::move(padded));
    batch.lengths.push_back(keep);
  }
  if (truncated) *truncated = clipped;
  return batch;
}

void fold_running_stats(BatchNormParams& bn, const Matrix& mean,
                        const Matrix& var) {
  bn.running_mean = (1.0 - bn.momentum) * bn.running_mean + bn.momentum * mean;
  bn.running_var = (1.0 - bn.momentum) * bn.running_var + bn.momentum * var;
}

namespace {

/// Per-channel train-mode normalization over rows; biased variance.
Matrix batchnorm_train_values(const Matrix& x, const Matrix& gamma,
                              const Matrix& beta, double eps, Matrix* mean_out,
                              Matrix* var_out, Matrix* xhat_out,
                              Matrix* inv_std_out) {
  const Index n = x.rows();
  Matrix mean = x.colwise().sum() / static_cast<double>(n);
  Matrix centered = x;
  centered.rowwise() -= mean.row(0);
  Matrix var = centered.array().square().colwise().sum() / static_cast<double>(n);
  Matrix inv_std(1, x.cols());
  for (Index c = 0; c < x.cols(); ++c)
    inv_std(0, c) = 1.0 / std::sqrt(var(0, c) + eps);
  Matrix xhat = centered.array().rowwise() * inv_std.row(0).array();
  Matrix out = xhat.array().rowwise() * gamma.row(0).array();
  out.rowwise() += beta.row(0);
  if (mean_out) *mean_out = mean;
  if (var_out) *var_out = var;
  if (xhat_out) *xhat_out = std::move(xhat);
  if (inv_std_out) *inv_std_out = std::move(inv_std);
  return out;
}

Matrix batchnorm_eval_values(const Matrix& x, const Matrix& gamma,
                             const Matrix& beta, const BatchNormParams& bn) {
  Matrix inv_std(1, x.cols());
  for (Index c = 0; c < x.cols(); ++c)
    inv_std(0, c) = 1.0 / std::sqrt(bn.running_var(0, c) + bn.epsilon);
  Matrix xhat = x;
  xhat.rowwise() -= bn.running_mean.row(0);
  xhat = xhat.array().rowwise() * inv_std.row(0).array();
  Matrix out = xhat.array().rowwise() * gamma.row(0).array();
  out.rowwise() += beta.row(0);
  return out;
}

Matrix conv_branch_values(const Matrix& h, const Matrix& kernel,
                          const Matrix& bias, int k) {
  Matrix cols = im2col_same(h, k);
  Matrix out = stable_product_nt(cols, kernel);
  out.rowwise() += bias.row(0);
  return out;
}

Matrix pool_rows(const Matrix& feature, int length, const std::string& pool) {
  if (length < 1 || length > feature.rows())
    throw std::invalid_argument("pool length out of range");
  Matrix out(1, feature.cols());
  if (pool == "mean") {
    out = feature.topRows(length).colwise().sum() / static_cast<double>(length);
  } else {
    for (Index c = 0; c < feature.cols(); ++c) {
      double best = feature(0, c);
      for (Index p = 1; p < length; ++p) best = std::max(best, feature(p, c));
      out(0, c) = best;
    }
  }
  return out;
}

} // namespace

Vector batch_norm_channel(const Vector& x, BatchNormParams& bn, int channel,
                          Mode mode) {
  if (channel < 0 || channel >= bn.gamma.cols())
    throw std::invalid_argument("channel out of range");
  Matrix col(x.size(), 1);
  col.col(0) = x;
  Matrix gamma(1, 1), beta(1, 1);
  gamma(0, 0) = bn.gamma(0, channel);
  beta(0, 0) = bn.beta(0, channel);
  Matrix out;
  if (mode == Mode::Train) {
    Matrix mean, var;
    out = batchnorm_train_values(col, gamma, beta, bn.epsilon, &mean, &var,
                                 nullptr, nullptr);
    bn.running_mean(0, channel) =
        (1.0 - bn.momentum) * bn.running_mean(0, channel) + bn.momentum * mean(0, 0);
    bn.running_var(0, channel) =
        (1.0 - bn.momentum) * bn.running_var(0, channel) + bn.momentum * var(0, 0);
  } else {
    const double inv_std = 1.0 / std::sqrt(bn.running_var(0, channel) + bn.epsilon);
    out = ((col.array() - bn.running_mean(0, channel)) * inv_std *
           bn.gamma(0, channel) + bn.beta(0, channel)).matrix();
  }
  return out.col(0);
}

Matrix im2col_same(const Matrix& x, int k) {
  if (k < 1 || k % 2 == 0) throw std::invalid_argument("kernel size must be odd");
  const Index n = x.rows();
  const Index c_in = x.cols();
  const int offset = (k - 1) / 2;
  Matrix out = Matrix::Zero(n, c_in * k);
  for (Index p = 0; p < n; ++p)
    for (int t = 0; t < k; ++t) {
      const Index q = p + t - offset;
      if (q < 0 || q >= n) continue;
      for (Index c = 0; c < c_in; ++c) out(p, c * k + t) = x(q, c);
    }
  return out;
}

Matrix kernel_scaled_features(const Matrix& h, const KsrParams& params,
                              Mode mode, BnBatchStats* stats_out) {
  params.validate();
  if (h.rows() < 1) throw std::invalid_argument("node axis must be non-empty");
  if (h.cols() != params.c_in())
    throw std::invalid_argument("kernel_scaled: channel mismatch");
  Matrix conv_l = conv_branch_values(h, params.kernel_large, params.bias_large,
                                     params.kernel_large_size);
  Matrix conv_s = conv_branch_values(h, params.kernel_small, params.bias_small,
                                     params.kernel_small_size);
  Matrix bn_l, bn_s;
  if (mode == Mode::Train) {
    Matrix mean_l, var_l, mean_s, var_s;
    bn_l = batchnorm_train_values(conv_l, params.bn_large.gamma,
                                  params.bn_large.beta, params.bn_large.epsilon,
                                  &mean_l, &var_l, nullptr, nullptr);
    bn_s = batchnorm_train_values(conv_s, params.bn_small.gamma,
                                  params.bn_small.beta, params.bn_small.epsilon,
                                  &mean_s, &var_s, nullptr, nullptr);
    if (stats_out)
      *stats_out = {std::move(mean_l), std::move(var_l), std::move(mean_s),
                    std::move(var_s)};
  } else {
    bn_l = batchnorm_eval_values(conv_l, params.bn_large.gamma,
                                 params.bn_large.beta, params.bn_large);
    bn_s = batchnorm_eval_values(conv_s, params.bn_small.gamma,
                                 params.bn_small.beta, params.bn_small);
  }
  return bn_l + bn_s;
}

Matrix kernel_scaled_output(const Matrix& h, KsrParams& params, Mode mode) {
  BnBatchStats stats;
  Matrix features = kernel_scaled_features(h, params, mode,
                                           mode == Mode::Train ? &stats : nullptr);
  if (mode == Mode::Train) {
    fold_running_stats(params.bn_large, stats.mean_large, stats.var_large);
    fold_running_stats(params.bn_small, stats.mean_small, stats.var_small);
  }
  return features.transpose();
}

std::vector<Matrix> kernel_scaled_output(const PaddedBatch& batch,
                                         KsrParams& params, Mode mode) {
  std::vector<Matrix> out;
  out.reserve(batch.items.size());
  for (size_t i = 0; i < batch.items.size(); ++i) {
    // Compute on the valid rows only (bitwise identical to computing on the
    // padded item at valid positions), then pad the feature map back out.
    const Matrix valid = batch.items[i].topRows(batch.lengths[i]);
    Matrix features = kernel_scaled_output(valid, params, mode);
    Matrix padded = Matrix::Zero(features.rows(), batch.max_nodes);
    padded.leftCols(features.cols()) = features;
    out.push_back(std::move(padded));
  }
  return out;
}

RowVector classify_probabilities(const Matrix& features, const KsrParams& params,
                                 int length) {
  const Matrix pooled = pool_rows(features, length, params.pool);
  Matrix z1 = stable_product_nt(pooled, params.fc1_w);
  z1.rowwise() += params.fc1_b.row(0);
  Matrix logits = stable_product_nt(Matrix(z1.cwiseMax(0.0)), params.fc2_w);
  logits.rowwise() += params.fc2_b.row(0);
  return ad::softmax_row(logits.row(0));
}

std::pair<double, double> classify(const Matrix& k_out, const KsrParams& params,
                                   int length) {
  const Matrix by_position = k_out.transpose();
  const RowVector probs = classify_probabilities(by_position, params, length);
  return {probs(0), probs(1)};
}

std::vector<std::pair<double, double>> classify(const std::vector<Matrix>& k_out,
                                                const KsrParams& params,
                                                const std::vector<int>& lengths) {
  if (k_out.size() != lengths.size())
    throw std::invalid_argument("classify: batch size mismatch");
  std::vector<std::pair<double, double>> out;
  out.reserve(k_out.size());
  for (size_t i = 0; i < k_out.size(); ++i)
    out.push_back(classify(k_out[i], params, lengths[i]));
  return out;
}

KsrVars push_ksr(ad::Tape& tape, const KsrParams& params) {
  KsrVars vars;
  vars.kernel_large = tape.leaf(params.kernel_large);
  vars.kernel_small = tape.leaf(params.kernel_small);
  vars.bias_large = tape.leaf(params.bias_large);
  vars.bias_small = tape.leaf(params.bias_small);
  vars.gamma_large = tape.leaf(params.bn_large.gamma);
  vars.beta_large = tape.leaf(params.bn_large.beta);
  vars.gamma_small = tape.leaf(params.bn_small.gamma);
  vars.beta_small = tape.leaf(params.bn_small.beta);
  vars.fc1_w = tape.leaf(params.fc1_w);
  vars.fc1_b = tape.leaf(params.fc1_b);
  vars.fc2_w = tape.leaf(params.fc2_w);
  vars.fc2_b = tape.leaf(params.fc2_b);
  return vars;
}

namespace {

ad::Var im2col_op(ad::Tape& tape, ad::Var x, int k) {
  Matrix out = im2col_same(tape.value(x), k);
  return tape.push(std::move(out), [x, k](ad::Tape& t, const Matrix& up) {
    Matrix& gx = t.grad_ref(x);
    const Index n = gx.rows();
    const Index c_in = gx.cols();
    const int offset = (k - 1) / 2;
    for (Index p = 0; p < n; ++p)
      for (int tap = 0; tap < k; ++tap) {
        const Index q = p + tap - offset;
        if (q < 0 || q >= n) continue;
        for (Index c = 0; c < c_in; ++c) gx(q, c) += up(p, c * k + tap);
      }
  });
}

ad::Var batchnorm_train_op(ad::Tape& tape, ad::Var x, ad::Var gamma,
                           ad::Var beta, double eps, Matrix* mean_out,
                           Matrix* var_out) {
  auto xhat = std::make_shared<Matrix>();
  auto inv_std = std::make_shared<Matrix>();
  Matrix out = batchnorm_train_values(tape.value(x), tape.value(gamma),
                                      tape.value(beta), eps, mean_out, var_out,
                                      xhat.get(), inv_std.get());
  return tape.push(
      std::move(out),
      [x, gamma, beta, xhat, inv_std](ad::Tape& t, const Matrix& up) {
        const Matrix& g = t.value(gamma);
        const Index n = up.rows();
        Matrix& gx = t.grad_ref(x);
        Matrix& ggamma = t.grad_ref(gamma);
        Matrix& gbeta = t.grad_ref(beta);
        for (Index c = 0; c < up.cols(); ++c) {
          double dg = 0.0, db = 0.0;
          for (Index p = 0; p < n; ++p) {
            dg += up(p, c) * (*xhat)(p, c);
            db += up(p, c);
          }
          ggamma(0, c) += dg;
          gbeta(0, c) += db;
          // dxhat = up * gamma; the mean and variance paths fold into dx.
          const double mean_dxhat = db * g(0, c) / static_cast<double>(n);
          const double mean_dxhat_xhat = dg * g(0, c) / static_cast<double>(n);
          for (Index p = 0; p < n; ++p)
            gx(p, c) += (*inv_std)(0, c) *
                        (up(p, c) * g(0, c) - mean_dxhat -
                         (*xhat)(p, c) * mean_dxhat_xhat);
        }
      });
}

ad::Var batchnorm_eval_op(ad::Tape& tape, ad::Var x, ad::Var gamma, ad::Var beta,
                          const BatchNormParams& bn) {
  Matrix inv_std(1, tape.value(x).cols());
  for (Index c = 0; c < inv_std.cols(); ++c)
    inv_std(0, c) = 1.0 / std::sqrt(bn.running_var(0, c) + bn.epsilon);
  Matrix xhat = tape.value(x);
  xhat.rowwise() -= bn.running_mean.row(0);
  xhat = xhat.array().rowwise() * inv_std.row(0).array();
  Matrix out = xhat.array().rowwise() * tape.value(gamma).row(0).array();
  out.rowwise() += tape.value(beta).row(0);
  auto xhat_shared = std::make_shared<Matrix>(std::move(xhat));
  auto inv_shared = std::make_shared<Matrix>(std::move(inv_std));
  return tape.push(std::move(out), [x, gamma, beta, xhat_shared, inv_shared](
                                       ad::Tape& t, const Matrix& up) {
    const Matrix& g = t.value(gamma);
    t.grad_ref(beta).row(0) += up.colwise().sum();
    t.grad_ref(gamma).row(0) +=
        (up.array() * xhat_shared->array()).colwise().sum().matrix();
    t.grad_ref(x) += (up.array().rowwise() *
                      (g.row(0).array() * inv_shared->row(0).array())).matrix();
  });
}

ad::Var pool_op(ad::Tape& tape, ad::Var x, int length, const std::string& pool) {
  Matrix out = pool_rows(tape.value(x), length, pool);
  if (pool == "mean") {
    return tape.push(std::move(out), [x, length](ad::Tape& t, const Matrix& up) {
      Matrix& gx = t.grad_ref(x);
      const double inv = 1.0 / static_cast<double>(length);
      for (Index p = 0; p < length; ++p) gx.row(p) += inv * up.row(0);
    });
  }
  const Matrix& v = tape.value(x);
  std::vector<Index> argmax(static_cast<size_t>(v.cols()), 0);
  for (Index c = 0; c < v.cols(); ++c)
    for (Index p = 1; p < length; ++p)
      if (v(p, c) > v(argmax[static_cast<size_t>(c)], c))
        argmax[static_cast<size_t>(c)] = p;
  return tape.push(std::move(out), [x, argmax](ad::Tape& t, const Matrix& up) {
    Matrix& gx = t.grad_ref(x);
    for (Index c = 0; c < up.cols(); ++c)
      gx(argmax[static_cast<size_t>(c)], c) += up(0, c);
  });
}

} // namespace

ad::Var kernel_scaled_op(ad::Tape& tape, ad::Var h, const KsrParams& params,
                         const KsrVars& vars, Mode mode, BnBatchStats* stats_out) {
  params.validate();
  ad::Var cols_l = im2col_op(tape, h, params.kernel_large_size);
  ad::Var conv_l =
      tape.add_rowvec(tape.linear_nt(cols_l, vars.kernel_large), vars.bias_large);
  ad::Var cols_s = im2col_op(tape, h, params.kernel_small_size);
  ad::Var conv_s =
      tape.add_rowvec(tape.linear_nt(cols_s, vars.kernel_small), vars.bias_small);
  ad::Var bn_l, bn_s;
  if (mode == Mode::Train) {
    Matrix mean_l, var_l, mean_s, var_s;
    bn_l = batchnorm_train_op(tape, conv_l, vars.gamma_large, vars.beta_large,
                              params.bn_large.epsilon, &mean_l, &var_l);
    bn_s = batchnorm_train_op(tape, conv_s, vars.gamma_small, vars.beta_small,
                              params.bn_small.epsilon, &mean_s, &var_s);
    if (stats_out)
      *stats_out = {std::move(mean_l), std::move(var_l), std::move(mean_s),
                    std::move(var_s)};
  } else {
    bn_l = batchnorm_eval_op(tape, conv_l, vars.gamma_large, vars.beta_large,
                             params.bn_large);
    bn_s = batchnorm_eval_op(tape, conv_s, vars.gamma_small, vars.beta_small,
                             params.bn_small);
  }
  return tape.add(bn_l, bn_s);
}

ad::Var classifier_logits_op(ad::Tape& tape, ad::Var k_out,
                             const KsrParams& params, const KsrVars& vars,
                             int length) {
  ad::Var pooled = pool_op(tape, k_out, length, params.pool);
  ad::Var z1 = tape.add_rowvec(tape.linear_nt(pooled, vars.fc1_w), vars.fc1_b);
  ad::Var a1 = tape.relu(z1);
  return tape.add_rowvec(tape.linear_nt(a1, vars.fc2_w), vars.fc2_b);
}

} // namespace ample::ksr
