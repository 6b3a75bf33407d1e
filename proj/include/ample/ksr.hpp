#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ample/autodiff.hpp"
#include "ample/types.hpp"

namespace ample::ksr {

enum class Mode { Train, Eval };

struct BatchNormParams {
  Matrix gamma;         // 1 x C, learnable
  Matrix beta;          // 1 x C, learnable
  Matrix running_mean;  // 1 x C, state
  Matrix running_var;   // 1 x C, state (biased variance)
  double epsilon = 1e-5;
  double momentum = 0.1;

  static BatchNormParams identity(int channels, double epsilon = 1e-5);
};

/// All learnable tensors of the readout. Kernels are stored flattened as
/// C_out x (C_in * k) with entry (o, c*k + t) = tap t of input channel c; all
/// dense layers act through x -> x * W^T.
struct KsrParams {
  int kernel_large_size = 11;  // odd, >= kernel_small_size
  int kernel_small_size = 3;   // odd
  Matrix kernel_large;         // C_out x (C_in * large)
  Matrix kernel_small;         // C_out x (C_in * small)
  Matrix bias_large;           // 1 x C_out
  Matrix bias_small;           // 1 x C_out
  BatchNormParams bn_large;
  BatchNormParams bn_small;
  Matrix fc1_w;  // hidden x C_out
  Matrix fc1_b;  // 1 x hidden
  Matrix fc2_w;  // 2 x hidden
  Matrix fc2_b;  // 1 x 2
  std::string pool = "max";  // or "mean"

  int c_out() const { return static_cast<int>(kernel_large.rows()); }
  int c_in() const {
    return static_cast<int>(kernel_large.cols()) / kernel_large_size;
  }
  void validate() const;
};

/// Fixed-width zero-padded batch for graphs of varying node counts. Rows past
/// each item's true length are zero and never influence results.
struct PaddedBatch {
  std::vector<Matrix> items;  // each max_nodes x d
  std::vector<int> lengths;
  int max_nodes = 0;

  /// Pads (or truncates, with a counted warning) each node matrix.
  static PaddedBatch from_node_matrices(const std::vector<Matrix>& matrices,
                                        int max_nodes, int* truncated = nullptr);
};

/// Batch statistics of one double-branch pass, for folding into the running
/// estimates at a synchronization point.
struct BnBatchStats {
  Matrix mean_large, var_large, mean_small, var_small;  // each 1 x C_out
};

void fold_running_stats(BatchNormParams& bn, const Matrix& mean,
                        const Matrix& var);

/// One channel through batch normalization. Train mode normalizes by the
/// sequence's own biased statistics and folds them into the running estimates;
/// eval mode normalizes by the running estimates.
Vector batch_norm_channel(const Vector& x, BatchNormParams& bn, int channel,
                          Mode mode);

/// Same-padded gather: out(p, c*k + t) = x(p + t - (k-1)/2, c), zero outside.
Matrix im2col_same(const Matrix& x, int k);

/// Double-branch convolution over the node axis (rows of h), each branch
/// batch-normalized, then summed. Positions x channels orientation; pure
/// (running statistics untouched; train-mode stats reported via stats_out).
Matrix kernel_scaled_features(const Matrix& h, const KsrParams& params,
                              Mode mode, BnBatchStats* stats_out = nullptr);

/// Stateful variant: returns channels x positions and, in train mode, folds
/// the batch statistics into the running estimates.
Matrix kernel_scaled_output(const Matrix& h, KsrParams& params, Mode mode);
std::vector<Matrix> kernel_scaled_output(const PaddedBatch& batch,
                                         KsrParams& params, Mode mode);

/// Masked pool over the first `length` positions, two dense layers, softmax.
/// `features` is positions x channels.
RowVector classify_probabilities(const Matrix& features, const KsrParams& params,
                                 int length);

/// Classifier over a channels x positions feature map. Returns
/// (p_non_vulnerable, p_vulnerable), summing to 1.
std::pair<double, double> classify(const Matrix& k_out, const KsrParams& params,
                                   int length);
std::vector<std::pair<double, double>> classify(const std::vector<Matrix>& k_out,
                                                const KsrParams& params,
                                                const std::vector<int>& lengths);

// --- tape builders ----------------------------------------------------------

struct KsrVars {
  ad::Var kernel_large, kernel_small, bias_large, bias_small;
  ad::Var gamma_large, beta_large, gamma_small, beta_small;
  ad::Var fc1_w, fc1_b, fc2_w, fc2_b;
};

KsrVars push_ksr(ad::Tape& tape, const KsrParams& params);

/// Pre-pool feature map (positions x channels) on the tape; forward values are
/// bitwise equal to kernel_scaled_features.
ad::Var kernel_scaled_op(ad::Tape& tape, ad::Var h, const KsrParams& params,
                         const KsrVars& vars, Mode mode,
                         BnBatchStats* stats_out = nullptr);

/// Pool + dense layers; returns the 1 x 2 logit row.
ad::Var classifier_logits_op(ad::Tape& tape, ad::Var k_out,
                             const KsrParams& params, const KsrVars& vars,
                             int length);

} // namespace ample::ksr
