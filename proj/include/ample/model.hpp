#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ample/eagcn.hpp"
#include "ample/graph.hpp"
#include "ample/ksr.hpp"

namespace ample::model {

struct ModelConfig {
  eagcn::EaGcnConfig eagcn;    // layers, heads, hidden width, feed-forward width
  int c_out = 0;               // readout channels; 0 means = hidden
  int kernel_large = 11;
  int kernel_small = 3;
  int fc_hidden = 0;           // classifier hidden width; 0 means = c_out
  std::string pool = "max";
  double bn_epsilon = 1e-5;
  double bn_momentum = 0.1;
  int max_nodes = 500;

  int effective_c_out() const { return c_out > 0 ? c_out : eagcn.hidden; }
  int effective_fc_hidden() const {
    return fc_hidden > 0 ? fc_hidden : effective_c_out();
  }
};

/// Every learnable tensor plus batch-norm state, with the configuration and
/// relation registry that give them meaning.
struct ModelParams {
  ModelConfig config;
  eagcn::RelationSet relations;
  std::vector<eagcn::LayerParams> layers;
  ksr::KsrParams ksr;
};

ModelParams init_model(const ModelConfig& config,
                       const eagcn::RelationSet& relations, std::uint64_t seed);

/// Stable enumeration of the learnable tensors (names are checkpoint keys;
/// batch-norm running statistics are state, not listed here).
struct TensorRegistry {
  std::vector<std::string> names;
  std::vector<Matrix*> tensors;

  size_t size() const { return tensors.size(); }
};
TensorRegistry learnable_tensors(ModelParams& params);

std::string serialize_model(const ModelParams& params);
ModelParams parse_model(const std::string& text);

/// Precomputed per-graph inputs for the model.
struct GraphInput {
  eagcn::GraphTopology topology;
  Matrix h0;      // |V| x d
  int label = 0;  // 0|1, meaningful for training/eval inputs
};

/// Full value-level forward: EA-GCN then readout. Pure: never touches the
/// running statistics even in train mode.
std::pair<double, double> forward_probabilities(const ModelParams& params,
                                                const GraphInput& input,
                                                ksr::Mode mode);

/// Cross-entropy loss of one graph via the same forward path.
double forward_loss(const ModelParams& params, const GraphInput& input,
                    ksr::Mode mode);

struct ModelVars {
  std::vector<eagcn::LayerVars> layers;
  ksr::KsrVars ksr;
  std::vector<ad::Var> flat;  // aligned with learnable_tensors()
};

ModelVars push_model(ad::Tape& tape, const ModelParams& params);

/// Training-tape loss for one graph. probs_out receives the softmax output,
/// stats_out the batch-norm statistics for the running update.
ad::Var loss_op(ad::Tape& tape, const ModelParams& params, const ModelVars& vars,
                const GraphInput& input, ksr::Mode mode,
                ksr::BnBatchStats* stats_out = nullptr,
                RowVector* probs_out = nullptr);

/// grads[i] += scale * d(loss)/d(tensor i); call after tape.backward().
void accumulate_gradients(const ad::Tape& tape, const ModelVars& vars,
                          std::vector<Matrix>& grads, double scale);

std::vector<Matrix> zero_gradients(ModelParams& params);

// --- finite-difference verification ------------------------------------------

struct GradCheckEntry {
  std::string tensor;
  double max_abs_diff = 0.0;
  double max_rel_err = 0.0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  bool passed = true;
  double tolerance = 1e-4;
  double step = 1e-3;
};

/// Central finite differences against the analytic gradients for every
/// learnable tensor, on a small fixed fixture graph. Pass condition per
/// element: |analytic - numeric| <= max(tolerance * max(|a|,|n|), 1e-7).
GradCheckReport run_gradient_checks();

/// The fixture used by run_gradient_checks: a 6-node graph with all four
/// built-in relations and a small-width model, both deterministically seeded.
std::pair<ModelParams, GraphInput> gradcheck_fixture();

} // namespace ample::model
