#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ample/embed.hpp"
#include "ample/metrics.hpp"
#include "ample/model.hpp"
#include "ample/simplify.hpp"

namespace ample::pipeline {

enum class TrainErrorKind { NonFiniteLoss, EmptyCorpus, UnlabeledCorpus };

class TrainError : public std::runtime_error {
 public:
  TrainError(TrainErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  TrainErrorKind kind() const { return kind_; }

 private:
  TrainErrorKind kind_;
};

struct TrainConfig {
  double learning_rate = 1e-4;
  int batch_size = 64;
  int max_epochs = 100;
  int patience = 20;
  std::array<double, 3> ratios{0.8, 0.1, 0.1};
  std::uint64_t seed = 0;
  std::string optimizer = "adam";  // or "radam"
  int jobs = 1;
  std::string embedding = "word2vec";  // or "hashing"
  embed::SkipGramOptions skipgram;
  simplify::MergeRuleTable rules = simplify::default_merge_rules();
  std::vector<std::string> identifier_types = simplify::default_identifier_types();
};

struct SplitResult {
  io::Corpus train, valid, test;
};

/// Seeded shuffle, then contiguous slices. Floor allocation with the remainder
/// going to train; valid and test each get at least one entry when the corpus
/// has three or more.
SplitResult split_corpus(const io::Corpus& corpus,
                         const std::array<double, 3>& ratios,
                         std::uint64_t seed);

/// Everything needed to run the model on raw graphs: simplification config,
/// token embeddings and the learned tensors. One file holds it all.
struct ModelBundle {
  simplify::MergeRuleTable rules;
  std::vector<std::string> identifier_types;
  embed::TokenEmbeddingTable embedding;
  model::ModelParams params;
};

std::string serialize_bundle(const ModelBundle& bundle);
ModelBundle parse_bundle(const std::string& text);

struct EpochStats {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double valid_f1 = 0.0;
};

struct TrainResult {
  ModelBundle bundle;          // best-validation checkpoint
  std::vector<EpochStats> history;
  int best_epoch = 0;
};

/// Per graph: simplify, embed, EA-GCN, readout, cross-entropy; adaptive
/// optimizer at the configured rate; early stopping on validation F1 with the
/// configured patience. Deterministic for fixed seed and jobs=1.
TrainResult train_model(const io::Corpus& train, const io::Corpus& valid,
                        const TrainConfig& config,
                        const model::ModelConfig& model_config,
                        std::optional<model::ModelParams> initial = std::nullopt);

/// Threshold 0.5 on p_vulnerable; a tie predicts non-vulnerable.
metrics::ClassificationScores evaluate_model(const ModelBundle& bundle,
                                             const io::Corpus& test);

/// Dumped per-graph predictions of evaluate_model, for consistency checks.
std::vector<int> predict(const ModelBundle& bundle, const io::Corpus& corpus);

/// Precompute the model input of one raw graph with the bundle's pipeline.
model::GraphInput prepare_input(const ModelBundle& bundle,
                                const graph::CodeStructureGraph& g);

} // namespace ample::pipeline
