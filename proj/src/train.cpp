#include "ample/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <thread>

#include <json.hpp>

namespace ample::pipeline {

SplitResult split_corpus(const io::Corpus& corpus,
                         const std::array<double, 3>& ratios,
                         std::uint64_t seed) {
  if (corpus.entries.empty())
    throw TrainError(TrainErrorKind::EmptyCorpus, "cannot split an empty corpus");
  const double total = ratios[0] + ratios[1] + ratios[2];
  if (total <= 0.0) throw std::invalid_argument("split ratios must be positive");

  const int n = static_cast<int>(corpus.entries.size());
  int n_valid = static_cast<int>(std::floor(n * ratios[1] / total));
  int n_test = static_cast<int>(std::floor(n * ratios[2] / total));
  if (n >= 3) {
    n_valid = std::max(n_valid, 1);
    n_test = std::max(n_test, 1);
  }
  const int n_train = n - n_valid - n_test;

  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  SplitResult split;
  split.train.provenance = corpus.provenance + "#train";
  split.valid.provenance = corpus.provenance + "#valid";
  split.test.provenance = corpus.provenance + "#test";
  for (int i = 0; i < n; ++i) {
    const io::CorpusEntry& entry = corpus.entries[static_cast<size_t>(order[i])];
    if (i < n_train)
      split.train.entries.push_back(entry);
    else if (i < n_train + n_valid)
      split.valid.entries.push_back(entry);
    else
      split.test.entries.push_back(entry);
  }
  return split;
}

std::string serialize_bundle(const ModelBundle& bundle) {
  nlohmann::ordered_json doc;
  doc["version"] = "ample-checkpoint/1";
  doc["rules"] = nlohmann::json::parse(simplify::serialize_merge_rules(bundle.rules));
  doc["identifier_types"] = bundle.identifier_types;
  doc["embedding"] =
      nlohmann::json::parse(embed::serialize_embedding_table(bundle.embedding));
  doc["model"] = nlohmann::json::parse(model::serialize_model(bundle.params));
  return doc.dump() + "\n";
}

ModelBundle parse_bundle(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw io::IoError(io::IoErrorKind::MalformedJson, e.what());
  }
  if (!doc.is_object() || doc.value("version", "") != "ample-checkpoint/1")
    throw io::IoError(io::IoErrorKind::SchemaViolation, "not a checkpoint document");
  ModelBundle bundle;
  bundle.rules = simplify::parse_merge_rules(doc.at("rules").dump());
  bundle.identifier_types =
      doc.at("identifier_types").get<std::vector<std::string>>();
  bundle.embedding = embed::parse_embedding_table(doc.at("embedding").dump());
  bundle.params = model::parse_model(doc.at("model").dump());
  return bundle;
}

model::GraphInput prepare_input(const ModelBundle& bundle,
                                const graph::CodeStructureGraph& g) {
  simplify::SimplifyResult simplified =
      simplify::gs(g, bundle.rules, bundle.identifier_types);
  model::GraphInput input;
  input.topology = eagcn::build_topology(simplified.graph, bundle.params.relations,
                                         bundle.params.config.eagcn.reverse_edges);
  input.h0 = embed::initial_node_matrix(simplified.graph, bundle.embedding);
  input.label = g.label() == graph::VulnLabel::Vulnerable ? 1 : 0;
  return input;
}

namespace {

/// Adam / rectified-Adam shared state.
struct Optimizer {
  std::string kind;
  double lr;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long long step = 0;
  std::vector<Matrix> m, v;

  Optimizer(const std::string& kind_, double lr_, const model::TensorRegistry& reg)
      : kind(kind_), lr(lr_) {
    for (Matrix* t : reg.tensors) {
      m.push_back(Matrix::Zero(t->rows(), t->cols()));
      v.push_back(Matrix::Zero(t->rows(), t->cols()));
    }
  }

  void apply(const model::TensorRegistry& reg, const std::vector<Matrix>& grads) {
    ++step;
    const double t = static_cast<double>(step);
    const double bias1 = 1.0 - std::pow(beta1, t);
    const double bias2 = 1.0 - std::pow(beta2, t);
    // length of the approximated SMA, for the rectified variant
    const double rho_inf = 2.0 / (1.0 - beta2) - 1.0;
    const double rho =
        rho_inf - 2.0 * t * std::pow(beta2, t) / (1.0 - std::pow(beta2, t));
    double rect = 1.0;
    bool use_variance = true;
    if (kind == "radam") {
      if (rho > 4.0) {
        rect = std::sqrt(((rho - 4.0) * (rho - 2.0) * rho_inf) /
                         ((rho_inf - 4.0) * (rho_inf - 2.0) * rho));
      } else {
        use_variance = false;
      }
    }
    for (size_t i = 0; i < reg.size(); ++i) {
      Matrix& theta = *reg.tensors[i];
      m[i] = beta1 * m[i] + (1.0 - beta1) * grads[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * grads[i].cwiseProduct(grads[i]);
      const Matrix m_hat = m[i] / bias1;
      if (!use_variance) {
        theta -= lr * m_hat;
        continue;
      }
      const Matrix v_hat = v[i] / bias2;
      theta -= (lr * rect) *
               (m_hat.array() / (v_hat.array().sqrt() + epsilon)).matrix();
    }
  }
};

struct PreparedGraph {
  model::GraphInput input;
};

struct GraphGrad {
  std::vector<Matrix> grads;
  ksr::BnBatchStats stats;
  double loss = 0.0;
};

GraphGrad backward_one(const model::ModelParams& params,
                       const model::GraphInput& input, size_t tensor_count) {
  ad::Tape tape;
  model::ModelVars vars = model::push_model(tape, params);
  ksr::BnBatchStats stats;
  ad::Var loss = model::loss_op(tape, params, vars, input, ksr::Mode::Train,
                                &stats);
  GraphGrad out;
  out.loss = tape.value(loss)(0, 0);
  tape.backward(loss);
  out.grads.reserve(tensor_count);
  for (ad::Var v : vars.flat) out.grads.push_back(tape.grad(v));
  out.stats = std::move(stats);
  return out;
}

double f1_of(const std::vector<int>& predictions, const std::vector<int>& labels) {
  return metrics::classification_metrics(predictions, labels).f1;
}

std::vector<int> predict_inputs(const model::ModelParams& params,
                                const std::vector<PreparedGraph>& inputs) {
  std::vector<int> preds;
  preds.reserve(inputs.size());
  for (const PreparedGraph& p : inputs) {
    const auto [p0, p1] =
        model::forward_probabilities(params, p.input, ksr::Mode::Eval);
    (void)p0;
    preds.push_back(p1 > 0.5 ? 1 : 0);  // ties predict non-vulnerable
  }
  return preds;
}

} // namespace

TrainResult train_model(const io::Corpus& train, const io::Corpus& valid,
                        const TrainConfig& config,
                        const model::ModelConfig& model_config,
                        std::optional<model::ModelParams> initial) {
  if (train.entries.empty() || valid.entries.empty())
    throw TrainError(TrainErrorKind::EmptyCorpus, "train and valid must be non-empty");
  for (const io::CorpusEntry& e : train.entries)
    if (!e.graph.label())
      throw TrainError(TrainErrorKind::UnlabeledCorpus,
                       "training graph without label: " + e.id);

  ModelBundle bundle;
  bundle.rules = config.rules;
  bundle.identifier_types = config.identifier_types;

  // Simplify once; fit token embeddings on the simplified training graphs.
  io::Corpus simplified_train;
  simplified_train.provenance = train.provenance + "#gs";
  for (const io::CorpusEntry& e : train.entries)
    simplified_train.entries.push_back(
        {simplify::gs(e.graph, bundle.rules, bundle.identifier_types).graph, e.id});

  const int d = model_config.eagcn.hidden;
  bundle.embedding =
      config.embedding == "hashing"
          ? embed::hashing_embeddings(simplified_train, d)
          : embed::fit_token_embeddings(simplified_train, d, config.seed,
                                        config.skipgram);

  // Discover extension relations present in the corpus.
  eagcn::RelationSet relations = eagcn::RelationSet::builtin();
  {
    std::vector<std::string> extras;
    for (const io::CorpusEntry& e : simplified_train.entries)
      for (const graph::Edge& edge : e.graph.edges())
        if (relations.index_of(edge.kind) < 0)
          extras.push_back(edge.kind.name());
    std::sort(extras.begin(), extras.end());
    extras.erase(std::unique(extras.begin(), extras.end()), extras.end());
    for (std::string& name : extras) relations.names.push_back(std::move(name));
  }

  bundle.params = initial ? std::move(*initial)
                          : model::init_model(model_config, relations, config.seed);

  std::vector<PreparedGraph> train_inputs;
  for (size_t i = 0; i < train.entries.size(); ++i) {
    model::GraphInput input;
    input.topology = eagcn::build_topology(
        simplified_train.entries[i].graph, bundle.params.relations,
        bundle.params.config.eagcn.reverse_edges);
    input.h0 =
        embed::initial_node_matrix(simplified_train.entries[i].graph, bundle.embedding);
    input.label =
        train.entries[i].graph.label() == graph::VulnLabel::Vulnerable ? 1 : 0;
    train_inputs.push_back({std::move(input)});
  }

  std::vector<PreparedGraph> valid_inputs;
  std::vector<int> valid_labels;
  for (const io::CorpusEntry& e : valid.entries) {
    valid_inputs.push_back({prepare_input(bundle, e.graph)});
    valid_labels.push_back(valid_inputs.back().input.label);
  }

  model::TensorRegistry reg = model::learnable_tensors(bundle.params);
  Optimizer optimizer(config.optimizer, config.learning_rate, reg);

  TrainResult result;
  model::ModelParams best_params = bundle.params;
  double best_f1 = -1.0;
  int epochs_since_best = 0;

  std::mt19937_64 shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<int> order(train_inputs.size());
  std::iota(order.begin(), order.end(), 0);

  const int jobs = std::max(1, config.jobs);

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    long long seen = 0;

    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(config.batch_size)) {
      const size_t end =
          std::min(order.size(), start + static_cast<size_t>(config.batch_size));
      const int batch = static_cast<int>(end - start);
      std::vector<GraphGrad> per_graph(static_cast<size_t>(batch));

      if (jobs == 1) {
        for (int b = 0; b < batch; ++b)
          per_graph[static_cast<size_t>(b)] = backward_one(
              bundle.params,
              train_inputs[static_cast<size_t>(order[start + static_cast<size_t>(b)])]
                  .input,
              reg.size());
      } else {
        std::vector<std::thread> workers;
        const int stride = (batch + jobs - 1) / jobs;
        for (int w = 0; w < jobs; ++w) {
          const int lo = w * stride;
          const int hi = std::min(batch, lo + stride);
          if (lo >= hi) break;
          workers.emplace_back([&, lo, hi]() {
            for (int b = lo; b < hi; ++b)
              per_graph[static_cast<size_t>(b)] = backward_one(
                  bundle.params,
                  train_inputs[static_cast<size_t>(
                                   order[start + static_cast<size_t>(b)])]
                      .input,
                  reg.size());
          });
        }
        for (std::thread& t : workers) t.join();
      }

      // Deterministic synchronization: means over the batch in graph order.
      std::vector<Matrix> grads = model::zero_gradients(bundle.params);
      const double inv_batch = 1.0 / static_cast<double>(batch);
      double batch_loss = 0.0;
      for (int b = 0; b < batch; ++b) {
        const GraphGrad& g = per_graph[static_cast<size_t>(b)];
        batch_loss += g.loss;
        for (size_t i = 0; i < grads.size(); ++i)
          grads[i] += inv_batch * g.grads[i];
        ksr::fold_running_stats(bundle.params.ksr.bn_large, g.stats.mean_large,
                                g.stats.var_large);
        ksr::fold_running_stats(bundle.params.ksr.bn_small, g.stats.mean_small,
                                g.stats.var_small);
      }
      if (!std::isfinite(batch_loss))
        throw TrainError(TrainErrorKind::NonFiniteLoss,
                         "non-finite loss at epoch " + std::to_string(epoch) +
                             ", batch starting " + std::to_string(start));
      epoch_loss += batch_loss;
      seen += batch;
      optimizer.apply(reg, grads);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = epoch_loss / static_cast<double>(std::max<long long>(1, seen));
    stats.valid_f1 = f1_of(predict_inputs(bundle.params, valid_inputs), valid_labels);
    result.history.push_back(stats);

    if (stats.valid_f1 > best_f1) {
      best_f1 = stats.valid_f1;
      best_params = bundle.params;
      result.best_epoch = epoch;
      epochs_since_best = 0;
    } else {
      ++epochs_since_best;
    }
    if (epochs_since_best >= config.patience) break;
  }

  bundle.params = std::move(best_params);
  result.bundle = std::move(bundle);
  return result;
}

std::vector<int> predict(const ModelBundle& bundle, const io::Corpus& corpus) {
  std::vector<int> preds;
  preds.reserve(corpus.entries.size());
  for (const io::CorpusEntry& e : corpus.entries) {
    const model::GraphInput input = prepare_input(bundle, e.graph);
    const auto [p0, p1] =
        model::forward_probabilities(bundle.params, input, ksr::Mode::Eval);
    (void)p0;
    preds.push_back(p1 > 0.5 ? 1 : 0);
  }
  return preds;
}

metrics::ClassificationScores evaluate_model(const ModelBundle& bundle,
                                             const io::Corpus& test) {
  std::vector<int> labels;
  for (const io::CorpusEntry& e : test.entries)
    labels.push_back(e.graph.label() == graph::VulnLabel::Vulnerable ? 1 : 0);
  return metrics::classification_metrics(predict(bundle, test), labels);
}

} // namespace ample::pipeline
