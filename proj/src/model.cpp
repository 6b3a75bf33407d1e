#include "ample/model.hpp"

#include <cmath>
#include <random>

#include <json.hpp>

#include "ample/graph_io.hpp"

namespace ample::model {

namespace {

Matrix gaussian_init(Index rows, Index cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, stddev);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = nd(rng);
  return m;
}

double glorot(Index fan_in, Index fan_out) {
  return std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
}

} // namespace

ModelParams init_model(const ModelConfig& config,
                       const eagcn::RelationSet& relations, std::uint64_t seed) {
  config.eagcn.validate();
  std::mt19937_64 rng(seed);
  ModelParams params;
  params.config = config;
  params.relations = relations;

  const int d = config.eagcn.hidden;
  const int ff = config.eagcn.ff_width();
  for (int l = 0; l < config.eagcn.layers; ++l) {
    eagcn::LayerParams layer;
    layer.relation_coeff = Matrix::Ones(relations.size(), 1);
    layer.shared_transform = gaussian_init(d, d, glorot(d, d), rng);
    layer.self_transform = gaussian_init(d, d, glorot(d, d), rng);
    layer.attn_proj = gaussian_init(d, d, glorot(d, d), rng);
    layer.ff_w1 = gaussian_init(ff, d, glorot(d, ff), rng);
    layer.ff_b1 = Matrix::Zero(1, ff);
    layer.ff_w2 = gaussian_init(d, ff, glorot(ff, d), rng);
    layer.ff_b2 = Matrix::Zero(1, d);
    params.layers.push_back(std::move(layer));
  }

  const int c_out = config.effective_c_out();
  const int fc_hidden = config.effective_fc_hidden();
  ksr::KsrParams& k = params.ksr;
  k.kernel_large_size = config.kernel_large;
  k.kernel_small_size = config.kernel_small;
  k.kernel_large = gaussian_init(c_out, static_cast<Index>(d) * config.kernel_large,
                                 glorot(static_cast<Index>(d) * config.kernel_large,
                                        c_out),
                                 rng);
  k.kernel_small = gaussian_init(c_out, static_cast<Index>(d) * config.kernel_small,
                                 glorot(static_cast<Index>(d) * config.kernel_small,
                                        c_out),
                                 rng);
  k.bias_large = Matrix::Zero(1, c_out);
  k.bias_small = Matrix::Zero(1, c_out);
  k.bn_large = ksr::BatchNormParams::identity(c_out, config.bn_epsilon);
  k.bn_large.momentum = config.bn_momentum;
  k.bn_small = ksr::BatchNormParams::identity(c_out, config.bn_epsilon);
  k.bn_small.momentum = config.bn_momentum;
  k.fc1_w = gaussian_init(fc_hidden, c_out, glorot(c_out, fc_hidden), rng);
  k.fc1_b = Matrix::Zero(1, fc_hidden);
  k.fc2_w = gaussian_init(2, fc_hidden, glorot(fc_hidden, 2), rng);
  k.fc2_b = Matrix::Zero(1, 2);
  k.pool = config.pool;
  k.validate();
  return params;
}

TensorRegistry learnable_tensors(ModelParams& params) {
  TensorRegistry reg;
  auto add = [&reg](const std::string& name, Matrix& tensor) {
    reg.names.push_back(name);
    reg.tensors.push_back(&tensor);
  };
  for (size_t l = 0; l < params.layers.size(); ++l) {
    const std::string prefix = "layer" + std::to_string(l) + ".";
    eagcn::LayerParams& layer = params.layers[l];
    add(prefix + "relation_coeff", layer.relation_coeff);
    add(prefix + "shared_transform", layer.shared_transform);
    add(prefix + "self_transform", layer.self_transform);
    add(prefix + "attn_proj", layer.attn_proj);
    add(prefix + "ff_w1", layer.ff_w1);
    add(prefix + "ff_b1", layer.ff_b1);
    add(prefix + "ff_w2", layer.ff_w2);
    add(prefix + "ff_b2", layer.ff_b2);
  }
  ksr::KsrParams& k = params.ksr;
  add("ksr.kernel_large", k.kernel_large);
  add("ksr.kernel_small", k.kernel_small);
  add("ksr.bias_large", k.bias_large);
  add("ksr.bias_small", k.bias_small);
  add("ksr.bn_large.gamma", k.bn_large.gamma);
  add("ksr.bn_large.beta", k.bn_large.beta);
  add("ksr.bn_small.gamma", k.bn_small.gamma);
  add("ksr.bn_small.beta", k.bn_small.beta);
  add("ksr.fc1_w", k.fc1_w);
  add("ksr.fc1_b", k.fc1_b);
  add("ksr.fc2_w", k.fc2_w);
  add("ksr.fc2_b", k.fc2_b);
  return reg;
}

namespace {

nlohmann::ordered_json matrix_to_json(const Matrix& m) {
  nlohmann::ordered_json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  std::vector<double> values;
  values.reserve(static_cast<size_t>(m.size()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index k = 0; k < m.cols(); ++k) values.push_back(m(i, k));
  j["values"] = std::move(values);
  return j;
}

Matrix matrix_from_json(const nlohmann::json& j) {
  const Index rows = j.at("rows").get<Index>();
  const Index cols = j.at("cols").get<Index>();
  const auto values = j.at("values").get<std::vector<double>>();
  if (values.size() != static_cast<size_t>(rows * cols))
    throw io::IoError(io::IoErrorKind::SchemaViolation, "tensor payload mismatch");
  Matrix m(rows, cols);
  size_t idx = 0;
  for (Index i = 0; i < rows; ++i)
    for (Index k = 0; k < cols; ++k) m(i, k) = values[idx++];
  return m;
}

} // namespace

std::string serialize_model(const ModelParams& params) {
  nlohmann::ordered_json doc;
  doc["version"] = "ample-model/1";
  nlohmann::ordered_json jc;
  jc["layers"] = params.config.eagcn.layers;
  jc["heads"] = params.config.eagcn.heads;
  jc["hidden"] = params.config.eagcn.hidden;
  jc["ff_hidden"] = params.config.eagcn.ff_hidden;
  jc["reverse_edges"] = params.config.eagcn.reverse_edges;
  jc["c_out"] = params.config.c_out;
  jc["kernel_large"] = params.config.kernel_large;
  jc["kernel_small"] = params.config.kernel_small;
  jc["fc_hidden"] = params.config.fc_hidden;
  jc["pool"] = params.config.pool;
  jc["bn_epsilon"] = params.config.bn_epsilon;
  jc["bn_momentum"] = params.config.bn_momentum;
  jc["max_nodes"] = params.config.max_nodes;
  doc["config"] = std::move(jc);
  doc["relations"] = params.relations.names;

  nlohmann::ordered_json tensors;
  ModelParams& mutable_params = const_cast<ModelParams&>(params);
  TensorRegistry reg = learnable_tensors(mutable_params);
  for (size_t i = 0; i < reg.size(); ++i)
    tensors[reg.names[i]] = matrix_to_json(*reg.tensors[i]);
  tensors["ksr.bn_large.running_mean"] = matrix_to_json(params.ksr.bn_large.running_mean);
  tensors["ksr.bn_large.running_var"] = matrix_to_json(params.ksr.bn_large.running_var);
  tensors["ksr.bn_small.running_mean"] = matrix_to_json(params.ksr.bn_small.running_mean);
  tensors["ksr.bn_small.running_var"] = matrix_to_json(params.ksr.bn_small.running_var);
  doc["tensors"] = std::move(tensors);
  return doc.dump() + "\n";
}

ModelParams parse_model(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw io::IoError(io::IoErrorKind::MalformedJson, e.what());
  }
  if (!doc.is_object() || doc.value("version", "") != "ample-model/1")
    throw io::IoError(io::IoErrorKind::SchemaViolation, "not a model document");

  ModelConfig config;
  const nlohmann::json& jc = doc.at("config");
  config.eagcn.layers = jc.at("layers").get<int>();
  config.eagcn.heads = jc.at("heads").get<int>();
  config.eagcn.hidden = jc.at("hidden").get<int>();
  config.eagcn.ff_hidden = jc.at("ff_hidden").get<int>();
  config.eagcn.reverse_edges = jc.at("reverse_edges").get<bool>();
  config.c_out = jc.at("c_out").get<int>();
  config.kernel_large = jc.at("kernel_large").get<int>();
  config.kernel_small = jc.at("kernel_small").get<int>();
  config.fc_hidden = jc.at("fc_hidden").get<int>();
  config.pool = jc.at("pool").get<std::string>();
  config.bn_epsilon = jc.at("bn_epsilon").get<double>();
  config.bn_momentum = jc.at("bn_momentum").get<double>();
  config.max_nodes = jc.at("max_nodes").get<int>();

  eagcn::RelationSet relations{doc.at("relations").get<std::vector<std::string>>()};
  ModelParams params = init_model(config, relations, 0);
  TensorRegistry reg = learnable_tensors(params);
  const nlohmann::json& tensors = doc.at("tensors");
  for (size_t i = 0; i < reg.size(); ++i)
    *reg.tensors[i] = matrix_from_json(tensors.at(reg.names[i]));
  params.ksr.bn_large.running_mean =
      matrix_from_json(tensors.at("ksr.bn_large.running_mean"));
  params.ksr.bn_large.running_var =
      matrix_from_json(tensors.at("ksr.bn_large.running_var"));
  params.ksr.bn_small.running_mean =
      matrix_from_json(tensors.at("ksr.bn_small.running_mean"));
  params.ksr.bn_small.running_var =
      matrix_from_json(tensors.at("ksr.bn_small.running_var"));
  return params;
}

std::pair<double, double> forward_probabilities(const ModelParams& params,
                                                const GraphInput& input,
                                                ksr::Mode mode) {
  const Matrix h =
      eagcn::eagcn_forward(input.h0, input.topology, params.config.eagcn,
                           params.layers);
  const Matrix features = ksr::kernel_scaled_features(h, params.ksr, mode);
  const RowVector probs = ksr::classify_probabilities(
      features, params.ksr, static_cast<int>(features.rows()));
  return {probs(0), probs(1)};
}

double forward_loss(const ModelParams& params, const GraphInput& input,
                    ksr::Mode mode) {
  const auto [p0, p1] = forward_probabilities(params, input, mode);
  const double p = input.label == 1 ? p1 : p0;
  return -std::log(std::max(p, 1e-300));
}

ModelVars push_model(ad::Tape& tape, const ModelParams& params) {
  ModelVars vars;
  for (const eagcn::LayerParams& layer : params.layers) {
    eagcn::LayerVars lv = eagcn::push_layer(tape, layer);
    vars.flat.push_back(lv.relation_coeff);
    vars.flat.push_back(lv.shared_transform);
    vars.flat.push_back(lv.self_transform);
    vars.flat.push_back(lv.attn_proj);
    vars.flat.push_back(lv.ff_w1);
    vars.flat.push_back(lv.ff_b1);
    vars.flat.push_back(lv.ff_w2);
    vars.flat.push_back(lv.ff_b2);
    vars.layers.push_back(lv);
  }
  vars.ksr = ksr::push_ksr(tape, params.ksr);
  vars.flat.push_back(vars.ksr.kernel_large);
  vars.flat.push_back(vars.ksr.kernel_small);
  vars.flat.push_back(vars.ksr.bias_large);
  vars.flat.push_back(vars.ksr.bias_small);
  vars.flat.push_back(vars.ksr.gamma_large);
  vars.flat.push_back(vars.ksr.beta_large);
  vars.flat.push_back(vars.ksr.gamma_small);
  vars.flat.push_back(vars.ksr.beta_small);
  vars.flat.push_back(vars.ksr.fc1_w);
  vars.flat.push_back(vars.ksr.fc1_b);
  vars.flat.push_back(vars.ksr.fc2_w);
  vars.flat.push_back(vars.ksr.fc2_b);
  return vars;
}

ad::Var loss_op(ad::Tape& tape, const ModelParams& params, const ModelVars& vars,
                const GraphInput& input, ksr::Mode mode,
                ksr::BnBatchStats* stats_out, RowVector* probs_out) {
  ad::Var h0 = tape.leaf(input.h0);
  ad::Var h = eagcn::eagcn_forward_op(tape, h0, input.topology,
                                      params.config.eagcn, vars.layers);
  ad::Var features =
      ksr::kernel_scaled_op(tape, h, params.ksr, vars.ksr, mode, stats_out);
  ad::Var logits = ksr::classifier_logits_op(
      tape, features, params.ksr, vars.ksr,
      static_cast<int>(tape.value(features).rows()));
  return tape.softmax_cross_entropy(logits, input.label, probs_out);
}

void accumulate_gradients(const ad::Tape& tape, const ModelVars& vars,
                          std::vector<Matrix>& grads, double scale) {
  if (grads.size() != vars.flat.size())
    throw std::invalid_argument("gradient accumulator size mismatch");
  for (size_t i = 0; i < vars.flat.size(); ++i)
    grads[i] += scale * tape.grad(vars.flat[i]);
}

std::vector<Matrix> zero_gradients(ModelParams& params) {
  TensorRegistry reg = learnable_tensors(params);
  std::vector<Matrix> grads;
  grads.reserve(reg.size());
  for (Matrix* t : reg.tensors)
    grads.push_back(Matrix::Zero(t->rows(), t->cols()));
  return grads;
}

std::pair<ModelParams, GraphInput> gradcheck_fixture() {
  ModelConfig config;
  config.eagcn.layers = 2;
  config.eagcn.heads = 2;
  config.eagcn.hidden = 10;
  config.c_out = 8;
  config.kernel_large = 5;
  config.kernel_small = 3;
  config.fc_hidden = 8;
  ModelParams params = init_model(config, eagcn::RelationSet::builtin(), 2024);

  // 6-node graph covering all four relations, a multi-in-edge node and a node
  // with no incoming edges.
  std::vector<graph::Node> nodes;
  for (int i = 0; i < 6; ++i)
    nodes.push_back({i, "T" + std::to_string(i), "n" + std::to_string(i),
                     std::nullopt, i == 0});
  std::vector<graph::Edge> edges = {
      {0, 1, graph::EdgeKind::ast(), std::nullopt},
      {0, 2, graph::EdgeKind::ast(), std::nullopt},
      {1, 3, graph::EdgeKind::ast(), std::nullopt},
      {1, 4, graph::EdgeKind::ast(), std::nullopt},
      {2, 5, graph::EdgeKind::ast(), std::nullopt},
      {0, 1, graph::EdgeKind::cfg(), std::nullopt},
      {1, 2, graph::EdgeKind::cfg(), std::nullopt},
      {3, 5, graph::EdgeKind::dfg(), std::string("x")},
      {4, 5, graph::EdgeKind::dfg(), std::string("y")},
      {3, 4, graph::EdgeKind::ncs(), std::nullopt},
      {4, 5, graph::EdgeKind::ncs(), std::nullopt},
  };
  graph::CodeStructureGraph g =
      graph::build_graph(std::move(nodes), std::move(edges), "fixture",
                         graph::VulnLabel::Vulnerable);

  GraphInput input;
  input.topology = eagcn::build_topology(g, params.relations);
  std::mt19937_64 rng(77);
  std::normal_distribution<double> nd(0.0, 1.0);
  input.h0 = Matrix(6, config.eagcn.hidden);
  for (Index i = 0; i < input.h0.rows(); ++i)
    for (Index j = 0; j < input.h0.cols(); ++j) input.h0(i, j) = nd(rng);
  input.label = 1;
  return {std::move(params), std::move(input)};
}

GradCheckReport run_gradient_checks() {
  GradCheckReport report;
  auto [params, input] = gradcheck_fixture();

  // Analytic gradients through the training tape.
  ad::Tape tape;
  ModelVars vars = push_model(tape, params);
  ad::Var loss = loss_op(tape, params, vars, input, ksr::Mode::Train);
  tape.backward(loss);
  std::vector<Matrix> analytic = zero_gradients(params);
  accumulate_gradients(tape, vars, analytic, 1.0);

  TensorRegistry reg = learnable_tensors(params);
  for (size_t i = 0; i < reg.size(); ++i) {
    GradCheckEntry entry;
    entry.tensor = reg.names[i];
    Matrix& tensor = *reg.tensors[i];
    for (Index r = 0; r < tensor.rows(); ++r)
      for (Index c = 0; c < tensor.cols(); ++c) {
        const double saved = tensor(r, c);
        tensor(r, c) = saved + report.step;
        const double plus = forward_loss(params, input, ksr::Mode::Train);
        tensor(r, c) = saved - report.step;
        const double minus = forward_loss(params, input, ksr::Mode::Train);
        tensor(r, c) = saved;
        const double numeric = (plus - minus) / (2.0 * report.step);
        const double a = analytic[i](r, c);
        const double diff = std::abs(a - numeric);
        const double rel = diff / std::max({std::abs(a), std::abs(numeric), 1e-12});
        entry.max_abs_diff = std::max(entry.max_abs_diff, diff);
        if (diff > std::max(report.tolerance * std::max(std::abs(a), std::abs(numeric)),
                            1e-7)) {
          entry.passed = false;
          report.passed = false;
        }
        entry.max_rel_err = std::max(entry.max_rel_err, rel);
      }
    report.entries.push_back(std::move(entry));
  }
  return report;
}

} // namespace ample::model
