#include "ample/explain.hpp"

#include <algorithm>
#include <map>

namespace ample::pipeline {

namespace {

/// Nearest ancestor-or-self with is_statement; AST root as fallback. Original
/// graphs have at most one AST parent per node.
graph::NodeId statement_bucket(const graph::CodeStructureGraph& g,
                               graph::NodeId node) {
  graph::NodeId current = node;
  graph::NodeId root = node;
  int guard = g.num_nodes() + 1;
  while (guard-- > 0) {
    if (g.node(current).is_statement) return current;
    const auto& parents = g.ast_parents(current);
    if (parents.empty()) { root = current; break; }
    current = parents.front();
  }
  return root;
}

} // namespace

StatementAttribution explain_statements(const ModelBundle& bundle,
                                        const graph::CodeStructureGraph& g,
                                        const simplify::SimplificationTrace& trace) {
  if (trace.survivor.size() != static_cast<size_t>(g.num_nodes()) ||
      trace.simplified_id.size() != static_cast<size_t>(g.num_nodes()))
    throw ExplainError("trace does not match the graph");
  // A trace produced by this graph's simplification reproduces exactly.
  simplify::SimplifyResult recomputed =
      simplify::gs(g, bundle.rules, bundle.identifier_types);
  if (recomputed.trace.survivor != trace.survivor)
    throw ExplainError("trace does not match the graph's simplification");

  const model::GraphInput input = prepare_input(bundle, g);
  const Matrix h = eagcn::eagcn_forward(input.h0, input.topology,
                                        bundle.params.config.eagcn,
                                        bundle.params.layers);
  const Matrix features =
      ksr::kernel_scaled_features(h, bundle.params.ksr, ksr::Mode::Eval);

  // Importance of each simplified position: relu of the pre-pool channels,
  // summed.
  std::vector<double> position_importance(static_cast<size_t>(features.rows()), 0.0);
  for (Index p = 0; p < features.rows(); ++p)
    for (Index c = 0; c < features.cols(); ++c)
      position_importance[static_cast<size_t>(p)] +=
          std::max(0.0, features(p, c));

  StatementAttribution result;
  result.node_importance.resize(static_cast<size_t>(g.num_nodes()));
  for (graph::NodeId node = 0; node < g.num_nodes(); ++node)
    result.node_importance[static_cast<size_t>(node)] =
        position_importance[static_cast<size_t>(trace.resolve(node))];

  std::map<graph::NodeId, StatementAttribution::Bucket> buckets;
  for (graph::NodeId node = 0; node < g.num_nodes(); ++node) {
    const graph::NodeId root = statement_bucket(g, node);
    StatementAttribution::Bucket& bucket = buckets[root];
    bucket.statement = root;
    bucket.line = g.node(root).line;
    bucket.weight += result.node_importance[static_cast<size_t>(node)];
    bucket.members.push_back(node);
  }
  for (auto& [root, bucket] : buckets) result.buckets.push_back(std::move(bucket));
  std::sort(result.buckets.begin(), result.buckets.end(),
            [](const StatementAttribution::Bucket& a,
               const StatementAttribution::Bucket& b) {
              if (a.weight != b.weight) return a.weight > b.weight;
              return a.statement < b.statement;
            });
  return result;
}

} // namespace ample::pipeline
