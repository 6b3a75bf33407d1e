#pragma once

#include <optional>
#include <vector>

#include "ample/train.hpp"

namespace ample::pipeline {

class ExplainError : public std::runtime_error {
 public:
  explicit ExplainError(const std::string& what) : std::runtime_error(what) {}
};

/// Per-statement importance. Every original node belongs to exactly one
/// bucket: its nearest statement ancestor-or-self, falling back to its AST
/// root when no statement encloses it.
struct StatementAttribution {
  struct Bucket {
    graph::NodeId statement;          // original-graph id of the bucket root
    std::optional<int> line;
    double weight = 0.0;              // sum of member node importances
    std::vector<graph::NodeId> members;  // original-graph ids, ascending
  };
  std::vector<Bucket> buckets;        // sorted by weight descending, id ascending
  std::vector<double> node_importance;  // per original node
};

/// Runs the model on the simplified graph, takes relu of the pre-pool feature
/// map summed per position as node importance, maps every original node to its
/// surviving representative through the trace, and sums per statement bucket.
/// Throws UnknownTrace-style ExplainError when the trace does not match g.
StatementAttribution explain_statements(const ModelBundle& bundle,
                                        const graph::CodeStructureGraph& g,
                                        const simplify::SimplificationTrace& trace);

} // namespace ample::pipeline
