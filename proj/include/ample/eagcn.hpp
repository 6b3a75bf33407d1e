#pragma once

#include <string>
#include <vector>

#include "ample/autodiff.hpp"
#include "ample/graph.hpp"
#include "ample/types.hpp"

namespace ample::eagcn {

struct EaGcnConfig {
  int layers = 2;
  int heads = 10;
  int hidden = 100;       // node representation width d
  int ff_hidden = 0;      // inner feed-forward width; 0 means = hidden
  bool reverse_edges = false;

  int head_dim() const { return hidden / heads; }
  int ff_width() const { return ff_hidden > 0 ? ff_hidden : hidden; }
  void validate() const;
};

/// Model-wide relation registry. Edges whose kind is not registered do not
/// participate in message passing.
struct RelationSet {
  std::vector<std::string> names;  // e.g. {"AST","CFG","DFG","NCS",...}

  int size() const { return static_cast<int>(names.size()); }
  int index_of(const graph::EdgeKind& kind) const;  // -1 when absent
  static RelationSet builtin();                     // the four standard kinds
};

/// Per-layer learnable tensors. Every matrix acts on node rows through
/// x -> x * M.transpose() (see stable_product_nt); biases are 1 x width.
struct LayerParams {
  Matrix relation_coeff;   // |R| x 1, one scalar per edge type
  Matrix shared_transform; // d x d, applied to neighbor messages
  Matrix self_transform;   // d x d, applied to the node itself
  Matrix attn_proj;        // d x d, projection after head concatenation
  Matrix ff_w1;            // ff x d
  Matrix ff_b1;            // 1 x ff
  Matrix ff_w2;            // d x ff
  Matrix ff_b2;            // 1 x d
};

/// Immutable per-graph adjacency index in a fixed canonical order.
struct GraphTopology {
  struct InEdge {
    int src;
    int relation;       // index into the RelationSet
    std::string label;  // empty when the edge carries none
  };

  int num_nodes = 0;
  int num_relations = 0;
  /// [relation][node] -> distinct in-neighbor ids, ascending. Parallel edges
  /// of one relation between the same pair count once.
  std::vector<std::vector<std::vector<int>>> in_neighbors;
  /// [node] -> all in-edges across relations, sorted by (relation, label, src).
  std::vector<std::vector<InEdge>> in_edges;
};

/// Message direction follows edge direction (a node aggregates from the
/// sources of its incoming edges); reverse_edges flips that.
GraphTopology build_topology(const graph::CodeStructureGraph& g,
                             const RelationSet& relations,
                             bool reverse_edges = false);

/// One round of relational propagation:
/// row i of the result is relu( sum_r coeff_r/c_{i,r} * sum_{j in N_i^r} (H V^T)_j
///                              + (H W0^T)_i ).
/// Relations with no in-neighbors at a node contribute nothing there.
Matrix relational_propagate(const Matrix& h, const GraphTopology& topology,
                            const LayerParams& params);

/// Per-destination attention weights of one head: softmax over the incoming
/// edges of scaled head-slice dot products. Result is indexed
/// [node][position in topology.in_edges[node]]; weights per node sum to 1.
std::vector<std::vector<double>> edge_attention_scores(
    const Matrix& h, const GraphTopology& topology, int head, int heads);

/// Multi-head attention enhancement with two residuals:
///   A   = concat_heads(weighted neighbor sums) * attn_proj^T + h_prev
///   out = relu(A ff_w1^T + ff_b1) ff_w2^T + ff_b2 + A.
/// A node without in-edges keeps A_i = h_prev_i exactly.
Matrix attention_aggregate(const Matrix& h, const GraphTopology& topology,
                           const LayerParams& params, const Matrix& h_prev,
                           int heads);

/// L layers of relational propagation followed by attention enhancement.
Matrix eagcn_forward(const Matrix& h0, const GraphTopology& topology,
                     const EaGcnConfig& config,
                     const std::vector<LayerParams>& layers);

// --- tape builders (training path; forward values bitwise equal the
// functions above because they share the same kernels) ----------------------

struct LayerVars {
  ad::Var relation_coeff, shared_transform, self_transform, attn_proj;
  ad::Var ff_w1, ff_b1, ff_w2, ff_b2;
};

LayerVars push_layer(ad::Tape& tape, const LayerParams& params);

ad::Var relational_propagate_op(ad::Tape& tape, ad::Var h,
                                const GraphTopology& topology,
                                const LayerVars& vars);

ad::Var attention_aggregate_op(ad::Tape& tape, ad::Var h,
                               const GraphTopology& topology,
                               const LayerVars& vars, ad::Var h_prev,
                               int heads);

ad::Var eagcn_forward_op(ad::Tape& tape, ad::Var h0,
                         const GraphTopology& topology,
                         const EaGcnConfig& config,
                         const std::vector<LayerVars>& layers);

} // namespace ample::eagcn
