#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ample::graph {

using NodeId = int;

enum class GraphErrorKind {
  DanglingEdge,
  AstCycle,
  AstMultiParent,
  AstSelfLoop,
  DuplicateNodeId,
  UnknownNode,
  EmptyNodeType,
};

class GraphError : public std::runtime_error {
 public:
  GraphError(GraphErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  GraphErrorKind kind() const { return kind_; }

 private:
  GraphErrorKind kind_;
};

/// Edge relation: one of the four built-in kinds or an open "X-<tag>" extension.
class EdgeKind {
 public:
  EdgeKind() : name_("AST") {}
  static EdgeKind ast() { return EdgeKind("AST"); }
  static EdgeKind cfg() { return EdgeKind("CFG"); }
  static EdgeKind dfg() { return EdgeKind("DFG"); }
  static EdgeKind ncs() { return EdgeKind("NCS"); }

  /// Accepts "AST"|"CFG"|"DFG"|"NCS" or any "X-<tag>"; returns nullopt otherwise.
  static std::optional<EdgeKind> parse(const std::string& name);

  const std::string& name() const { return name_; }
  bool is_ast() const { return name_ == "AST"; }

  bool operator==(const EdgeKind& other) const { return name_ == other.name_; }
  bool operator!=(const EdgeKind& other) const { return name_ != other.name_; }
  bool operator<(const EdgeKind& other) const { return name_ < other.name_; }

 private:
  explicit EdgeKind(std::string name) : name_(std::move(name)) {}
  std::string name_;
};

struct Node {
  NodeId id = 0;
  std::string node_type;
  std::string code;
  std::optional<int> line;
  bool is_statement = false;
};

struct Edge {
  NodeId src = 0;
  NodeId dst = 0;
  EdgeKind kind = EdgeKind::ast();
  std::optional<std::string> label;

  bool operator==(const Edge& other) const {
    return src == other.src && dst == other.dst && kind == other.kind &&
           label == other.label;
  }
};

enum class VulnLabel { NonVulnerable = 0, Vulnerable = 1 };

/// Immutable code structure graph for one function. Node ids are dense
/// 0..|V|-1; build_graph() re-indexes and keeps the exporter's original id
/// per node. AST edges form a forest whose internal nodes have exactly one
/// parent; leaves may have several parents (the shape variable merging
/// produces), and AST edges are always acyclic.
class CodeStructureGraph {
 public:
  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::string& function_name() const { return function_name_; }
  std::optional<VulnLabel> label() const { return label_; }
  std::optional<std::int64_t> exporter_id(NodeId id) const;

  int num_nodes() const { return static_cast<int>(nodes_.size()); }
  int num_edges() const { return static_cast<int>(edges_.size()); }

  const Node& node(NodeId id) const;

  /// AST children of u in edge insertion order.
  const std::vector<NodeId>& ast_children(NodeId u) const;
  /// AST parents of u (singleton before variable merging; may grow after).
  const std::vector<NodeId>& ast_parents(NodeId u) const;

 private:
  friend CodeStructureGraph build_graph(std::vector<Node> nodes,
                                        std::vector<Edge> edges,
                                        std::string function_name,
                                        std::optional<VulnLabel> label,
                                        std::vector<std::int64_t> exporter_ids);

  std::vector<Node> nodes_;
  std::vector<Edge> edges_;
  std::string function_name_;
  std::optional<VulnLabel> label_;
  std::vector<std::int64_t> exporter_ids_;
  std::vector<std::vector<NodeId>> ast_children_;
  std::vector<std::vector<NodeId>> ast_parents_;
};

/// Validates and indexes a graph. Input node ids are treated as exporter ids
/// (arbitrary, unique); they are re-mapped to dense ids in node list order and
/// edge endpoints are rewritten accordingly.
///
/// Throws GraphError: DuplicateNodeId, DanglingEdge, AstSelfLoop,
/// AstMultiParent (an AST-internal node with more than one parent), AstCycle.
CodeStructureGraph build_graph(std::vector<Node> nodes, std::vector<Edge> edges,
                               std::string function_name = {},
                               std::optional<VulnLabel> label = std::nullopt,
                               std::vector<std::int64_t> exporter_ids = {});

/// AST children of u in edge insertion order. Throws UnknownNode.
std::vector<NodeId> ast_children(const CodeStructureGraph& g, NodeId u);

/// Nodes with no outgoing AST edge, in id order.
std::vector<NodeId> ast_leaf_nodes(const CodeStructureGraph& g);

/// Structural equality: same nodes (all fields), same edge multiset with the
/// same insertion order, same function name and label.
bool structurally_equal(const CodeStructureGraph& a, const CodeStructureGraph& b);

} // namespace ample::graph
