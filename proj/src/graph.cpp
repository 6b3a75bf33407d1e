#include "ample/graph.hpp"

#include <algorithm>
#include <unordered_map>

namespace ample::graph {

std::optional<EdgeKind> EdgeKind::parse(const std::string& name) {
  if (name == "AST" || name == "CFG" || name == "DFG" || name == "NCS")
    return EdgeKind(name);
  if (name.size() > 2 && name.rfind("X-", 0) == 0) return EdgeKind(name);
  return std::nullopt;
}

const Node& CodeStructureGraph::node(NodeId id) const {
  if (id < 0 || id >= num_nodes())
    throw GraphError(GraphErrorKind::UnknownNode,
                     "unknown node id " + std::to_string(id));
  return nodes_[static_cast<size_t>(id)];
}

std::optional<std::int64_t> CodeStructureGraph::exporter_id(NodeId id) const {
  node(id);
  if (exporter_ids_.empty()) return std::nullopt;
  return exporter_ids_[static_cast<size_t>(id)];
}

const std::vector<NodeId>& CodeStructureGraph::ast_children(NodeId u) const {
  node(u);
  return ast_children_[static_cast<size_t>(u)];
}

const std::vector<NodeId>& CodeStructureGraph::ast_parents(NodeId u) const {
  node(u);
  return ast_parents_[static_cast<size_t>(u)];
}

CodeStructureGraph build_graph(std::vector<Node> nodes, std::vector<Edge> edges,
                               std::string function_name,
                               std::optional<VulnLabel> label,
                               std::vector<std::int64_t> exporter_ids) {
  const int n = static_cast<int>(nodes.size());

  // Re-index: input ids are exporter ids, output ids are list positions.
  std::unordered_map<NodeId, NodeId> remap;
  remap.reserve(nodes.size());
  std::vector<std::int64_t> kept_exporter_ids(nodes.size());
  for (int i = 0; i < n; ++i) {
    if (!remap.emplace(nodes[static_cast<size_t>(i)].id, i).second)
      throw GraphError(GraphErrorKind::DuplicateNodeId,
                       "duplicate node id " +
                           std::to_string(nodes[static_cast<size_t>(i)].id));
    if (nodes[static_cast<size_t>(i)].node_type.empty())
      throw GraphError(GraphErrorKind::EmptyNodeType,
                       "node " + std::to_string(nodes[static_cast<size_t>(i)].id) +
                           " has an empty type");
    kept_exporter_ids[static_cast<size_t>(i)] =
        exporter_ids.empty() ? nodes[static_cast<size_t>(i)].id
                             : exporter_ids[static_cast<size_t>(i)];
    nodes[static_cast<size_t>(i)].id = i;
  }

  for (Edge& e : edges) {
    auto s = remap.find(e.src);
    auto d = remap.find(e.dst);
    if (s == remap.end() || d == remap.end())
      throw GraphError(GraphErrorKind::DanglingEdge,
                       "edge references unknown node id");
    e.src = s->second;
    e.dst = d->second;
    if (e.kind.is_ast() && e.src == e.dst)
      throw GraphError(GraphErrorKind::AstSelfLoop,
                       "AST self-loop on node " + std::to_string(e.src));
  }

  std::vector<std::vector<NodeId>> children(nodes.size());
  std::vector<std::vector<NodeId>> parents(nodes.size());
  for (const Edge& e : edges) {
    if (!e.kind.is_ast()) continue;
    children[static_cast<size_t>(e.src)].push_back(e.dst);
    parents[static_cast<size_t>(e.dst)].push_back(e.src);
  }

  // Only AST leaves may carry more than one parent.
  for (int i = 0; i < n; ++i) {
    if (parents[static_cast<size_t>(i)].size() > 1 &&
        !children[static_cast<size_t>(i)].empty())
      throw GraphError(GraphErrorKind::AstMultiParent,
                       "AST-internal node " + std::to_string(i) +
                           " has more than one parent");
  }

  // Acyclicity by Kahn's algorithm over AST edges.
  std::vector<int> indeg(nodes.size(), 0);
  for (int i = 0; i < n; ++i)
    indeg[static_cast<size_t>(i)] =
        static_cast<int>(parents[static_cast<size_t>(i)].size());
  std::vector<NodeId> queue;
  for (int i = 0; i < n; ++i)
    if (indeg[static_cast<size_t>(i)] == 0) queue.push_back(i);
  size_t seen = 0;
  while (seen < queue.size()) {
    NodeId u = queue[seen++];
    for (NodeId v : children[static_cast<size_t>(u)])
      if (--indeg[static_cast<size_t>(v)] == 0) queue.push_back(v);
  }
  if (static_cast<int>(queue.size()) != n)
    throw GraphError(GraphErrorKind::AstCycle, "AST edges contain a cycle");

  CodeStructureGraph g;
  g.nodes_ = std::move(nodes);
  g.edges_ = std::move(edges);
  g.function_name_ = std::move(function_name);
  g.label_ = label;
  g.exporter_ids_ = std::move(kept_exporter_ids);
  g.ast_children_ = std::move(children);
  g.ast_parents_ = std::move(parents);
  return g;
}

std::vector<NodeId> ast_children(const CodeStructureGraph& g, NodeId u) {
  return g.ast_children(u);
}

std::vector<NodeId> ast_leaf_nodes(const CodeStructureGraph& g) {
  std::vector<NodeId> leaves;
  for (int i = 0; i < g.num_nodes(); ++i)
    if (g.ast_children(i).empty()) leaves.push_back(i);
  return leaves;
}

bool structurally_equal(const CodeStructureGraph& a,
                        const CodeStructureGraph& b) {
  if (a.num_nodes() != b.num_nodes() || a.num_edges() != b.num_edges())
    return false;
  if (a.function_name() != b.function_name() || a.label() != b.label())
    return false;
  for (int i = 0; i < a.num_nodes(); ++i) {
    const Node& x = a.node(i);
    const Node& y = b.node(i);
    if (x.node_type != y.node_type || x.code != y.code || x.line != y.line ||
        x.is_statement != y.is_statement)
      return false;
  }
  for (int i = 0; i < a.num_edges(); ++i)
    if (!(a.edges()[static_cast<size_t>(i)] == b.edges()[static_cast<size_t>(i)]))
      return false;
  return true;
}

} // namespace ample::graph
