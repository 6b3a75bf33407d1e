#include "ample/simplify.hpp"

#include <deque>
#include <map>

#include <json.hpp>

#include "ample/graph_io.hpp"

namespace ample::simplify {

using graph::CodeStructureGraph;
using graph::Edge;
using graph::Node;
using graph::NodeId;

MergeRuleTable default_merge_rules() {
  return MergeRuleTable{{
      {"ExpressionStatement", "Expression", false},
      {"IdentifierDeclStatement", "IdentifierDecl", false},
      {"Condition", "Expression", false},
      {"ForInit", "Expression", false},
      {"CallExpression", "ArgumentList", false},
      {"Argument", "*", true},
      {"Callee", "Identifier", false},
  }};
}

std::vector<std::string> default_identifier_types() { return {"Identifier"}; }

MergeRuleTable parse_merge_rules(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw io::IoError(io::IoErrorKind::MalformedJson, e.what());
  }
  if (!doc.is_array())
    throw io::IoError(io::IoErrorKind::SchemaViolation,
                      "rule table must be a JSON array");
  MergeRuleTable table;
  for (const auto& jr : doc) {
    MergeRule rule;
    rule.ptype = jr.at("ptype").get<std::string>();
    rule.ctype = jr.at("ctype").get<std::string>();
    rule.require_equal_code = jr.value("require_equal_code", false);
    if (rule.ptype.empty() || rule.ctype.empty())
      throw io::IoError(io::IoErrorKind::SchemaViolation,
                        "rule types must be non-empty");
    for (const MergeRule& seen : table.rules)
      if (seen.ptype == rule.ptype && seen.ctype == rule.ctype)
        throw io::IoError(io::IoErrorKind::SchemaViolation,
                          "duplicate rule (" + rule.ptype + ", " + rule.ctype + ")");
    table.rules.push_back(std::move(rule));
  }
  return table;
}

std::string serialize_merge_rules(const MergeRuleTable& table) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  for (const MergeRule& r : table.rules)
    doc.push_back({{"ptype", r.ptype},
                   {"ctype", r.ctype},
                   {"require_equal_code", r.require_equal_code}});
  return doc.dump(2) + "\n";
}

std::optional<int> match_rule(const MergeRuleTable& table, const Node& parent,
                              const Node& child) {
  for (size_t i = 0; i < table.rules.size(); ++i) {
    const MergeRule& r = table.rules[i];
    if (r.ptype != parent.node_type) continue;
    if (r.ctype != "*" && r.ctype != child.node_type) continue;
    if (r.require_equal_code && parent.code != child.code) continue;
    return static_cast<int>(i);
  }
  return std::nullopt;
}

NodeId SimplificationTrace::resolve(NodeId original) const {
  NodeId rep = survivor.at(static_cast<size_t>(original));
  const auto& sid = simplified_id.at(static_cast<size_t>(rep));
  if (!sid)
    throw graph::GraphError(graph::GraphErrorKind::UnknownNode,
                            "node has no surviving representative");
  return *sid;
}

namespace {

/// Mutable view of a graph during simplification. All ids stay in the
/// original graph's space; deleted nodes are only marked dead and edge
/// endpoints are resolved through the representative chain at rebuild time.
struct WorkState {
  const CodeStructureGraph* original;
  std::vector<bool> alive;
  std::vector<NodeId> representative;  // direct link; chase until alive
  // AST child slots: (child, edge label), splice order maintained
  std::vector<std::vector<std::pair<NodeId, std::optional<std::string>>>> children;
  std::vector<int> ast_parent_count;
  std::vector<MergeEvent> events;

  explicit WorkState(const CodeStructureGraph& g) : original(&g) {
    const size_t n = static_cast<size_t>(g.num_nodes());
    alive.assign(n, true);
    representative.resize(n);
    for (size_t i = 0; i < n; ++i) representative[i] = static_cast<NodeId>(i);
    children.resize(n);
    ast_parent_count.assign(n, 0);
    for (const Edge& e : g.edges()) {
      if (!e.kind.is_ast()) continue;
      children[static_cast<size_t>(e.src)].push_back({e.dst, e.label});
      ++ast_parent_count[static_cast<size_t>(e.dst)];
    }
  }

  NodeId resolve(NodeId id) const {
    while (!alive[static_cast<size_t>(id)])
      id = representative[static_cast<size_t>(id)];
    return id;
  }

  const Node& node(NodeId id) const { return original->node(id); }
};

void run_tgs(WorkState& ws, const MergeRuleTable& table) {
  const int n = ws.original->num_nodes();
  std::deque<NodeId> work;
  for (NodeId u = 0; u < n; ++u)
    if (ws.ast_parent_count[static_cast<size_t>(u)] == 0) work.push_back(u);

  while (!work.empty()) {
    NodeId u = work.front();
    work.pop_front();
    if (!ws.alive[static_cast<size_t>(u)]) continue;

    auto& slots = ws.children[static_cast<size_t>(u)];
    std::deque<std::pair<NodeId, std::optional<std::string>>> pending(
        slots.begin(), slots.end());
    slots.clear();

    while (!pending.empty()) {
      auto [v, label] = pending.front();
      pending.pop_front();
      if (!ws.alive[static_cast<size_t>(v)]) continue;

      std::optional<int> rule = match_rule(table, ws.node(u), ws.node(v));
      if (rule) {
        ws.alive[static_cast<size_t>(v)] = false;
        ws.representative[static_cast<size_t>(v)] = u;
        ws.events.push_back({u, v, MergePhase::TGS, rule});
        // Splice v's children in place so they are re-examined against u next.
        auto& grandchildren = ws.children[static_cast<size_t>(v)];
        for (auto it = grandchildren.rbegin(); it != grandchildren.rend(); ++it)
          pending.push_front(*it);
        grandchildren.clear();
      } else {
        slots.push_back({v, label});
        work.push_back(v);
      }
    }
  }
}

void run_vgs(WorkState& ws, const std::vector<std::string>& identifier_types) {
  const int n = ws.original->num_nodes();
  std::map<std::string, std::vector<NodeId>> groups;
  for (NodeId u = 0; u < n; ++u) {
    if (!ws.alive[static_cast<size_t>(u)]) continue;
    if (!ws.children[static_cast<size_t>(u)].empty()) continue;
    const Node& node = ws.node(u);
    bool is_identifier = false;
    for (const std::string& t : identifier_types)
      if (node.node_type == t) { is_identifier = true; break; }
    if (is_identifier) groups[node.code].push_back(u);
  }

  for (auto& [code, members] : groups) {
    if (members.size() < 2) continue;
    NodeId kept = members.front();  // smallest id: first appearance wins
    for (size_t i = 1; i < members.size(); ++i) {
      NodeId removed = members[i];
      ws.alive[static_cast<size_t>(removed)] = false;
      ws.representative[static_cast<size_t>(removed)] = kept;
      ws.events.push_back({kept, removed, MergePhase::VGS, std::nullopt});
    }
  }
}

SimplifyResult rebuild(WorkState& ws) {
  const CodeStructureGraph& g = *ws.original;
  const int n = g.num_nodes();

  SimplificationTrace trace;
  trace.events = std::move(ws.events);
  trace.survivor.resize(static_cast<size_t>(n));
  trace.simplified_id.assign(static_cast<size_t>(n), std::nullopt);

  std::vector<Node> nodes;
  std::vector<std::int64_t> exporter_ids;
  for (NodeId u = 0; u < n; ++u) {
    trace.survivor[static_cast<size_t>(u)] = ws.resolve(u);
    if (!ws.alive[static_cast<size_t>(u)]) continue;
    trace.simplified_id[static_cast<size_t>(u)] =
        static_cast<NodeId>(nodes.size());
    nodes.push_back(g.node(u));  // keeps the old id; build_graph re-indexes
    exporter_ids.push_back(g.exporter_id(u).value_or(u));
  }

  // AST edges first (parent-major, splice order), then the other kinds in
  // their original order with endpoints resolved. Duplicate quadruples
  // collapse to the first occurrence. This emission order is a fixpoint:
  // re-simplifying an already-simplified graph reproduces it exactly.
  std::vector<Edge> edges;
  auto push_unique = [&edges](Edge e) {
    for (const Edge& seen : edges)
      if (seen == e) return;
    edges.push_back(std::move(e));
  };
  for (NodeId u = 0; u < n; ++u) {
    if (!ws.alive[static_cast<size_t>(u)]) continue;
    for (const auto& [child, label] : ws.children[static_cast<size_t>(u)])
      push_unique({u, ws.resolve(child), graph::EdgeKind::ast(), label});
  }
  for (const Edge& e : g.edges()) {
    if (e.kind.is_ast()) continue;
    push_unique({ws.resolve(e.src), ws.resolve(e.dst), e.kind, e.label});
  }

  SimplifyResult result{
      graph::build_graph(std::move(nodes), std::move(edges), g.function_name(),
                         g.label(), std::move(exporter_ids)),
      std::move(trace)};
  return result;
}

} // namespace

SimplifyResult tgs(const CodeStructureGraph& g, const MergeRuleTable& table) {
  WorkState ws(g);
  run_tgs(ws, table);
  return rebuild(ws);
}

SimplifyResult vgs(const CodeStructureGraph& g,
                   const std::vector<std::string>& identifier_types) {
  WorkState ws(g);
  run_vgs(ws, identifier_types);
  return rebuild(ws);
}

SimplifyResult gs(const CodeStructureGraph& g, const MergeRuleTable& table,
                  const std::vector<std::string>& identifier_types) {
  WorkState ws(g);
  run_tgs(ws, table);
  run_vgs(ws, identifier_types);
  return rebuild(ws);
}

} // namespace ample::simplify
