#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ample/graph.hpp"

namespace ample::simplify {

/// One merging rule: child of type `ctype` under parent of type `ptype` is
/// absorbed into the parent. `ctype` may be "*" (any child type). When
/// require_equal_code is set the rule only fires if parent and child carry
/// the same code string.
struct MergeRule {
  std::string ptype;
  std::string ctype;
  bool require_equal_code = false;
};

struct MergeRuleTable {
  std::vector<MergeRule> rules;
};

/// The shipped default table. The published rule categories cover expression
/// statements, identifier declarations, conditions, for-loop initializers and
/// call statements; load_merge_rules() overrides it from JSON.
MergeRuleTable default_merge_rules();

/// Node types whose duplicate leaves are contracted by variable-based
/// simplification. Default: {"Identifier"}.
std::vector<std::string> default_identifier_types();

/// JSON array of {ptype, ctype, require_equal_code}.
MergeRuleTable parse_merge_rules(const std::string& text);
std::string serialize_merge_rules(const MergeRuleTable& table);

enum class MergePhase { TGS, VGS };

struct MergeEvent {
  graph::NodeId kept;     // original-graph id of the absorbing node
  graph::NodeId removed;  // original-graph id of the deleted node
  MergePhase phase;
  std::optional<int> rule_index;  // TGS only
};

/// Audit trail of one simplification run. All node ids refer to the ORIGINAL
/// graph; `simplified_id` maps to the returned (re-indexed) graph.
struct SimplificationTrace {
  std::vector<MergeEvent> events;
  /// original id -> original id of its surviving representative (chains resolved;
  /// identity for surviving nodes).
  std::vector<graph::NodeId> survivor;
  /// original id -> node id in the simplified graph, for surviving nodes only.
  std::vector<std::optional<graph::NodeId>> simplified_id;

  /// Representative of `original` in the simplified graph.
  graph::NodeId resolve(graph::NodeId original) const;
};

struct SimplifyResult {
  graph::CodeStructureGraph graph;
  SimplificationTrace trace;
};

/// First rule matching (parent.node_type, child.node_type) and, when the rule
/// requires it, parent.code == child.code. Returns the table index.
std::optional<int> match_rule(const MergeRuleTable& table,
                              const graph::Node& parent,
                              const graph::Node& child);

/// Type-based simplification: breadth-first traversal from each AST root;
/// a child matching a rule is deleted, its AST children are re-parented to the
/// absorbing node and re-examined against it. Non-AST edges incident to a
/// deleted node are re-targeted to the absorbing node.
SimplifyResult tgs(const graph::CodeStructureGraph& g,
                   const MergeRuleTable& table);

/// Variable-based simplification: AST leaves whose type is in the identifier
/// set are grouped by exact code string; within a group every node is
/// contracted onto the smallest-id one; all edge kinds are re-targeted and
/// duplicate (src, dst, kind, label) edges collapse to one.
SimplifyResult vgs(const graph::CodeStructureGraph& g,
                   const std::vector<std::string>& identifier_types =
                       default_identifier_types());

/// tgs followed by vgs; traces concatenated.
SimplifyResult gs(const graph::CodeStructureGraph& g,
                  const MergeRuleTable& table,
                  const std::vector<std::string>& identifier_types =
                      default_identifier_types());

} // namespace ample::simplify
