#include "ample/synth.hpp"

#include <cstdio>
#include <random>
#include <stdexcept>

namespace ample::pipeline {

namespace {

using graph::Edge;
using graph::EdgeKind;
using graph::Node;
using graph::NodeId;

struct Builder {
  std::vector<Node> nodes;
  std::vector<Edge> edges;
  std::mt19937_64 rng;

  explicit Builder(std::uint64_t seed) : rng(seed) {}

  NodeId add(const std::string& type, const std::string& code,
             bool is_statement = false, std::optional<int> line = std::nullopt) {
    const NodeId id = static_cast<NodeId>(nodes.size());
    nodes.push_back({id, type, code, line, is_statement});
    return id;
  }

  void ast(NodeId parent, NodeId child) {
    edges.push_back({parent, child, EdgeKind::ast(), std::nullopt});
  }
  void cfg(NodeId from, NodeId to) {
    edges.push_back({from, to, EdgeKind::cfg(), std::nullopt});
  }
  void dfg(NodeId from, NodeId to, const std::string& var) {
    edges.push_back({from, to, EdgeKind::dfg(), var});
  }
  void ncs(NodeId from, NodeId to) {
    edges.push_back({from, to, EdgeKind::ncs(), std::nullopt});
  }

  int pick(int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
  }
  template <typename T>
  const T& choose(const std::vector<T>& pool) {
    return pool[static_cast<size_t>(pick(0, static_cast<int>(pool.size()) - 1))];
  }
};

const std::vector<std::string> kSafeCallees = {
    "strncpy", "snprintf", "memset", "printf", "validate", "process", "log_msg"};
const std::vector<std::string> kOperators = {"+", "-", "*", "<", ">", "=="};

struct FunctionState {
  std::vector<std::pair<std::string, NodeId>> defs;  // variable -> defining node
  std::vector<std::string> params;
};

/// IdentifierDeclStatement -> IdentifierDecl -> {type, Identifier, init expr}
NodeId emit_decl(Builder& b, FunctionState& state, const std::string& var,
                 int line) {
  const std::string init = std::to_string(b.pick(0, 99));
  NodeId stmt = b.add("IdentifierDeclStatement", "int " + var + " = " + init + " ;",
                      true, line);
  NodeId decl = b.add("IdentifierDecl", var + " = " + init);
  b.ast(stmt, decl);
  NodeId ty = b.add("IdentifierDeclType", "int");
  NodeId ident = b.add("Identifier", var);
  NodeId rhs = b.add("PrimaryExpression", init);
  b.ast(decl, ty);
  b.ast(decl, ident);
  b.ast(decl, rhs);
  state.defs.push_back({var, stmt});
  return stmt;
}

/// ExpressionStatement -> Expression -> {Identifier, op, Identifier}
NodeId emit_expr(Builder& b, FunctionState& state, int line) {
  const std::string lhs =
      state.defs.empty() ? "tmp" : b.choose(state.defs).first;
  const std::string rhs =
      state.defs.empty() ? "tmp" : b.choose(state.defs).first;
  const std::string op = b.choose(kOperators);
  NodeId stmt = b.add("ExpressionStatement", lhs + " " + op + " " + rhs + " ;",
                      true, line);
  NodeId expr = b.add("Expression", lhs + " " + op + " " + rhs);
  b.ast(stmt, expr);
  NodeId a = b.add("Identifier", lhs);
  NodeId o = b.add("Operator", op);
  NodeId c = b.add("Identifier", rhs);
  b.ast(expr, a);
  b.ast(expr, o);
  b.ast(expr, c);
  return stmt;
}

/// Condition -> Expression -> {Identifier, op, literal}
NodeId emit_condition(Builder& b, FunctionState& state, int line) {
  const std::string var = state.defs.empty() ? "tmp" : b.choose(state.defs).first;
  const std::string bound = std::to_string(b.pick(1, 64));
  NodeId stmt = b.add("Condition", var + " < " + bound, true, line);
  NodeId expr = b.add("Expression", var + " < " + bound);
  b.ast(stmt, expr);
  NodeId a = b.add("Identifier", var);
  NodeId o = b.add("RelationalOperator", "<");
  NodeId lit = b.add("PrimaryExpression", bound);
  b.ast(expr, a);
  b.ast(expr, o);
  b.ast(expr, lit);
  return stmt;
}

/// ExpressionStatement -> CallExpression -> {Callee -> Identifier, ArgumentList
/// -> Argument* -> Identifier}
NodeId emit_call(Builder& b, const std::string& callee,
                 const std::vector<std::string>& args, int line) {
  std::string arg_text;
  for (size_t i = 0; i < args.size(); ++i)
    arg_text += (i ? ", " : "") + args[i];
  const std::string call_text = callee + " ( " + arg_text + " )";
  NodeId stmt = b.add("ExpressionStatement", call_text + " ;", true, line);
  NodeId call = b.add("CallExpression", call_text);
  b.ast(stmt, call);
  NodeId callee_node = b.add("Callee", callee);
  b.ast(call, callee_node);
  NodeId callee_ident = b.add("Identifier", callee);
  b.ast(callee_node, callee_ident);
  NodeId arglist = b.add("ArgumentList", arg_text);
  b.ast(call, arglist);
  for (const std::string& arg : args) {
    NodeId argument = b.add("Argument", arg);
    b.ast(arglist, argument);
    NodeId ident = b.add("Identifier", arg);
    b.ast(argument, ident);
  }
  return stmt;
}

struct GeneratedGraph {
  graph::CodeStructureGraph graph;
  std::optional<NodeId> motif;
};

GeneratedGraph generate_function(std::uint64_t seed, int index, bool vulnerable) {
  Builder b(seed);
  FunctionState state;

  const std::string fname = "func_" + std::to_string(index);
  NodeId root = b.add("FunctionDef", fname);
  NodeId param_list = b.add("ParameterList", "");
  b.ast(root, param_list);

  const int num_params = b.pick(1, 3);
  for (int p = 0; p < num_params; ++p) {
    const std::string name = "arg" + std::to_string(p);
    NodeId param = b.add("Parameter", "char * " + name);
    b.ast(param_list, param);
    NodeId ident = b.add("Identifier", name);
    b.ast(param, ident);
    state.params.push_back(name);
    state.defs.push_back({name, param});
  }

  NodeId body = b.add("CompoundStatement", "");
  b.ast(root, body);

  // Node budget stays within 10..80: 3..7 statements of at most 9 nodes each
  // plus the declaration+call pair of the planted motif.
  const int num_statements = b.pick(3, 7);
  const int vulnerable_at = vulnerable ? b.pick(0, num_statements - 1) : -1;
  std::vector<NodeId> statements;
  std::optional<NodeId> motif;
  int line = 2;

  for (int s = 0; s < num_statements; ++s, ++line) {
    NodeId stmt;
    if (s == vulnerable_at) {
      const std::string& tainted = b.choose(state.params);
      std::string buffer = "buf" + std::to_string(s);
      emit_decl(b, state, buffer, line++);
      statements.push_back(state.defs.back().second);
      stmt = emit_call(b, "strcpy", {buffer, tainted}, line);
      motif = stmt;
      // unchecked parameter flows straight into the call
      for (const auto& [var, def] : state.defs)
        if (var == tainted) { b.dfg(def, stmt, var); break; }
      b.dfg(statements.back(), stmt, buffer);
    } else {
      switch (b.pick(0, 3)) {
        case 0:
          stmt = emit_decl(b, state, "v" + std::to_string(s), line);
          break;
        case 1:
          stmt = emit_expr(b, state, line);
          break;
        case 2:
          stmt = emit_condition(b, state, line);
          break;
        default: {
          const std::string& callee = b.choose(kSafeCallees);
          std::vector<std::string> args;
          const int argc = b.pick(1, 2);
          for (int a = 0; a < argc; ++a)
            args.push_back(state.defs.empty() ? "tmp"
                                              : b.choose(state.defs).first);
          stmt = emit_call(b, callee, args, line);
          // def-use edges for the call's arguments
          for (const std::string& arg : args)
            for (const auto& [var, def] : state.defs)
              if (var == arg) { b.dfg(def, stmt, var); break; }
          break;
        }
      }
      statements.push_back(stmt);
      continue;
    }
    statements.push_back(stmt);
  }

  b.ast(body, statements.front());
  for (size_t s = 0; s + 1 < statements.size(); ++s) {
    b.ast(body, statements[s + 1]);
    b.cfg(statements[s], statements[s + 1]);
  }
  b.cfg(root, statements.front());

  // natural code sequence over AST leaves (id order approximates source order)
  std::vector<NodeId> leaves;
  {
    std::vector<int> out_degree(b.nodes.size(), 0);
    for (const Edge& e : b.edges)
      if (e.kind.is_ast()) ++out_degree[static_cast<size_t>(e.src)];
    for (size_t i = 0; i < b.nodes.size(); ++i)
      if (out_degree[i] == 0) leaves.push_back(static_cast<NodeId>(i));
  }
  for (size_t i = 0; i + 1 < leaves.size(); ++i) b.ncs(leaves[i], leaves[i + 1]);

  GeneratedGraph out{
      graph::build_graph(b.nodes, b.edges, fname,
                         vulnerable ? graph::VulnLabel::Vulnerable
                                    : graph::VulnLabel::NonVulnerable),
      motif};
  return out;
}

} // namespace

SyntheticCorpus generate_synthetic_corpus(int n, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("synthetic corpus needs n >= 2");
  SyntheticCorpus result;
  result.corpus.provenance = "synthetic(seed=" + std::to_string(seed) + ")";
  std::mt19937_64 master(seed);
  for (int i = 0; i < n; ++i) {
    const std::uint64_t graph_seed = master();
    const bool vulnerable = (i % 2) == 1;
    GeneratedGraph g = generate_function(graph_seed, i, vulnerable);
    char id[32];
    std::snprintf(id, sizeof(id), "synth_%05d", i);
    result.corpus.entries.push_back({std::move(g.graph), id});
    result.motif_statement.push_back(g.motif);
  }
  return result;
}

} // namespace ample::pipeline
