#include "ample/graph_io.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace ample::io {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

[[noreturn]] void schema_error(const std::string& what) {
  throw IoError(IoErrorKind::SchemaViolation, what);
}

const json& require_field(const json& obj, const char* key,
                          const char* context) {
  auto it = obj.find(key);
  if (it == obj.end())
    schema_error(std::string("missing field \"") + key + "\" in " + context);
  return *it;
}

} // namespace

graph::CodeStructureGraph parse_graph(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw IoError(IoErrorKind::MalformedJson, e.what());
  }
  if (!doc.is_object()) schema_error("document is not a JSON object");

  const json& version = require_field(doc, "version", "document");
  if (!version.is_string() || version.get<std::string>() != kGraphFormatVersion)
    schema_error("unsupported version");

  std::string function_name;
  if (auto it = doc.find("function"); it != doc.end() && it->is_string())
    function_name = it->get<std::string>();

  std::optional<graph::VulnLabel> label;
  if (auto it = doc.find("label"); it != doc.end() && !it->is_null()) {
    if (!it->is_number_integer()) schema_error("label must be 0, 1 or null");
    int v = it->get<int>();
    if (v != 0 && v != 1) schema_error("label must be 0, 1 or null");
    label = static_cast<graph::VulnLabel>(v);
  }

  const json& jnodes = require_field(doc, "nodes", "document");
  const json& jedges = require_field(doc, "edges", "document");
  if (!jnodes.is_array() || !jedges.is_array())
    schema_error("nodes/edges must be arrays");

  std::vector<graph::Node> nodes;
  nodes.reserve(jnodes.size());
  for (const json& jn : jnodes) {
    if (!jn.is_object()) schema_error("node entry is not an object");
    graph::Node n;
    const json& jid = require_field(jn, "id", "node");
    if (!jid.is_number_integer() || jid.get<std::int64_t>() < 0)
      schema_error("node id must be a non-negative integer");
    n.id = static_cast<graph::NodeId>(jid.get<std::int64_t>());
    const json& jtype = require_field(jn, "type", "node");
    if (!jtype.is_string() || jtype.get<std::string>().empty())
      schema_error("node type must be a non-empty string");
    n.node_type = jtype.get<std::string>();
    if (auto it = jn.find("code"); it != jn.end() && !it->is_null()) {
      if (!it->is_string()) schema_error("node code must be a string");
      n.code = it->get<std::string>();
    }
    if (auto it = jn.find("line"); it != jn.end() && !it->is_null()) {
      if (!it->is_number_integer() || it->get<int>() < 1)
        schema_error("node line must be a positive integer");
      n.line = it->get<int>();
    }
    if (auto it = jn.find("is_statement"); it != jn.end() && !it->is_null()) {
      if (!it->is_boolean()) schema_error("is_statement must be a boolean");
      n.is_statement = it->get<bool>();
    }
    nodes.push_back(std::move(n));
  }

  std::vector<graph::Edge> edges;
  edges.reserve(jedges.size());
  for (const json& je : jedges) {
    if (!je.is_object()) schema_error("edge entry is not an object");
    graph::Edge e;
    const json& jsrc = require_field(je, "src", "edge");
    const json& jdst = require_field(je, "dst", "edge");
    if (!jsrc.is_number_integer() || !jdst.is_number_integer())
      schema_error("edge endpoints must be integers");
    e.src = static_cast<graph::NodeId>(jsrc.get<std::int64_t>());
    e.dst = static_cast<graph::NodeId>(jdst.get<std::int64_t>());
    const json& jkind = require_field(je, "kind", "edge");
    if (!jkind.is_string()) schema_error("edge kind must be a string");
    auto kind = graph::EdgeKind::parse(jkind.get<std::string>());
    if (!kind)
      schema_error("edge kind \"" + jkind.get<std::string>() +
                   "\" is not AST|CFG|DFG|NCS|X-<tag>");
    e.kind = *kind;
    if (auto it = je.find("label"); it != je.end() && !it->is_null()) {
      if (!it->is_string()) schema_error("edge label must be a string");
      e.label = it->get<std::string>();
    }
    edges.push_back(std::move(e));
  }

  return graph::build_graph(std::move(nodes), std::move(edges),
                            std::move(function_name), label);
}

std::string serialize_graph(const graph::CodeStructureGraph& g) {
  ordered_json doc;
  doc["version"] = kGraphFormatVersion;
  doc["function"] = g.function_name();
  if (g.label())
    doc["label"] = static_cast<int>(*g.label());
  else
    doc["label"] = nullptr;

  ordered_json jnodes = ordered_json::array();
  for (const graph::Node& n : g.nodes()) {
    ordered_json jn;
    jn["id"] = n.id;
    jn["type"] = n.node_type;
    jn["code"] = n.code;
    if (n.line)
      jn["line"] = *n.line;
    else
      jn["line"] = nullptr;
    jn["is_statement"] = n.is_statement;
    jnodes.push_back(std::move(jn));
  }
  doc["nodes"] = std::move(jnodes);

  ordered_json jedges = ordered_json::array();
  for (const graph::Edge& e : g.edges()) {
    ordered_json je;
    je["src"] = e.src;
    je["dst"] = e.dst;
    je["kind"] = e.kind.name();
    if (e.label)
      je["label"] = *e.label;
    else
      je["label"] = nullptr;
    jedges.push_back(std::move(je));
  }
  doc["edges"] = std::move(jedges);

  return doc.dump(2) + "\n";
}

Corpus load_corpus(const std::filesystem::path& dir) {
  Corpus corpus;
  corpus.provenance = dir.string();

  std::vector<std::filesystem::path> files;
  if (std::filesystem::is_directory(dir)) {
    for (const auto& entry : std::filesystem::directory_iterator(dir))
      if (entry.is_regular_file() && entry.path().extension() == ".json")
        files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  for (const auto& path : files) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
      corpus.entries.push_back({parse_graph(buf.str()), path.stem().string()});
    } catch (const std::exception& e) {
      corpus.file_errors.push_back({path.string(), e.what()});
    }
  }

  if (corpus.entries.empty())
    throw IoError(IoErrorKind::EmptyCorpus,
                  "no valid graph documents in " + dir.string());
  return corpus;
}

} // namespace ample::io
