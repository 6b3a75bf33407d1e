#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "ample/graph.hpp"

namespace ample::io {

inline constexpr const char* kGraphFormatVersion = "ample-graph/1";

enum class IoErrorKind { MalformedJson, SchemaViolation, EmptyCorpus };

class IoError : public std::runtime_error {
 public:
  IoError(IoErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  IoErrorKind kind() const { return kind_; }

 private:
  IoErrorKind kind_;
};

struct CorpusEntry {
  graph::CodeStructureGraph graph;
  std::string id;  // file stem for loaded corpora
};

struct CorpusFileError {
  std::string path;
  std::string message;
};

struct Corpus {
  std::vector<CorpusEntry> entries;
  std::string provenance;
  std::vector<CorpusFileError> file_errors;

  size_t size() const { return entries.size(); }
};

/// Parses one UTF-8 JSON graph document. Unknown fields are ignored; missing
/// required fields or out-of-range values raise SchemaViolation; graph::build_graph
/// errors propagate unchanged.
graph::CodeStructureGraph parse_graph(const std::string& text);

/// Serializes to the documented JSON schema: nodes in id order, edges in
/// insertion order, fixed key order. Byte-stable: equal graphs produce equal
/// bytes, and parse_graph(serialize_graph(g)) is structurally identical to g.
std::string serialize_graph(const graph::CodeStructureGraph& g);

/// Loads every *.json file under `dir` (sorted by filename). Per-file parse
/// failures are recorded in file_errors, not fatal. Throws EmptyCorpus when no
/// file parses.
Corpus load_corpus(const std::filesystem::path& dir);

} // namespace ample::io
