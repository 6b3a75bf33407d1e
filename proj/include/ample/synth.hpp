#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "ample/graph_io.hpp"

namespace ample::pipeline {

/// A generated corpus plus the ground truth needed by the explanation checks:
/// for each entry, the node id (in the original graph) of the planted
/// vulnerable call statement, when the entry is vulnerable.
struct SyntheticCorpus {
  io::Corpus corpus;
  std::vector<std::optional<graph::NodeId>> motif_statement;
};

/// Deterministically generates n function graphs in the exporter's shape:
/// an AST per function (declarations, expressions, conditions, calls), a CFG
/// chain over statements, DFG def-use edges labeled with variable names, and
/// an NCS chain over AST leaves. Sizes range from 10 to 80 nodes. Entries at
/// odd positions are vulnerable (label 1) and contain one to two call
/// statements whose callee is "strcpy" fed by a DFG edge from an unchecked
/// Parameter node; benign entries never mention strcpy.
SyntheticCorpus generate_synthetic_corpus(int n, std::uint64_t seed);

} // namespace ample::pipeline
