#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "ample/graph_io.hpp"
#include "ample/types.hpp"

namespace ample::embed {

/// C-style lexer: identifiers/keywords, numeric literals, string and char
/// literals kept whole (quotes included), multi-character operators by maximal
/// munch, every other punctuation character on its own. Whitespace separates;
/// nothing is dropped.
std::vector<std::string> tokenize_code(const std::string& code);

struct TokenEmbeddingTable {
  int d = 0;
  std::unordered_map<std::string, int> vocabulary;  // token -> row
  std::vector<std::string> tokens;                  // row -> token
  Matrix vectors;                                   // |vocab| x d
  RowVector oov_vector;                             // used for unseen tokens

  const RowVector vector_for(const std::string& token) const {
    auto it = vocabulary.find(token);
    return it == vocabulary.end() ? oov_vector : RowVector(vectors.row(it->second));
  }
};

struct SkipGramOptions {
  int window = 5;
  int negatives = 5;
  int epochs = 5;
  double learning_rate = 0.025;
};

/// Skip-gram with negative sampling over the concatenated per-node token
/// sequences of the corpus, no token filtering of any kind. Deterministic for
/// a fixed seed (single execution context). The OOV vector is the mean of all
/// learned vectors.
TokenEmbeddingTable fit_token_embeddings(const io::Corpus& corpus, int d,
                                         std::uint64_t seed,
                                         const SkipGramOptions& options = {});

/// Fast deterministic fallback: every token maps to a pseudo-random unit
/// vector derived from its hash. Same table shape as the trained one.
TokenEmbeddingTable hashing_embeddings(const io::Corpus& corpus, int d);

/// Row i = mean of the vectors of node i's tokens; a node without tokens gets
/// the OOV vector.
Matrix initial_node_matrix(const graph::CodeStructureGraph& g,
                           const TokenEmbeddingTable& table);

std::string serialize_embedding_table(const TokenEmbeddingTable& table);
TokenEmbeddingTable parse_embedding_table(const std::string& text);

} // namespace ample::embed
