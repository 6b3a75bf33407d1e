#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ample/embed.hpp"
#include "ample/synth.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace ample;

namespace {

io::Corpus tiny_corpus() {
  std::vector<graph::Node> nodes = {
      {0, "ExpressionStatement", "scanf ( \"%s\" , str ) ;", {}, true},
      {1, "Identifier", "str", {}, false},
      {2, "PrimaryExpression", "15", {}, false},
  };
  std::vector<graph::Edge> edges = {
      {0, 1, graph::EdgeKind::ast(), std::nullopt},
      {0, 2, graph::EdgeKind::ast(), std::nullopt}};
  io::Corpus corpus;
  corpus.entries.push_back({graph::build_graph(nodes, edges, "tiny"), "tiny"});
  return corpus;
}

} // namespace

TEST_CASE("tokenizer basics") {
  CHECK(embed::tokenize_code("").empty());
  CHECK(embed::tokenize_code("scanf(\"%s\",str);") ==
        std::vector<std::string>{"scanf", "(", "\"%s\"", ",", "str", ")", ";"});
  CHECK(embed::tokenize_code("char str [ 15 ]") ==
        embed::tokenize_code("char str[15]"));
  CHECK(embed::tokenize_code("a->b != c") ==
        std::vector<std::string>{"a", "->", "b", "!=", "c"});
  CHECK(embed::tokenize_code("x = 1.5e-3;") ==
        std::vector<std::string>{"x", "=", "1.5e-3", ";"});
}

TEST_CASE("tokenizer agrees with the reference lexer on generated code") {
  pipeline::SyntheticCorpus synth = pipeline::generate_synthetic_corpus(20, 5);
  for (const io::CorpusEntry& entry : synth.corpus.entries)
    for (const graph::Node& node : entry.graph.nodes())
      CHECK(embed::tokenize_code(node.code) == oracle::reference_lexer(node.code));
  // plus a few adversarial strings
  for (const std::string& s :
       {std::string("a+++++b"), std::string("x>>=2; y<<=3"),
        std::string("\"unterminated"), std::string("'c' + '\\n'"),
        std::string("0x1F . .5 ..."), std::string("  \t\n  ")})
    CHECK(embed::tokenize_code(s) == oracle::reference_lexer(s));
}

TEST_CASE("skip-gram table shape, determinism and coverage") {
  io::Corpus corpus = tiny_corpus();
  embed::TokenEmbeddingTable a = embed::fit_token_embeddings(corpus, 16, 7);
  embed::TokenEmbeddingTable b = embed::fit_token_embeddings(corpus, 16, 7);
  CHECK(a.d == 16);
  CHECK(a.vectors.rows() == static_cast<Index>(a.tokens.size()));
  CHECK(a.vectors == b.vectors);  // same seed, same bits
  CHECK(a.oov_vector == b.oov_vector);

  embed::TokenEmbeddingTable c = embed::fit_token_embeddings(corpus, 16, 8);
  CHECK(a.vectors != c.vectors);  // different seed moves something

  // every token of the fitting corpus is in vocabulary
  for (const io::CorpusEntry& entry : corpus.entries)
    for (const graph::Node& node : entry.graph.nodes())
      for (const std::string& tok : embed::tokenize_code(node.code))
        CHECK(a.vocabulary.count(tok) == 1);

  for (Index i = 0; i < a.vectors.rows(); ++i)
    for (Index j = 0; j < a.vectors.cols(); ++j)
      CHECK(std::isfinite(a.vectors(i, j)));
}

TEST_CASE("singleton vocabulary") {
  io::Corpus corpus;
  corpus.entries.push_back(
      {graph::build_graph({{0, "Identifier", "x", {}, false}}, {}), "one"});
  embed::TokenEmbeddingTable table = embed::fit_token_embeddings(corpus, 100, 1);
  CHECK(table.tokens == std::vector<std::string>{"x"});
  CHECK(table.vectors.rows() == 1);
  CHECK(table.vectors.cols() == 100);
  CHECK(table.oov_vector == RowVector(table.vectors.row(0)));
}

TEST_CASE("initial node matrix averages token vectors") {
  io::Corpus corpus = tiny_corpus();
  embed::TokenEmbeddingTable table = embed::hashing_embeddings(corpus, 12);

  std::vector<graph::Node> nodes = {
      {0, "Identifier", "str", {}, false},       // one token
      {1, "Expression", "str str", {}, false},   // mean of duplicates
      {2, "Expression", "str 15", {}, false},    // mean of two
      {3, "Empty", "", {}, false},               // no tokens
  };
  graph::CodeStructureGraph g = graph::build_graph(nodes, {});
  Matrix h0 = embed::initial_node_matrix(g, table);
  const RowVector vs = table.vector_for("str");
  const RowVector vn = table.vector_for("15");
  CHECK(RowVector(h0.row(0)) == vs);
  CHECK(RowVector(h0.row(1)) == vs);
  CHECK((RowVector(h0.row(2)) - 0.5 * (vs + vn)).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(RowVector(h0.row(3)) == table.oov_vector);
}

TEST_CASE("initial node matrix is linear in the table") {
  io::Corpus corpus = tiny_corpus();
  embed::TokenEmbeddingTable table = embed::hashing_embeddings(corpus, 8);
  Matrix h0 = embed::initial_node_matrix(corpus.entries[0].graph, table);
  embed::TokenEmbeddingTable scaled = table;
  scaled.vectors *= 3.0;
  scaled.oov_vector *= 3.0;
  Matrix h0s = embed::initial_node_matrix(corpus.entries[0].graph, scaled);
  CHECK((h0s - 3.0 * h0).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("embedding table round-trips through JSON") {
  io::Corpus corpus = tiny_corpus();
  embed::TokenEmbeddingTable table = embed::fit_token_embeddings(corpus, 9, 3);
  const std::string text = embed::serialize_embedding_table(table);
  embed::TokenEmbeddingTable back = embed::parse_embedding_table(text);
  CHECK(back.d == table.d);
  CHECK(back.tokens == table.tokens);
  CHECK(back.vectors == table.vectors);
  CHECK(back.oov_vector == table.oov_vector);
}

TEST_CASE("hashing embeddings are unit vectors, stable across corpora") {
  io::Corpus corpus = tiny_corpus();
  embed::TokenEmbeddingTable a = embed::hashing_embeddings(corpus, 24);
  for (Index i = 0; i < a.vectors.rows(); ++i)
    CHECK(a.vectors.row(i).norm() == doctest::Approx(1.0).epsilon(1e-12));

  pipeline::SyntheticCorpus synth = pipeline::generate_synthetic_corpus(4, 2);
  embed::TokenEmbeddingTable b = embed::hashing_embeddings(synth.corpus, 24);
  // the same token maps to the same vector regardless of corpus
  for (const std::string& tok : a.tokens)
    if (b.vocabulary.count(tok))
      CHECK(RowVector(a.vector_for(tok)) == RowVector(b.vector_for(tok)));
}
