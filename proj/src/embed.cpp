#include "ample/embed.hpp"

#include <array>
#include <cctype>
#include <cmath>
#include <random>

#include <json.hpp>

namespace ample::embed {

namespace {

bool is_ident_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}
bool is_ident(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}
bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)); }

// Maximal-munch operator list, longest first.
constexpr std::array<const char*, 22> kOperators = {
    ">>=", "<<=", "...", "->", "++", "--", "<<", ">>", "<=", ">=", "==",
    "!=",  "&&",  "||",  "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=",
};

} // namespace

std::vector<std::string> tokenize_code(const std::string& code) {
  std::vector<std::string> tokens;
  const size_t n = code.size();
  size_t i = 0;
  while (i < n) {
    const char c = code[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (is_ident_start(c)) {
      size_t j = i + 1;
      while (j < n && is_ident(code[j])) ++j;
      tokens.push_back(code.substr(i, j - i));
      i = j;
      continue;
    }
    if (is_digit(c)) {
      size_t j = i + 1;
      while (j < n) {
        char d = code[j];
        if (is_ident(d) || d == '.') {
          ++j;
        } else if ((d == '+' || d == '-') && j > i &&
                   (code[j - 1] == 'e' || code[j - 1] == 'E' ||
                    code[j - 1] == 'p' || code[j - 1] == 'P')) {
          ++j;  // exponent sign
        } else {
          break;
        }
      }
      tokens.push_back(code.substr(i, j - i));
      i = j;
      continue;
    }
    if (c == '"' || c == '\'') {
      size_t j = i + 1;
      while (j < n && code[j] != c) {
        if (code[j] == '\\' && j + 1 < n) ++j;
        ++j;
      }
      if (j < n) ++j;  // closing quote; unterminated literals run to the end
      tokens.push_back(code.substr(i, j - i));
      i = j;
      continue;
    }
    bool matched = false;
    for (const char* op : kOperators) {
      const size_t len = std::char_traits<char>::length(op);
      if (code.compare(i, len, op) == 0) {
        tokens.push_back(op);
        i += len;
        matched = true;
        break;
      }
    }
    if (!matched) {
      tokens.push_back(std::string(1, c));
      ++i;
    }
  }
  return tokens;
}

namespace {

std::vector<std::vector<int>> corpus_token_sequences(
    const io::Corpus& corpus, std::unordered_map<std::string, int>& vocabulary,
    std::vector<std::string>& tokens, std::vector<long long>& counts) {
  std::vector<std::vector<int>> sequences;
  for (const io::CorpusEntry& entry : corpus.entries) {
    for (const graph::Node& node : entry.graph.nodes()) {
      std::vector<int> seq;
      for (const std::string& tok : tokenize_code(node.code)) {
        auto [it, inserted] =
            vocabulary.emplace(tok, static_cast<int>(tokens.size()));
        if (inserted) {
          tokens.push_back(tok);
          counts.push_back(0);
        }
        ++counts[static_cast<size_t>(it->second)];
        seq.push_back(it->second);
      }
      if (!seq.empty()) sequences.push_back(std::move(seq));
    }
  }
  return sequences;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

} // namespace

TokenEmbeddingTable fit_token_embeddings(const io::Corpus& corpus, int d,
                                         std::uint64_t seed,
                                         const SkipGramOptions& options) {
  if (d < 1)
    throw std::invalid_argument("embedding dimension must be >= 1");
  if (corpus.entries.empty())
    throw io::IoError(io::IoErrorKind::EmptyCorpus, "empty corpus");

  TokenEmbeddingTable table;
  table.d = d;
  std::vector<long long> counts;
  std::vector<std::vector<int>> sequences =
      corpus_token_sequences(corpus, table.vocabulary, table.tokens, counts);
  const int vocab = static_cast<int>(table.tokens.size());

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-0.5, 0.5);

  Matrix in(vocab == 0 ? 1 : vocab, d);
  Matrix out = Matrix::Zero(vocab == 0 ? 1 : vocab, d);
  for (Index i = 0; i < in.rows(); ++i)
    for (Index j = 0; j < d; ++j) in(i, j) = unit(rng) / d;

  if (vocab > 0 && !sequences.empty()) {
    // Unigram^0.75 table for negative sampling.
    std::vector<double> weights(static_cast<size_t>(vocab));
    for (int w = 0; w < vocab; ++w)
      weights[static_cast<size_t>(w)] =
          std::pow(static_cast<double>(counts[static_cast<size_t>(w)]), 0.75);
    std::discrete_distribution<int> negative(weights.begin(), weights.end());
    std::uniform_int_distribution<int> window_draw(1, options.window);

    long long total_positions = 0;
    for (const auto& seq : sequences) total_positions += static_cast<long long>(seq.size());
    const long long total_steps =
        std::max<long long>(1, total_positions * options.epochs);
    long long step = 0;

    Vector grad_center(d);
    for (int epoch = 0; epoch < options.epochs; ++epoch) {
      for (const auto& seq : sequences) {
        const int len = static_cast<int>(seq.size());
        for (int pos = 0; pos < len; ++pos, ++step) {
          const double lr = options.learning_rate *
                            std::max(0.0001, 1.0 - static_cast<double>(step) /
                                                       static_cast<double>(total_steps));
          const int center = seq[static_cast<size_t>(pos)];
          const int span = window_draw(rng);
          for (int off = -span; off <= span; ++off) {
            if (off == 0) continue;
            const int cpos = pos + off;
            if (cpos < 0 || cpos >= len) continue;
            const int context = seq[static_cast<size_t>(cpos)];
            grad_center.setZero();
            for (int s = 0; s <= options.negatives; ++s) {
              const int target = (s == 0) ? context : negative(rng);
              const double label = (s == 0) ? 1.0 : 0.0;
              if (s > 0 && target == context) continue;
              const double score =
                  sigmoid(in.row(center).dot(out.row(target)));
              const double g = (label - score) * lr;
              grad_center += g * out.row(target).transpose();
              out.row(target) += g * in.row(center);
            }
            in.row(center) += grad_center.transpose();
          }
        }
      }
    }
  }

  table.vectors = in.topRows(vocab == 0 ? 1 : vocab);
  if (vocab == 0) {
    table.vectors = Matrix::Zero(0, d);
    table.oov_vector = RowVector::Zero(d);
  } else {
    table.oov_vector = table.vectors.colwise().mean();
  }
  return table;
}

TokenEmbeddingTable hashing_embeddings(const io::Corpus& corpus, int d) {
  if (d < 1)
    throw std::invalid_argument("embedding dimension must be >= 1");
  TokenEmbeddingTable table;
  table.d = d;
  std::vector<long long> counts;
  corpus_token_sequences(corpus, table.vocabulary, table.tokens, counts);
  const int vocab = static_cast<int>(table.tokens.size());
  table.vectors = Matrix(vocab, d);
  for (int w = 0; w < vocab; ++w) {
    // FNV-1a over the token seeds a per-token generator.
    std::uint64_t h = 1469598103934665603ull;
    for (char c : table.tokens[static_cast<size_t>(w)]) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ull;
    }
    std::mt19937_64 rng(h);
    std::normal_distribution<double> nd(0.0, 1.0);
    RowVector v(d);
    for (int j = 0; j < d; ++j) v(j) = nd(rng);
    table.vectors.row(w) = v / std::max(1e-12, v.norm());
  }
  table.oov_vector =
      vocab == 0 ? RowVector::Zero(d) : RowVector(table.vectors.colwise().mean());
  return table;
}

Matrix initial_node_matrix(const graph::CodeStructureGraph& g,
                           const TokenEmbeddingTable& table) {
  Matrix h0(g.num_nodes(), table.d);
  for (int i = 0; i < g.num_nodes(); ++i) {
    const std::vector<std::string> toks = tokenize_code(g.node(i).code);
    if (toks.empty()) {
      h0.row(i) = table.oov_vector;
      continue;
    }
    RowVector acc = RowVector::Zero(table.d);
    for (const std::string& tok : toks) acc += table.vector_for(tok);
    h0.row(i) = acc / static_cast<double>(toks.size());
  }
  return h0;
}

std::string serialize_embedding_table(const TokenEmbeddingTable& table) {
  nlohmann::ordered_json doc;
  doc["version"] = "ample-embed/1";
  doc["d"] = table.d;
  doc["tokens"] = table.tokens;
  std::vector<double> values;
  values.reserve(static_cast<size_t>(table.vectors.size()));
  for (Index i = 0; i < table.vectors.rows(); ++i)
    for (Index j = 0; j < table.vectors.cols(); ++j)
      values.push_back(table.vectors(i, j));
  doc["vectors"] = values;
  std::vector<double> oov(table.oov_vector.data(),
                          table.oov_vector.data() + table.oov_vector.size());
  doc["oov"] = oov;
  return doc.dump() + "\n";
}

TokenEmbeddingTable parse_embedding_table(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw io::IoError(io::IoErrorKind::MalformedJson, e.what());
  }
  if (!doc.is_object() || doc.value("version", "") != "ample-embed/1")
    throw io::IoError(io::IoErrorKind::SchemaViolation,
                      "not an embedding table document");
  TokenEmbeddingTable table;
  table.d = doc.at("d").get<int>();
  table.tokens = doc.at("tokens").get<std::vector<std::string>>();
  const auto values = doc.at("vectors").get<std::vector<double>>();
  const int vocab = static_cast<int>(table.tokens.size());
  if (values.size() != static_cast<size_t>(vocab) * static_cast<size_t>(table.d))
    throw io::IoError(io::IoErrorKind::SchemaViolation,
                      "vector payload size mismatch");
  table.vectors = Matrix(vocab, table.d);
  for (int i = 0; i < vocab; ++i)
    for (int j = 0; j < table.d; ++j)
      table.vectors(i, j) = values[static_cast<size_t>(i) * table.d + j];
  const auto oov = doc.at("oov").get<std::vector<double>>();
  if (oov.size() != static_cast<size_t>(table.d))
    throw io::IoError(io::IoErrorKind::SchemaViolation, "oov size mismatch");
  table.oov_vector = RowVector(table.d);
  for (int j = 0; j < table.d; ++j) table.oov_vector(j) = oov[static_cast<size_t>(j)];
  for (int i = 0; i < vocab; ++i)
    table.vocabulary.emplace(table.tokens[static_cast<size_t>(i)], i);
  return table;
}

} // namespace ample::embed
