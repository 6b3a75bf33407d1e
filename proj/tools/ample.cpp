#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ample/explain.hpp"
#include "ample/graph_io.hpp"
#include "ample/metrics.hpp"
#include "ample/model.hpp"
#include "ample/simplify.hpp"
#include "ample/synth.hpp"
#include "ample/train.hpp"

namespace {

namespace fs = std::filesystem;
using namespace ample;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

struct CliConfig {
  pipeline::TrainConfig train;
  model::ModelConfig model;
};

CliConfig load_config(const std::string& config_path, std::uint64_t seed) {
  CliConfig cfg;
  cfg.model.eagcn.layers = 2;
  cfg.model.eagcn.heads = 10;
  cfg.model.eagcn.hidden = 100;
  cfg.train.seed = seed;
  if (config_path.empty()) return cfg;

  const nlohmann::json doc = nlohmann::json::parse(read_file(config_path));
  cfg.train.learning_rate = doc.value("learning_rate", cfg.train.learning_rate);
  cfg.train.batch_size = doc.value("batch_size", cfg.train.batch_size);
  cfg.train.max_epochs = doc.value("max_epochs", cfg.train.max_epochs);
  cfg.train.patience = doc.value("patience", cfg.train.patience);
  if (doc.contains("ratios")) {
    const auto r = doc.at("ratios").get<std::vector<double>>();
    if (r.size() != 3) throw std::runtime_error("ratios must have 3 entries");
    cfg.train.ratios = {r[0], r[1], r[2]};
  }
  cfg.train.optimizer = doc.value("optimizer", cfg.train.optimizer);
  cfg.train.jobs = doc.value("jobs", cfg.train.jobs);
  cfg.train.embedding = doc.value("embedding", cfg.train.embedding);
  cfg.train.skipgram.window = doc.value("window", cfg.train.skipgram.window);
  cfg.train.skipgram.negatives = doc.value("negatives", cfg.train.skipgram.negatives);
  cfg.train.skipgram.epochs = doc.value("embed_epochs", cfg.train.skipgram.epochs);
  if (doc.contains("identifier_types"))
    cfg.train.identifier_types =
        doc.at("identifier_types").get<std::vector<std::string>>();

  cfg.model.eagcn.layers = doc.value("layers", cfg.model.eagcn.layers);
  cfg.model.eagcn.heads = doc.value("heads", cfg.model.eagcn.heads);
  cfg.model.eagcn.hidden = doc.value("hidden", cfg.model.eagcn.hidden);
  cfg.model.eagcn.ff_hidden = doc.value("ff_hidden", cfg.model.eagcn.ff_hidden);
  cfg.model.eagcn.reverse_edges =
      doc.value("reverse_edges", cfg.model.eagcn.reverse_edges);
  cfg.model.c_out = doc.value("c_out", cfg.model.c_out);
  cfg.model.kernel_large = doc.value("kernel_large", cfg.model.kernel_large);
  cfg.model.kernel_small = doc.value("kernel_small", cfg.model.kernel_small);
  cfg.model.fc_hidden = doc.value("fc_hidden", cfg.model.fc_hidden);
  cfg.model.pool = doc.value("pool", cfg.model.pool);
  cfg.model.bn_epsilon = doc.value("bn_epsilon", cfg.model.bn_epsilon);
  cfg.model.bn_momentum = doc.value("bn_momentum", cfg.model.bn_momentum);
  cfg.model.max_nodes = doc.value("max_nodes", cfg.model.max_nodes);
  return cfg;
}

simplify::MergeRuleTable load_rules(const std::string& path) {
  if (path.empty()) return simplify::default_merge_rules();
  return simplify::parse_merge_rules(read_file(path));
}

int cmd_synth(int n, std::uint64_t seed, const std::string& out_dir) {
  pipeline::SyntheticCorpus synth = pipeline::generate_synthetic_corpus(n, seed);
  fs::create_directories(out_dir);
  nlohmann::ordered_json manifest;
  manifest["seed"] = seed;
  nlohmann::ordered_json entries = nlohmann::ordered_json::array();
  for (size_t i = 0; i < synth.corpus.entries.size(); ++i) {
    const io::CorpusEntry& entry = synth.corpus.entries[i];
    write_file(fs::path(out_dir) / (entry.id + ".json"),
               io::serialize_graph(entry.graph));
    nlohmann::ordered_json je;
    je["id"] = entry.id;
    je["label"] = static_cast<int>(*entry.graph.label());
    if (synth.motif_statement[i])
      je["motif_statement"] = *synth.motif_statement[i];
    else
      je["motif_statement"] = nullptr;
    entries.push_back(std::move(je));
  }
  manifest["entries"] = std::move(entries);
  write_file(fs::path(out_dir) / "manifest.json", manifest.dump(2) + "\n");
  std::cout << "wrote " << synth.corpus.entries.size() << " graphs to " << out_dir
            << "\n";
  return 0;
}

int cmd_simplify(const std::string& in_dir, const std::string& out_dir,
                 const std::string& rules_path, const std::string& phase,
                 const std::vector<std::string>& identifier_types) {
  const simplify::MergeRuleTable rules = load_rules(rules_path);
  io::Corpus corpus = io::load_corpus(in_dir);
  fs::create_directories(out_dir);
  for (const io::CorpusEntry& entry : corpus.entries) {
    simplify::SimplifyResult result =
        phase == "tgs"   ? simplify::tgs(entry.graph, rules)
        : phase == "vgs" ? simplify::vgs(entry.graph, identifier_types)
                         : simplify::gs(entry.graph, rules, identifier_types);
    write_file(fs::path(out_dir) / (entry.id + ".json"),
               io::serialize_graph(result.graph));
  }
  for (const io::CorpusFileError& err : corpus.file_errors)
    std::cerr << "skipped " << err.path << ": " << err.message << "\n";
  std::cout << "simplified " << corpus.entries.size() << " graphs (" << phase
            << ")\n";
  return 0;
}

int cmd_stats(const std::string& in_dir, const std::string& out_csv,
              const std::string& rules_path, const std::string& phase,
              const std::vector<std::string>& identifier_types) {
  const simplify::MergeRuleTable rules = load_rules(rules_path);
  io::Corpus corpus = io::load_corpus(in_dir);
  std::vector<metrics::GraphReportRow> rows;
  for (const io::CorpusEntry& entry : corpus.entries) {
    simplify::SimplifyResult result =
        phase == "tgs"   ? simplify::tgs(entry.graph, rules)
        : phase == "vgs" ? simplify::vgs(entry.graph, identifier_types)
                         : simplify::gs(entry.graph, rules, identifier_types);
    rows.push_back(metrics::report_row(entry.id, entry.graph, result.graph));
  }
  for (const io::CorpusFileError& err : corpus.file_errors)
    std::cerr << "skipped " << err.path << ": " << err.message << "\n";
  const std::string csv = metrics::render_csv_report(rows);
  if (!out_csv.empty()) write_file(out_csv, csv);

  double node_rate = 0, edge_rate = 0;
  for (const auto& r : rows) { node_rate += r.node_rate; edge_rate += r.edge_rate; }
  const double n = rows.empty() ? 1.0 : static_cast<double>(rows.size());
  char line[160];
  std::snprintf(line, sizeof(line),
                "average node simplification rate: %.2f%%\n"
                "average edge simplification rate: %.2f%%\n",
                100.0 * node_rate / n, 100.0 * edge_rate / n);
  std::cout << line;
  return 0;
}

int cmd_embed_fit(const std::string& in_dir, const std::string& out_path, int d,
                  std::uint64_t seed, const CliConfig& cfg) {
  io::Corpus corpus = io::load_corpus(in_dir);
  embed::TokenEmbeddingTable table =
      cfg.train.embedding == "hashing"
          ? embed::hashing_embeddings(corpus, d)
          : embed::fit_token_embeddings(corpus, d, seed, cfg.train.skipgram);
  write_file(out_path, embed::serialize_embedding_table(table));
  std::cout << "fit " << table.tokens.size() << " token vectors (d=" << table.d
            << ")\n";
  return 0;
}

int cmd_train(const std::string& in_dir, const std::string& out_model,
              const std::string& history_path, const std::string& rules_path,
              CliConfig cfg) {
  cfg.train.rules = load_rules(rules_path);
  io::Corpus corpus = io::load_corpus(in_dir);
  pipeline::SplitResult split =
      pipeline::split_corpus(corpus, cfg.train.ratios, cfg.train.seed);
  pipeline::TrainResult result =
      pipeline::train_model(split.train, split.valid, cfg.train, cfg.model);
  write_file(out_model, pipeline::serialize_bundle(result.bundle));

  std::ostringstream hist;
  for (const pipeline::EpochStats& e : result.history) {
    nlohmann::ordered_json j;
    j["epoch"] = e.epoch;
    j["loss"] = e.train_loss;
    j["valid_f1"] = e.valid_f1;
    hist << j.dump() << "\n";
  }
  if (!history_path.empty()) write_file(history_path, hist.str());

  metrics::ClassificationScores scores =
      pipeline::evaluate_model(result.bundle, split.test);
  char line[256];
  std::snprintf(line, sizeof(line),
                "trained %zu epochs (best %d); test accuracy %.4f precision %.4f "
                "recall %.4f f1 %.4f\n",
                result.history.size(), result.best_epoch, scores.accuracy,
                scores.precision, scores.recall, scores.f1);
  std::cout << line;
  return 0;
}

int cmd_eval(const std::string& model_path, const std::string& in_dir,
             const std::string& out_path) {
  pipeline::ModelBundle bundle = pipeline::parse_bundle(read_file(model_path));
  io::Corpus corpus = io::load_corpus(in_dir);
  const std::vector<int> preds = pipeline::predict(bundle, corpus);
  std::vector<int> labels;
  for (const io::CorpusEntry& e : corpus.entries)
    labels.push_back(e.graph.label() == graph::VulnLabel::Vulnerable ? 1 : 0);
  metrics::ClassificationScores scores =
      metrics::classification_metrics(preds, labels);

  if (!out_path.empty()) {
    nlohmann::ordered_json doc;
    nlohmann::ordered_json jp = nlohmann::ordered_json::array();
    for (size_t i = 0; i < preds.size(); ++i)
      jp.push_back({{"id", corpus.entries[i].id},
                    {"prediction", preds[i]},
                    {"label", labels[i]}});
    doc["predictions"] = std::move(jp);
    doc["accuracy"] = scores.accuracy;
    doc["precision"] = scores.precision;
    doc["recall"] = scores.recall;
    doc["f1"] = scores.f1;
    write_file(out_path, doc.dump(2) + "\n");
  }
  char line[160];
  std::snprintf(line, sizeof(line),
                "accuracy %.4f precision %.4f recall %.4f f1 %.4f\n",
                scores.accuracy, scores.precision, scores.recall, scores.f1);
  std::cout << line;
  return 0;
}

int cmd_explain(const std::string& model_path, const std::string& graph_path,
                const std::string& out_path) {
  pipeline::ModelBundle bundle = pipeline::parse_bundle(read_file(model_path));
  graph::CodeStructureGraph g = io::parse_graph(read_file(graph_path));
  simplify::SimplifyResult simplified =
      simplify::gs(g, bundle.rules, bundle.identifier_types);
  pipeline::StatementAttribution attribution =
      pipeline::explain_statements(bundle, g, simplified.trace);

  nlohmann::ordered_json doc;
  nlohmann::ordered_json jb = nlohmann::ordered_json::array();
  for (const auto& bucket : attribution.buckets) {
    nlohmann::ordered_json j;
    j["statement"] = bucket.statement;
    if (bucket.line) j["line"] = *bucket.line; else j["line"] = nullptr;
    j["weight"] = bucket.weight;
    j["code"] = g.node(bucket.statement).code;
    jb.push_back(std::move(j));
  }
  doc["statements"] = std::move(jb);
  if (!out_path.empty()) write_file(out_path, doc.dump(2) + "\n");

  for (const auto& bucket : attribution.buckets) {
    char line[512];
    std::snprintf(line, sizeof(line), "%10.4f  line %-4s  %s\n", bucket.weight,
                  bucket.line ? std::to_string(*bucket.line).c_str() : "-",
                  g.node(bucket.statement).code.c_str());
    std::cout << line;
  }
  return 0;
}

int cmd_gradcheck() {
  model::GradCheckReport report = model::run_gradient_checks();
  for (const model::GradCheckEntry& e : report.entries) {
    char line[256];
    std::snprintf(line, sizeof(line), "%-26s max_abs_diff %.3e  %s\n",
                  e.tensor.c_str(), e.max_abs_diff, e.passed ? "ok" : "FAIL");
    std::cout << line;
  }
  std::cout << (report.passed ? "all gradient checks passed\n"
                              : "gradient checks FAILED\n");
  return report.passed ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"code structure graph simplification and vulnerability detection"};
  app.require_subcommand(1);
  app.fallthrough();

  std::uint64_t seed = 0;
  std::string config_path;
  app.add_option("--seed", seed, "global random seed");
  app.add_option("--config", config_path, "JSON configuration file");

  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  int synth_n = 100;
  std::string synth_out;
  synth->add_option("--n", synth_n, "number of graphs")->required();
  synth->add_option("--out", synth_out, "output directory")->required();

  auto* simp = app.add_subcommand("simplify", "simplify a corpus of graphs");
  std::string simp_in, simp_out, simp_rules, simp_phase = "gs";
  simp->add_option("--in", simp_in)->required();
  simp->add_option("--out", simp_out)->required();
  simp->add_option("--rules", simp_rules, "merge rule table (JSON)");
  simp->add_option("--phase", simp_phase)->check(CLI::IsMember({"tgs", "vgs", "gs"}));

  auto* stats = app.add_subcommand("stats", "simplification and distance report");
  std::string stats_in, stats_out, stats_rules, stats_phase = "gs";
  stats->add_option("--in", stats_in)->required();
  stats->add_option("--out", stats_out, "CSV report path");
  stats->add_option("--rules", stats_rules);
  stats->add_option("--phase", stats_phase)
      ->check(CLI::IsMember({"tgs", "vgs", "gs"}));

  auto* embed_fit = app.add_subcommand("embed-fit", "fit token embeddings");
  std::string embed_in, embed_out;
  int embed_d = 100;
  embed_fit->add_option("--in", embed_in)->required();
  embed_fit->add_option("--out", embed_out)->required();
  embed_fit->add_option("--d", embed_d, "embedding dimension");

  auto* train = app.add_subcommand("train", "train the detection model");
  std::string train_in, train_out, train_history;
  int train_jobs = 0;
  train->add_option("--in", train_in)->required();
  train->add_option("--out", train_out)->required();
  train->add_option("--history", train_history, "JSON-lines epoch history");
  train->add_option("--jobs", train_jobs, "parallel workers per batch");
  std::string train_rules;
  train->add_option("--rules", train_rules, "merge rule table (JSON)");

  auto* eval = app.add_subcommand("eval", "evaluate a trained model");
  std::string eval_model, eval_in, eval_out;
  eval->add_option("--model", eval_model)->required();
  eval->add_option("--in", eval_in)->required();
  eval->add_option("--out", eval_out, "predictions JSON");

  auto* explain = app.add_subcommand("explain", "per-statement attribution");
  std::string explain_model, explain_graph, explain_out;
  explain->add_option("--model", explain_model)->required();
  explain->add_option("--graph", explain_graph)->required();
  explain->add_option("--out", explain_out);

  app.add_subcommand("gradcheck", "finite-difference gradient verification");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    CliConfig cfg = load_config(config_path, seed);
    if (synth->parsed()) return cmd_synth(synth_n, seed, synth_out);
    if (simp->parsed())
      return cmd_simplify(simp_in, simp_out, simp_rules, simp_phase,
                          cfg.train.identifier_types);
    if (stats->parsed())
      return cmd_stats(stats_in, stats_out, stats_rules, stats_phase,
                       cfg.train.identifier_types);
    if (embed_fit->parsed()) return cmd_embed_fit(embed_in, embed_out, embed_d, seed, cfg);
    if (train->parsed()) {
      if (train_jobs > 0) cfg.train.jobs = train_jobs;
      return cmd_train(train_in, train_out, train_history, train_rules, cfg);
    }
    if (eval->parsed()) return cmd_eval(eval_model, eval_in, eval_out);
    if (explain->parsed()) return cmd_explain(explain_model, explain_graph, explain_out);
    if (app.get_subcommand("gradcheck")->parsed()) return cmd_gradcheck();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
