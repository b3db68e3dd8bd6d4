#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "denc/data.hpp"
#include "denc/distill.hpp"
#include "denc/encoder.hpp"
#include "denc/eval.hpp"
#include "denc/index.hpp"
#include "denc/model.hpp"
#include "denc/pooling.hpp"
#include "denc/synth.hpp"
#include "denc/tokenizer.hpp"
#include "denc/trainer.hpp"
#include "json.hpp"

namespace {

using nlohmann::json;

std::string hash_hex(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for hashing: " + path);
  uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  return hash_hex(h);
}

std::string float_str(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

// "-" reads stdin. Trailing \r is stripped, blank lines are dropped.
std::vector<std::string> read_lines(const std::string& path) {
  std::vector<std::string> lines;
  auto drain = [&lines](std::istream& in) {
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) lines.push_back(line);
    }
  };
  if (path == "-") {
    drain(std::cin);
  } else {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    drain(in);
  }
  return lines;
}

// Writes to the path, or stdout for "-".
class OutStream {
 public:
  explicit OutStream(const std::string& path) : path_(path) {
    if (path_ != "-") {
      file_.open(path_, std::ios::binary | std::ios::trunc);
      if (!file_) throw std::runtime_error("cannot write: " + path_);
    }
  }
  std::ostream& get() { return path_ == "-" ? std::cout : file_; }
  void finish() {
    if (path_ != "-" && !file_.flush()) throw std::runtime_error("failed writing: " + path_);
  }

 private:
  std::string path_;
  std::ofstream file_;
};

// Per-option bridge between the CLI flags and a --config JSON file: a flag
// given on the command line wins, otherwise the config value, otherwise the
// built-in default. resolved() reports the value actually used.
class Settings {
 public:
  template <typename T>
  void bind(CLI::Option* opt, const std::string& key, T& var) {
    appliers_.push_back([opt, key, &var](const json& j) {
      if (opt->count() == 0 && j.contains(key)) j.at(key).get_to(var);
    });
    writers_.push_back([key, &var](json& j) { j[key] = var; });
  }

  void apply(const json& j) {
    for (const auto& f : appliers_) f(j);
  }

  json resolved() const {
    json j;
    for (const auto& f : writers_) f(j);
    return j;
  }

 private:
  std::vector<std::function<void(const json&)>> appliers_;
  std::vector<std::function<void(json&)>> writers_;
};

// A config file is either the flat key object itself or a manifest from an
// earlier run, whose "config" object is reused, so any run can be replayed
// from its own manifest.
json load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error("config " + path + ": " + e.what());
  }
  if (!j.is_object()) throw std::runtime_error("config " + path + ": expected a JSON object");
  if (j.contains("config") && j.at("config").is_object()) return j.at("config");
  return j;
}

void write_manifest(const std::string& path, const std::string& command, const json& config,
                    const json& inputs, const json& outputs) {
  json m;
  m["command"] = command;
  m["config"] = config;
  m["inputs"] = inputs;
  m["outputs"] = outputs;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write manifest: " + path);
  out << m.dump(2) << "\n";
  if (!out.flush()) throw std::runtime_error("failed writing manifest: " + path);
}

// DENC_OUT_DIR, when set, redirects relative output paths into that
// directory (created on demand). Inputs and absolute paths are untouched.
std::string out_path(const std::string& p) {
  if (p.empty() || p == "-") return p;
  const char* env = std::getenv("DENC_OUT_DIR");
  if (!env || !*env) return p;
  const std::filesystem::path fp(p);
  if (fp.is_absolute()) return p;
  const std::filesystem::path joined = std::filesystem::path(env) / fp;
  if (joined.has_parent_path()) std::filesystem::create_directories(joined.parent_path());
  return joined.string();
}

std::string default_manifest(const std::string& out) {
  return out == "-" ? out_path("run_manifest.json") : out + ".manifest.json";
}

// One dataset-backed task, defined either as a --task flag
// ("name=click,path=a.tsv,schema=click,loss=cross_entropy,weight=1") or as
// an object in the config's "tasks" array.
struct TaskFileSpec {
  std::string name;
  std::string path;
  std::string format = "tsv";
  std::string schema = "generic";
  std::string loss = "cross_entropy";
  double weight = 1.0;
  int64_t batch_size = 16;
  double margin = 0.2;
  std::string metric = "l1";
  std::string mining = "semi_hard";
};

TaskFileSpec parse_task_flag(const std::string& text) {
  TaskFileSpec spec;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    const size_t eq = part.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("--task entry '" + part + "' is not key=value");
    }
    const std::string key = part.substr(0, eq);
    const std::string value = part.substr(eq + 1);
    if (key == "name") spec.name = value;
    else if (key == "path") spec.path = value;
    else if (key == "format") spec.format = value;
    else if (key == "schema") spec.schema = value;
    else if (key == "loss") spec.loss = value;
    else if (key == "weight") spec.weight = std::stod(value);
    else if (key == "batch") spec.batch_size = std::stoll(value);
    else if (key == "margin") spec.margin = std::stod(value);
    else if (key == "metric") spec.metric = value;
    else if (key == "mining") spec.mining = value;
    else throw std::runtime_error("--task has no key '" + key + "'");
  }
  return spec;
}

TaskFileSpec parse_task_json(const json& j) {
  TaskFileSpec spec;
  j.at("name").get_to(spec.name);
  j.at("path").get_to(spec.path);
  if (j.contains("format")) j.at("format").get_to(spec.format);
  if (j.contains("schema")) j.at("schema").get_to(spec.schema);
  if (j.contains("loss")) j.at("loss").get_to(spec.loss);
  if (j.contains("weight")) j.at("weight").get_to(spec.weight);
  if (j.contains("batch")) j.at("batch").get_to(spec.batch_size);
  if (j.contains("margin")) j.at("margin").get_to(spec.margin);
  if (j.contains("metric")) j.at("metric").get_to(spec.metric);
  if (j.contains("mining")) j.at("mining").get_to(spec.mining);
  return spec;
}

json task_to_json(const TaskFileSpec& spec) {
  return json{{"name", spec.name},       {"path", spec.path},   {"format", spec.format},
              {"schema", spec.schema},   {"loss", spec.loss},   {"weight", spec.weight},
              {"batch", spec.batch_size}, {"margin", spec.margin}, {"metric", spec.metric},
              {"mining", spec.mining}};
}

denc::TaskSpec load_task(const TaskFileSpec& spec) {
  if (spec.name.empty() || spec.path.empty()) {
    throw std::runtime_error("task needs both name and path");
  }
  denc::TaskSpec task;
  task.name = spec.name;
  task.dataset = denc::load_pair_dataset(spec.path, denc::parse_format(spec.format),
                                         denc::parse_schema(spec.schema));
  for (denc::PairExample& ex : task.dataset) ex.task = spec.name;
  task.loss = denc::parse_loss_kind(spec.loss);
  task.weight = spec.weight;
  task.batch_size = spec.batch_size;
  task.triplet.margin = spec.margin;
  task.triplet.metric = denc::parse_distance(spec.metric);
  task.triplet.strategy = denc::parse_strategy(spec.mining);
  return task;
}

denc::Vocab load_vocab_checked(const std::string& path, const denc::DualEncoderModel& model) {
  denc::Vocab vocab = denc::load_vocab(path);
  if (vocab.size() > model.config.vocab_size) {
    throw std::runtime_error("vocab " + path + " has " + std::to_string(vocab.size()) +
                             " tokens but the model embeds only " +
                             std::to_string(model.config.vocab_size));
  }
  return vocab;
}

std::map<std::string, denc::DocumentRecord> corpus_by_id(const std::string& path) {
  std::map<std::string, denc::DocumentRecord> by_id;
  for (denc::DocumentRecord& doc : denc::load_corpus(path)) {
    if (!by_id.emplace(doc.id, std::move(doc)).second) {
      throw std::runtime_error("corpus " + path + ": duplicate document id");
    }
  }
  return by_id;
}

int run_app(int argc, char** argv) {
  CLI::App app{"Dual-encoder sentence embedding trainer and retrieval toolkit"};
  app.require_subcommand(1);

  // ---- train-tokenizer ----
  struct {
    std::string config, corpus, out, manifest;
    int64_t vocab_size = 512;
    uint64_t seed = 7;
    Settings set;
  } tok;
  CLI::App* tok_cmd = app.add_subcommand("train-tokenizer", "Learn a byte-level BPE vocabulary");
  tok_cmd->add_option("--config", tok.config, "JSON config file; flags override it");
  tok.set.bind(tok_cmd->add_option("--corpus", tok.corpus, "Text file, one record per line"),
               "corpus", tok.corpus);
  tok.set.bind(tok_cmd->add_option("--vocab-size", tok.vocab_size, "Target vocabulary size"),
               "vocab_size", tok.vocab_size);
  tok.set.bind(tok_cmd->add_option("--out", tok.out, "Vocabulary file to write"), "out", tok.out);
  tok.set.bind(tok_cmd->add_option("--seed", tok.seed, "Random seed"), "seed", tok.seed);
  tok.set.bind(tok_cmd->add_option("--manifest", tok.manifest, "Run manifest path"), "manifest",
               tok.manifest);

  // ---- train ----
  struct {
    std::string config, vocab, out, manifest, init_from, strategy = "proportional";
    std::string pooling = "concat", loss_curve;
    std::vector<std::string> task_flags;
    int64_t layers = 2, model_dim = 64, heads = 4, ffn_dim = 128, output_dim = 32;
    int64_t max_len_query = 16, max_len_doc = 75, attn_hidden = 32, epochs = 1, window = 100;
    bool separate_towers = false, attention = false, stochastic = false;
    double lr = 1e-3;
    uint64_t seed = 7;
    Settings set;
  } tr;
  CLI::App* train_cmd = app.add_subcommand("train", "Train a dual encoder on one or more tasks");
  train_cmd->add_option("--config", tr.config, "JSON config file; flags override it");
  tr.set.bind(train_cmd->add_option("--vocab", tr.vocab, "Vocabulary file"), "vocab", tr.vocab);
  tr.set.bind(train_cmd->add_option("--out", tr.out, "Checkpoint to write"), "out", tr.out);
  train_cmd->add_option("--task", tr.task_flags,
                        "Task as key=value pairs: name,path[,format,schema,loss,weight,batch,"
                        "margin,metric,mining]; repeatable, overrides config tasks");
  tr.set.bind(train_cmd->add_option("--init-from", tr.init_from,
                                    "Continue from a checkpoint instead of a fresh model"),
              "init_from", tr.init_from);
  tr.set.bind(train_cmd->add_option("--layers", tr.layers, "Encoder layers"), "layers", tr.layers);
  tr.set.bind(train_cmd->add_option("--model-dim", tr.model_dim, "Model width"), "model_dim",
              tr.model_dim);
  tr.set.bind(train_cmd->add_option("--heads", tr.heads, "Attention heads"), "heads", tr.heads);
  tr.set.bind(train_cmd->add_option("--ffn-dim", tr.ffn_dim, "Feed-forward width"), "ffn_dim",
              tr.ffn_dim);
  tr.set.bind(train_cmd->add_option("--output-dim", tr.output_dim, "Embedding dimension"),
              "output_dim", tr.output_dim);
  tr.set.bind(train_cmd->add_option("--max-len-query", tr.max_len_query, "Query token budget"),
              "max_len_query", tr.max_len_query);
  tr.set.bind(train_cmd->add_option("--max-len-doc", tr.max_len_doc, "Document token budget"),
              "max_len_doc", tr.max_len_doc);
  tr.set.bind(train_cmd->add_flag("--separate-towers", tr.separate_towers,
                                  "Give the document tower its own weights"),
              "separate_towers", tr.separate_towers);
  tr.set.bind(train_cmd->add_flag("--attention", tr.attention,
                                  "Initialize the attention pooling net"),
              "attention", tr.attention);
  tr.set.bind(train_cmd->add_option("--attn-hidden", tr.attn_hidden,
                                    "Attention scoring net hidden width"),
              "attn_hidden", tr.attn_hidden);
  tr.set.bind(train_cmd->add_option("--doc-pooling", tr.pooling, "concat or attention"),
              "doc_pooling", tr.pooling);
  tr.set.bind(train_cmd->add_option("--epochs", tr.epochs, "Training epochs"), "epochs",
              tr.epochs);
  tr.set.bind(train_cmd->add_option("--lr", tr.lr, "Adam learning rate"), "lr", tr.lr);
  tr.set.bind(train_cmd->add_option("--strategy", tr.strategy,
                                    "sequential, random or proportional"),
              "strategy", tr.strategy);
  tr.set.bind(train_cmd->add_flag("--stochastic-proportional", tr.stochastic,
                                  "Sample the proportional schedule instead of interleaving"),
              "stochastic_proportional", tr.stochastic);
  tr.set.bind(train_cmd->add_option("--seed", tr.seed, "Random seed"), "seed", tr.seed);
  tr.set.bind(train_cmd->add_option("--emit-loss-curve", tr.loss_curve,
                                    "Write the per-iteration loss curve CSV here"),
              "emit_loss_curve", tr.loss_curve);
  tr.set.bind(train_cmd->add_option("--window", tr.window, "Running average window"), "window",
              tr.window);
  tr.set.bind(train_cmd->add_option("--manifest", tr.manifest, "Run manifest path"), "manifest",
              tr.manifest);

  // ---- distill ----
  struct {
    std::string config, teacher, corpus, out, vocab, manifest;
    int64_t student_layers = 1, epochs = 10, batch_size = 16, holdout_every = 10;
    double lr = 1e-3;
    uint64_t seed = 7;
    Settings set;
  } di;
  CLI::App* distill_cmd =
      app.add_subcommand("distill", "Compress the query encoder into fewer layers");
  distill_cmd->add_option("--config", di.config, "JSON config file; flags override it");
  di.set.bind(distill_cmd->add_option("--teacher", di.teacher, "Teacher checkpoint"), "teacher",
              di.teacher);
  di.set.bind(distill_cmd->add_option("--student-layers", di.student_layers, "Student depth"),
              "student_layers", di.student_layers);
  di.set.bind(distill_cmd->add_option("--corpus", di.corpus, "Query texts, one per line"),
              "corpus", di.corpus);
  di.set.bind(distill_cmd->add_option("--out", di.out, "Checkpoint to write"), "out", di.out);
  di.set.bind(distill_cmd->add_option("--vocab", di.vocab, "Vocabulary file"), "vocab", di.vocab);
  di.set.bind(distill_cmd->add_option("--epochs", di.epochs, "Distillation epochs"), "epochs",
              di.epochs);
  di.set.bind(distill_cmd->add_option("--lr", di.lr, "Adam learning rate"), "lr", di.lr);
  di.set.bind(distill_cmd->add_option("--batch-size", di.batch_size, "Batch size"), "batch_size",
              di.batch_size);
  di.set.bind(distill_cmd->add_option("--holdout-every", di.holdout_every,
                                      "Hold out every n-th text for evaluation"),
              "holdout_every", di.holdout_every);
  di.set.bind(distill_cmd->add_option("--seed", di.seed, "Random seed"), "seed", di.seed);
  di.set.bind(distill_cmd->add_option("--manifest", di.manifest, "Run manifest path"), "manifest",
              di.manifest);

  // ---- encode ----
  struct {
    std::string config, model, vocab, input = "-", out = "-", tower = "query", manifest;
    Settings set;
  } en;
  CLI::App* encode_cmd = app.add_subcommand("encode", "Embed texts, one vector per line");
  encode_cmd->add_option("--config", en.config, "JSON config file; flags override it");
  en.set.bind(encode_cmd->add_option("--model", en.model, "Checkpoint"), "model", en.model);
  en.set.bind(encode_cmd->add_option("--vocab", en.vocab, "Vocabulary file"), "vocab", en.vocab);
  en.set.bind(encode_cmd->add_option("--input", en.input, "Text file or - for stdin"), "input",
              en.input);
  en.set.bind(encode_cmd->add_option("--out", en.out, "Output TSV or - for stdout"), "out",
              en.out);
  en.set.bind(encode_cmd->add_option("--tower", en.tower, "query or doc"), "tower", en.tower);
  en.set.bind(encode_cmd->add_option("--manifest", en.manifest, "Run manifest path"), "manifest",
              en.manifest);

  // ---- index ----
  struct {
    std::string config, model, vocab, corpus, out, manifest;
    Settings set;
  } ix;
  CLI::App* index_cmd = app.add_subcommand("index", "Embed a corpus into a searchable index");
  index_cmd->add_option("--config", ix.config, "JSON config file; flags override it");
  ix.set.bind(index_cmd->add_option("--model", ix.model, "Checkpoint"), "model", ix.model);
  ix.set.bind(index_cmd->add_option("--vocab", ix.vocab, "Vocabulary file"), "vocab", ix.vocab);
  ix.set.bind(index_cmd->add_option("--corpus", ix.corpus, "Document corpus JSONL"), "corpus",
              ix.corpus);
  ix.set.bind(index_cmd->add_option("--out", ix.out, "Index file to write"), "out", ix.out);
  ix.set.bind(index_cmd->add_option("--manifest", ix.manifest, "Run manifest path"), "manifest",
              ix.manifest);

  // ---- search ----
  struct {
    std::string config, index, model, vocab, queries = "-", out = "-", manifest;
    int64_t k = 10;
    Settings set;
  } se;
  CLI::App* search_cmd = app.add_subcommand("search", "Top-k retrieval against an index");
  search_cmd->add_option("--config", se.config, "JSON config file; flags override it");
  se.set.bind(search_cmd->add_option("--index", se.index, "Index file"), "index", se.index);
  se.set.bind(search_cmd->add_option("--model", se.model, "Checkpoint for the query tower"),
              "model", se.model);
  se.set.bind(search_cmd->add_option("--vocab", se.vocab, "Vocabulary file"), "vocab", se.vocab);
  se.set.bind(search_cmd->add_option("--queries", se.queries,
                                     "Query file ('id<TAB>text' or bare text) or - for stdin"),
              "queries", se.queries);
  se.set.bind(search_cmd->add_option("--k", se.k, "Results per query"), "k", se.k);
  se.set.bind(search_cmd->add_option("--out", se.out, "Output TSV or - for stdout"), "out",
              se.out);
  se.set.bind(search_cmd->add_option("--manifest", se.manifest, "Run manifest path"), "manifest",
              se.manifest);

  // ---- eval ----
  struct {
    std::string config, judged, corpus, vocab, model, manifest;
    std::string scorer = "encoder", pooling = "concat", depths = "1,5,10";
    std::string json_out, csv_out, pairs, pairs_format = "jsonl", pairs_schema = "generic";
    Settings set;
  } ev;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Ranking metrics over a judged set");
  eval_cmd->add_option("--config", ev.config, "JSON config file; flags override it");
  ev.set.bind(eval_cmd->add_option("--judged", ev.judged, "Judged set JSON"), "judged",
              ev.judged);
  ev.set.bind(eval_cmd->add_option("--corpus", ev.corpus, "Document corpus JSONL"), "corpus",
              ev.corpus);
  ev.set.bind(eval_cmd->add_option("--vocab", ev.vocab, "Vocabulary file"), "vocab", ev.vocab);
  ev.set.bind(eval_cmd->add_option("--scorer", ev.scorer, "encoder, bm25 or levenshtein"),
              "scorer", ev.scorer);
  ev.set.bind(eval_cmd->add_option("--model", ev.model, "Checkpoint (encoder scorer)"), "model",
              ev.model);
  ev.set.bind(eval_cmd->add_option("--doc-pooling", ev.pooling, "concat or attention"),
              "doc_pooling", ev.pooling);
  ev.set.bind(eval_cmd->add_option("--depths", ev.depths, "Comma-separated ranking depths"),
              "depths", ev.depths);
  ev.set.bind(eval_cmd->add_option("--json-out", ev.json_out, "Write the report as JSON"),
              "json_out", ev.json_out);
  ev.set.bind(eval_cmd->add_option("--csv-out", ev.csv_out, "Write the report as CSV"),
              "csv_out", ev.csv_out);
  ev.set.bind(eval_cmd->add_option("--pairs", ev.pairs,
                                   "Labeled pair dataset for ROC-AUC (optional)"),
              "pairs", ev.pairs);
  ev.set.bind(eval_cmd->add_option("--pairs-format", ev.pairs_format, "tsv or jsonl"),
              "pairs_format", ev.pairs_format);
  ev.set.bind(eval_cmd->add_option("--pairs-schema", ev.pairs_schema,
                                   "click, nli, translation or generic"),
              "pairs_schema", ev.pairs_schema);
  ev.set.bind(eval_cmd->add_option("--manifest", ev.manifest, "Run manifest path"), "manifest",
              ev.manifest);

  // ---- featurize ----
  struct {
    std::string config, table, model, vocab, out, pooling = "concat", manifest;
    Settings set;
  } fe;
  CLI::App* feat_cmd = app.add_subcommand(
      "featurize", "Append a semantic_sim column to a click-shaped ranker table");
  feat_cmd->add_option("--config", fe.config, "JSON config file; flags override it");
  fe.set.bind(feat_cmd->add_option("--table", fe.table,
                                   "TSV with query, title, description, url, language"),
              "table", fe.table);
  fe.set.bind(feat_cmd->add_option("--model", fe.model, "Checkpoint"), "model", fe.model);
  fe.set.bind(feat_cmd->add_option("--vocab", fe.vocab, "Vocabulary file"), "vocab", fe.vocab);
  fe.set.bind(feat_cmd->add_option("--out", fe.out, "Augmented TSV to write"), "out", fe.out);
  fe.set.bind(feat_cmd->add_option("--doc-pooling", fe.pooling, "concat or attention"),
              "doc_pooling", fe.pooling);
  fe.set.bind(feat_cmd->add_option("--manifest", fe.manifest, "Run manifest path"), "manifest",
              fe.manifest);

  // ---- gen-synth ----
  struct {
    std::string config, out, manifest;
    denc::SynthSpec spec;
    Settings set;
  } gs;
  CLI::App* synth_cmd =
      app.add_subcommand("gen-synth", "Generate the deterministic synthetic task suite");
  synth_cmd->add_option("--config", gs.config, "JSON config file; flags override it");
  gs.set.bind(synth_cmd->add_option("--out", gs.out, "Output directory"), "out", gs.out);
  gs.set.bind(synth_cmd->add_option("--seed", gs.spec.seed, "Random seed"), "seed", gs.spec.seed);
  gs.set.bind(synth_cmd->add_option("--topics", gs.spec.topics, "Latent topics"), "topics",
              gs.spec.topics);
  gs.set.bind(synth_cmd->add_option("--subtopics", gs.spec.subtopics, "Subtopics per topic"),
              "subtopics", gs.spec.subtopics);
  gs.set.bind(synth_cmd->add_option("--click-pairs", gs.spec.click_pairs, "Click-style pairs"),
              "click_pairs", gs.spec.click_pairs);
  gs.set.bind(synth_cmd->add_option("--semantic-pairs", gs.spec.semantic_pairs,
                                    "Semantic-style pairs"),
              "semantic_pairs", gs.spec.semantic_pairs);
  gs.set.bind(synth_cmd->add_option("--val-pairs", gs.spec.val_pairs,
                                    "Held-out semantic validation pairs"),
              "val_pairs", gs.spec.val_pairs);
  gs.set.bind(synth_cmd->add_option("--noisy-pairs", gs.spec.noisy_pairs, "Noisy-URL pairs"),
              "noisy_pairs", gs.spec.noisy_pairs);
  gs.set.bind(synth_cmd->add_option("--translation-pairs", gs.spec.translation_pairs,
                                    "Transliteration pairs"),
              "translation_pairs", gs.spec.translation_pairs);
  gs.set.bind(synth_cmd->add_option("--judged-semantic", gs.spec.judged_semantic_queries,
                                    "Judged semantic queries"),
              "judged_semantic", gs.spec.judged_semantic_queries);
  gs.set.bind(synth_cmd->add_option("--judged-click", gs.spec.judged_click_queries,
                                    "Judged click queries"),
              "judged_click", gs.spec.judged_click_queries);
  gs.set.bind(synth_cmd->add_option("--judged-noisy", gs.spec.judged_noisy_queries,
                                    "Judged noisy-URL queries"),
              "judged_noisy", gs.spec.judged_noisy_queries);
  gs.set.bind(synth_cmd->add_option("--distill-queries", gs.spec.distill_queries,
                                    "Distillation query count"),
              "distill_queries", gs.spec.distill_queries);
  gs.set.bind(synth_cmd->add_option("--manifest", gs.manifest, "Run manifest path"), "manifest",
              gs.manifest);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    std::cerr << "run 'denc --help' or 'denc <subcommand> --help' for usage\n";
    return 2;
  }

  if (tok_cmd->parsed()) {
    if (!tok.config.empty()) tok.set.apply(load_config_file(tok.config));
    if (tok.corpus.empty() || tok.out.empty()) {
      throw std::runtime_error("train-tokenizer needs --corpus and --out");
    }
    tok.out = out_path(tok.out);
    tok.manifest = out_path(tok.manifest);
    const denc::Vocab vocab = denc::train_bpe(read_lines(tok.corpus),
                                              static_cast<int>(tok.vocab_size), tok.seed);
    denc::save_vocab(tok.out, vocab);
    std::cout << "vocabulary: " << vocab.size() << " tokens (" << vocab.merges().size()
              << " merges) -> " << tok.out << "\n";
    const std::string manifest = tok.manifest.empty() ? default_manifest(tok.out) : tok.manifest;
    write_manifest(manifest, "train-tokenizer", tok.set.resolved(),
                   {{tok.corpus, file_hash(tok.corpus)}}, {{tok.out, file_hash(tok.out)}});
    return 0;
  }

  if (train_cmd->parsed()) {
    json config;
    if (!tr.config.empty()) {
      config = load_config_file(tr.config);
      tr.set.apply(config);
    }
    std::vector<TaskFileSpec> task_specs;
    for (const std::string& flag : tr.task_flags) task_specs.push_back(parse_task_flag(flag));
    if (task_specs.empty() && config.contains("tasks")) {
      for (const json& j : config.at("tasks")) task_specs.push_back(parse_task_json(j));
    }
    if (task_specs.empty()) throw std::runtime_error("train needs --task or config tasks");
    if (tr.vocab.empty() || tr.out.empty()) throw std::runtime_error("train needs --vocab and --out");
    tr.out = out_path(tr.out);
    tr.loss_curve = out_path(tr.loss_curve);
    tr.manifest = out_path(tr.manifest);

    const denc::Vocab vocab = denc::load_vocab(tr.vocab);
    denc::DualEncoderModel model;
    if (!tr.init_from.empty()) {
      model = denc::load_model(tr.init_from);
      if (vocab.size() > model.config.vocab_size) {
        throw std::runtime_error("vocab is larger than the initial checkpoint's embedding table");
      }
    } else {
      denc::EncoderConfig cfg;
      cfg.num_layers = tr.layers;
      cfg.model_dim = tr.model_dim;
      cfg.num_heads = tr.heads;
      cfg.ffn_dim = tr.ffn_dim;
      cfg.output_dim = tr.output_dim;
      cfg.max_len_query = tr.max_len_query;
      cfg.max_len_doc = tr.max_len_doc;
      cfg.vocab_size = vocab.size();
      cfg.shared_weights = !tr.separate_towers;
      cfg.validate();
      model = denc::init_model(cfg, tr.seed, tr.attention, tr.attn_hidden);
      model.vocab_path = tr.vocab;
    }

    std::vector<denc::TaskSpec> tasks;
    json inputs{{tr.vocab, file_hash(tr.vocab)}};
    for (const TaskFileSpec& spec : task_specs) {
      tasks.push_back(load_task(spec));
      inputs[spec.path] = file_hash(spec.path);
    }
    if (!tr.init_from.empty()) inputs[tr.init_from] = file_hash(tr.init_from);

    denc::TrainConfig cfg;
    cfg.epochs = tr.epochs;
    cfg.learning_rate = tr.lr;
    cfg.strategy = denc::parse_schedule_strategy(tr.strategy);
    cfg.proportional_stochastic = tr.stochastic;
    cfg.pooling = denc::parse_pooling(tr.pooling);
    cfg.seed = tr.seed;
    cfg.loss_curve_window = tr.window;
    const auto curve = denc::train_model(model, tasks, vocab, cfg);
    denc::save_model(tr.out, model);

    json outputs{{tr.out, file_hash(tr.out)}};
    if (!tr.loss_curve.empty()) {
      denc::save_loss_curve(tr.loss_curve, curve);
      outputs[tr.loss_curve] = file_hash(tr.loss_curve);
    }
    if (!curve.empty()) {
      std::cout << "trained " << tasks.size() << " task(s), " << curve.size()
                << " iterations, final avg loss " << float_str(curve.back().running_avg) << "\n";
    } else {
      std::cout << "trained 0 iterations\n";
    }
    std::cout << "checkpoint -> " << tr.out << "\n";

    json resolved = tr.set.resolved();
    resolved["tasks"] = json::array();
    for (const TaskFileSpec& spec : task_specs) resolved["tasks"].push_back(task_to_json(spec));
    const std::string manifest = tr.manifest.empty() ? default_manifest(tr.out) : tr.manifest;
    write_manifest(manifest, "train", resolved, inputs, outputs);
    return 0;
  }

  if (distill_cmd->parsed()) {
    if (!di.config.empty()) di.set.apply(load_config_file(di.config));
    if (di.teacher.empty() || di.corpus.empty() || di.out.empty() || di.vocab.empty()) {
      throw std::runtime_error("distill needs --teacher, --corpus, --vocab and --out");
    }
    di.out = out_path(di.out);
    di.manifest = out_path(di.manifest);
    const denc::DualEncoderModel teacher = denc::load_model(di.teacher);
    const denc::Vocab vocab = load_vocab_checked(di.vocab, teacher);
    denc::DistillConfig cfg;
    cfg.student_layers = di.student_layers;
    cfg.epochs = di.epochs;
    cfg.learning_rate = di.lr;
    cfg.batch_size = di.batch_size;
    cfg.seed = di.seed;
    cfg.holdout_every = di.holdout_every;
    const denc::DistillResult result =
        denc::distill_student(teacher, read_lines(di.corpus), vocab, cfg);
    denc::save_model(di.out, result.model);
    std::cout << "student layers " << cfg.student_layers << ", holdout mean L2 "
              << float_str(result.holdout_mean_l2) << "\n";
    std::cout << "checkpoint -> " << di.out << "\n";

    const std::string manifest = di.manifest.empty() ? default_manifest(di.out) : di.manifest;
    write_manifest(manifest, "distill", di.set.resolved(),
                   {{di.teacher, file_hash(di.teacher)},
                    {di.corpus, file_hash(di.corpus)},
                    {di.vocab, file_hash(di.vocab)}},
                   {{di.out, file_hash(di.out)}});
    return 0;
  }

  if (encode_cmd->parsed()) {
    if (!en.config.empty()) en.set.apply(load_config_file(en.config));
    if (en.model.empty() || en.vocab.empty()) {
      throw std::runtime_error("encode needs --model and --vocab");
    }
    if (en.tower != "query" && en.tower != "doc") {
      throw std::runtime_error("encode --tower must be query or doc");
    }
    en.out = out_path(en.out);
    en.manifest = out_path(en.manifest);
    const denc::DualEncoderModel model = denc::load_model(en.model);
    const denc::Vocab vocab = load_vocab_checked(en.vocab, model);
    const bool query_side = en.tower == "query";
    const denc::ParamMap tower = query_side ? model.query_tower() : model.doc_tower();
    const denc::EncoderConfig cfg = query_side ? model.config : model.doc_config();
    const int64_t max_len = query_side ? cfg.max_len_query : cfg.max_len_doc;

    const std::vector<std::string> lines = read_lines(en.input);
    OutStream out(en.out);
    for (size_t i = 0; i < lines.size(); ++i) {
      const denc::TensorF emb =
          denc::encode_text(tower, cfg, denc::encode(lines[i], vocab, max_len, true));
      out.get() << (i + 1) << '\t';
      for (int64_t j = 0; j < emb.numel(); ++j) {
        if (j) out.get() << ',';
        out.get() << float_str(emb.data[static_cast<size_t>(j)]);
      }
      out.get() << '\n';
    }
    out.finish();

    const std::string manifest = en.manifest.empty() ? default_manifest(en.out) : en.manifest;
    json inputs{{en.model, file_hash(en.model)}, {en.vocab, file_hash(en.vocab)}};
    if (en.input != "-") inputs[en.input] = file_hash(en.input);
    json outputs = json::object();
    if (en.out != "-") outputs[en.out] = file_hash(en.out);
    write_manifest(manifest, "encode", en.set.resolved(), inputs, outputs);
    return 0;
  }

  if (index_cmd->parsed()) {
    if (!ix.config.empty()) ix.set.apply(load_config_file(ix.config));
    if (ix.model.empty() || ix.vocab.empty() || ix.corpus.empty() || ix.out.empty()) {
      throw std::runtime_error("index needs --model, --vocab, --corpus and --out");
    }
    ix.out = out_path(ix.out);
    ix.manifest = out_path(ix.manifest);
    const denc::DualEncoderModel model = denc::load_model(ix.model);
    const denc::Vocab vocab = load_vocab_checked(ix.vocab, model);
    const std::vector<denc::DocumentRecord> docs = denc::load_corpus(ix.corpus);
    const denc::EmbeddingIndex index = denc::build_index(model, vocab, docs);
    denc::save_index(ix.out, index);
    std::cout << "indexed " << index.count() << " documents (dim " << index.dim << ", tower "
              << hash_hex(index.params_hash) << ") -> " << ix.out << "\n";

    const std::string manifest = ix.manifest.empty() ? default_manifest(ix.out) : ix.manifest;
    write_manifest(manifest, "index", ix.set.resolved(),
                   {{ix.model, file_hash(ix.model)},
                    {ix.vocab, file_hash(ix.vocab)},
                    {ix.corpus, file_hash(ix.corpus)}},
                   {{ix.out, file_hash(ix.out)}});
    return 0;
  }

  if (search_cmd->parsed()) {
    if (!se.config.empty()) se.set.apply(load_config_file(se.config));
    if (se.index.empty() || se.model.empty() || se.vocab.empty()) {
      throw std::runtime_error("search needs --index, --model and --vocab");
    }
    se.out = out_path(se.out);
    se.manifest = out_path(se.manifest);
    const denc::DualEncoderModel model = denc::load_model(se.model);
    const denc::Vocab vocab = load_vocab_checked(se.vocab, model);
    const denc::EmbeddingIndex index = denc::load_index(se.index);
    if (!denc::index_matches_model(index, model)) {
      std::cerr << "warning: index " << se.index
                << " was built from a different document tower than " << se.model << "\n";
    }
    const denc::ParamMap q_tower = model.query_tower();

    OutStream out(se.out);
    const std::vector<std::string> lines = read_lines(se.queries);
    for (size_t i = 0; i < lines.size(); ++i) {
      std::string query_id, text;
      const size_t tab = lines[i].find('\t');
      if (tab == std::string::npos) {
        query_id = "q" + std::to_string(i + 1);
        text = lines[i];
      } else {
        query_id = lines[i].substr(0, tab);
        text = lines[i].substr(tab + 1);
      }
      const denc::TensorF q_emb = denc::encode_text(
          q_tower, model.config, denc::encode(text, vocab, model.config.max_len_query, true));
      const auto hits = denc::top_k(index, q_emb, se.k);
      for (size_t r = 0; r < hits.size(); ++r) {
        out.get() << query_id << '\t' << hits[r].id << '\t' << float_str(hits[r].score) << '\t'
                  << (r + 1) << '\n';
      }
    }
    out.finish();

    const std::string manifest = se.manifest.empty() ? default_manifest(se.out) : se.manifest;
    json inputs{{se.index, file_hash(se.index)},
                {se.model, file_hash(se.model)},
                {se.vocab, file_hash(se.vocab)}};
    if (se.queries != "-") inputs[se.queries] = file_hash(se.queries);
    json outputs = json::object();
    if (se.out != "-") outputs[se.out] = file_hash(se.out);
    write_manifest(manifest, "search", se.set.resolved(), inputs, outputs);
    return 0;
  }

  if (eval_cmd->parsed()) {
    if (!ev.config.empty()) ev.set.apply(load_config_file(ev.config));
    if (ev.judged.empty() || ev.corpus.empty() || ev.vocab.empty()) {
      throw std::runtime_error("eval needs --judged, --corpus and --vocab");
    }
    ev.json_out = out_path(ev.json_out);
    ev.csv_out = out_path(ev.csv_out);
    ev.manifest = out_path(ev.manifest);
    const denc::JudgedSet judged = denc::load_judged_set(ev.judged);
    const auto corpus = corpus_by_id(ev.corpus);

    denc::Vocab vocab;
    denc::Scorer scorer;
    json inputs{{ev.judged, file_hash(ev.judged)},
                {ev.corpus, file_hash(ev.corpus)},
                {ev.vocab, file_hash(ev.vocab)}};
    denc::DualEncoderModel model;
    if (ev.scorer == "encoder") {
      if (ev.model.empty()) throw std::runtime_error("the encoder scorer needs --model");
      model = denc::load_model(ev.model);
      vocab = load_vocab_checked(ev.vocab, model);
      scorer = denc::make_encoder_scorer(model, vocab, denc::parse_pooling(ev.pooling));
      inputs[ev.model] = file_hash(ev.model);
    } else if (ev.scorer == "bm25") {
      vocab = denc::load_vocab(ev.vocab);
      scorer = denc::make_bm25_scorer(corpus, vocab);
    } else if (ev.scorer == "levenshtein") {
      vocab = denc::load_vocab(ev.vocab);
      scorer = denc::make_levenshtein_scorer();
    } else {
      throw std::runtime_error("unknown scorer: " + ev.scorer);
    }

    denc::EvalOptions opts;
    opts.depths.clear();
    std::stringstream ss(ev.depths);
    std::string part;
    while (std::getline(ss, part, ',')) {
      if (!part.empty()) opts.depths.push_back(std::stoll(part));
    }
    const denc::EvalReport report = denc::evaluate(scorer, judged, corpus, opts);

    bool have_auc = false;
    double auc = 0.0;
    if (!ev.pairs.empty()) {
      const auto pair_data = denc::load_pair_dataset(
          ev.pairs, denc::parse_format(ev.pairs_format), denc::parse_schema(ev.pairs_schema));
      std::vector<std::pair<std::string, denc::DocumentRecord>> pairs;
      std::vector<int> labels;
      for (const denc::PairExample& ex : pair_data) {
        pairs.emplace_back(ex.query, ex.doc);
        labels.push_back(ex.label == denc::PairLabel::positive ? 1 : 0);
      }
      auc = denc::evaluate_pairs_auc(scorer, pairs, labels);
      have_auc = true;
      inputs[ev.pairs] = file_hash(ev.pairs);
    }

    std::printf("scorer: %s\n", ev.scorer.c_str());
    std::printf("%-8s %10s %10s\n", "depth", "DCG", "NDCG");
    for (int64_t d : report.depths) {
      std::printf("@%-7lld %10.4f %10.4f\n", static_cast<long long>(d), report.mean_dcg.at(d),
                  report.mean_ndcg.at(d));
    }
    std::printf("%-8s %10.4f\n", "mAP", report.map);
    if (have_auc) std::printf("%-8s %10.4f\n", "ROC-AUC", auc);
    std::printf("queries  %lld evaluated, %lld skipped\n",
                static_cast<long long>(report.queries_evaluated),
                static_cast<long long>(report.queries_skipped));

    json outputs = json::object();
    if (!ev.json_out.empty()) {
      json doc = json::parse(report.to_json());
      if (have_auc) doc["pairs_auc"] = auc;
      std::ofstream jf(ev.json_out, std::ios::binary | std::ios::trunc);
      if (!jf) throw std::runtime_error("cannot write: " + ev.json_out);
      jf << doc.dump(2) << "\n";
      if (!jf.flush()) throw std::runtime_error("failed writing: " + ev.json_out);
      outputs[ev.json_out] = file_hash(ev.json_out);
    }
    if (!ev.csv_out.empty()) {
      std::ofstream cf(ev.csv_out, std::ios::binary | std::ios::trunc);
      if (!cf) throw std::runtime_error("cannot write: " + ev.csv_out);
      cf << report.to_csv();
      if (have_auc) cf << "pairs_auc," << float_str(auc) << "\n";
      if (!cf.flush()) throw std::runtime_error("failed writing: " + ev.csv_out);
      outputs[ev.csv_out] = file_hash(ev.csv_out);
    }

    const std::string manifest =
        ev.manifest.empty()
            ? (ev.json_out.empty() ? std::string("run_manifest.json") : default_manifest(ev.json_out))
            : ev.manifest;
    write_manifest(manifest, "eval", ev.set.resolved(), inputs, outputs);
    return 0;
  }

  if (feat_cmd->parsed()) {
    if (!fe.config.empty()) fe.set.apply(load_config_file(fe.config));
    if (fe.table.empty() || fe.model.empty() || fe.vocab.empty() || fe.out.empty()) {
      throw std::runtime_error("featurize needs --table, --model, --vocab and --out");
    }
    fe.out = out_path(fe.out);
    fe.manifest = out_path(fe.manifest);
    const denc::DualEncoderModel model = denc::load_model(fe.model);
    const denc::Vocab vocab = load_vocab_checked(fe.vocab, model);
    const denc::Scorer scorer =
        denc::make_encoder_scorer(model, vocab, denc::parse_pooling(fe.pooling));

    std::ifstream in(fe.table, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + fe.table);
    OutStream out(fe.out);
    std::string line;
    int64_t line_no = 0;
    int64_t rows = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      std::vector<std::string> cols;
      size_t begin = 0;
      while (true) {
        const size_t tab = line.find('\t', begin);
        cols.push_back(line.substr(begin, tab == std::string::npos ? tab : tab - begin));
        if (tab == std::string::npos) break;
        begin = tab + 1;
      }
      if (cols.size() != 5) {
        throw std::runtime_error(fe.table + ":" + std::to_string(line_no) +
                                 ": expected 5 columns (query, title, description, url, "
                                 "language), got " +
                                 std::to_string(cols.size()));
      }
      denc::DocumentRecord doc;
      doc.id = "row" + std::to_string(line_no);
      doc.entities = {{denc::EntityKind::title, cols[1]},
                      {denc::EntityKind::description, cols[2]},
                      {denc::EntityKind::url, cols[3]}};
      doc.language = cols[4];
      out.get() << line << '\t' << float_str(scorer(cols[0], doc)) << '\n';
      ++rows;
    }
    out.finish();
    std::cout << "featurized " << rows << " rows -> " << fe.out << "\n";

    const std::string manifest = fe.manifest.empty() ? default_manifest(fe.out) : fe.manifest;
    json outputs = json::object();
    if (fe.out != "-") outputs[fe.out] = file_hash(fe.out);
    write_manifest(manifest, "featurize", fe.set.resolved(),
                   {{fe.table, file_hash(fe.table)},
                    {fe.model, file_hash(fe.model)},
                    {fe.vocab, file_hash(fe.vocab)}},
                   outputs);
    return 0;
  }

  if (synth_cmd->parsed()) {
    if (!gs.config.empty()) gs.set.apply(load_config_file(gs.config));
    if (gs.out.empty()) throw std::runtime_error("gen-synth needs --out");
    gs.out = out_path(gs.out);
    gs.manifest = out_path(gs.manifest);
    const denc::SynthFiles files = denc::generate_synthetic(gs.spec, gs.out);
    json outputs = json::object();
    int64_t records = 0;
    for (const auto& [name, count] : files.files) {
      outputs[name] = file_hash((std::filesystem::path(gs.out) / name).string());
      records += count;
    }
    std::cout << "wrote " << files.files.size() << " files, " << records << " records -> "
              << gs.out << "\n";
    const std::string manifest =
        gs.manifest.empty() ? (std::filesystem::path(gs.out) / "run_manifest.json").string()
                            : gs.manifest;
    write_manifest(manifest, "gen-synth", gs.set.resolved(), json::object(), outputs);
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_app(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
