#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "expanet/expanet.hpp"
#include "json.hpp"

// Command-line front end: indexing, retrieval, training, evaluation, query
// expansion traces, hop/memory sweeps, and the bag-of-words baselines. Every
// command is deterministic given its config and seed; all artifacts land
// under the run's output directory next to a manifest describing them.

namespace {

using nlohmann::json;

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string fmt6(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

int argmax(const expanet::Vector& v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i)
    if (v[static_cast<std::size_t>(i)] > v[static_cast<std::size_t>(best)]) best = i;
  return best;
}

std::uint64_t parse_u64(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const unsigned long long value = std::stoull(text, &used, 10);
    if (used != text.size()) throw std::invalid_argument("trailing characters");
    return static_cast<std::uint64_t>(value);
  } catch (const std::exception&) {
    throw std::runtime_error(what + " is not a valid non-negative integer: \"" + text + "\"");
  }
}

// ---------------------------------------------------------------------------
// run configuration

struct RunConfig {
  std::string train, validation, test, docs, labels, out_dir, index, checkpoint;
  int dim = 100;
  int memory_size = expanet::kDefaultTopK;
  int hops = 1;
  std::string mode = "soft";
  double tau = 2.0;
  double learning_rate = 1e-2;
  int batch_size = 32;
  int epochs = 50;
  std::uint64_t seed = 42;
  double validation_fraction = 0.1;
  double mu = expanet::kDefaultMu;
  int short_len = 15;
  int doc_len = 100;
  int min_count = 1;
};

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error("config " + path + ": " + e.what());
  }
  if (!doc.is_object()) throw std::runtime_error("config " + path + ": expected a JSON object");
  static const std::set<std::string> allowed{
      "train",         "validation", "test",       "docs",       "labels",
      "out_dir",       "index",      "checkpoint", "dim",        "memory_size",
      "hops",          "mode",       "tau",        "learning_rate", "batch_size",
      "epochs",        "seed",       "validation_fraction",      "mu",
      "short_len",     "doc_len",    "min_count"};
  for (const auto& [key, value] : doc.items())
    if (!allowed.count(key))
      throw std::runtime_error("config " + path + ": unknown key \"" + key + "\"");

  RunConfig rc;
  try {
    auto str = [&](const char* key, std::string& out) {
      if (doc.contains(key)) out = doc.at(key).get<std::string>();
    };
    auto num = [&](const char* key, auto& out) {
      if (doc.contains(key)) out = doc.at(key).get<std::decay_t<decltype(out)>>();
    };
    str("train", rc.train);
    str("validation", rc.validation);
    str("test", rc.test);
    str("docs", rc.docs);
    str("labels", rc.labels);
    str("out_dir", rc.out_dir);
    str("index", rc.index);
    str("checkpoint", rc.checkpoint);
    str("mode", rc.mode);
    num("dim", rc.dim);
    num("memory_size", rc.memory_size);
    num("hops", rc.hops);
    num("tau", rc.tau);
    num("learning_rate", rc.learning_rate);
    num("batch_size", rc.batch_size);
    num("epochs", rc.epochs);
    num("seed", rc.seed);
    num("validation_fraction", rc.validation_fraction);
    num("mu", rc.mu);
    num("short_len", rc.short_len);
    num("doc_len", rc.doc_len);
    num("min_count", rc.min_count);
  } catch (const json::exception& e) {
    throw std::runtime_error("config " + path + ": " + e.what());
  }
  if (rc.mode != "soft" && rc.mode != "hard")
    throw std::runtime_error("config " + path + ": mode must be \"soft\" or \"hard\"");
  return rc;
}

json config_json(const RunConfig& rc) {
  return json{{"train", rc.train},
              {"validation", rc.validation},
              {"test", rc.test},
              {"docs", rc.docs},
              {"labels", rc.labels},
              {"out_dir", rc.out_dir},
              {"index", rc.index},
              {"checkpoint", rc.checkpoint},
              {"dim", rc.dim},
              {"memory_size", rc.memory_size},
              {"hops", rc.hops},
              {"mode", rc.mode},
              {"tau", rc.tau},
              {"learning_rate", rc.learning_rate},
              {"batch_size", rc.batch_size},
              {"epochs", rc.epochs},
              {"seed", rc.seed},
              {"validation_fraction", rc.validation_fraction},
              {"mu", rc.mu},
              {"short_len", rc.short_len},
              {"doc_len", rc.doc_len},
              {"min_count", rc.min_count}};
}

expanet::AttentionMode mode_of(const RunConfig& rc) {
  return rc.mode == "hard" ? expanet::AttentionMode::hard(rc.tau)
                           : expanet::AttentionMode::soft();
}

expanet::TrainConfig trainer_config(const RunConfig& rc) {
  expanet::TrainConfig tc;
  tc.dim = rc.dim;
  tc.memory_size = rc.memory_size;
  tc.hops = rc.hops;
  tc.mode = mode_of(rc);
  tc.learning_rate = rc.learning_rate;
  tc.batch_size = rc.batch_size;
  tc.epochs = rc.epochs;
  tc.seed = rc.seed;
  tc.validation_fraction = rc.validation_fraction;
  return tc;
}

// flag > environment > config file
std::uint64_t resolve_seed(std::uint64_t config_seed, const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("EXPANET_SEED"); env != nullptr && *env != '\0')
    return parse_u64(env, "EXPANET_SEED");
  return config_seed;
}

void require_path(const std::string& path, const std::string& what) {
  if (path.empty()) throw std::runtime_error("config: \"" + what + "\" path is required");
  if (!std::filesystem::exists(path))
    throw std::runtime_error(what + " file does not exist: " + path);
}

void check_optional_path(const std::string& path, const std::string& what) {
  if (!path.empty() && !std::filesystem::exists(path))
    throw std::runtime_error(what + " file does not exist: " + path);
}

// every referenced input is checked before any long-running work starts
void validate_paths(const RunConfig& rc, bool need_train) {
  require_path(rc.labels, "labels");
  if (need_train) require_path(rc.train, "train");
  check_optional_path(rc.train, "train");
  check_optional_path(rc.validation, "validation");
  check_optional_path(rc.test, "test");
  check_optional_path(rc.docs, "docs");
  check_optional_path(rc.index, "index");
  if (rc.docs.empty() && rc.train.empty())
    throw std::runtime_error("config: \"docs\" path is required when no train file is given");
}

// ---------------------------------------------------------------------------
// shared data loading

struct Workspace {
  expanet::LabelSet labels;
  expanet::InvertedIndex index;
  std::vector<expanet::LongDocument> docs;
  std::vector<expanet::ShortText> train, validation, test;
  bool has_validation = false;
  bool has_test = false;
  bool index_loaded = false;
  std::string docs_path;  // the file the collection came from
};

void check_docs_match_index(const std::vector<expanet::LongDocument>& docs,
                            const expanet::InvertedIndex& index, const std::string& docs_path) {
  if (docs.size() != index.doc_ids.size())
    throw std::runtime_error(docs_path + ": " + std::to_string(docs.size()) +
                             " documents but the index holds " +
                             std::to_string(index.doc_ids.size()));
  for (std::size_t i = 0; i < docs.size(); ++i)
    if (docs[i].id != index.doc_ids[i])
      throw std::runtime_error(docs_path + ": document order differs from the index at position " +
                               std::to_string(i) + " (\"" + docs[i].id + "\" vs \"" +
                               index.doc_ids[i] + "\")");
}

Workspace load_workspace(const RunConfig& rc, bool need_train) {
  validate_paths(rc, need_train);
  Workspace ws;
  ws.labels = expanet::load_label_set(rc.labels);
  // the training file doubles as the document collection when none is given;
  // self-retrieval is prevented by the id-based exclusion in MemorySource
  ws.docs_path = rc.docs.empty() ? rc.train : rc.docs;

  if (!rc.index.empty()) {
    ws.index = expanet::load_index(rc.index);
    ws.index_loaded = true;
    ws.docs = expanet::load_documents(ws.docs_path, ws.index.vocab, rc.doc_len);
    check_docs_match_index(ws.docs, ws.index, ws.docs_path);
    if (!rc.train.empty())
      ws.train = expanet::load_labeled(rc.train, ws.index.vocab, ws.labels, rc.short_len);
  } else {
    const auto doc_raws = expanet::read_jsonl(ws.docs_path);
    std::vector<std::vector<std::string>> doc_tokens, short_tokens;
    doc_tokens.reserve(doc_raws.size());
    for (const auto& raw : doc_raws) doc_tokens.push_back(expanet::tokenize(raw.text));
    std::vector<expanet::RawRecord> train_raws;
    if (!rc.train.empty()) {
      train_raws = expanet::read_jsonl(rc.train);
      short_tokens.reserve(train_raws.size());
      for (const auto& raw : train_raws) short_tokens.push_back(expanet::tokenize(raw.text));
    }
    const auto vocab = expanet::build_vocabulary(doc_tokens, short_tokens, rc.min_count);
    ws.docs.reserve(doc_raws.size());
    for (const auto& raw : doc_raws) ws.docs.push_back(expanet::make_document(raw, vocab, rc.doc_len));
    ws.index = expanet::build_index(ws.docs, vocab, rc.mu);
    ws.train.reserve(train_raws.size());
    for (const auto& raw : train_raws)
      ws.train.push_back(expanet::make_short_text(raw, vocab, &ws.labels, rc.short_len));
  }

  if (!rc.validation.empty()) {
    ws.validation = expanet::load_labeled(rc.validation, ws.index.vocab, ws.labels, rc.short_len);
    ws.has_validation = true;
  }
  if (!rc.test.empty()) {
    ws.test = expanet::load_labeled(rc.test, ws.index.vocab, ws.labels, rc.short_len);
    ws.has_test = true;
  }
  return ws;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path);
}

void write_manifest(const std::string& out_dir, const std::string& command, const json& config,
                    const json& results) {
  char hash_buf[32];
  std::snprintf(hash_buf, sizeof hash_buf, "%016llx",
                static_cast<unsigned long long>(expanet::io::fnv1a(config.dump())));
  const json manifest{{"command", command},
                      {"config", config},
                      {"config_hash", std::string(hash_buf)},
                      {"formats", json{{"index", 1}, {"checkpoint", 1}}},
                      {"results", results}};
  write_text_file(out_dir + "/manifest.json", manifest.dump(2) + "\n");
}

json metrics_json(const expanet::EvalMetrics& metrics, const expanet::LabelSet& labels) {
  json per_class = json::array();
  for (std::size_t c = 0; c < metrics.f1.size(); ++c)
    per_class.push_back(json{{"label", labels.names[c]},
                             {"precision", metrics.precision[c]},
                             {"recall", metrics.recall[c]},
                             {"f1", metrics.f1[c]}});
  return json{{"examples", metrics.total},
              {"micro_f1", metrics.micro_f1},
              {"macro_f1", metrics.macro_f1},
              {"per_class", per_class},
              {"confusion", metrics.confusion}};
}

void print_metrics(const expanet::EvalMetrics& metrics, const expanet::LabelSet& labels) {
  std::cout << "examples " << metrics.total << "\n";
  for (std::size_t c = 0; c < metrics.f1.size(); ++c)
    std::cout << "class " << labels.names[c] << " precision " << fmt(metrics.precision[c])
              << " recall " << fmt(metrics.recall[c]) << " f1 " << fmt(metrics.f1[c]) << "\n";
  std::cout << "micro_f1 " << fmt(metrics.micro_f1) << "\n";
  std::cout << "macro_f1 " << fmt(metrics.macro_f1) << "\n";
}

// ---------------------------------------------------------------------------
// build-index

int run_build_index(const std::string& docs_path, const std::string& out_path, double mu,
                    int min_count, const std::string& train_path, int doc_len) {
  require_path(docs_path, "docs");
  check_optional_path(train_path, "train");
  const auto doc_raws = expanet::read_jsonl(docs_path);
  std::vector<std::vector<std::string>> doc_tokens, short_tokens;
  doc_tokens.reserve(doc_raws.size());
  for (const auto& raw : doc_raws) doc_tokens.push_back(expanet::tokenize(raw.text));
  if (!train_path.empty())
    for (const auto& raw : expanet::read_jsonl(train_path))
      short_tokens.push_back(expanet::tokenize(raw.text));
  const auto vocab = expanet::build_vocabulary(doc_tokens, short_tokens, min_count);
  std::vector<expanet::LongDocument> docs;
  docs.reserve(doc_raws.size());
  for (const auto& raw : doc_raws) docs.push_back(expanet::make_document(raw, vocab, doc_len));
  const expanet::InvertedIndex index = expanet::build_index(docs, vocab, mu);
  expanet::save_index(index, out_path);
  std::cout << "indexed " << index.num_documents() << " documents\n";
  std::cout << "vocabulary " << index.vocab.size() << " tokens\n";
  std::cout << "collection length " << index.vocab.collection_len << "\n";
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// retrieve

int run_retrieve(const std::string& index_path, const std::string& query, int k) {
  require_path(index_path, "index");
  const expanet::InvertedIndex index = expanet::load_index(index_path);
  const auto tokens = expanet::tokenize(query);
  if (tokens.empty()) throw std::runtime_error("--query has no tokens");
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& tok : tokens) ids.push_back(index.vocab.lookup(tok));
  const auto results = expanet::retrieve_topk(ids, index, k);
  for (std::size_t rank = 0; rank < results.size(); ++rank)
    std::cout << rank + 1 << "\t" << index.doc_ids[static_cast<std::size_t>(results[rank].ordinal)]
              << "\t" << fmt(results[rank].score) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train

int run_train(const RunConfig& rc) {
  if (rc.out_dir.empty()) throw std::runtime_error("config: \"out_dir\" path is required");
  Workspace ws = load_workspace(rc, /*need_train=*/true);
  std::filesystem::create_directories(rc.out_dir);

  const expanet::TrainConfig tc = trainer_config(rc);
  std::cout << "training on " << ws.train.size() << " examples, " << ws.docs.size()
            << " documents, vocabulary " << ws.index.vocab.size() << ", " << ws.labels.size()
            << " classes\n";
  const expanet::TrainResult result = expanet::train(
      tc, ws.train, ws.has_validation ? &ws.validation : nullptr, ws.docs, ws.index,
      ws.labels.size(), [&](const expanet::EpochStats& stats) {
        std::cout << "epoch " << stats.epoch << "/" << tc.epochs << "  loss "
                  << fmt6(stats.mean_loss) << "  val_micro " << fmt6(stats.val_micro_f1)
                  << "  val_macro " << fmt6(stats.val_macro_f1) << "\n";
      });

  const std::string ckpt_path = rc.out_dir + "/model.ckpt";
  expanet::save_checkpoint(ckpt_path, result.params, result.meta);
  if (!ws.index_loaded) expanet::save_index(ws.index, rc.out_dir + "/index.bin");

  std::string csv = "epoch,mean_loss,val_micro_f1,val_macro_f1\n";
  json history = json::array();
  for (const auto& stats : result.history) {
    csv += std::to_string(stats.epoch) + "," + fmt(stats.mean_loss) + "," +
           fmt(stats.val_micro_f1) + "," + fmt(stats.val_macro_f1) + "\n";
    history.push_back(json{{"epoch", stats.epoch},
                           {"mean_loss", stats.mean_loss},
                           {"val_micro_f1", stats.val_micro_f1},
                           {"val_macro_f1", stats.val_macro_f1}});
  }
  write_text_file(rc.out_dir + "/history.csv", csv);
  write_text_file(rc.out_dir + "/history.json", history.dump(2) + "\n");

  json results{{"best_epoch", result.best_epoch},
               {"best_val_micro_f1", result.best_val_micro_f1}};
  std::cout << "best epoch " << result.best_epoch << "  val_micro "
            << fmt(result.best_val_micro_f1) << "\n";

  if (ws.has_test) {
    expanet::MemorySource memory(ws.docs, ws.index, tc.memory_size,
                                 expanet::mix_seed(tc.seed, 0x3E3));
    const expanet::EvalMetrics metrics =
        expanet::evaluate(result.params, tc.mode, tc.hops, ws.test, memory, ws.labels.size(),
                          expanet::mix_seed(tc.seed, 0x7E57));
    print_metrics(metrics, ws.labels);
    results["test"] = metrics_json(metrics, ws.labels);
  }

  write_manifest(rc.out_dir, "train", config_json(rc), results);
  std::cout << "wrote " << ckpt_path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate

int run_evaluate(const std::string& ckpt_path, const std::string& index_path,
                 const std::string& docs_path, const std::string& test_path,
                 const std::string& labels_path, const std::optional<std::uint64_t>& seed_flag,
                 int short_len, int doc_len, const std::string& out_dir) {
  require_path(ckpt_path, "checkpoint");
  require_path(index_path, "index");
  require_path(test_path, "test");
  require_path(labels_path, "labels");
  check_optional_path(docs_path, "docs");

  const expanet::Checkpoint ckpt = expanet::load_checkpoint(ckpt_path);
  const expanet::InvertedIndex index = expanet::load_index(index_path);
  if (ckpt.meta.vocab_hash != index.vocab.hash())
    throw std::runtime_error(
        "checkpoint and index disagree on the vocabulary (hash mismatch); "
        "evaluate with the index the model was trained against");
  const expanet::LabelSet labels = expanet::load_label_set(labels_path);
  if (labels.size() != ckpt.params.num_classes())
    throw std::runtime_error("label set has " + std::to_string(labels.size()) +
                             " classes but the checkpoint was trained with " +
                             std::to_string(ckpt.params.num_classes()));

  std::vector<expanet::LongDocument> docs;
  if (!docs_path.empty()) {
    docs = expanet::load_documents(docs_path, index.vocab, doc_len);
    check_docs_match_index(docs, index, docs_path);
  } else if (ckpt.meta.hops > 0) {
    throw std::runtime_error("--docs is required: the checkpoint reads document memory");
  }
  const auto test = expanet::load_labeled(test_path, index.vocab, labels, short_len);

  const std::uint64_t seed = resolve_seed(42, seed_flag);
  expanet::MemorySource memory(docs, index, ckpt.meta.memory_size,
                               expanet::mix_seed(seed, 0x3E3));
  const expanet::EvalMetrics metrics =
      expanet::evaluate(ckpt.params, ckpt.meta.mode, ckpt.meta.hops, test, memory, labels.size(),
                        expanet::mix_seed(seed, 0x7E57));
  print_metrics(metrics, labels);
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    write_text_file(out_dir + "/metrics.json", metrics_json(metrics, labels).dump(2) + "\n");
    std::cout << "wrote " << out_dir << "/metrics.json\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// expand

int run_expand(const std::string& ckpt_path, const std::string& index_path,
               const std::string& docs_path, const std::string& query,
               const std::string& labels_path, const std::optional<std::uint64_t>& seed_flag,
               int short_len, int doc_len) {
  require_path(ckpt_path, "checkpoint");
  require_path(index_path, "index");
  check_optional_path(docs_path, "docs");
  check_optional_path(labels_path, "labels");

  const expanet::Checkpoint ckpt = expanet::load_checkpoint(ckpt_path);
  const expanet::InvertedIndex index = expanet::load_index(index_path);
  if (ckpt.meta.vocab_hash != index.vocab.hash())
    throw std::runtime_error(
        "checkpoint and index disagree on the vocabulary (hash mismatch); "
        "expand with the index the model was trained against");

  std::vector<std::string> class_names;
  if (!labels_path.empty()) {
    const expanet::LabelSet labels = expanet::load_label_set(labels_path);
    if (labels.size() != ckpt.params.num_classes())
      throw std::runtime_error("label set does not match the checkpoint's class count");
    class_names = labels.names;
  } else {
    for (int c = 0; c < ckpt.params.num_classes(); ++c)
      class_names.push_back("class-" + std::to_string(c));
  }

  const auto tokens = expanet::tokenize(query);
  if (tokens.empty()) throw std::runtime_error("--query has no tokens");
  expanet::ShortText st;
  st.id = "query";
  std::tie(st.token_ids, st.real_len) = expanet::encode(tokens, index.vocab, short_len);
  std::cout << "query:";
  for (const std::string& tok : expanet::decode(st.token_ids, index.vocab)) std::cout << " " << tok;
  std::cout << "\n";

  std::vector<expanet::LongDocument> docs;
  expanet::MemorySet memory;
  if (ckpt.meta.hops > 0) {
    if (docs_path.empty())
      throw std::runtime_error("--docs is required: the checkpoint reads document memory");
    docs = expanet::load_documents(docs_path, index.vocab, doc_len);
    check_docs_match_index(docs, index, docs_path);
    const std::uint64_t seed = resolve_seed(42, seed_flag);
    expanet::MemorySource source(docs, index, ckpt.meta.memory_size,
                                 expanet::mix_seed(seed, 0x3E3));
    memory = source.memory_for(st);
    std::cout << "memory (k = " << memory.size() << "):\n";
    for (int cell = 0; cell < memory.size(); ++cell) {
      const int ord = memory.doc_ordinals[static_cast<std::size_t>(cell)];
      if (ord == expanet::MemorySet::kEmptySlot)
        std::cout << "  " << cell + 1 << "  (empty)\n";
      else
        std::cout << "  " << cell + 1 << "  " << docs[static_cast<std::size_t>(ord)].id << "  "
                  << fmt(memory.scores[static_cast<std::size_t>(cell)]) << "\n";
    }
  } else {
    std::cout << "memory disabled (the checkpoint was trained with hops = 0)\n";
  }

  expanet::Rng noise_rng(expanet::mix_seed(resolve_seed(42, seed_flag), 0x7E57));
  const expanet::ForwardTrace trace =
      expanet::forward(st, memory, docs, ckpt.params, ckpt.meta.mode, ckpt.meta.hops, &noise_rng);

  for (int h = 0; h < trace.hop_count(); ++h) {
    std::cout << "hop " << h + 1 << " attention:\n";
    const auto& weights = trace.hops[static_cast<std::size_t>(h)].weights;
    for (std::size_t cell = 0; cell < weights.size(); ++cell) {
      const int ord = memory.doc_ordinals[cell];
      const std::string name =
          ord == expanet::MemorySet::kEmptySlot ? "(empty)" : docs[static_cast<std::size_t>(ord)].id;
      std::cout << "  " << name << "  " << fmt(weights[cell]) << "\n";
    }
  }

  std::cout << "prediction: " << class_names[static_cast<std::size_t>(argmax(trace.probs))]
            << "\n";
  std::cout << "probabilities:\n";
  for (std::size_t c = 0; c < trace.probs.size(); ++c)
    std::cout << "  " << class_names[c] << "  " << fmt(trace.probs[c]) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// sweep

int run_sweep(const RunConfig& rc, const std::string& kind, std::vector<std::uint64_t> seeds,
              std::vector<int> values) {
  Workspace ws = load_workspace(rc, /*need_train=*/true);
  if (!ws.has_test) throw std::runtime_error("config: sweep needs a \"test\" file to score");

  if (seeds.empty())
    for (std::uint64_t i = 0; i < 5; ++i) seeds.push_back(rc.seed + i);
  const expanet::TrainConfig base = trainer_config(rc);
  const std::vector<expanet::ShortText>* validation =
      ws.has_validation ? &ws.validation : nullptr;

  std::vector<expanet::SweepPoint> table;
  if (kind == "hops") {
    if (values.empty()) values = {0, 1, 2, 3, 4};
    table = expanet::sweep_hops(base, ws.train, validation, ws.test, ws.docs, ws.index,
                                ws.labels.size(), seeds, values);
  } else {
    if (values.empty()) values = {1, 5, 10, 15, 20};
    table = expanet::sweep_memory(base, ws.train, validation, ws.test, ws.docs, ws.index,
                                  ws.labels.size(), seeds, values);
  }

  const std::string header = kind == "hops" ? "hops" : "memory_size";
  std::string csv = header + ",micro_f1_mean,micro_f1_std,macro_f1_mean,macro_f1_std\n";
  json rows = json::array();
  std::cout << header << "  micro_f1(mean/std)  macro_f1(mean/std)\n";
  for (const auto& point : table) {
    std::cout << point.value << "  " << fmt6(point.micro_mean) << " / " << fmt6(point.micro_std)
              << "  " << fmt6(point.macro_mean) << " / " << fmt6(point.macro_std) << "\n";
    csv += std::to_string(point.value) + "," + fmt(point.micro_mean) + "," +
           fmt(point.micro_std) + "," + fmt(point.macro_mean) + "," + fmt(point.macro_std) + "\n";
    rows.push_back(json{{header, point.value},
                        {"micro_f1_mean", point.micro_mean},
                        {"micro_f1_std", point.micro_std},
                        {"macro_f1_mean", point.macro_mean},
                        {"macro_f1_std", point.macro_std}});
  }

  if (!rc.out_dir.empty()) {
    std::filesystem::create_directories(rc.out_dir);
    write_text_file(rc.out_dir + "/sweep.csv", csv);
    write_text_file(rc.out_dir + "/sweep.json", rows.dump(2) + "\n");
    json results{{"kind", kind}, {"seeds", seeds}, {"table", rows}};
    write_manifest(rc.out_dir, "sweep", config_json(rc), results);
    std::cout << "wrote " << rc.out_dir << "/sweep.csv\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// baseline

struct BaselineExample {
  std::string id;
  int label = 0;
  expanet::SparseVector base;      // TFIDF of the text itself
  std::vector<int> top_ordinals;  // retrieved document ordinals, rank order
};

std::vector<BaselineExample> prepare_baseline_examples(
    const std::vector<expanet::RawRecord>& raws, const expanet::LabelSet& labels,
    const expanet::InvertedIndex& index, int k, bool with_retrieval,
    const std::unordered_map<std::string, int>& id_to_ordinal) {
  std::vector<BaselineExample> out;
  out.reserve(raws.size());
  for (const auto& raw : raws) {
    if (!raw.label)
      throw std::runtime_error("record \"" + raw.id + "\" (line " + std::to_string(raw.line) +
                               "): baseline training needs a label");
    const int label = labels.index_of(*raw.label);
    if (label < 0)
      throw std::runtime_error("record \"" + raw.id + "\" (line " + std::to_string(raw.line) +
                               "): unknown label \"" + *raw.label + "\"");
    BaselineExample ex;
    ex.id = raw.id;
    ex.label = label;
    const auto tokens = expanet::tokenize(raw.text);
    ex.base = expanet::tfidf(tokens, index.vocab);
    if (with_retrieval) {
      std::vector<int> ids;
      ids.reserve(tokens.size());
      for (const auto& tok : tokens) ids.push_back(index.vocab.lookup(tok));
      int exclude = -1;
      if (auto it = id_to_ordinal.find(raw.id); it != id_to_ordinal.end()) exclude = it->second;
      for (const auto& hit : expanet::retrieve_topk(ids, index, k, exclude))
        ex.top_ordinals.push_back(hit.ordinal);
    }
    out.push_back(std::move(ex));
  }
  return out;
}

expanet::SparseVector baseline_feature(const BaselineExample& ex,
                                       const std::vector<expanet::SparseVector>& doc_features,
                                       double lambda) {
  // nothing retrieved (or no mixing requested): the text stands alone
  if (lambda == 0.0 || ex.top_ordinals.empty()) return ex.base;
  std::vector<expanet::SparseVector> retrieved;
  retrieved.reserve(ex.top_ordinals.size());
  for (int ord : ex.top_ordinals) retrieved.push_back(doc_features[static_cast<std::size_t>(ord)]);
  return expanet::rocchio_expand(ex.base, retrieved, lambda);
}

int run_baseline(const RunConfig& rc, const std::string& method, int k_flag, double l2) {
  validate_paths(rc, /*need_train=*/true);
  if (rc.test.empty()) throw std::runtime_error("config: baseline needs a \"test\" file to score");
  const expanet::LabelSet labels = expanet::load_label_set(rc.labels);
  const std::string docs_path = rc.docs.empty() ? rc.train : rc.docs;
  const bool with_retrieval = method == "rocchio";
  const int k = k_flag > 0 ? k_flag : rc.memory_size;

  // vocabulary and index exactly as the network's pipeline builds them
  const auto doc_raws = expanet::read_jsonl(docs_path);
  const auto train_raws = expanet::read_jsonl(rc.train);
  std::vector<std::vector<std::string>> doc_tokens, short_tokens;
  for (const auto& raw : doc_raws) doc_tokens.push_back(expanet::tokenize(raw.text));
  for (const auto& raw : train_raws) short_tokens.push_back(expanet::tokenize(raw.text));
  const auto vocab = expanet::build_vocabulary(doc_tokens, short_tokens, rc.min_count);
  std::vector<expanet::LongDocument> docs;
  docs.reserve(doc_raws.size());
  for (const auto& raw : doc_raws) docs.push_back(expanet::make_document(raw, vocab, rc.doc_len));
  const expanet::InvertedIndex index = expanet::build_index(docs, vocab, rc.mu);

  std::unordered_map<std::string, int> id_to_ordinal;
  for (std::size_t i = 0; i < index.doc_ids.size(); ++i)
    id_to_ordinal.emplace(index.doc_ids[i], static_cast<int>(i));

  // document vectors use the full, untruncated text
  std::vector<expanet::SparseVector> doc_features;
  if (with_retrieval) {
    doc_features.reserve(doc_raws.size());
    for (const auto& raw : doc_raws)
      doc_features.push_back(expanet::tfidf(expanet::tokenize(raw.text), index.vocab));
  }

  auto train_examples = prepare_baseline_examples(train_raws, labels, index, k, with_retrieval,
                                                  id_to_ordinal);
  std::vector<BaselineExample> val_examples;
  if (!rc.validation.empty()) {
    val_examples = prepare_baseline_examples(expanet::read_jsonl(rc.validation), labels, index, k,
                                             with_retrieval, id_to_ordinal);
  } else {
    // mirror the trainer's seeded validation carve-out
    std::vector<std::size_t> order(train_examples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    expanet::Rng split_rng(expanet::mix_seed(rc.seed, 0xA11D));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[split_rng.below(i)]);
    std::size_t val_count = static_cast<std::size_t>(std::llround(
        rc.validation_fraction * static_cast<double>(order.size())));
    val_count = std::max<std::size_t>(val_count, 1);
    if (val_count >= order.size()) val_count = 0;
    std::vector<BaselineExample> kept;
    for (std::size_t i = 0; i < order.size(); ++i)
      (i < val_count ? val_examples : kept).push_back(std::move(train_examples[order[i]]));
    train_examples = std::move(kept);
    if (val_examples.empty()) val_examples = train_examples;
  }
  const auto test_examples = prepare_baseline_examples(expanet::read_jsonl(rc.test), labels, index,
                                                       k, with_retrieval, id_to_ordinal);

  std::vector<double> grid;
  if (with_retrieval)
    for (int i = 0; i <= 10; ++i) grid.push_back(static_cast<double>(i) / 10.0);
  else
    grid.push_back(0.0);

  auto evaluate_lambda = [&](double lambda, const std::vector<BaselineExample>& eval_set,
                             const expanet::LinearModel& model) {
    std::vector<int> truth, pred;
    truth.reserve(eval_set.size());
    for (const auto& ex : eval_set) {
      truth.push_back(ex.label);
      pred.push_back(model.predict(baseline_feature(ex, doc_features, lambda)));
    }
    return expanet::compute_metrics(truth, pred, labels.size());
  };

  double best_lambda = grid.front();
  double best_val = -1.0;
  expanet::LinearModel best_model;
  for (double lambda : grid) {
    std::vector<expanet::SparseVector> features;
    std::vector<int> train_labels;
    features.reserve(train_examples.size());
    for (const auto& ex : train_examples) {
      features.push_back(baseline_feature(ex, doc_features, lambda));
      train_labels.push_back(ex.label);
    }
    const expanet::LinearModel model =
        expanet::train_linear(features, train_labels, labels.size(), index.vocab.size(), l2);
    const expanet::EvalMetrics val = evaluate_lambda(lambda, val_examples, model);
    std::cout << "lambda " << fmt6(lambda) << "  val_micro " << fmt6(val.micro_f1)
              << "  val_macro " << fmt6(val.macro_f1) << "\n";
    if (val.micro_f1 > best_val) {  // ties keep the smaller lambda
      best_val = val.micro_f1;
      best_lambda = lambda;
      best_model = model;
    }
  }

  const expanet::EvalMetrics test = evaluate_lambda(best_lambda, test_examples, best_model);
  const json report{{"method", method},
                    {"lambda", best_lambda},
                    {"micro_f1", test.micro_f1},
                    {"macro_f1", test.macro_f1}};
  std::cout << report.dump() << "\n";

  if (!rc.out_dir.empty()) {
    std::filesystem::create_directories(rc.out_dir);
    write_text_file(rc.out_dir + "/baseline.json", report.dump(2) + "\n");
    json results = report;
    results["val_micro_f1"] = best_val;
    results["test"] = metrics_json(test, labels);
    write_manifest(rc.out_dir, "baseline", config_json(rc), results);
    std::cout << "wrote " << rc.out_dir << "/baseline.json\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"short-text expansion with a retrieval-backed memory network"};
  app.require_subcommand(1);

  // build-index
  std::string bi_docs, bi_out, bi_train;
  double bi_mu = expanet::kDefaultMu;
  int bi_min_count = 1, bi_doc_len = 100;
  auto* build_cmd = app.add_subcommand("build-index", "build and persist the retrieval index");
  build_cmd->add_option("--docs", bi_docs, "document collection (JSONL)")->required();
  build_cmd->add_option("--out", bi_out, "output index file")->required();
  build_cmd->add_option("--mu", bi_mu, "Dirichlet smoothing parameter");
  build_cmd->add_option("--min-count", bi_min_count, "minimum token frequency kept in the vocabulary");
  build_cmd->add_option("--train", bi_train, "short-text file whose tokens join the vocabulary");
  build_cmd->add_option("--doc-len", bi_doc_len, "model-side document truncation length");

  // retrieve
  std::string rt_index, rt_query;
  int rt_k = expanet::kDefaultTopK;
  auto* retrieve_cmd = app.add_subcommand("retrieve", "rank documents for a query");
  retrieve_cmd->add_option("--index", rt_index, "index file")->required();
  retrieve_cmd->add_option("--query", rt_query, "query text")->required();
  retrieve_cmd->add_option("--k", rt_k, "number of results");

  // train
  std::string tr_config, tr_out, tr_mode;
  std::optional<std::uint64_t> tr_seed;
  std::optional<int> tr_epochs, tr_hops, tr_dim, tr_memory, tr_batch;
  std::optional<double> tr_lr, tr_tau;
  auto* train_cmd = app.add_subcommand("train", "train the expansion network");
  train_cmd->add_option("--config", tr_config, "run configuration (JSON)")->required();
  train_cmd->add_option("--out", tr_out, "output directory (overrides the config)");
  train_cmd->add_option("--seed", tr_seed, "seed (overrides config and EXPANET_SEED)");
  train_cmd->add_option("--epochs", tr_epochs, "epoch count override");
  train_cmd->add_option("--hops", tr_hops, "hop count override");
  train_cmd->add_option("--dim", tr_dim, "embedding dimension override");
  train_cmd->add_option("--memory-size", tr_memory, "memory size override");
  train_cmd->add_option("--batch-size", tr_batch, "batch size override");
  train_cmd->add_option("--learning-rate", tr_lr, "learning rate override");
  train_cmd->add_option("--mode", tr_mode, "attention mode override (soft|hard)")
      ->check(CLI::IsMember({"soft", "hard"}));
  train_cmd->add_option("--tau", tr_tau, "hard-attention temperature override");

  // evaluate
  std::string ev_ckpt, ev_index, ev_docs, ev_test, ev_labels, ev_out;
  std::optional<std::uint64_t> ev_seed;
  int ev_short_len = 15, ev_doc_len = 100;
  auto* eval_cmd = app.add_subcommand("evaluate", "score a checkpoint on a labeled file");
  eval_cmd->add_option("--checkpoint", ev_ckpt, "model checkpoint")->required();
  eval_cmd->add_option("--index", ev_index, "index file")->required();
  eval_cmd->add_option("--test", ev_test, "labeled examples (JSONL)")->required();
  eval_cmd->add_option("--labels", ev_labels, "label set (JSON array)")->required();
  eval_cmd->add_option("--docs", ev_docs, "document collection (JSONL)");
  eval_cmd->add_option("--seed", ev_seed, "seed for memory assembly and attention noise");
  eval_cmd->add_option("--short-len", ev_short_len, "short-text truncation length");
  eval_cmd->add_option("--doc-len", ev_doc_len, "document truncation length");
  eval_cmd->add_option("--out", ev_out, "directory for metrics.json");

  // expand
  std::string ex_ckpt, ex_index, ex_docs, ex_query, ex_labels;
  std::optional<std::uint64_t> ex_seed;
  int ex_short_len = 15, ex_doc_len = 100;
  auto* expand_cmd = app.add_subcommand("expand", "trace one query through retrieval and hops");
  expand_cmd->add_option("--checkpoint", ex_ckpt, "model checkpoint")->required();
  expand_cmd->add_option("--index", ex_index, "index file")->required();
  expand_cmd->add_option("--query", ex_query, "query text")->required();
  expand_cmd->add_option("--docs", ex_docs, "document collection (JSONL)");
  expand_cmd->add_option("--labels", ex_labels, "label set for class names");
  expand_cmd->add_option("--seed", ex_seed, "seed for memory assembly and attention noise");
  expand_cmd->add_option("--short-len", ex_short_len, "short-text truncation length");
  expand_cmd->add_option("--doc-len", ex_doc_len, "document truncation length");

  // sweep
  std::string sw_config, sw_kind, sw_out;
  std::optional<std::uint64_t> sw_seed;
  std::vector<std::uint64_t> sw_seeds;
  std::vector<int> sw_values;
  auto* sweep_cmd = app.add_subcommand("sweep", "sweep hop count or memory size over seeds");
  sweep_cmd->add_option("--config", sw_config, "run configuration (JSON)")->required();
  sweep_cmd->add_option("--kind", sw_kind, "what to sweep")
      ->required()
      ->check(CLI::IsMember({"hops", "memory"}));
  sweep_cmd->add_option("--seeds", sw_seeds, "explicit seed list")->delimiter(',');
  sweep_cmd->add_option("--values", sw_values, "explicit value list")->delimiter(',');
  sweep_cmd->add_option("--seed", sw_seed, "base seed (overrides config and EXPANET_SEED)");
  sweep_cmd->add_option("--out", sw_out, "output directory (overrides the config)");

  // baseline
  std::string bl_config, bl_method, bl_out;
  std::optional<std::uint64_t> bl_seed;
  int bl_k = 0;
  double bl_l2 = 1e-4;
  auto* baseline_cmd = app.add_subcommand("baseline", "bag-of-words baselines");
  baseline_cmd->add_option("--config", bl_config, "run configuration (JSON)")->required();
  baseline_cmd->add_option("--method", bl_method, "bow (text only) or rocchio (expanded)")
      ->required()
      ->check(CLI::IsMember({"bow", "rocchio"}));
  baseline_cmd->add_option("--k", bl_k, "retrieved documents per query (default: config memory_size)");
  baseline_cmd->add_option("--l2", bl_l2, "L2 penalty for the linear classifier");
  baseline_cmd->add_option("--seed", bl_seed, "seed (overrides config and EXPANET_SEED)");
  baseline_cmd->add_option("--out", bl_out, "output directory (overrides the config)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*build_cmd)
      return run_build_index(bi_docs, bi_out, bi_mu, bi_min_count, bi_train, bi_doc_len);
    if (*retrieve_cmd) return run_retrieve(rt_index, rt_query, rt_k);
    if (*train_cmd) {
      RunConfig rc = load_run_config(tr_config);
      if (!tr_out.empty()) rc.out_dir = tr_out;
      if (tr_epochs) rc.epochs = *tr_epochs;
      if (tr_hops) rc.hops = *tr_hops;
      if (tr_dim) rc.dim = *tr_dim;
      if (tr_memory) rc.memory_size = *tr_memory;
      if (tr_batch) rc.batch_size = *tr_batch;
      if (tr_lr) rc.learning_rate = *tr_lr;
      if (tr_tau) rc.tau = *tr_tau;
      if (!tr_mode.empty()) rc.mode = tr_mode;
      rc.seed = resolve_seed(rc.seed, tr_seed);
      return run_train(rc);
    }
    if (*eval_cmd)
      return run_evaluate(ev_ckpt, ev_index, ev_docs, ev_test, ev_labels, ev_seed, ev_short_len,
                          ev_doc_len, ev_out);
    if (*expand_cmd)
      return run_expand(ex_ckpt, ex_index, ex_docs, ex_query, ex_labels, ex_seed, ex_short_len,
                        ex_doc_len);
    if (*sweep_cmd) {
      RunConfig rc = load_run_config(sw_config);
      if (!sw_out.empty()) rc.out_dir = sw_out;
      rc.seed = resolve_seed(rc.seed, sw_seed);
      return run_sweep(rc, sw_kind, sw_seeds, sw_values);
    }
    if (*baseline_cmd) {
      RunConfig rc = load_run_config(bl_config);
      if (!bl_out.empty()) rc.out_dir = bl_out;
      rc.seed = resolve_seed(rc.seed, bl_seed);
      return run_baseline(rc, bl_method, bl_k, bl_l2);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
