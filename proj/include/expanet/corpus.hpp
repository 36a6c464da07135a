#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "expanet/io.hpp"

// Text ingestion: tokenization, vocabulary construction with collection
// statistics, fixed-length id encoding, and JSONL corpus loaders.

namespace expanet {

inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr std::string_view kPadToken = "<pad>";
inline constexpr std::string_view kUnkToken = "<unk>";

// Lowercased ASCII-alphanumeric runs; everything else separates tokens.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char ch : text) {
    if (ch < 128 && std::isalnum(ch)) {
      current.push_back(static_cast<char>(std::tolower(ch)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

struct Vocabulary {
  std::unordered_map<std::string, int> token_to_id;
  std::vector<std::string> id_to_token;
  // Collection statistics cover the long-document collection only.
  std::vector<std::int64_t> doc_freq;       // documents containing the token
  std::vector<std::int64_t> collection_tf;  // total occurrences in the collection
  std::int64_t collection_len = 0;          // sum of collection_tf
  std::int64_t num_documents = 0;

  int size() const { return static_cast<int>(id_to_token.size()); }

  int lookup(std::string_view token) const {
    auto it = token_to_id.find(std::string(token));
    return it == token_to_id.end() ? kUnkId : it->second;
  }

  // Fingerprint of the token↔id mapping, stored in index and checkpoint
  // files so mismatched artifacts are rejected instead of silently misread.
  std::uint64_t hash() const {
    std::uint64_t h = io::fnv1a("vocab");
    for (const std::string& t : id_to_token) {
      h = io::fnv1a(t, h);
      h = io::fnv1a(std::string_view("\x1f", 1), h);
    }
    return h;
  }
};

struct LabelSet {
  std::vector<std::string> names;

  int size() const { return static_cast<int>(names.size()); }

  // -1 when the name is unknown.
  int index_of(std::string_view name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return static_cast<int>(i);
    return -1;
  }
};

struct ShortText {
  std::string id;
  std::vector<int> token_ids;  // length L_short, padded with kPadId
  int real_len = 0;            // positions before padding
  std::optional<int> label;
};

struct LongDocument {
  std::string id;
  std::vector<int> token_ids;       // length L_doc, padded, used for embedding
  int real_len = 0;
  std::vector<int> full_token_ids;  // untruncated, used for retrieval scoring
};

struct RawRecord {
  std::string id;
  std::string text;
  std::optional<std::string> label;
  std::size_t line = 0;  // 1-based line in the source file, for error messages
};

inline std::vector<RawRecord> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<RawRecord> records;
  std::unordered_set<std::string> seen_ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": invalid JSON: " + e.what());
    }
    const std::string where = path + ":" + std::to_string(lineno);
    if (!obj.is_object()) throw std::runtime_error(where + ": expected a JSON object");
    if (!obj.contains("id") || !obj["id"].is_string())
      throw std::runtime_error(where + ": missing string field \"id\"");
    if (!obj.contains("text") || !obj["text"].is_string())
      throw std::runtime_error(where + ": missing string field \"text\"");
    RawRecord rec{obj["id"].get<std::string>(), obj["text"].get<std::string>(), std::nullopt,
                  lineno};
    if (obj.contains("label")) {
      if (!obj["label"].is_string()) throw std::runtime_error(where + ": \"label\" must be a string");
      rec.label = obj["label"].get<std::string>();
    }
    if (!seen_ids.insert(rec.id).second)
      throw std::runtime_error(where + ": duplicate id \"" + rec.id + "\"");
    records.push_back(std::move(rec));
  }
  return records;
}

// Sidecar file: a JSON array of distinct class names.
inline LabelSet load_label_set(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json arr;
  try {
    arr = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(path + ": invalid JSON: " + e.what());
  }
  if (!arr.is_array()) throw std::runtime_error(path + ": expected a JSON array of label names");
  LabelSet labels;
  std::unordered_set<std::string> seen;
  for (const auto& item : arr) {
    if (!item.is_string()) throw std::runtime_error(path + ": label names must be strings");
    std::string name = item.get<std::string>();
    if (!seen.insert(name).second)
      throw std::runtime_error(path + ": duplicate label \"" + name + "\"");
    labels.names.push_back(std::move(name));
  }
  if (labels.size() < 2) throw std::runtime_error(path + ": need at least two labels");
  return labels;
}

// Ids are assigned in order of first appearance (documents first, then short
// texts) after dropping tokens seen fewer than min_count times overall.
// Ids 0 and 1 are reserved for padding and unknown tokens.
inline Vocabulary build_vocabulary(std::span<const std::vector<std::string>> long_doc_tokens,
                                   std::span<const std::vector<std::string>> short_text_tokens,
                                   std::int64_t min_count = 1) {
  if (min_count < 1) throw std::invalid_argument("build_vocabulary: min_count must be >= 1");
  std::unordered_map<std::string, std::int64_t> total_count, doc_count, doc_tf;
  std::vector<std::string> first_seen;
  auto bump = [&](const std::string& tok) {
    auto [it, inserted] = total_count.try_emplace(tok, 0);
    if (inserted) first_seen.push_back(tok);
    ++it->second;
  };
  for (const auto& doc : long_doc_tokens) {
    std::unordered_set<std::string_view> distinct;
    for (const std::string& tok : doc) {
      bump(tok);
      ++doc_tf[tok];
      distinct.insert(tok);
    }
    for (std::string_view tok : distinct) ++doc_count[std::string(tok)];
  }
  for (const auto& text : short_text_tokens)
    for (const std::string& tok : text) bump(tok);

  Vocabulary vocab;
  vocab.id_to_token = {std::string(kPadToken), std::string(kUnkToken)};
  vocab.token_to_id = {{std::string(kPadToken), kPadId}, {std::string(kUnkToken), kUnkId}};
  vocab.doc_freq = {0, 0};
  vocab.collection_tf = {0, 0};
  for (const std::string& tok : first_seen) {
    if (total_count[tok] < min_count) continue;
    const int id = vocab.size();
    vocab.token_to_id.emplace(tok, id);
    vocab.id_to_token.push_back(tok);
    auto df = doc_count.find(tok);
    auto tf = doc_tf.find(tok);
    vocab.doc_freq.push_back(df == doc_count.end() ? 0 : df->second);
    vocab.collection_tf.push_back(tf == doc_tf.end() ? 0 : tf->second);
  }
  if (vocab.size() <= 2)
    throw std::runtime_error("build_vocabulary: no corpus token survived min_count");
  for (std::int64_t tf : vocab.collection_tf) vocab.collection_len += tf;
  vocab.num_documents = static_cast<std::int64_t>(long_doc_tokens.size());
  return vocab;
}

// Fixed-length id sequence: first min(|tokens|, max_len) ids, then padding.
// Returns the ids and the unpadded length.
inline std::pair<std::vector<int>, int> encode(std::span<const std::string> tokens,
                                               const Vocabulary& vocab, int max_len) {
  if (max_len < 1) throw std::invalid_argument("encode: max_len must be positive");
  std::vector<int> ids(static_cast<std::size_t>(max_len), kPadId);
  const int n = static_cast<int>(std::min<std::size_t>(tokens.size(), max_len));
  for (int i = 0; i < n; ++i) ids[static_cast<std::size_t>(i)] = vocab.lookup(tokens[i]);
  return {std::move(ids), n};
}

inline std::vector<std::string> decode(std::span<const int> ids, const Vocabulary& vocab) {
  std::vector<std::string> tokens;
  for (int id : ids) {
    if (id == kPadId) continue;
    if (id < 0 || id >= vocab.size()) throw std::invalid_argument("decode: id out of range");
    tokens.push_back(vocab.id_to_token[static_cast<std::size_t>(id)]);
  }
  return tokens;
}

inline ShortText make_short_text(const RawRecord& raw, const Vocabulary& vocab,
                                 const LabelSet* labels, int max_len) {
  const auto tokens = tokenize(raw.text);
  if (tokens.empty())
    throw std::runtime_error("record \"" + raw.id + "\" (line " + std::to_string(raw.line) +
                             "): text has no tokens");
  ShortText st;
  st.id = raw.id;
  std::tie(st.token_ids, st.real_len) = encode(tokens, vocab, max_len);
  if (raw.label) {
    if (labels == nullptr) throw std::runtime_error("labeled record but no label set given");
    const int idx = labels->index_of(*raw.label);
    if (idx < 0)
      throw std::runtime_error("record \"" + raw.id + "\" (line " + std::to_string(raw.line) +
                               "): unknown label \"" + *raw.label + "\"");
    st.label = idx;
  }
  return st;
}

inline LongDocument make_document(const RawRecord& raw, const Vocabulary& vocab, int max_len) {
  const auto tokens = tokenize(raw.text);
  if (tokens.empty())
    throw std::runtime_error("document \"" + raw.id + "\" (line " + std::to_string(raw.line) +
                             "): text has no tokens");
  LongDocument doc;
  doc.id = raw.id;
  std::tie(doc.token_ids, doc.real_len) = encode(tokens, vocab, max_len);
  doc.full_token_ids.reserve(tokens.size());
  for (const std::string& tok : tokens) doc.full_token_ids.push_back(vocab.lookup(tok));
  return doc;
}

inline std::vector<ShortText> load_labeled(const std::string& path, const Vocabulary& vocab,
                                           const LabelSet& labels, int max_len) {
  const auto raws = read_jsonl(path);
  std::vector<ShortText> out;
  out.reserve(raws.size());
  for (const RawRecord& raw : raws) out.push_back(make_short_text(raw, vocab, &labels, max_len));
  return out;
}

inline std::vector<LongDocument> load_documents(const std::string& path, const Vocabulary& vocab,
                                                int max_len) {
  const auto raws = read_jsonl(path);
  std::vector<LongDocument> out;
  out.reserve(raws.size());
  for (const RawRecord& raw : raws) out.push_back(make_document(raw, vocab, max_len));
  return out;
}

}  // namespace expanet
