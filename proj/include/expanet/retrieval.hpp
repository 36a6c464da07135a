#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "expanet/corpus.hpp"
#include "expanet/io.hpp"
#include "expanet/numerics.hpp"

// Query-likelihood retrieval over an inverted index with Dirichlet-smoothed
// unigram document models, plus assembly of fixed-size memory sets.

namespace expanet {

inline constexpr double kDefaultMu = 2000.0;
inline constexpr int kDefaultTopK = 20;

struct Posting {
  std::uint32_t doc = 0;  // document ordinal
  std::uint32_t term_frequency = 0;
};

struct ScoredDoc {
  int ordinal = 0;
  double score = 0.0;
};

struct InvertedIndex {
  Vocabulary vocab;
  std::vector<std::vector<Posting>> postings;  // one list per token id, sorted by ordinal
  std::vector<std::int64_t> doc_lengths;       // untruncated token counts
  std::vector<std::string> doc_ids;
  double mu = kDefaultMu;

  int num_documents() const { return static_cast<int>(doc_ids.size()); }

  std::int64_t term_frequency_in(int token_id, int ordinal) const {
    const auto& list = postings[static_cast<std::size_t>(token_id)];
    auto it = std::lower_bound(list.begin(), list.end(), static_cast<std::uint32_t>(ordinal),
                               [](const Posting& p, std::uint32_t ord) { return p.doc < ord; });
    if (it == list.end() || it->doc != static_cast<std::uint32_t>(ordinal)) return 0;
    return it->term_frequency;
  }
};

inline InvertedIndex build_index(const std::vector<LongDocument>& docs, const Vocabulary& vocab,
                                 double mu = kDefaultMu) {
  if (docs.empty()) throw std::invalid_argument("build_index: empty document collection");
  if (!(mu > 0.0)) throw std::invalid_argument("build_index: mu must be positive");
  InvertedIndex index;
  index.vocab = vocab;
  index.mu = mu;
  index.postings.resize(static_cast<std::size_t>(vocab.size()));
  for (std::size_t ord = 0; ord < docs.size(); ++ord) {
    const LongDocument& doc = docs[ord];
    index.doc_ids.push_back(doc.id);
    index.doc_lengths.push_back(static_cast<std::int64_t>(doc.full_token_ids.size()));
    std::unordered_map<int, std::uint32_t> tf;
    for (int t : doc.full_token_ids)
      if (t > kUnkId) ++tf[t];
    // each list gains at most one posting per document, in document order,
    // so every list stays sorted by ordinal
    for (const auto& [t, count] : tf)
      index.postings[static_cast<std::size_t>(t)].push_back(
          {static_cast<std::uint32_t>(ord), count});
  }
  return index;
}

// Log query likelihood under the document's Dirichlet-smoothed unigram model:
// sum over query positions of log((tf_in_doc + mu * collection_prob) / (doc_len + mu)).
// Padding, unknowns, and tokens absent from the collection contribute nothing.
inline double score(std::span<const int> query_token_ids, int doc_ordinal,
                    const InvertedIndex& index) {
  if (doc_ordinal < 0 || doc_ordinal >= index.num_documents())
    throw std::invalid_argument("score: document ordinal out of range");
  const double denom = static_cast<double>(index.doc_lengths[static_cast<std::size_t>(doc_ordinal)]) + index.mu;
  double total = 0.0;
  for (int t : query_token_ids) {
    if (t <= kUnkId) continue;
    if (t >= index.vocab.size()) throw std::invalid_argument("score: token id out of range");
    const std::int64_t ctf = index.vocab.collection_tf[static_cast<std::size_t>(t)];
    if (ctf == 0) continue;
    const double prior = static_cast<double>(ctf) / static_cast<double>(index.vocab.collection_len);
    const double tf = static_cast<double>(index.term_frequency_in(t, doc_ordinal));
    total += std::log((tf + index.mu * prior) / denom);
  }
  return total;
}

// Scores every document sharing at least one effective query term and keeps
// the k best. Ties are broken toward the lower ordinal. exclude_ordinal (if
// not negative) is removed from consideration before ranking.
inline std::vector<ScoredDoc> retrieve_topk(std::span<const int> query_token_ids,
                                            const InvertedIndex& index, int k,
                                            int exclude_ordinal = -1) {
  if (k < 1) throw std::invalid_argument("retrieve_topk: k must be positive");
  std::vector<char> seen(static_cast<std::size_t>(index.num_documents()), 0);
  std::vector<int> candidates;
  for (int t : query_token_ids) {
    if (t <= kUnkId || t >= index.vocab.size()) continue;
    if (index.vocab.collection_tf[static_cast<std::size_t>(t)] == 0) continue;
    for (const Posting& p : index.postings[static_cast<std::size_t>(t)]) {
      if (!seen[p.doc]) {
        seen[p.doc] = 1;
        if (static_cast<int>(p.doc) != exclude_ordinal) candidates.push_back(static_cast<int>(p.doc));
      }
    }
  }
  std::vector<ScoredDoc> scored;
  scored.reserve(candidates.size());
  for (int ord : candidates) scored.push_back({ord, score(query_token_ids, ord, index)});
  std::sort(scored.begin(), scored.end(), [](const ScoredDoc& a, const ScoredDoc& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.ordinal < b.ordinal;
  });
  if (static_cast<int>(scored.size()) > k) scored.resize(static_cast<std::size_t>(k));
  return scored;
}

inline std::vector<ScoredDoc> retrieve_topk(const ShortText& query, const InvertedIndex& index,
                                            int k = kDefaultTopK, int exclude_ordinal = -1) {
  std::span<const int> ids(query.token_ids.data(), static_cast<std::size_t>(query.real_len));
  return retrieve_topk(ids, index, k, exclude_ordinal);
}

// Exactly k memory cells in rank order. Fewer than k results are padded by
// sampling the available results uniformly with replacement; zero results
// yield k empty cells that embed to zero vectors downstream.
struct MemorySet {
  static constexpr int kEmptySlot = -1;
  std::vector<int> doc_ordinals;
  std::vector<double> scores;

  int size() const { return static_cast<int>(doc_ordinals.size()); }
};

inline MemorySet assemble_memory(const std::vector<ScoredDoc>& results, int k, Rng& rng) {
  if (k < 1) throw std::invalid_argument("assemble_memory: k must be positive");
  MemorySet mem;
  mem.doc_ordinals.reserve(static_cast<std::size_t>(k));
  mem.scores.reserve(static_cast<std::size_t>(k));
  if (results.empty()) {
    mem.doc_ordinals.assign(static_cast<std::size_t>(k), MemorySet::kEmptySlot);
    mem.scores.assign(static_cast<std::size_t>(k), 0.0);
    return mem;
  }
  const std::size_t take = std::min<std::size_t>(results.size(), static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < take; ++i) {
    mem.doc_ordinals.push_back(results[i].ordinal);
    mem.scores.push_back(results[i].score);
  }
  while (mem.size() < k) {
    const ScoredDoc& pick = results[rng.below(results.size())];
    mem.doc_ordinals.push_back(pick.ordinal);
    mem.scores.push_back(pick.score);
  }
  return mem;
}

namespace detail {
inline constexpr char kIndexMagic[8] = {'X', 'P', 'A', 'N', 'I', 'D', 'X', '1'};
inline constexpr std::uint32_t kIndexVersion = 1;
}  // namespace detail

inline void save_index(const InvertedIndex& index, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(detail::kIndexMagic, 8);
  io::write_u32(out, detail::kIndexVersion);
  io::write_f64(out, index.mu);
  io::write_u64(out, index.vocab.hash());
  io::write_u64(out, static_cast<std::uint64_t>(index.vocab.size()));
  for (const std::string& tok : index.vocab.id_to_token) io::write_string(out, tok);
  for (std::int64_t v : index.vocab.doc_freq) io::write_i64(out, v);
  for (std::int64_t v : index.vocab.collection_tf) io::write_i64(out, v);
  io::write_i64(out, index.vocab.collection_len);
  io::write_i64(out, index.vocab.num_documents);
  io::write_u64(out, static_cast<std::uint64_t>(index.num_documents()));
  for (const std::string& id : index.doc_ids) io::write_string(out, id);
  for (std::int64_t len : index.doc_lengths) io::write_i64(out, len);
  for (const auto& list : index.postings) {
    io::write_u64(out, list.size());
    for (const Posting& p : list) {
      io::write_u32(out, p.doc);
      io::write_u32(out, p.term_frequency);
    }
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline InvertedIndex load_index(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[8];
  if (!in.read(magic, 8) || !std::equal(magic, magic + 8, detail::kIndexMagic))
    throw std::runtime_error(path + ": not an index file");
  const std::uint32_t version = io::read_u32(in);
  if (version != detail::kIndexVersion)
    throw std::runtime_error(path + ": unsupported index version " + std::to_string(version));
  InvertedIndex index;
  index.mu = io::read_f64(in);
  const std::uint64_t stored_hash = io::read_u64(in);
  const std::uint64_t vocab_size = io::read_u64(in);
  index.vocab.id_to_token.reserve(vocab_size);
  for (std::uint64_t i = 0; i < vocab_size; ++i) {
    std::string tok = io::read_string(in);
    index.vocab.token_to_id.emplace(tok, static_cast<int>(i));
    index.vocab.id_to_token.push_back(std::move(tok));
  }
  index.vocab.doc_freq.resize(vocab_size);
  for (auto& v : index.vocab.doc_freq) v = io::read_i64(in);
  index.vocab.collection_tf.resize(vocab_size);
  for (auto& v : index.vocab.collection_tf) v = io::read_i64(in);
  index.vocab.collection_len = io::read_i64(in);
  index.vocab.num_documents = io::read_i64(in);
  if (index.vocab.hash() != stored_hash)
    throw std::runtime_error(path + ": vocabulary hash mismatch (corrupt file)");
  const std::uint64_t num_docs = io::read_u64(in);
  index.doc_ids.reserve(num_docs);
  for (std::uint64_t i = 0; i < num_docs; ++i) index.doc_ids.push_back(io::read_string(in));
  index.doc_lengths.resize(num_docs);
  for (auto& len : index.doc_lengths) len = io::read_i64(in);
  index.postings.resize(vocab_size);
  for (auto& list : index.postings) {
    const std::uint64_t n = io::read_u64(in);
    list.resize(n);
    for (auto& p : list) {
      p.doc = io::read_u32(in);
      p.term_frequency = io::read_u32(in);
    }
  }
  return index;
}

}  // namespace expanet
