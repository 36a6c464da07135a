#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "expanet/corpus.hpp"
#include "expanet/model.hpp"
#include "expanet/numerics.hpp"
#include "expanet/retrieval.hpp"

// End-to-end training and evaluation: per-query memory retrieval (cached),
// mini-batch cross-entropy training with Adam, best-validation checkpoint
// selection, classification metrics, hop/memory-size sweeps, and attention
// weight export. Everything is sequential and seeded, so a fixed seed gives
// byte-identical results.

namespace expanet {

struct TrainConfig {
  int dim = 100;
  int memory_size = kDefaultTopK;  // memory cells per query
  int hops = 1;                    // 0 disables the memory entirely
  AttentionMode mode = AttentionMode::soft();
  double learning_rate = 1e-2;
  int batch_size = 32;
  int epochs = 50;
  std::uint64_t seed = 42;
  double validation_fraction = 0.1;  // used only when no validation set is given

  void validate() const {
    if (dim < 1) throw std::invalid_argument("config: dim must be positive");
    if (memory_size < 1) throw std::invalid_argument("config: memory_size must be positive");
    if (hops < 0) throw std::invalid_argument("config: hops must be non-negative");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("config: learning_rate must be positive");
    if (batch_size < 1) throw std::invalid_argument("config: batch_size must be positive");
    if (epochs < 1) throw std::invalid_argument("config: epochs must be positive");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
      throw std::invalid_argument("config: validation_fraction must lie in (0,1)");
  }
};

// Retrieves and assembles the memory set for each query once, then serves it
// from a cache keyed by query id. A document whose id equals the query id is
// excluded, which keeps a query from retrieving its own copy when the
// training file doubles as the document collection. Callers must not share
// one source between corpora that reuse ids for different texts.
class MemorySource {
 public:
  MemorySource(const std::vector<LongDocument>& docs, const InvertedIndex& index, int k,
               std::uint64_t seed)
      : docs_(&docs), index_(&index), k_(k), seed_(seed) {
    if (k < 1) throw std::invalid_argument("MemorySource: k must be positive");
    for (std::size_t ord = 0; ord < docs.size(); ++ord) id_to_ordinal_.emplace(docs[ord].id, static_cast<int>(ord));
  }

  const MemorySet& memory_for(const ShortText& query) {
    auto it = cache_.find(query.id);
    if (it != cache_.end()) return it->second;
    int exclude = -1;
    auto hit = id_to_ordinal_.find(query.id);
    if (hit != id_to_ordinal_.end()) exclude = hit->second;
    const auto results = retrieve_topk(query, *index_, k_, exclude);
    // duplication draws are seeded per query id, so cache order is irrelevant
    Rng rng(mix_seed(seed_, io::fnv1a(query.id)));
    return cache_.emplace(query.id, assemble_memory(results, k_, rng)).first->second;
  }

  const std::vector<LongDocument>& docs() const { return *docs_; }
  int memory_size() const { return k_; }

 private:
  const std::vector<LongDocument>* docs_;
  const InvertedIndex* index_;
  int k_;
  std::uint64_t seed_;
  std::unordered_map<std::string, int> id_to_ordinal_;
  std::unordered_map<std::string, MemorySet> cache_;
};

struct EvalMetrics {
  std::vector<std::vector<std::int64_t>> confusion;  // [truth][predicted]
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<double> f1;
  double micro_f1 = 0.0;
  double macro_f1 = 0.0;
  std::int64_t total = 0;
};

inline EvalMetrics metrics_from_confusion(std::vector<std::vector<std::int64_t>> confusion) {
  EvalMetrics m;
  m.confusion = std::move(confusion);
  const std::size_t classes = m.confusion.size();
  m.precision.assign(classes, 0.0);
  m.recall.assign(classes, 0.0);
  m.f1.assign(classes, 0.0);
  std::int64_t correct = 0;
  std::vector<std::int64_t> row_sum(classes, 0), col_sum(classes, 0);
  for (std::size_t t = 0; t < classes; ++t) {
    for (std::size_t p = 0; p < classes; ++p) {
      m.total += m.confusion[t][p];
      row_sum[t] += m.confusion[t][p];
      col_sum[p] += m.confusion[t][p];
    }
    correct += m.confusion[t][t];
  }
  if (m.total == 0) throw std::invalid_argument("metrics: empty evaluation set");
  double f1_sum = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    const auto tp = static_cast<double>(m.confusion[c][c]);
    // absent or never-predicted classes score zero rather than dividing by zero
    m.precision[c] = col_sum[c] > 0 ? tp / static_cast<double>(col_sum[c]) : 0.0;
    m.recall[c] = row_sum[c] > 0 ? tp / static_cast<double>(row_sum[c]) : 0.0;
    const double pr = m.precision[c] + m.recall[c];
    m.f1[c] = pr > 0.0 ? 2.0 * m.precision[c] * m.recall[c] / pr : 0.0;
    f1_sum += m.f1[c];
  }
  // single-label multiclass: pooled precision and recall both equal accuracy
  m.micro_f1 = static_cast<double>(correct) / static_cast<double>(m.total);
  m.macro_f1 = f1_sum / static_cast<double>(classes);
  return m;
}

inline EvalMetrics compute_metrics(std::span<const int> truth, std::span<const int> predicted,
                                   int num_classes) {
  if (truth.size() != predicted.size())
    throw std::invalid_argument("metrics: prediction count mismatch");
  if (num_classes < 2) throw std::invalid_argument("metrics: need at least two classes");
  std::vector<std::vector<std::int64_t>> confusion(
      static_cast<std::size_t>(num_classes),
      std::vector<std::int64_t>(static_cast<std::size_t>(num_classes), 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= num_classes || predicted[i] < 0 || predicted[i] >= num_classes)
      throw std::invalid_argument("metrics: class index out of range");
    ++confusion[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
  }
  return metrics_from_confusion(std::move(confusion));
}

namespace detail {
inline int argmax(const Vector& v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i)
    if (v[static_cast<std::size_t>(i)] > v[static_cast<std::size_t>(best)]) best = i;
  return best;
}

inline const MemorySet& empty_memory() {
  static const MemorySet empty{};
  return empty;
}
}  // namespace detail

// Predicted class per example. Hard attention draws its noise from a stream
// seeded by noise_seed, consumed in dataset order.
inline std::vector<int> predict(const ModelParameters& params, const AttentionMode& mode, int hops,
                                const std::vector<ShortText>& dataset, MemorySource& memory,
                                std::uint64_t noise_seed) {
  Rng noise_rng(noise_seed);
  std::vector<int> out;
  out.reserve(dataset.size());
  for (const ShortText& st : dataset) {
    const MemorySet& mem = hops > 0 ? memory.memory_for(st) : detail::empty_memory();
    const ForwardTrace trace = forward(st, mem, memory.docs(), params, mode, hops, &noise_rng);
    out.push_back(detail::argmax(trace.probs));
  }
  return out;
}

inline EvalMetrics evaluate(const ModelParameters& params, const AttentionMode& mode, int hops,
                            const std::vector<ShortText>& dataset, MemorySource& memory,
                            int num_classes, std::uint64_t noise_seed) {
  if (dataset.empty()) throw std::invalid_argument("evaluate: empty dataset");
  std::vector<int> truth;
  truth.reserve(dataset.size());
  for (const ShortText& st : dataset) {
    if (!st.label) throw std::invalid_argument("evaluate: example \"" + st.id + "\" has no label");
    truth.push_back(*st.label);
  }
  const std::vector<int> predicted = predict(params, mode, hops, dataset, memory, noise_seed);
  return compute_metrics(truth, predicted, num_classes);
}

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;
  double val_micro_f1 = 0.0;
  double val_macro_f1 = 0.0;
};

struct TrainResult {
  ModelParameters params;  // parameters of the best validation epoch
  CheckpointMeta meta;
  std::vector<EpochStats> history;
  int best_epoch = -1;
  double best_val_micro_f1 = 0.0;
};

using EpochCallback = std::function<void(const EpochStats&)>;

// Trains with mini-batch Adam on the mean cross-entropy. When validation is
// null, a seeded validation split is carved from the examples (except for
// collections too small to split). The returned parameters are those of the
// epoch with the best validation micro-F1, earliest epoch winning ties.
inline TrainResult train(const TrainConfig& config, const std::vector<ShortText>& examples,
                         const std::vector<ShortText>* validation,
                         const std::vector<LongDocument>& docs, const InvertedIndex& index,
                         int num_classes, const EpochCallback& on_epoch = {}) {
  config.validate();
  if (examples.empty()) throw std::invalid_argument("train: empty training set");
  if (num_classes < 2) throw std::invalid_argument("train: need at least two classes");
  for (const ShortText& st : examples)
    if (!st.label || *st.label < 0 || *st.label >= num_classes)
      throw std::invalid_argument("train: example \"" + st.id + "\" lacks a valid label");

  std::vector<ShortText> train_set, holdout;
  const std::vector<ShortText>* val_set = validation;
  if (val_set == nullptr) {
    std::vector<std::size_t> order(examples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng split_rng(mix_seed(config.seed, 0xA11D));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[split_rng.below(i)]);
    std::size_t val_count = static_cast<std::size_t>(
        std::llround(config.validation_fraction * static_cast<double>(order.size())));
    val_count = std::max<std::size_t>(val_count, 1);
    if (val_count >= order.size()) val_count = 0;  // too small to split: validate on the train set
    for (std::size_t i = 0; i < order.size(); ++i)
      (i < val_count ? holdout : train_set).push_back(examples[order[i]]);
    if (holdout.empty()) holdout = train_set;
    val_set = &holdout;
  } else {
    if (val_set->empty()) throw std::invalid_argument("train: empty validation set");
    for (const ShortText& st : *val_set)
      if (!st.label) throw std::invalid_argument("train: validation example \"" + st.id + "\" has no label");
    train_set = examples;
  }

  const int vocab_size = index.vocab.size();
  Rng init_rng(mix_seed(config.seed, 0x1217));
  ModelParameters params =
      ModelParameters::random_init(vocab_size, config.dim, num_classes, init_rng);
  Gradients grads = ModelParameters::zeros(vocab_size, config.dim, num_classes);

  MemorySource memory(docs, index, config.memory_size, mix_seed(config.seed, 0x3E3));
  if (config.hops > 0) {
    // warm the cache in a fixed order so retrieval cost is paid once up front
    for (const ShortText& st : train_set) memory.memory_for(st);
    for (const ShortText& st : *val_set) memory.memory_for(st);
  }

  AdamConfig adam_cfg;
  adam_cfg.alpha = config.learning_rate;
  AdamState adam(std::as_const(params).arrays(), adam_cfg);

  Rng shuffle_rng(mix_seed(config.seed, 0x5DDD));
  Rng train_noise_rng(mix_seed(config.seed, 0x6046));

  TrainResult result;
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.below(i)]);

    double loss_sum = 0.0;
    std::size_t start = 0;
    while (start < order.size()) {
      const std::size_t stop = std::min(start + static_cast<std::size_t>(config.batch_size), order.size());
      const double scale = 1.0 / static_cast<double>(stop - start);
      for (Matrix* g : grads.arrays()) std::fill(g->values().begin(), g->values().end(), 0.0);
      double batch_loss = 0.0;
      for (std::size_t i = start; i < stop; ++i) {
        const ShortText& st = train_set[order[i]];
        const MemorySet& mem =
            config.hops > 0 ? memory.memory_for(st) : detail::empty_memory();
        const ForwardTrace trace =
            forward(st, mem, docs, params, config.mode, config.hops, &train_noise_rng);
        const double example_loss = loss(trace, *st.label);
        batch_loss += example_loss;
        accumulate_gradients(trace, *st.label, params, scale, grads);
      }
      if (!std::isfinite(batch_loss))
        throw std::runtime_error("train: non-finite loss in epoch " + std::to_string(epoch));
      loss_sum += batch_loss;
      adam_step(params.arrays(), std::as_const(grads).arrays(), adam);
      start = stop;
    }

    const EvalMetrics val = evaluate(params, config.mode, config.hops, *val_set, memory,
                                     num_classes, mix_seed(config.seed, 0xE7A1 + static_cast<std::uint64_t>(epoch)));
    EpochStats stats;
    stats.epoch = epoch;
    stats.mean_loss = loss_sum / static_cast<double>(train_set.size());
    stats.val_micro_f1 = val.micro_f1;
    stats.val_macro_f1 = val.macro_f1;
    result.history.push_back(stats);
    if (on_epoch) on_epoch(stats);

    if (result.best_epoch < 0 || val.micro_f1 > result.best_val_micro_f1) {
      result.best_epoch = epoch;
      result.best_val_micro_f1 = val.micro_f1;
      result.params = params;
    }
  }

  result.meta.memory_size = config.memory_size;
  result.meta.hops = config.hops;
  result.meta.mode = config.mode;
  result.meta.vocab_hash = index.vocab.hash();
  return result;
}

struct SweepPoint {
  int value = 0;  // hop count or memory size
  double micro_mean = 0.0;
  double micro_std = 0.0;
  double macro_mean = 0.0;
  double macro_std = 0.0;
};

namespace detail {
inline std::pair<double, double> mean_std(const std::vector<double>& xs) {
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= static_cast<double>(xs.size());
  return {mean, std::sqrt(var)};
}

template <typename Mutate>
inline std::vector<SweepPoint> sweep_impl(const TrainConfig& base,
                                          const std::vector<ShortText>& train_set,
                                          const std::vector<ShortText>* validation,
                                          const std::vector<ShortText>& test_set,
                                          const std::vector<LongDocument>& docs,
                                          const InvertedIndex& index, int num_classes,
                                          const std::vector<int>& values,
                                          const std::vector<std::uint64_t>& seeds, Mutate mutate) {
  if (values.empty()) throw std::invalid_argument("sweep: no parameter values");
  if (seeds.empty()) throw std::invalid_argument("sweep: no seeds");
  std::vector<SweepPoint> table;
  for (int value : values) {
    std::vector<double> micro, macro;
    for (std::uint64_t seed : seeds) {
      TrainConfig config = base;
      config.seed = seed;
      mutate(config, value);
      const TrainResult run = train(config, train_set, validation, docs, index, num_classes);
      MemorySource memory(docs, index, config.memory_size, mix_seed(seed, 0x3E3));
      const EvalMetrics m = evaluate(run.params, config.mode, config.hops, test_set, memory,
                                     num_classes, mix_seed(seed, 0x7E57));
      micro.push_back(m.micro_f1);
      macro.push_back(m.macro_f1);
    }
    SweepPoint point;
    point.value = value;
    std::tie(point.micro_mean, point.micro_std) = mean_std(micro);
    std::tie(point.macro_mean, point.macro_std) = mean_std(macro);
    table.push_back(point);
  }
  return table;
}
}  // namespace detail

// Test metrics as the hop count varies, averaged over one run per seed.
inline std::vector<SweepPoint> sweep_hops(const TrainConfig& base,
                                          const std::vector<ShortText>& train_set,
                                          const std::vector<ShortText>* validation,
                                          const std::vector<ShortText>& test_set,
                                          const std::vector<LongDocument>& docs,
                                          const InvertedIndex& index, int num_classes,
                                          const std::vector<std::uint64_t>& seeds,
                                          const std::vector<int>& hop_values = {0, 1, 2, 3, 4}) {
  return detail::sweep_impl(base, train_set, validation, test_set, docs, index, num_classes,
                            hop_values, seeds,
                            [](TrainConfig& config, int value) { config.hops = value; });
}

// Test metrics as the memory size varies; single hop, soft attention.
inline std::vector<SweepPoint> sweep_memory(const TrainConfig& base,
                                            const std::vector<ShortText>& train_set,
                                            const std::vector<ShortText>* validation,
                                            const std::vector<ShortText>& test_set,
                                            const std::vector<LongDocument>& docs,
                                            const InvertedIndex& index, int num_classes,
                                            const std::vector<std::uint64_t>& seeds,
                                            const std::vector<int>& sizes = {1, 5, 10, 15, 20}) {
  return detail::sweep_impl(base, train_set, validation, test_set, docs, index, num_classes, sizes,
                            seeds, [](TrainConfig& config, int value) {
                              config.hops = 1;
                              config.mode = AttentionMode::soft();
                              config.memory_size = value;
                            });
}

struct AttentionSummary {
  std::vector<Vector> per_hop;  // mean attention weight per memory rank, one row per hop
  Vector overall;               // mean across hops
};

// Mean attention weight per memory rank over a dataset. Memory cells are in
// retrieval rank order, so cell j aggregates every query's rank-j document.
inline AttentionSummary export_attention(const ModelParameters& params, const AttentionMode& mode,
                                         int hops, const std::vector<ShortText>& dataset,
                                         MemorySource& memory, std::uint64_t noise_seed) {
  if (hops < 1) throw std::invalid_argument("export_attention: needs at least one hop");
  if (dataset.empty()) throw std::invalid_argument("export_attention: empty dataset");
  AttentionSummary summary;
  summary.per_hop.assign(static_cast<std::size_t>(hops),
                         Vector(static_cast<std::size_t>(memory.memory_size()), 0.0));
  Rng noise_rng(noise_seed);
  for (const ShortText& st : dataset) {
    const ForwardTrace trace =
        forward(st, memory.memory_for(st), memory.docs(), params, mode, hops, &noise_rng);
    for (int h = 0; h < hops; ++h)
      for (std::size_t i = 0; i < trace.hops[static_cast<std::size_t>(h)].weights.size(); ++i)
        summary.per_hop[static_cast<std::size_t>(h)][i] +=
            trace.hops[static_cast<std::size_t>(h)].weights[i];
  }
  summary.overall.assign(static_cast<std::size_t>(memory.memory_size()), 0.0);
  for (auto& row : summary.per_hop) {
    for (double& x : row) x /= static_cast<double>(dataset.size());
    for (std::size_t i = 0; i < row.size(); ++i) summary.overall[i] += row[i];
  }
  for (double& x : summary.overall) x /= static_cast<double>(hops);
  return summary;
}

}  // namespace expanet
