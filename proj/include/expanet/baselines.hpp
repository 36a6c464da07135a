#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "expanet/corpus.hpp"
#include "expanet/numerics.hpp"

// Bag-of-words baselines: L2-normalized TFIDF vectors, Rocchio-style query
// expansion with retrieved documents, and a multinomial logistic classifier
// trained by Adam with L2 weight decay (bias unpenalized).

namespace expanet {

struct SparseVector {
  std::vector<std::pair<int, double>> entries;  // sorted by id, zero weights dropped

  double norm() const {
    double acc = 0.0;
    for (const auto& [id, w] : entries) acc += w * w;
    return std::sqrt(acc);
  }
};

inline double tfidf_weight(std::int64_t tf, std::int64_t df, std::int64_t num_documents) {
  return static_cast<double>(tf) *
         std::log(static_cast<double>(num_documents + 1) / static_cast<double>(df + 1));
}

// Term frequencies weighted by inverse document frequency over the long
// document collection, L2-normalized. Out-of-vocabulary tokens are dropped.
inline SparseVector tfidf(std::span<const std::string> tokens, const Vocabulary& vocab) {
  std::unordered_map<int, std::int64_t> tf;
  for (const std::string& tok : tokens) {
    auto it = vocab.token_to_id.find(tok);
    if (it == vocab.token_to_id.end() || it->second <= kUnkId) continue;
    ++tf[it->second];
  }
  SparseVector v;
  v.entries.reserve(tf.size());
  for (const auto& [id, count] : tf) {
    const double w =
        tfidf_weight(count, vocab.doc_freq[static_cast<std::size_t>(id)], vocab.num_documents);
    if (w != 0.0) v.entries.emplace_back(id, w);
  }
  std::sort(v.entries.begin(), v.entries.end());
  const double n = v.norm();
  if (n > 0.0)
    for (auto& [id, w] : v.entries) w /= n;
  return v;
}

// (1 - lambda) * query + (lambda / K) * sum of document vectors.
inline SparseVector rocchio_expand(const SparseVector& query,
                                   const std::vector<SparseVector>& docs, double lambda) {
  if (docs.empty()) throw std::invalid_argument("rocchio_expand: empty document list");
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw std::invalid_argument("rocchio_expand: lambda must lie in [0,1]");
  std::map<int, double> acc;
  for (const auto& [id, w] : query.entries) acc[id] += (1.0 - lambda) * w;
  const double doc_scale = lambda / static_cast<double>(docs.size());
  for (const SparseVector& doc : docs)
    for (const auto& [id, w] : doc.entries) acc[id] += doc_scale * w;
  SparseVector out;
  out.entries.reserve(acc.size());
  for (const auto& [id, w] : acc)
    if (w != 0.0) out.entries.emplace_back(id, w);
  return out;
}

struct LinearModel {
  Matrix weights;  // num_classes x feature_dim
  Vector bias;     // num_classes

  Vector scores(const SparseVector& x) const {
    Vector s = bias;
    for (const auto& [id, w] : x.entries) {
      if (id < 0 || id >= static_cast<int>(weights.cols()))
        throw std::invalid_argument("LinearModel: feature id out of range");
      for (std::size_t c = 0; c < weights.rows(); ++c)
        s[c] += weights(c, static_cast<std::size_t>(id)) * w;
    }
    return s;
  }

  // Argmax class; ties resolve to the lowest class index.
  int predict(const SparseVector& x) const {
    const Vector s = scores(x);
    int best = 0;
    for (int c = 1; c < static_cast<int>(s.size()); ++c)
      if (s[static_cast<std::size_t>(c)] > s[static_cast<std::size_t>(best)]) best = c;
    return best;
  }
};

struct LinearTrainConfig {
  double learning_rate = 0.05;
  long max_iters = 2000;
  double grad_tolerance = 1e-5;
};

// Full-batch multinomial logistic regression. The objective is the mean
// cross-entropy plus 0.5 * l2 * ||weights||^2; iteration stops when the
// gradient norm falls below grad_tolerance.
inline LinearModel train_linear(const std::vector<SparseVector>& features,
                                const std::vector<int>& labels, int num_classes, int feature_dim,
                                double l2, LinearTrainConfig cfg = {}) {
  if (features.empty()) throw std::invalid_argument("train_linear: empty training set");
  if (features.size() != labels.size())
    throw std::invalid_argument("train_linear: feature/label count mismatch");
  if (num_classes < 2) throw std::invalid_argument("train_linear: need at least two classes");
  if (feature_dim < 1) throw std::invalid_argument("train_linear: invalid feature dimension");
  if (l2 < 0.0) throw std::invalid_argument("train_linear: l2 must be non-negative");
  std::unordered_set<int> distinct;
  for (int y : labels) {
    if (y < 0 || y >= num_classes) throw std::invalid_argument("train_linear: label out of range");
    distinct.insert(y);
  }
  if (distinct.size() < 2)
    throw std::invalid_argument("train_linear: training data covers a single class");

  const auto classes = static_cast<std::size_t>(num_classes);
  Matrix weights(classes, static_cast<std::size_t>(feature_dim));
  Matrix bias(classes, 1);
  AdamConfig adam_cfg;
  adam_cfg.alpha = cfg.learning_rate;
  AdamState adam({&weights, &bias}, adam_cfg);
  const double inv_n = 1.0 / static_cast<double>(features.size());

  for (long iter = 0; iter < cfg.max_iters; ++iter) {
    Matrix dweights(classes, static_cast<std::size_t>(feature_dim));
    Matrix dbias(classes, 1);
    for (std::size_t n = 0; n < features.size(); ++n) {
      Vector s(classes);
      for (std::size_t c = 0; c < classes; ++c) s[c] = bias(c, 0);
      for (const auto& [id, w] : features[n].entries)
        for (std::size_t c = 0; c < classes; ++c)
          s[c] += weights(c, static_cast<std::size_t>(id)) * w;
      Vector p = softmax(s);
      p[static_cast<std::size_t>(labels[n])] -= 1.0;
      for (std::size_t c = 0; c < classes; ++c) {
        dbias(c, 0) += p[c] * inv_n;
        for (const auto& [id, w] : features[n].entries)
          dweights(c, static_cast<std::size_t>(id)) += p[c] * w * inv_n;
      }
    }
    double grad_sq = 0.0;
    for (std::size_t i = 0; i < dweights.size(); ++i) {
      dweights.values()[i] += l2 * weights.values()[i];
      grad_sq += dweights.values()[i] * dweights.values()[i];
    }
    for (double g : dbias.values()) grad_sq += g * g;
    if (std::sqrt(grad_sq) < cfg.grad_tolerance) break;
    adam_step({&weights, &bias}, {&dweights, &dbias}, adam);
  }

  LinearModel model;
  model.weights = std::move(weights);
  model.bias.resize(classes);
  for (std::size_t c = 0; c < classes; ++c) model.bias[c] = bias(c, 0);
  return model;
}

}  // namespace expanet
