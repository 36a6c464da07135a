#pragma once

#include <cstdint>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "expanet/corpus.hpp"
#include "expanet/io.hpp"
#include "expanet/numerics.hpp"
#include "expanet/retrieval.hpp"

// The expansion network: a short text is embedded as the mean of its token
// rows, repeatedly reads a memory of retrieved-document vectors through soft
// or hard (Gumbel-softmax) attention, fuses each read into the query with a
// GRU-style gate, and classifies the concatenation of the initial and final
// query vectors. The backward pass is derived by hand; forward keeps a full
// trace so gradients need no recomputation of the input pipeline.

namespace expanet {

struct AttentionMode {
  enum class Kind { soft, hard };
  Kind kind = Kind::soft;
  double tau = 2.0;  // Gumbel-softmax temperature; hard mode only

  static AttentionMode soft() { return {Kind::soft, 2.0}; }
  static AttentionMode hard(double tau = 2.0) {
    if (!(tau > 0.0)) throw std::invalid_argument("hard attention requires tau > 0");
    return {Kind::hard, tau};
  }
  bool is_hard() const { return kind == Kind::hard; }
};

struct GruParameters {
  Matrix update_q, update_m;  // update gate, from query / from memory read
  Matrix reset_q, reset_m;    // reset gate
  Matrix cand_q, cand_m;      // candidate state
};

struct ModelParameters {
  Matrix short_embed;  // vocab x dim, one row per token id
  Matrix doc_embed;    // vocab x dim
  GruParameters gru;   // six dim x dim matrices
  Matrix classifier;   // num_classes x 2*dim

  int vocab_size() const { return static_cast<int>(short_embed.rows()); }
  int dim() const { return static_cast<int>(short_embed.cols()); }
  int num_classes() const { return static_cast<int>(classifier.rows()); }

  // Fixed enumeration order; also the checkpoint serialization order.
  std::vector<Matrix*> arrays() {
    return {&short_embed, &doc_embed,  &gru.update_q, &gru.update_m, &gru.reset_q,
            &gru.reset_m, &gru.cand_q, &gru.cand_m,   &classifier};
  }
  std::vector<const Matrix*> arrays() const {
    return {&short_embed, &doc_embed,  &gru.update_q, &gru.update_m, &gru.reset_q,
            &gru.reset_m, &gru.cand_q, &gru.cand_m,   &classifier};
  }

  static ModelParameters zeros(int vocab, int dim, int num_classes) {
    if (vocab < 2 || dim < 1 || num_classes < 2)
      throw std::invalid_argument("ModelParameters: invalid shape");
    ModelParameters p;
    const auto v = static_cast<std::size_t>(vocab);
    const auto d = static_cast<std::size_t>(dim);
    p.short_embed = Matrix(v, d);
    p.doc_embed = Matrix(v, d);
    p.gru.update_q = Matrix(d, d);
    p.gru.update_m = Matrix(d, d);
    p.gru.reset_q = Matrix(d, d);
    p.gru.reset_m = Matrix(d, d);
    p.gru.cand_q = Matrix(d, d);
    p.gru.cand_m = Matrix(d, d);
    p.classifier = Matrix(static_cast<std::size_t>(num_classes), 2 * d);
    return p;
  }

  // Gaussian init; the padding rows of both embedding tables stay zero and,
  // because padding positions never enter an average, never receive gradient.
  static ModelParameters random_init(int vocab, int dim, int num_classes, Rng& rng,
                                     double stddev = 0.1) {
    ModelParameters p = zeros(vocab, dim, num_classes);
    for (Matrix* m : p.arrays()) fill_gaussian(*m, rng, stddev);
    for (std::size_t j = 0; j < p.short_embed.cols(); ++j) {
      p.short_embed(kPadId, j) = 0.0;
      p.doc_embed(kPadId, j) = 0.0;
    }
    return p;
  }
};

using Gradients = ModelParameters;

// Mean of the token rows over the unpadded prefix.
inline Vector embed_short(const ShortText& text, const Matrix& short_embed) {
  if (text.real_len < 1) throw std::invalid_argument("embed_short: empty short text");
  Vector q(short_embed.cols(), 0.0);
  for (int i = 0; i < text.real_len; ++i) {
    const int id = text.token_ids[static_cast<std::size_t>(i)];
    if (id < 0 || id >= static_cast<int>(short_embed.rows()))
      throw std::invalid_argument("embed_short: token id out of range");
    auto row = short_embed.row(static_cast<std::size_t>(id));
    for (std::size_t j = 0; j < q.size(); ++j) q[j] += row[j];
  }
  for (double& x : q) x /= static_cast<double>(text.real_len);
  return q;
}

// One row per memory cell; empty cells embed to the zero vector.
inline Matrix embed_memory(const MemorySet& memory, const std::vector<LongDocument>& docs,
                           const Matrix& doc_embed) {
  Matrix out(static_cast<std::size_t>(memory.size()), doc_embed.cols(), 0.0);
  for (int cell = 0; cell < memory.size(); ++cell) {
    const int ord = memory.doc_ordinals[static_cast<std::size_t>(cell)];
    if (ord == MemorySet::kEmptySlot) continue;
    const LongDocument& doc = docs.at(static_cast<std::size_t>(ord));
    if (doc.real_len < 1) throw std::invalid_argument("embed_memory: empty document");
    auto row_out = out.row(static_cast<std::size_t>(cell));
    for (int i = 0; i < doc.real_len; ++i) {
      const int id = doc.token_ids[static_cast<std::size_t>(i)];
      auto row_in = doc_embed.row(static_cast<std::size_t>(id));
      for (std::size_t j = 0; j < row_out.size(); ++j) row_out[j] += row_in[j];
    }
    for (double& x : row_out) x /= static_cast<double>(doc.real_len);
  }
  return out;
}

struct AttentionRead {
  Vector scores;   // inner products q . d_i
  Vector weights;  // attention distribution, sums to 1
  Vector read;     // weighted sum of memory rows
  Vector noise;    // Gumbel draws; empty in soft mode
};

namespace detail {
inline Vector weighted_read(const Matrix& doc_vecs, const Vector& weights) {
  Vector read(doc_vecs.cols(), 0.0);
  for (std::size_t i = 0; i < doc_vecs.rows(); ++i) {
    auto row = doc_vecs.row(i);
    for (std::size_t j = 0; j < read.size(); ++j) read[j] += weights[i] * row[j];
  }
  return read;
}

inline Vector memory_scores(const Vector& q, const Matrix& doc_vecs) {
  if (doc_vecs.rows() == 0) throw std::invalid_argument("attention over empty memory");
  if (q.size() != doc_vecs.cols()) throw std::invalid_argument("attention: dimension mismatch");
  Vector scores(doc_vecs.rows());
  for (std::size_t i = 0; i < doc_vecs.rows(); ++i) scores[i] = dot(doc_vecs.row(i), q);
  return scores;
}
}  // namespace detail

inline AttentionRead attend_soft(const Vector& q, const Matrix& doc_vecs) {
  AttentionRead att;
  att.scores = detail::memory_scores(q, doc_vecs);
  att.weights = softmax(att.scores);
  att.read = detail::weighted_read(doc_vecs, att.weights);
  return att;
}

// Gumbel-softmax relaxation of a categorical read: perturb each score with
// Gumbel noise, then take a tempered softmax. The smooth weights stay in the
// graph, so gradients flow through the relaxation as-is.
inline AttentionRead attend_hard_with_noise(const Vector& q, const Matrix& doc_vecs, Vector noise,
                                            double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("attend_hard: tau must be positive");
  AttentionRead att;
  att.scores = detail::memory_scores(q, doc_vecs);
  if (noise.size() != att.scores.size())
    throw std::invalid_argument("attend_hard: noise length mismatch");
  Vector perturbed(att.scores.size());
  for (std::size_t i = 0; i < perturbed.size(); ++i)
    perturbed[i] = (att.scores[i] + noise[i]) / tau;
  att.weights = softmax(perturbed);
  att.read = detail::weighted_read(doc_vecs, att.weights);
  att.noise = std::move(noise);
  return att;
}

inline AttentionRead attend_hard(const Vector& q, const Matrix& doc_vecs, Rng& rng, double tau) {
  Vector noise(doc_vecs.rows());
  for (double& g : noise) g = sample_gumbel(rng);
  return attend_hard_with_noise(q, doc_vecs, std::move(noise), tau);
}

struct GruStep {
  Vector update_gate;       // z
  Vector reset_gate;        // r
  Vector memory_transform;  // cand_m * read, cached for the backward pass
  Vector candidate;         // tanh(cand_q * q + r .* memory_transform)
  Vector fused;             // (1 - z) .* q + z .* candidate
};

inline GruStep gru_fuse(const Vector& q, const Vector& read, const GruParameters& gru) {
  GruStep step;
  const Vector zq = matvec(gru.update_q, q);
  const Vector zm = matvec(gru.update_m, read);
  const Vector rq = matvec(gru.reset_q, q);
  const Vector rm = matvec(gru.reset_m, read);
  const Vector cq = matvec(gru.cand_q, q);
  step.memory_transform = matvec(gru.cand_m, read);
  const std::size_t d = q.size();
  step.update_gate.resize(d);
  step.reset_gate.resize(d);
  step.candidate.resize(d);
  step.fused.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    step.update_gate[j] = sigmoid(zq[j] + zm[j]);
    step.reset_gate[j] = sigmoid(rq[j] + rm[j]);
    step.candidate[j] = std::tanh(cq[j] + step.reset_gate[j] * step.memory_transform[j]);
    step.fused[j] = (1.0 - step.update_gate[j]) * q[j] + step.update_gate[j] * step.candidate[j];
  }
  return step;
}

struct HopTrace {
  Vector scores;
  Vector weights;
  Vector noise;  // empty in soft mode
  Vector read;
  Vector update_gate;
  Vector reset_gate;
  Vector memory_transform;
  Vector candidate;
};

struct ForwardTrace {
  AttentionMode mode;
  std::vector<int> short_ids;                // unpadded input token ids
  std::vector<std::vector<int>> memory_ids;  // per cell, unpadded; empty for empty cells
  Matrix doc_vecs;                           // memory rows; 0 x dim when hops == 0
  std::vector<Vector> q_hops;                // hops + 1 query vectors
  std::vector<HopTrace> hops;
  Vector q_final;  // [q_hops.front(), q_hops.back()]
  Vector logits;
  Vector probs;

  int hop_count() const { return static_cast<int>(hops.size()); }
};

namespace detail {
inline ForwardTrace forward_impl(const ShortText& text, const MemorySet& memory,
                                 const std::vector<LongDocument>& docs,
                                 const ModelParameters& params, const AttentionMode& mode,
                                 int hops, Rng* rng, const std::vector<Vector>* frozen_noise) {
  if (hops < 0) throw std::invalid_argument("forward: hops must be non-negative");
  if (mode.is_hard() && hops > 0 && rng == nullptr && frozen_noise == nullptr)
    throw std::invalid_argument("forward: hard attention needs an rng or recorded noise");
  if (frozen_noise != nullptr && static_cast<int>(frozen_noise->size()) != hops)
    throw std::invalid_argument("forward: recorded noise must cover every hop");

  ForwardTrace trace;
  trace.mode = mode;
  trace.short_ids.assign(text.token_ids.begin(), text.token_ids.begin() + text.real_len);
  Vector q = embed_short(text, params.short_embed);
  trace.q_hops.push_back(q);

  if (hops > 0) {
    trace.doc_vecs = embed_memory(memory, docs, params.doc_embed);
    trace.memory_ids.resize(static_cast<std::size_t>(memory.size()));
    for (int cell = 0; cell < memory.size(); ++cell) {
      const int ord = memory.doc_ordinals[static_cast<std::size_t>(cell)];
      if (ord == MemorySet::kEmptySlot) continue;
      const LongDocument& doc = docs.at(static_cast<std::size_t>(ord));
      trace.memory_ids[static_cast<std::size_t>(cell)].assign(
          doc.token_ids.begin(), doc.token_ids.begin() + doc.real_len);
    }
    // the memory is retrieved once; every hop re-reads the same rows
    for (int h = 0; h < hops; ++h) {
      AttentionRead att;
      if (!mode.is_hard()) {
        att = attend_soft(q, trace.doc_vecs);
      } else if (frozen_noise != nullptr) {
        att = attend_hard_with_noise(q, trace.doc_vecs, (*frozen_noise)[static_cast<std::size_t>(h)],
                                     mode.tau);
      } else {
        att = attend_hard(q, trace.doc_vecs, *rng, mode.tau);
      }
      GruStep step = gru_fuse(q, att.read, params.gru);
      trace.hops.push_back({std::move(att.scores), std::move(att.weights), std::move(att.noise),
                            std::move(att.read), std::move(step.update_gate),
                            std::move(step.reset_gate), std::move(step.memory_transform),
                            std::move(step.candidate)});
      q = std::move(step.fused);
      trace.q_hops.push_back(q);
    }
  } else {
    trace.doc_vecs = Matrix(0, static_cast<std::size_t>(params.dim()));
  }

  trace.q_final = trace.q_hops.front();
  trace.q_final.insert(trace.q_final.end(), q.begin(), q.end());
  trace.logits = matvec(params.classifier, trace.q_final);
  trace.probs = softmax(trace.logits);
  return trace;
}
}  // namespace detail

inline ForwardTrace forward(const ShortText& text, const MemorySet& memory,
                            const std::vector<LongDocument>& docs, const ModelParameters& params,
                            const AttentionMode& mode, int hops, Rng* rng = nullptr) {
  return detail::forward_impl(text, memory, docs, params, mode, hops, rng, nullptr);
}

// Replays previously drawn Gumbel noise (one vector per hop); used to hold
// the stochastic path fixed while probing the loss surface.
inline ForwardTrace forward_with_noise(const ShortText& text, const MemorySet& memory,
                                       const std::vector<LongDocument>& docs,
                                       const ModelParameters& params, const AttentionMode& mode,
                                       int hops, const std::vector<Vector>& noise_per_hop) {
  return detail::forward_impl(text, memory, docs, params, mode, hops, nullptr, &noise_per_hop);
}

// Negative log-likelihood of the true class, computed through log-sum-exp.
inline double loss(const ForwardTrace& trace, int label) {
  if (label < 0 || label >= static_cast<int>(trace.logits.size()))
    throw std::invalid_argument("loss: label out of range");
  return log_sum_exp(trace.logits) - trace.logits[static_cast<std::size_t>(label)];
}

// Accumulates scale * d(loss)/d(params) into grads. The derivation follows
// the forward graph in reverse: classifier -> concatenation split -> hops in
// reverse order (gate algebra, then attention softmax, then score bilinear
// form) -> the two embedding averages. Memory row gradients collect across
// hops before being pushed into the document embedding table.
inline void accumulate_gradients(const ForwardTrace& trace, int label,
                                 const ModelParameters& params, double scale, Gradients& grads) {
  const std::size_t d = static_cast<std::size_t>(params.dim());
  const std::size_t classes = static_cast<std::size_t>(params.num_classes());
  if (trace.q_final.size() != 2 * d || trace.logits.size() != classes)
    throw std::invalid_argument("accumulate_gradients: trace/parameter shape mismatch");
  if (label < 0 || label >= static_cast<int>(classes))
    throw std::invalid_argument("accumulate_gradients: label out of range");
  if (!grads.short_embed.same_shape(params.short_embed))
    throw std::invalid_argument("accumulate_gradients: gradient shape mismatch");

  // cross-entropy through softmax: d(loss)/d(logit) = prob - onehot
  Vector dlogits = trace.probs;
  dlogits[static_cast<std::size_t>(label)] -= 1.0;
  for (double& x : dlogits) x *= scale;

  add_outer(grads.classifier, dlogits, trace.q_final);
  const Vector dq_final = matvec_transposed(params.classifier, dlogits);
  Vector dq0(dq_final.begin(), dq_final.begin() + static_cast<std::ptrdiff_t>(d));
  Vector dq(dq_final.begin() + static_cast<std::ptrdiff_t>(d), dq_final.end());

  const std::size_t cells = trace.doc_vecs.rows();
  Matrix ddocs(cells, d);

  for (int h = trace.hop_count() - 1; h >= 0; --h) {
    const HopTrace& hop = trace.hops[static_cast<std::size_t>(h)];
    const Vector& q_prev = trace.q_hops[static_cast<std::size_t>(h)];
    Vector dq_prev(d, 0.0);
    Vector dread(d, 0.0);

    // fused = (1 - z) .* q_prev + z .* candidate
    Vector dz(d), dcand(d);
    for (std::size_t j = 0; j < d; ++j) {
      dz[j] = dq[j] * (hop.candidate[j] - q_prev[j]);
      dcand[j] = dq[j] * hop.update_gate[j];
      dq_prev[j] = dq[j] * (1.0 - hop.update_gate[j]);
    }

    // candidate = tanh(cand_q q_prev + r .* memory_transform)
    Vector dpre(d), dreset(d), dtransform(d);
    for (std::size_t j = 0; j < d; ++j) {
      dpre[j] = dcand[j] * (1.0 - hop.candidate[j] * hop.candidate[j]);
      dreset[j] = dpre[j] * hop.memory_transform[j];
      dtransform[j] = dpre[j] * hop.reset_gate[j];
    }
    add_outer(grads.gru.cand_q, dpre, q_prev);
    {
      const Vector back = matvec_transposed(params.gru.cand_q, dpre);
      for (std::size_t j = 0; j < d; ++j) dq_prev[j] += back[j];
    }
    add_outer(grads.gru.cand_m, dtransform, hop.read);
    {
      const Vector back = matvec_transposed(params.gru.cand_m, dtransform);
      for (std::size_t j = 0; j < d; ++j) dread[j] += back[j];
    }

    // both gates are sigmoids of (gate_q q_prev + gate_m read)
    Vector dreset_pre(d), dz_pre(d);
    for (std::size_t j = 0; j < d; ++j) {
      dreset_pre[j] = dreset[j] * hop.reset_gate[j] * (1.0 - hop.reset_gate[j]);
      dz_pre[j] = dz[j] * hop.update_gate[j] * (1.0 - hop.update_gate[j]);
    }
    add_outer(grads.gru.reset_q, dreset_pre, q_prev);
    add_outer(grads.gru.reset_m, dreset_pre, hop.read);
    add_outer(grads.gru.update_q, dz_pre, q_prev);
    add_outer(grads.gru.update_m, dz_pre, hop.read);
    {
      const Vector b1 = matvec_transposed(params.gru.reset_q, dreset_pre);
      const Vector b2 = matvec_transposed(params.gru.update_q, dz_pre);
      for (std::size_t j = 0; j < d; ++j) dq_prev[j] += b1[j] + b2[j];
    }
    {
      const Vector b1 = matvec_transposed(params.gru.reset_m, dreset_pre);
      const Vector b2 = matvec_transposed(params.gru.update_m, dz_pre);
      for (std::size_t j = 0; j < d; ++j) dread[j] += b1[j] + b2[j];
    }

    // read = sum_i weights[i] * doc_vecs[i]
    Vector dweights(cells);
    for (std::size_t i = 0; i < cells; ++i) {
      dweights[i] = dot(trace.doc_vecs.row(i), dread);
      auto drow = ddocs.row(i);
      for (std::size_t j = 0; j < d; ++j) drow[j] += hop.weights[i] * dread[j];
    }

    // softmax backward: ds_i = w_i * (dw_i - sum_k w_k dw_k); the tempered
    // hard read additionally divides by tau (the noise is a constant)
    const double inner = dot(hop.weights, dweights);
    const double temp_scale = trace.mode.is_hard() ? 1.0 / trace.mode.tau : 1.0;
    Vector dscores(cells);
    for (std::size_t i = 0; i < cells; ++i)
      dscores[i] = temp_scale * hop.weights[i] * (dweights[i] - inner);

    // scores[i] = q_prev . doc_vecs[i]
    for (std::size_t i = 0; i < cells; ++i) {
      auto row = trace.doc_vecs.row(i);
      auto drow = ddocs.row(i);
      for (std::size_t j = 0; j < d; ++j) {
        dq_prev[j] += dscores[i] * row[j];
        drow[j] += dscores[i] * q_prev[j];
      }
    }

    dq = std::move(dq_prev);
  }

  // both q_final halves reach the initial embedding (the second through the
  // hop chain, now folded into dq)
  for (std::size_t j = 0; j < d; ++j) dq0[j] += dq[j];

  const double inv_len = 1.0 / static_cast<double>(trace.short_ids.size());
  for (int id : trace.short_ids) {
    auto row = grads.short_embed.row(static_cast<std::size_t>(id));
    for (std::size_t j = 0; j < d; ++j) row[j] += dq0[j] * inv_len;
  }
  for (std::size_t i = 0; i < trace.memory_ids.size(); ++i) {
    const auto& ids = trace.memory_ids[i];
    if (ids.empty()) continue;  // empty cell: zero row, nothing to train
    const double inv = 1.0 / static_cast<double>(ids.size());
    auto drow = ddocs.row(i);
    for (int id : ids) {
      auto row = grads.doc_embed.row(static_cast<std::size_t>(id));
      for (std::size_t j = 0; j < d; ++j) row[j] += drow[j] * inv;
    }
  }
}

inline Gradients backward(const ForwardTrace& trace, int label, const ModelParameters& params) {
  Gradients grads = ModelParameters::zeros(params.vocab_size(), params.dim(), params.num_classes());
  accumulate_gradients(trace, label, params, 1.0, grads);
  return grads;
}

struct CheckpointMeta {
  int memory_size = kDefaultTopK;
  int hops = 1;
  AttentionMode mode = AttentionMode::soft();
  std::uint64_t vocab_hash = 0;
};

struct Checkpoint {
  ModelParameters params;
  CheckpointMeta meta;
};

namespace detail {
inline constexpr char kCheckpointMagic[8] = {'X', 'P', 'A', 'N', 'C', 'K', 'P', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;
}  // namespace detail

inline void save_checkpoint(const std::string& path, const ModelParameters& params,
                            const CheckpointMeta& meta) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(detail::kCheckpointMagic, 8);
  io::write_u32(out, detail::kCheckpointVersion);
  io::write_u64(out, static_cast<std::uint64_t>(params.vocab_size()));
  io::write_u64(out, static_cast<std::uint64_t>(params.dim()));
  io::write_u64(out, static_cast<std::uint64_t>(params.num_classes()));
  io::write_u64(out, static_cast<std::uint64_t>(meta.memory_size));
  io::write_u64(out, static_cast<std::uint64_t>(meta.hops));
  io::write_u32(out, meta.mode.is_hard() ? 1u : 0u);
  io::write_f64(out, meta.mode.tau);
  io::write_u64(out, meta.vocab_hash);
  for (const Matrix* m : params.arrays())
    for (double v : m->values()) io::write_f64(out, v);
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[8];
  if (!in.read(magic, 8) || !std::equal(magic, magic + 8, detail::kCheckpointMagic))
    throw std::runtime_error(path + ": not a checkpoint file");
  const std::uint32_t version = io::read_u32(in);
  if (version != detail::kCheckpointVersion)
    throw std::runtime_error(path + ": unsupported checkpoint version " + std::to_string(version));
  const auto vocab = static_cast<int>(io::read_u64(in));
  const auto dim = static_cast<int>(io::read_u64(in));
  const auto classes = static_cast<int>(io::read_u64(in));
  Checkpoint ckpt;
  ckpt.meta.memory_size = static_cast<int>(io::read_u64(in));
  ckpt.meta.hops = static_cast<int>(io::read_u64(in));
  const std::uint32_t mode = io::read_u32(in);
  const double tau = io::read_f64(in);
  ckpt.meta.mode = mode == 1u ? AttentionMode::hard(tau) : AttentionMode::soft();
  ckpt.meta.vocab_hash = io::read_u64(in);
  ckpt.params = ModelParameters::zeros(vocab, dim, classes);
  for (Matrix* m : ckpt.params.arrays())
    for (double& v : m->values()) v = io::read_f64(in);
  return ckpt;
}

}  // namespace expanet
