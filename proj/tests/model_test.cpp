#include "expanet/model.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "expanet/numerics.hpp"
#include "expanet/retrieval.hpp"

namespace {

using expanet::AttentionMode;
using expanet::ForwardTrace;
using expanet::LongDocument;
using expanet::Matrix;
using expanet::MemorySet;
using expanet::ModelParameters;
using expanet::Rng;
using expanet::ShortText;
using expanet::Vector;

ShortText make_short_ids(std::vector<int> ids, int pad_to = 15) {
  ShortText st;
  st.id = "q";
  st.real_len = static_cast<int>(ids.size());
  ids.resize(static_cast<std::size_t>(pad_to), expanet::kPadId);
  st.token_ids = std::move(ids);
  return st;
}

LongDocument make_doc_ids(std::string id, std::vector<int> ids, int pad_to = 12) {
  LongDocument doc;
  doc.id = std::move(id);
  doc.full_token_ids = ids;
  doc.real_len = static_cast<int>(ids.size());
  ids.resize(static_cast<std::size_t>(pad_to), expanet::kPadId);
  doc.token_ids = std::move(ids);
  return doc;
}

TEST(EmbedShort, AveragesTokenRows) {
  Rng rng(21);
  const ModelParameters params = ModelParameters::random_init(10, 4, 2, rng);
  const ShortText one = make_short_ids({3});
  const Vector q1 = expanet::embed_short(one, params.short_embed);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_DOUBLE_EQ(q1[j], params.short_embed(3, j));

  const ShortText two = make_short_ids({3, 7});
  const Vector q2 = expanet::embed_short(two, params.short_embed);
  for (std::size_t j = 0; j < 4; ++j)
    EXPECT_NEAR(q2[j], 0.5 * (params.short_embed(3, j) + params.short_embed(7, j)), 1e-15);

  const ShortText swapped = make_short_ids({7, 3});
  const Vector q3 = expanet::embed_short(swapped, params.short_embed);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_DOUBLE_EQ(q2[j], q3[j]);

  ShortText empty;
  empty.real_len = 0;
  EXPECT_THROW(expanet::embed_short(empty, params.short_embed), std::invalid_argument);
}

TEST(EmbedMemory, HandlesDuplicatesAndEmptyCells) {
  Rng rng(22);
  const ModelParameters params = ModelParameters::random_init(10, 4, 2, rng);
  const std::vector<LongDocument> docs{make_doc_ids("d0", {2, 3, 4}), make_doc_ids("d1", {5})};
  MemorySet mem;
  mem.doc_ordinals = {1, 0, 0, MemorySet::kEmptySlot};
  mem.scores = {0, 0, 0, 0};
  const Matrix vecs = expanet::embed_memory(mem, docs, params.doc_embed);
  ASSERT_EQ(vecs.rows(), 4u);
  for (std::size_t j = 0; j < 4; ++j) {
    EXPECT_DOUBLE_EQ(vecs(0, j), params.doc_embed(5, j));  // single-token doc
    const double mean =
        (params.doc_embed(2, j) + params.doc_embed(3, j) + params.doc_embed(4, j)) / 3.0;
    EXPECT_NEAR(vecs(1, j), mean, 1e-15);
    EXPECT_DOUBLE_EQ(vecs(1, j), vecs(2, j));  // duplicated cells embed identically
    EXPECT_DOUBLE_EQ(vecs(3, j), 0.0);         // empty cell is the zero vector
  }
}

TEST(AttendSoft, UniformWhenScoresTie) {
  // q orthogonal to every memory row -> all inner products zero -> uniform
  Matrix docs(3, 2, 0.0);
  docs(0, 1) = 1.0;
  docs(1, 1) = -2.0;
  docs(2, 1) = 0.5;
  const Vector q{1.0, 0.0};
  const auto att = expanet::attend_soft(q, docs);
  for (double w : att.weights) EXPECT_NEAR(w, 1.0 / 3.0, 1e-12);
}

TEST(AttendSoft, SingleCellAndDominantCell) {
  Matrix one(1, 2);
  one(0, 0) = 0.7;
  const auto att1 = expanet::attend_soft(Vector{1.0, 0.0}, one);
  ASSERT_EQ(att1.weights.size(), 1u);
  EXPECT_NEAR(att1.weights[0], 1.0, 1e-15);

  // score gap of 20+ pushes essentially all mass onto the top cell
  Matrix docs(3, 1);
  docs(0, 0) = 25.0;
  docs(1, 0) = 1.0;
  docs(2, 0) = 0.0;
  const auto att = expanet::attend_soft(Vector{1.0}, docs);
  EXPECT_GT(att.weights[0], 0.999);
  EXPECT_NEAR(att.read[0], 25.0, 0.03);
}

TEST(AttendSoft, WeightsSumToOneOnRandomInputs) {
  Rng rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 1 + rng.below(8), d = 1 + rng.below(6);
    Matrix docs(k, d);
    expanet::fill_gaussian(docs, rng, 2.0);
    Vector q(d);
    for (double& x : q) x = rng.normal(0.0, 2.0);
    const auto att = expanet::attend_soft(q, docs);
    double sum = 0.0;
    for (double w : att.weights) sum += w;
    EXPECT_NEAR(sum, 1.0, 1e-9);
    for (std::size_t j = 0; j < d; ++j) {
      double want = 0.0;
      for (std::size_t i = 0; i < k; ++i) want += att.weights[i] * docs(i, j);
      EXPECT_NEAR(att.read[j], want, 1e-12);
    }
  }
}

TEST(AttendHard, DefaultTemperatureIsTwo) {
  EXPECT_DOUBLE_EQ(AttentionMode::hard().tau, 2.0);
  EXPECT_THROW(AttentionMode::hard(0.0), std::invalid_argument);
  EXPECT_THROW(AttentionMode::hard(-1.0), std::invalid_argument);
}

TEST(AttendHard, TiedScoresGiveUniformArgmax) {
  // with equal scores the perturbed argmax is a pure Gumbel-max draw
  Matrix docs(5, 1, 0.0);  // all rows zero -> all scores zero
  const Vector q{1.0};
  Rng rng(404);
  std::vector<int> wins(5, 0);
  const int trials = 20'000;
  for (int t = 0; t < trials; ++t) {
    const auto att = expanet::attend_hard(q, docs, rng, 2.0);
    int best = 0;
    for (int i = 1; i < 5; ++i)
      if (att.weights[static_cast<std::size_t>(i)] > att.weights[static_cast<std::size_t>(best)])
        best = i;
    ++wins[static_cast<std::size_t>(best)];
  }
  for (int w : wins) EXPECT_NEAR(static_cast<double>(w) / trials, 0.2, 0.03);
}

TEST(AttendHard, TinyTemperatureFreezesToOneHot) {
  Rng rng(42);
  Matrix docs(4, 3);
  expanet::fill_gaussian(docs, rng, 1.0);
  Vector q{0.3, -0.2, 0.9};
  Vector noise{0.5, -1.0, 2.0, 0.1};
  const auto att = expanet::attend_hard_with_noise(q, docs, noise, 0.01);
  int best = 0;
  double best_perturbed = -1e300;
  for (int i = 0; i < 4; ++i) {
    const double perturbed = att.scores[static_cast<std::size_t>(i)] + noise[static_cast<std::size_t>(i)];
    if (perturbed > best_perturbed) {
      best_perturbed = perturbed;
      best = i;
    }
  }
  EXPECT_GT(att.weights[static_cast<std::size_t>(best)], 0.999);
  double sum = 0.0;
  for (double w : att.weights) sum += w;
  EXPECT_NEAR(sum, 1.0, 1e-9);
}

TEST(AttendHard, RecordsItsNoise) {
  Matrix docs(3, 2);
  Rng rng(7);
  const auto att = expanet::attend_hard(Vector{1.0, 1.0}, docs, rng, 2.0);
  ASSERT_EQ(att.noise.size(), 3u);
  const auto replay = expanet::attend_hard_with_noise(Vector{1.0, 1.0}, docs, att.noise, 2.0);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(att.weights[i], replay.weights[i]);
}

TEST(GruFuse, ZeroParametersHalveTheQuery) {
  // all-zero gates: z = r = sigmoid(0) = 1/2, candidate = tanh(0) = 0,
  // fused = (1 - 1/2) q + 1/2 * 0 = q / 2
  expanet::GruParameters gru;
  const Matrix zero(3, 3, 0.0);
  gru.update_q = gru.update_m = gru.reset_q = gru.reset_m = gru.cand_q = gru.cand_m = zero;
  const Vector q{1.0, -2.0, 0.5};
  const auto step = expanet::gru_fuse(q, Vector{9.0, 9.0, 9.0}, gru);
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_DOUBLE_EQ(step.update_gate[j], 0.5);
    EXPECT_DOUBLE_EQ(step.reset_gate[j], 0.5);
    EXPECT_DOUBLE_EQ(step.candidate[j], 0.0);
    EXPECT_NEAR(step.fused[j], 0.5 * q[j], 1e-15);
  }
}

TEST(GruFuse, MatchesScalarOracleAtDimTwo) {
  // independent element-by-element evaluation of the gate equations
  Rng rng(88);
  for (int trial = 0; trial < 20; ++trial) {
    expanet::GruParameters gru;
    for (Matrix* m : {&gru.update_q, &gru.update_m, &gru.reset_q, &gru.reset_m, &gru.cand_q,
                      &gru.cand_m}) {
      *m = Matrix(2, 2);
      expanet::fill_gaussian(*m, rng, 1.0);
    }
    Vector q(2), o(2);
    for (double& x : q) x = rng.normal(0.0, 1.0);
    for (double& x : o) x = rng.normal(0.0, 1.0);
    const auto step = expanet::gru_fuse(q, o, gru);
    for (int j = 0; j < 2; ++j) {
      auto lin = [&](const Matrix& m, const Vector& v) {
        return m(static_cast<std::size_t>(j), 0) * v[0] + m(static_cast<std::size_t>(j), 1) * v[1];
      };
      const double z = 1.0 / (1.0 + std::exp(-(lin(gru.update_q, q) + lin(gru.update_m, o))));
      const double r = 1.0 / (1.0 + std::exp(-(lin(gru.reset_q, q) + lin(gru.reset_m, o))));
      const double cand = std::tanh(lin(gru.cand_q, q) + r * lin(gru.cand_m, o));
      const double fused = (1.0 - z) * q[static_cast<std::size_t>(j)] + z * cand;
      EXPECT_NEAR(step.fused[static_cast<std::size_t>(j)], fused, 1e-12);
    }
  }
}

TEST(GruFuse, FusedStaysBetweenQueryAndCandidate) {
  Rng rng(89);
  for (int trial = 0; trial < 50; ++trial) {
    expanet::GruParameters gru;
    for (Matrix* m : {&gru.update_q, &gru.update_m, &gru.reset_q, &gru.reset_m, &gru.cand_q,
                      &gru.cand_m}) {
      *m = Matrix(4, 4);
      expanet::fill_gaussian(*m, rng, 1.5);
    }
    Vector q(4), o(4);
    for (double& x : q) x = rng.normal(0.0, 1.0);
    for (double& x : o) x = rng.normal(0.0, 1.0);
    const auto step = expanet::gru_fuse(q, o, gru);
    for (std::size_t j = 0; j < 4; ++j) {
      const double lo = std::min(q[j], step.candidate[j]);
      const double hi = std::max(q[j], step.candidate[j]);
      EXPECT_GE(step.fused[j], lo - 1e-12);
      EXPECT_LE(step.fused[j], hi + 1e-12);
    }
  }
}

// ---- full forward pass ------------------------------------------------------

struct Instance {
  ShortText text;
  std::vector<LongDocument> docs;
  MemorySet memory;
  ModelParameters params;
  int label = 0;
};

Instance make_instance(std::uint64_t seed, int vocab = 30, int dim = 8, int cells = 4,
                       int classes = 3, bool with_empty_cell = false) {
  Rng rng(seed);
  Instance inst;
  inst.params = ModelParameters::random_init(vocab, dim, classes, rng);
  std::vector<int> qids;
  for (int i = 0; i < 5; ++i) qids.push_back(2 + static_cast<int>(rng.below(static_cast<std::size_t>(vocab - 2))));
  inst.text = make_short_ids(qids);
  for (int d = 0; d < 6; ++d) {
    std::vector<int> ids;
    const int len = 3 + static_cast<int>(rng.below(8));
    for (int i = 0; i < len; ++i) ids.push_back(2 + static_cast<int>(rng.below(static_cast<std::size_t>(vocab - 2))));
    inst.docs.push_back(make_doc_ids("d" + std::to_string(d), std::move(ids)));
  }
  for (int i = 0; i < cells; ++i) {
    inst.memory.doc_ordinals.push_back(static_cast<int>(rng.below(inst.docs.size())));
    inst.memory.scores.push_back(-static_cast<double>(i));
  }
  if (with_empty_cell) inst.memory.doc_ordinals.back() = MemorySet::kEmptySlot;
  // make one duplicate cell to exercise accumulation
  if (cells >= 2) inst.memory.doc_ordinals[1] = inst.memory.doc_ordinals[0];
  inst.label = static_cast<int>(rng.below(static_cast<std::size_t>(classes)));
  return inst;
}

TEST(Forward, TraceShapesAndProbabilities) {
  const Instance inst = make_instance(1001);
  for (int hops = 0; hops <= 4; ++hops) {
    const ForwardTrace trace =
        expanet::forward(inst.text, inst.memory, inst.docs, inst.params, AttentionMode::soft(), hops);
    EXPECT_EQ(trace.hop_count(), hops);
    EXPECT_EQ(trace.q_hops.size(), static_cast<std::size_t>(hops) + 1);
    EXPECT_EQ(trace.q_final.size(), 16u);
    double sum = 0.0;
    for (double p : trace.probs) sum += p;
    EXPECT_NEAR(sum, 1.0, 1e-12);
    for (std::size_t j = 0; j < 8; ++j) {
      EXPECT_DOUBLE_EQ(trace.q_final[j], trace.q_hops.front()[j]);
      EXPECT_DOUBLE_EQ(trace.q_final[8 + j], trace.q_hops.back()[j]);
    }
    for (const auto& hop : trace.hops) {
      double wsum = 0.0;
      for (double w : hop.weights) wsum += w;
      EXPECT_NEAR(wsum, 1.0, 1e-9);
    }
  }
}

TEST(Forward, ZeroHopsIgnoresMemoryEntirely) {
  const Instance inst = make_instance(1002);
  const ForwardTrace a =
      expanet::forward(inst.text, inst.memory, inst.docs, inst.params, AttentionMode::soft(), 0);
  // different memory, different documents: identical outputs, bit for bit
  MemorySet other;
  other.doc_ordinals = {MemorySet::kEmptySlot, 0};
  other.scores = {0, 0};
  std::vector<LongDocument> no_docs;
  const ForwardTrace b =
      expanet::forward(inst.text, other, no_docs, inst.params, AttentionMode::soft(), 0);
  ASSERT_EQ(a.logits.size(), b.logits.size());
  for (std::size_t i = 0; i < a.logits.size(); ++i) EXPECT_EQ(a.logits[i], b.logits[i]);
  for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(a.q_final[j], a.q_final[8 + j]);
  EXPECT_TRUE(a.hops.empty());
}

TEST(Forward, SoftModeNeedsNoRngHardModeDoes) {
  const Instance inst = make_instance(1003);
  const ForwardTrace soft =
      expanet::forward(inst.text, inst.memory, inst.docs, inst.params, AttentionMode::soft(), 2);
  Rng rng(9);
  const ForwardTrace soft2 = expanet::forward(inst.text, inst.memory, inst.docs, inst.params,
                                              AttentionMode::soft(), 2, &rng);
  for (std::size_t i = 0; i < soft.logits.size(); ++i) EXPECT_EQ(soft.logits[i], soft2.logits[i]);

  EXPECT_THROW(
      expanet::forward(inst.text, inst.memory, inst.docs, inst.params, AttentionMode::hard(), 2),
      std::invalid_argument);
  const ForwardTrace hard = expanet::forward(inst.text, inst.memory, inst.docs, inst.params,
                                             AttentionMode::hard(), 2, &rng);
  ASSERT_EQ(hard.hops.size(), 2u);
  EXPECT_EQ(hard.hops[0].noise.size(), 4u);
  // replaying the recorded noise reproduces the stochastic forward exactly
  std::vector<Vector> noise{hard.hops[0].noise, hard.hops[1].noise};
  const ForwardTrace replay = expanet::forward_with_noise(inst.text, inst.memory, inst.docs,
                                                          inst.params, AttentionMode::hard(), 2, noise);
  for (std::size_t i = 0; i < hard.logits.size(); ++i) EXPECT_EQ(hard.logits[i], replay.logits[i]);
}

TEST(Forward, AllEmptyMemoryDegradesGracefully) {
  const Instance inst = make_instance(1004);
  MemorySet empty;
  empty.doc_ordinals.assign(4, MemorySet::kEmptySlot);
  empty.scores.assign(4, 0.0);
  const ForwardTrace trace =
      expanet::forward(inst.text, empty, inst.docs, inst.params, AttentionMode::soft(), 1);
  for (double w : trace.hops[0].weights) EXPECT_NEAR(w, 0.25, 1e-12);
  for (double r : trace.hops[0].read) EXPECT_DOUBLE_EQ(r, 0.0);
  double sum = 0.0;
  for (double p : trace.probs) sum += p;
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(Loss, UniformAndPeakedCases) {
  const Instance inst = make_instance(1005);
  // zero parameters give zero logits: - log(1/3)
  const ModelParameters zero = ModelParameters::zeros(30, 8, 3);
  const ForwardTrace trace =
      expanet::forward(inst.text, inst.memory, inst.docs, zero, AttentionMode::soft(), 1);
  EXPECT_NEAR(expanet::loss(trace, 0), std::log(3.0), 1e-12);

  ForwardTrace crafted = trace;
  crafted.logits = {5.0, 0.0, 0.0};
  crafted.probs = expanet::softmax(crafted.logits);
  const double low = expanet::loss(crafted, 0);
  const double high = expanet::loss(crafted, 1);
  EXPECT_LT(low, high);
  EXPECT_NEAR(low, -std::log(crafted.probs[0]), 1e-12);
  EXPECT_THROW(expanet::loss(crafted, 3), std::invalid_argument);
  EXPECT_THROW(expanet::loss(crafted, -1), std::invalid_argument);
}

// ---- gradient checks ---------------------------------------------------------

void expect_gradient_close(double analytic, double numeric, const std::string& where) {
  const double diff = std::abs(analytic - numeric);
  if (diff <= 1e-7) return;  // absolute guard for near-zero gradients
  const double rel = diff / std::max(std::abs(analytic), std::abs(numeric));
  EXPECT_LE(rel, 1e-4) << where << ": analytic " << analytic << " vs finite-diff " << numeric;
}

void run_gradient_check(Instance inst, const AttentionMode& mode, int hops) {
  std::vector<Vector> noise;
  if (mode.is_hard() && hops > 0) {
    Rng rng(555);
    const ForwardTrace probe =
        expanet::forward(inst.text, inst.memory, inst.docs, inst.params, mode, hops, &rng);
    for (const auto& hop : probe.hops) noise.push_back(hop.noise);
  }
  auto run_forward = [&]() {
    return mode.is_hard() && hops > 0
               ? expanet::forward_with_noise(inst.text, inst.memory, inst.docs, inst.params, mode,
                                             hops, noise)
               : expanet::forward(inst.text, inst.memory, inst.docs, inst.params, mode, hops);
  };
  const ForwardTrace trace = run_forward();
  const expanet::Gradients grads = expanet::backward(trace, inst.label, inst.params);

  const auto loss_fn = [&] { return expanet::loss(run_forward(), inst.label); };
  const auto param_arrays = inst.params.arrays();
  const auto grad_arrays = std::as_const(grads).arrays();
  const char* names[] = {"short_embed", "doc_embed", "update_q", "update_m", "reset_q",
                         "reset_m",     "cand_q",    "cand_m",   "classifier"};
  for (std::size_t a = 0; a < param_arrays.size(); ++a) {
    auto& values = param_arrays[a]->values();
    const Vector numeric = expanet::finite_diff_grad(loss_fn, values, 1e-5);
    for (std::size_t i = 0; i < numeric.size(); ++i)
      expect_gradient_close(grad_arrays[a]->values()[i], numeric[i],
                            std::string(names[a]) + "[" + std::to_string(i) + "]");
  }
}

TEST(Backward, MatchesFiniteDifferencesSoft) {
  run_gradient_check(make_instance(41), AttentionMode::soft(), 1);
  run_gradient_check(make_instance(42), AttentionMode::soft(), 2);
  run_gradient_check(make_instance(43, 30, 8, 4, 3, /*with_empty_cell=*/true),
                     AttentionMode::soft(), 2);
}

TEST(Backward, MatchesFiniteDifferencesHard) {
  run_gradient_check(make_instance(51), AttentionMode::hard(), 1);
  run_gradient_check(make_instance(52), AttentionMode::hard(), 2);
  run_gradient_check(make_instance(53), AttentionMode::hard(0.5), 2);
}

TEST(Backward, MatchesFiniteDifferencesZeroHops) {
  run_gradient_check(make_instance(61), AttentionMode::soft(), 0);
}

TEST(Backward, PaddingRowsNeverReceiveGradient) {
  const Instance inst = make_instance(71);
  const ForwardTrace trace =
      expanet::forward(inst.text, inst.memory, inst.docs, inst.params, AttentionMode::soft(), 2);
  const expanet::Gradients grads = expanet::backward(trace, inst.label, inst.params);
  for (std::size_t j = 0; j < grads.short_embed.cols(); ++j) {
    EXPECT_DOUBLE_EQ(grads.short_embed(expanet::kPadId, j), 0.0);
    EXPECT_DOUBLE_EQ(grads.doc_embed(expanet::kPadId, j), 0.0);
  }
}

TEST(Backward, ZeroHopsLeavesMemoryPathUntouched) {
  const Instance inst = make_instance(72);
  const ForwardTrace trace =
      expanet::forward(inst.text, inst.memory, inst.docs, inst.params, AttentionMode::soft(), 0);
  const expanet::Gradients grads = expanet::backward(trace, inst.label, inst.params);
  for (double v : grads.doc_embed.values()) EXPECT_DOUBLE_EQ(v, 0.0);
  for (const Matrix* m : {&grads.gru.update_q, &grads.gru.update_m, &grads.gru.reset_q,
                          &grads.gru.reset_m, &grads.gru.cand_q, &grads.gru.cand_m})
    for (double v : m->values()) EXPECT_DOUBLE_EQ(v, 0.0);
  bool classifier_nonzero = false;
  for (double v : grads.classifier.values()) classifier_nonzero |= v != 0.0;
  EXPECT_TRUE(classifier_nonzero);
}

TEST(Backward, AccumulationScalesLinearly) {
  const Instance inst = make_instance(73);
  const ForwardTrace trace =
      expanet::forward(inst.text, inst.memory, inst.docs, inst.params, AttentionMode::soft(), 1);
  const expanet::Gradients once = expanet::backward(trace, inst.label, inst.params);
  expanet::Gradients twice = ModelParameters::zeros(30, 8, 3);
  expanet::accumulate_gradients(trace, inst.label, inst.params, 0.5, twice);
  expanet::accumulate_gradients(trace, inst.label, inst.params, 0.5, twice);
  const auto a = std::as_const(once).arrays();
  const auto b = std::as_const(twice).arrays();
  for (std::size_t k = 0; k < a.size(); ++k)
    for (std::size_t i = 0; i < a[k]->values().size(); ++i)
      EXPECT_NEAR(a[k]->values()[i], b[k]->values()[i], 1e-15);
}

TEST(Backward, RejectsMismatchedShapes) {
  const Instance inst = make_instance(74);
  const ForwardTrace trace =
      expanet::forward(inst.text, inst.memory, inst.docs, inst.params, AttentionMode::soft(), 1);
  const ModelParameters wrong = ModelParameters::zeros(30, 9, 3);
  EXPECT_THROW(expanet::backward(trace, inst.label, wrong), std::invalid_argument);
  expanet::Gradients small = ModelParameters::zeros(29, 8, 3);
  EXPECT_THROW(expanet::accumulate_gradients(trace, inst.label, inst.params, 1.0, small),
               std::invalid_argument);
}

TEST(CheckpointFile, RoundTripsExactly) {
  Rng rng(2025);
  const ModelParameters params = ModelParameters::random_init(17, 5, 4, rng);
  expanet::CheckpointMeta meta;
  meta.memory_size = 9;
  meta.hops = 3;
  meta.mode = AttentionMode::hard(0.75);
  meta.vocab_hash = 0xDEADBEEFCAFEF00DULL;

  const auto dir = std::filesystem::temp_directory_path() / "expanet_model_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "model.ckpt").string();
  expanet::save_checkpoint(path, params, meta);
  const expanet::Checkpoint loaded = expanet::load_checkpoint(path);

  EXPECT_EQ(loaded.meta.memory_size, 9);
  EXPECT_EQ(loaded.meta.hops, 3);
  EXPECT_TRUE(loaded.meta.mode.is_hard());
  EXPECT_DOUBLE_EQ(loaded.meta.mode.tau, 0.75);
  EXPECT_EQ(loaded.meta.vocab_hash, meta.vocab_hash);
  const auto a = std::as_const(params).arrays();
  const auto b = std::as_const(loaded.params).arrays();
  for (std::size_t k = 0; k < a.size(); ++k) {
    ASSERT_TRUE(a[k]->same_shape(*b[k]));
    for (std::size_t i = 0; i < a[k]->values().size(); ++i)
      EXPECT_EQ(a[k]->values()[i], b[k]->values()[i]);  // bit-exact round trip
  }

  const std::string garbage = (dir / "garbage.ckpt").string();
  std::ofstream(garbage) << "nope";
  EXPECT_THROW(expanet::load_checkpoint(garbage), std::runtime_error);
  std::filesystem::remove_all(dir);
}

}  // namespace
