#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

// Dense double-precision building blocks: matrices, stable softmax, the
// seeded random stream, Adam, and a finite-difference gradient probe.
// Everything is 64-bit and deterministic for a fixed seed.

namespace expanet {

using Vector = std::vector<double>;

// Row-major dense matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

// y = M x
inline Vector matvec(const Matrix& m, std::span<const double> x) {
  if (x.size() != m.cols()) throw std::invalid_argument("matvec: shape mismatch");
  Vector y(m.rows(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) y[i] = dot(m.row(i), x);
  return y;
}

// y = M^T x
inline Vector matvec_transposed(const Matrix& m, std::span<const double> x) {
  if (x.size() != m.rows()) throw std::invalid_argument("matvec_transposed: shape mismatch");
  Vector y(m.cols(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    for (std::size_t j = 0; j < m.cols(); ++j) y[j] += r[j] * x[i];
  }
  return y;
}

// m += u v^T
inline void add_outer(Matrix& m, std::span<const double> u, std::span<const double> v) {
  if (u.size() != m.rows() || v.size() != m.cols())
    throw std::invalid_argument("add_outer: shape mismatch");
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    for (std::size_t j = 0; j < m.cols(); ++j) r[j] += u[i] * v[j];
  }
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Numerically stable softmax: subtracts the max before exponentiating.
inline Vector softmax(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("softmax: empty input");
  const double m = *std::max_element(v.begin(), v.end());
  Vector out(v.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - m);
    sum += out[i];
  }
  for (double& x : out) x /= sum;
  return out;
}

inline double log_sum_exp(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("log_sum_exp: empty input");
  const double m = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += std::exp(x - m);
  return m + std::log(sum);
}

// Deterministic random stream. The mapping from raw engine words to doubles
// is spelled out by hand so results do not depend on the standard library's
// distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform on the open interval (0,1); never returns 0 or 1 exactly.
  double uniform_open() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1p-53;
  }

  // Uniform integer in [0, n).
  std::size_t below(std::size_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
    const std::uint64_t un = n;
    const std::uint64_t rem = (0 - un) % un;  // 2^64 mod n
    std::uint64_t v = engine_();
    while (v < rem) v = engine_();  // rejection keeps the draw exactly uniform
    return static_cast<std::size_t>(v % un);
  }

  // Box-Muller transform.
  double normal(double mean, double stddev) {
    const double u1 = uniform_open();
    const double u2 = uniform_open();
    return mean + stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 engine_;
};

// Mixes two seeds into an independent stream seed (splitmix64 finalizer).
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline double gumbel_from_uniform(double u) {
  if (!(u > 0.0) || !(u < 1.0)) throw std::invalid_argument("gumbel_from_uniform: u outside (0,1)");
  return -std::log(-std::log(u));
}

inline double sample_gumbel(Rng& rng) { return gumbel_from_uniform(rng.uniform_open()); }

inline void fill_gaussian(Matrix& m, Rng& rng, double stddev = 0.1, double mean = 0.0) {
  for (double& v : m.values()) v = rng.normal(mean, stddev);
}

inline Matrix gaussian_matrix(std::size_t rows, std::size_t cols, Rng& rng, double stddev = 0.1) {
  Matrix m(rows, cols);
  fill_gaussian(m, rng, stddev);
  return m;
}

struct AdamConfig {
  double alpha = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// First/second moment buffers for a fixed list of parameter arrays.
class AdamState {
 public:
  AdamState() = default;
  explicit AdamState(const std::vector<const Matrix*>& params, AdamConfig config = {})
      : config_(config) {
    for (const Matrix* p : params) {
      m_.emplace_back(p->rows(), p->cols());
      v_.emplace_back(p->rows(), p->cols());
    }
  }

  const AdamConfig& config() const { return config_; }
  long step_count() const { return t_; }

  friend void adam_step(const std::vector<Matrix*>& params,
                        const std::vector<const Matrix*>& grads, AdamState& state);

 private:
  AdamConfig config_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  long t_ = 0;
};

// One bias-corrected Adam update across all parameter arrays.
inline void adam_step(const std::vector<Matrix*>& params,
                      const std::vector<const Matrix*>& grads, AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.m_.size())
    throw std::invalid_argument("adam_step: parameter/gradient/state count mismatch");
  state.t_ += 1;
  const AdamConfig& c = state.config_;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.t_));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix& p = *params[k];
    const Matrix& g = *grads[k];
    Matrix& m = state.m_[k];
    Matrix& v = state.v_[k];
    if (!p.same_shape(g) || !p.same_shape(m))
      throw std::invalid_argument("adam_step: shape mismatch");
    auto& pv = p.values();
    const auto& gv = g.values();
    auto& mv = m.values();
    auto& vv = v.values();
    for (std::size_t i = 0; i < pv.size(); ++i) {
      mv[i] = c.beta1 * mv[i] + (1.0 - c.beta1) * gv[i];
      vv[i] = c.beta2 * vv[i] + (1.0 - c.beta2) * gv[i] * gv[i];
      const double mhat = mv[i] / bc1;
      const double vhat = vv[i] / bc2;
      pv[i] -= c.alpha * mhat / (std::sqrt(vhat) + c.epsilon);
    }
  }
}

// Central-difference gradient of loss_fn with respect to theta. loss_fn must
// read the current contents of theta and be otherwise deterministic.
inline Vector finite_diff_grad(const std::function<double()>& loss_fn, std::span<double> theta,
                               double epsilon) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("finite_diff_grad: epsilon must be positive");
  Vector grad(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double saved = theta[i];
    theta[i] = saved + epsilon;
    const double up = loss_fn();
    theta[i] = saved - epsilon;
    const double down = loss_fn();
    theta[i] = saved;
    grad[i] = (up - down) / (2.0 * epsilon);
  }
  return grad;
}

}  // namespace expanet
