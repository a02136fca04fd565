#pragma once

// Dense double-precision vectors/matrices, activations, a deterministic PRNG
// and a finite-difference gradient helper. All training math is 64-bit.

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace blstm {

using Vector = std::vector<double>;

// Row-major dense matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  double* row(std::size_t r) { return data.data() + r * cols; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

inline std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows) + "x" + std::to_string(m.cols);
}

// y = W x + b
inline Vector affine(const Matrix& w, const Vector& x, const Vector& b) {
  if (w.cols != x.size() || w.rows != b.size()) {
    throw std::invalid_argument("affine: incompatible shapes W=" + shape_str(w) + " x=" +
                                std::to_string(x.size()) + " b=" + std::to_string(b.size()));
  }
  Vector y(b);
  for (std::size_t r = 0; r < w.rows; ++r) {
    const double* wr = w.row(r);
    double acc = 0.0;
    for (std::size_t c = 0; c < w.cols; ++c) acc += wr[c] * x[c];
    y[r] += acc;
  }
  return y;
}

// Logistic function, evaluated so that large |x| saturates instead of
// overflowing exp().
inline double sigmoid_scalar(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

inline Vector sigmoid(const Vector& x) {
  Vector y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = sigmoid_scalar(x[i]);
  return y;
}

inline Vector tanh_act(const Vector& x) {
  Vector y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
  return y;
}

// Max-subtracted softmax; sums to 1 for any finite input.
inline Vector softmax(const Vector& v) {
  if (v.empty()) throw std::invalid_argument("softmax: empty input");
  double mx = v[0];
  for (double t : v) mx = std::max(mx, t);
  Vector y(v.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    y[i] = std::exp(v[i] - mx);
    sum += y[i];
  }
  for (double& t : y) t /= sum;
  return y;
}

// SplitMix64. The full algorithm is written out here so that streams are
// identical on every platform; nothing reproducibility-sensitive goes through
// std:: distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // [0, 1), 53 random bits
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // [lo, hi)
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // [0, n), n > 0
  std::size_t uniform_index(std::size_t n) {
    return static_cast<std::size_t>(
        (static_cast<unsigned __int128>(next_u64()) * static_cast<unsigned __int128>(n)) >> 64);
  }

  bool bernoulli(double p) { return next_double() < p; }

 private:
  std::uint64_t state_;
};

// SplitMix64 finalizer, used to derive independent seeds.
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Stream k of master seed s. One run uses stream 0 for parameter init,
// 1 for epoch shuffling, 2 for corruption, 3 for embedding re-init.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return mix64(seed + 0x9e3779b97f4a7c15ull * (stream + 1));
}

template <class T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = rng.uniform_index(i);
    std::swap(v[i - 1], v[j]);
  }
}

// Entries drawn row-major, uniform in [lo, hi); identical seed => identical bits.
inline Matrix seeded_uniform(std::size_t rows, std::size_t cols, double lo, double hi, Rng& rng) {
  if (!(lo < hi)) {
    throw std::invalid_argument("seeded_uniform: lo (" + std::to_string(lo) +
                                ") must be below hi (" + std::to_string(hi) + ")");
  }
  Matrix m(rows, cols);
  for (double& t : m.data) t = rng.uniform(lo, hi);
  return m;
}

// Central differences (f(t+eps e_k) - f(t-eps e_k)) / (2 eps).
inline Vector finite_difference_grad(const std::function<double(const Vector&)>& f,
                                     const Vector& theta, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("finite_difference_grad: eps must be > 0");
  Vector grad(theta.size(), 0.0);
  Vector point = theta;
  for (std::size_t k = 0; k < theta.size(); ++k) {
    point[k] = theta[k] + eps;
    const double fp = f(point);
    point[k] = theta[k] - eps;
    const double fm = f(point);
    point[k] = theta[k];
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw std::runtime_error("finite_difference_grad: non-finite value at coordinate " +
                               std::to_string(k));
    }
    grad[k] = (fp - fm) / (2.0 * eps);
  }
  return grad;
}

}  // namespace blstm
