// Minimal dense tensor plus deterministic RNG helpers used across the project.
#pragma once

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace advmim {

template <typename T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// Row-major dense tensor. Shapes are small (<= 4 dims in practice), so we keep
// a plain vector of extents and no stride tricks.
template <typename T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> v;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)), v(numel_of(shape), T(0)) {}
  Tensor(std::vector<int> s, T fill) : shape(std::move(s)), v(numel_of(shape), fill) {}

  static std::size_t numel_of(const std::vector<int>& s) {
    std::size_t n = 1;
    for (int d : s) n *= static_cast<std::size_t>(d);
    return n;
  }

  std::size_t numel() const { return v.size(); }
  T* data() { return v.data(); }
  const T* data() const { return v.data(); }

  T& operator[](std::size_t i) { return v[i]; }
  const T& operator[](std::size_t i) const { return v[i]; }

  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

  // 2-d / 3-d accessors for the common (H,W) and (H,W,C) layouts.
  T& at(int i, int j) { return v[static_cast<std::size_t>(i) * shape[1] + j]; }
  const T& at(int i, int j) const { return v[static_cast<std::size_t>(i) * shape[1] + j]; }
  T& at(int i, int j, int k) {
    return v[(static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k];
  }
  const T& at(int i, int j, int k) const {
    return v[(static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k];
  }

  void zero() { std::fill(v.begin(), v.end(), T(0)); }

  MatMap<T> mat(int rows, int cols) {
    assert(static_cast<std::size_t>(rows) * cols == v.size());
    return MatMap<T>(v.data(), rows, cols);
  }
  ConstMatMap<T> mat(int rows, int cols) const {
    assert(static_cast<std::size_t>(rows) * cols == v.size());
    return ConstMatMap<T>(v.data(), rows, cols);
  }

  bool all_finite() const {
    for (const T& x : v)
      if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape);
    for (std::size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<U>(v[i]);
    return out;
  }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

// splitmix64; used to derive independent per-sample / per-iteration seeds from
// (global seed, tags) so results do not depend on scheduling order.
inline std::uint64_t hash_mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                                 std::uint64_t c = 0) {
  std::uint64_t h = hash_mix(seed ^ 0x6a09e667f3bcc908ULL);
  h = hash_mix(h ^ a);
  h = hash_mix(h ^ b);
  h = hash_mix(h ^ c);
  return h;
}

inline std::uint64_t derive_seed_str(std::uint64_t seed, const std::string& tag,
                                     std::uint64_t a = 0) {
  std::uint64_t h = hash_mix(seed ^ 0x243f6a8885a308d3ULL);
  for (char ch : tag) h = hash_mix(h ^ static_cast<std::uint64_t>(static_cast<unsigned char>(ch)));
  return hash_mix(h ^ a);
}

// Deterministic RNG with hand-rolled distributions (stdlib distribution
// implementations are not pinned across library versions).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x853c49e6748fea9bULL) {
    // warm up
    next_u64();
    next_u64();
  }

  std::uint64_t next_u64() {
    state_ = hash_mix(state_ + 0x2545f4914f6cdd1dULL);
    return state_;
  }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n)
  int uniform_int(int n) {
    assert(n > 0);
    return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n));
  }

  // Box-Muller
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = 0.0;
    while (u1 <= 1e-300) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    cached_ = r * std::sin(2.0 * M_PI * u2);
    have_cached_ = true;
    return r * std::cos(2.0 * M_PI * u2);
  }

  double truncated_normal(double std_dev, double bound = 2.0) {
    double x;
    do {
      x = normal();
    } while (std::abs(x) > bound);
    return x * std_dev;
  }

  // Fisher-Yates choice of k indices out of n, without replacement.
  std::vector<int> choose(int n, int k) {
    assert(k <= n);
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < k; ++i) {
      int j = i + uniform_int(n - i);
      std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    idx.resize(static_cast<std::size_t>(k));
    return idx;
  }

  void shuffle(std::vector<int>& idx) {
    for (int i = static_cast<int>(idx.size()) - 1; i > 0; --i) {
      int j = uniform_int(i + 1);
      std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
  }

 private:
  std::uint64_t state_;
  bool have_cached_ = false;
  double cached_ = 0.0;
};

// round-half-away-from-zero, used for mask counts and split sizes
inline int round_half_away(double x) {
  return static_cast<int>(x >= 0 ? std::floor(x + 0.5) : std::ceil(x - 0.5));
}

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace advmim
