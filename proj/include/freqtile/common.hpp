// Shared value types, error types and sampling helpers for freqtile.

#ifndef FREQTILE_COMMON_HPP
#define FREQTILE_COMMON_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace freqtile {

using Complex = std::complex<double>;

/// Largest ambient dimension supported by the fixed-capacity Point type.
inline constexpr std::size_t kMaxDim = 4;

/// Thrown when an argument violates an operation's precondition.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Thrown when a file cannot be read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A point of R^d (d <= kMaxDim) stored inline.
class Point {
 public:
  Point() = default;
  explicit Point(std::size_t dim) : dim_(dim) {
    if (dim == 0 || dim > kMaxDim) throw DomainError("Point: dimension must be in [1, 4]");
  }
  Point(std::initializer_list<double> values) : Point(values.size()) {
    std::copy(values.begin(), values.end(), v_.begin());
  }
  static Point from(std::span<const double> values) {
    Point p(values.size());
    std::copy(values.begin(), values.end(), p.v_.begin());
    return p;
  }
  static Point axis(std::size_t dim, std::size_t i, double value = 1.0) {
    Point p(dim);
    p[i] = value;
    return p;
  }

  std::size_t size() const { return dim_; }
  double& operator[](std::size_t i) { return v_[i]; }
  double operator[](std::size_t i) const { return v_[i]; }
  double* begin() { return v_.data(); }
  double* end() { return v_.data() + dim_; }
  const double* begin() const { return v_.data(); }
  const double* end() const { return v_.data() + dim_; }
  std::span<const double> view() const { return {v_.data(), dim_}; }
  std::vector<double> to_vector() const { return {begin(), end()}; }

  bool is_zero() const {
    return std::all_of(begin(), end(), [](double x) { return x == 0.0; });
  }
  bool is_finite() const {
    return std::all_of(begin(), end(), [](double x) { return std::isfinite(x); });
  }
  double euclidean() const {
    double s = 0.0;
    for (double x : *this) s += x * x;
    return std::sqrt(s);
  }

  Point& operator+=(const Point& o) {
    for (std::size_t i = 0; i < dim_; ++i) v_[i] += o.v_[i];
    return *this;
  }
  Point& operator-=(const Point& o) {
    for (std::size_t i = 0; i < dim_; ++i) v_[i] -= o.v_[i];
    return *this;
  }
  Point& operator*=(double s) {
    for (std::size_t i = 0; i < dim_; ++i) v_[i] *= s;
    return *this;
  }
  friend Point operator+(Point a, const Point& b) { return a += b; }
  friend Point operator-(Point a, const Point& b) { return a -= b; }
  friend Point operator*(double s, Point a) { return a *= s; }
  friend Point operator-(Point a) { return a *= -1.0; }
  friend bool operator==(const Point& a, const Point& b) {
    return a.dim_ == b.dim_ && std::equal(a.begin(), a.end(), b.begin());
  }

 private:
  std::array<double, kMaxDim> v_{};
  std::size_t dim_ = 0;
};

using Rng = std::mt19937_64;

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

/// Uniformly distributed direction on the Euclidean unit sphere S^{d-1}.
inline Point random_direction(std::size_t dim, Rng& rng) {
  Point p(dim);
  if (dim == 1) {
    p[0] = uniform01(rng) < 0.5 ? -1.0 : 1.0;
    return p;
  }
  std::normal_distribution<double> normal;
  double n = 0.0;
  while (n < 1e-12) {
    for (double& x : p) x = normal(rng);
    n = p.euclidean();
  }
  p *= 1.0 / n;
  return p;
}

/// Sample r with log(r) uniform on [log lo, log hi].
inline double log_uniform(double lo, double hi, Rng& rng) {
  return std::exp(std::log(lo) + uniform01(rng) * (std::log(hi) - std::log(lo)));
}

/// 64-bit FNV-1a hash, used for artifact and covering identities.
inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = kDigits[v & 0xF];
  return s;
}

}  // namespace freqtile

#endif  // FREQTILE_COMMON_HPP
