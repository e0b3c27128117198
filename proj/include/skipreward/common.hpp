#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace skipreward {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

enum class ErrorKind {
  config,
  shape,
  length,
  index,
  registry,
  numeric,
  parse,
  mining,
  labeling,
  head,
  io,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return "config";
    case ErrorKind::shape: return "shape";
    case ErrorKind::length: return "length";
    case ErrorKind::index: return "index";
    case ErrorKind::registry: return "registry";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::parse: return "parse";
    case ErrorKind::mining: return "mining";
    case ErrorKind::labeling: return "labeling";
    case ErrorKind::head: return "head";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + " error: " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define SKIPREWARD_ERROR_TYPE(Name, Kind)                                   \
  class Name : public Error {                                               \
   public:                                                                  \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  };

SKIPREWARD_ERROR_TYPE(ConfigError, config)
SKIPREWARD_ERROR_TYPE(ShapeError, shape)
SKIPREWARD_ERROR_TYPE(LengthError, length)
SKIPREWARD_ERROR_TYPE(IndexError, index)
SKIPREWARD_ERROR_TYPE(RegistryError, registry)
SKIPREWARD_ERROR_TYPE(NumericError, numeric)
SKIPREWARD_ERROR_TYPE(ParseError, parse)
SKIPREWARD_ERROR_TYPE(MiningError, mining)
SKIPREWARD_ERROR_TYPE(LabelingError, labeling)
SKIPREWARD_ERROR_TYPE(HeadError, head)
SKIPREWARD_ERROR_TYPE(IoError, io)

#undef SKIPREWARD_ERROR_TYPE

// ---------------------------------------------------------------------------
// Dense row-major matrix
// ---------------------------------------------------------------------------

template <class T>
class Matrix {
 public:
  using value_type = T;

  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <class U>
  Matrix<U> cast() const {
    Matrix<U> out(rows_, cols_);
    for (std::size_t i = 0; i < data_.size(); ++i) out.values()[i] = static_cast<U>(data_[i]);
    return out;
  }

  bool same_shape(const Matrix& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

template <class T>
Matrix<T> zeros_like(const Matrix<T>& m) {
  return Matrix<T>(m.rows(), m.cols());
}

// Y = X * W^T, X: n x in, W: out x in.
template <class T>
Matrix<T> matmul_nt(const Matrix<T>& x, const Matrix<T>& w) {
  if (x.cols() != w.cols()) throw ShapeError("matmul_nt inner dimension mismatch");
  Matrix<T> y(x.rows(), w.rows());
  const std::size_t k = x.cols();
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const T* xr = x.data() + i * k;
    T* yr = y.data() + i * w.rows();
    for (std::size_t o = 0; o < w.rows(); ++o) {
      const T* wr = w.data() + o * k;
      T acc{};
      for (std::size_t j = 0; j < k; ++j) acc += xr[j] * wr[j];
      yr[o] = acc;
    }
  }
  return y;
}

// Y += X * W, X: n x out, W: out x in.
template <class T>
void add_matmul_nn(Matrix<T>& y, const Matrix<T>& x, const Matrix<T>& w) {
  if (x.cols() != w.rows() || y.rows() != x.rows() || y.cols() != w.cols())
    throw ShapeError("add_matmul_nn shape mismatch");
  const std::size_t n_in = w.cols();
  for (std::size_t i = 0; i < x.rows(); ++i) {
    T* yr = y.data() + i * n_in;
    const T* xr = x.data() + i * x.cols();
    for (std::size_t o = 0; o < w.rows(); ++o) {
      const T s = xr[o];
      if (s == T{}) continue;
      const T* wr = w.data() + o * n_in;
      for (std::size_t j = 0; j < n_in; ++j) yr[j] += s * wr[j];
    }
  }
}

// G += A^T * B, A: n x out, B: n x in, G: out x in.
template <class T>
void add_matmul_tn(Matrix<T>& g, const Matrix<T>& a, const Matrix<T>& b) {
  if (a.rows() != b.rows() || g.rows() != a.cols() || g.cols() != b.cols())
    throw ShapeError("add_matmul_tn shape mismatch");
  const std::size_t n_in = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const T* ar = a.data() + i * a.cols();
    const T* br = b.data() + i * n_in;
    for (std::size_t o = 0; o < a.cols(); ++o) {
      const T s = ar[o];
      if (s == T{}) continue;
      T* gr = g.data() + o * n_in;
      for (std::size_t j = 0; j < n_in; ++j) gr[j] += s * br[j];
    }
  }
}

template <class T>
void add_inplace(Matrix<T>& y, const Matrix<T>& x, T scale = T{1}) {
  if (!y.same_shape(x)) throw ShapeError("add_inplace shape mismatch");
  for (std::size_t i = 0; i < y.size(); ++i) y.values()[i] += scale * x.values()[i];
}

template <class T>
T dot(std::span<const T> a, std::span<const T> b) {
  T acc{};
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

// ---------------------------------------------------------------------------
// Scalar helpers
// ---------------------------------------------------------------------------

// log(1 + exp(x)) without overflow.
template <class T>
T softplus(T x) {
  if (x > T{0}) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

template <class T>
T sigmoid(T x) {
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

template <class T>
T gelu(T x) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  const T inner = static_cast<T>(c) * (x + static_cast<T>(0.044715) * x * x * x);
  return static_cast<T>(0.5) * x * (T{1} + std::tanh(inner));
}

template <class T>
T gelu_grad(T x) {
  constexpr double c = 0.7978845608028654;
  const T x2 = x * x;
  const T inner = static_cast<T>(c) * (x + static_cast<T>(0.044715) * x2 * x);
  const T th = std::tanh(inner);
  const T dinner = static_cast<T>(c) * (T{1} + static_cast<T>(3 * 0.044715) * x2);
  return static_cast<T>(0.5) * (T{1} + th) + static_cast<T>(0.5) * x * (T{1} - th * th) * dinner;
}

// In-place softmax with max subtraction.
template <class T>
void softmax_inplace(std::span<T> v) {
  if (v.empty()) return;
  T mx = v[0];
  for (T x : v) mx = std::max(mx, x);
  T sum{};
  for (T& x : v) {
    x = std::exp(x - mx);
    sum += x;
  }
  for (T& x : v) x /= sum;
}

// FNV-1a, used for config hashes.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace skipreward
