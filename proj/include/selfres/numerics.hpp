// Copyright 2026 The selfres Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Dense float32 kernels shared by the engine and the oracles.
//
// Every reduction runs left to right in a fixed order, so two calls on equal
// inputs produce bit-identical outputs no matter which thread issues them.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "selfres/errors.hpp"

namespace selfres {

// Row-major rows x cols matrix of float32.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, float fill = 0.0f)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<float> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw DimensionError("matrix data length " + std::to_string(data_.size()) +
                           " != " + std::to_string(rows_) + "x" + std::to_string(cols_));
    }
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  float& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  float operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<float> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const float> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }

  // Appends one row; an empty matrix adopts the row's width.
  void append_row(std::span<const float> values) {
    if (rows_ == 0 && cols_ == 0) cols_ = values.size();
    if (values.size() != cols_) {
      throw DimensionError("append_row width " + std::to_string(values.size()) +
                           " != " + std::to_string(cols_));
    }
    data_.insert(data_.end(), values.begin(), values.end());
    ++rows_;
  }

  void append_rows(const Matrix& other) {
    for (std::size_t r = 0; r < other.rows(); ++r) append_row(other.row(r));
  }

  std::size_t bytes() const noexcept { return data_.size() * sizeof(float); }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

inline bool all_finite(std::span<const float> values) {
  return std::all_of(values.begin(), values.end(), [](float v) { return std::isfinite(v); });
}

// Picks rows by index, in the order given.
inline Matrix gather_rows(const Matrix& m, std::span<const std::size_t> indices) {
  Matrix out(indices.size(), m.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= m.rows()) throw RangeError("gather_rows index out of range");
    std::copy_n(m.row(indices[i]).begin(), m.cols(), out.row(i).begin());
  }
  return out;
}

inline float dot(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw DimensionError("dot length mismatch");
  float acc = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

// a (n x k) * b (k x m).
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul inner dimension " + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()));
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      float acc = 0.0f;
      for (std::size_t p = 0; p < a.cols(); ++p) acc += a(i, p) * b(p, j);
      out(i, j) = acc;
    }
  }
  return out;
}

inline void add_inplace(Matrix& target, const Matrix& delta) {
  if (target.rows() != delta.rows() || target.cols() != delta.cols()) {
    throw DimensionError("add_inplace shape mismatch");
  }
  auto t = target.data();
  auto d = delta.data();
  for (std::size_t i = 0; i < t.size(); ++i) t[i] += d[i];
}

inline Matrix scale(const Matrix& m, float factor) {
  Matrix out = m;
  for (float& v : out.data()) v *= factor;
  return out;
}

// Numerically stable softmax along each row. Entries equal to -inf get
// probability exactly 0.
inline Matrix row_softmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto in = logits.row(r);
    auto o = out.row(r);
    float peak = -std::numeric_limits<float>::infinity();
    for (float v : in) peak = std::max(peak, v);
    float total = 0.0f;
    for (std::size_t c = 0; c < in.size(); ++c) {
      o[c] = std::exp(in[c] - peak);
      total += o[c];
    }
    for (float& v : o) v /= total;
  }
  return out;
}

// Rotates each consecutive pair (x, y) at pair index j of row i by
// positions[i] * base^(-2j / width).
inline Matrix apply_rope(const Matrix& vectors, std::span<const int> positions, double base) {
  const std::size_t width = vectors.cols();
  if (width % 2 != 0) throw DimensionError("rotary width must be even, got " + std::to_string(width));
  if (positions.size() != vectors.rows()) {
    throw DimensionError("rotary positions length " + std::to_string(positions.size()) +
                         " != rows " + std::to_string(vectors.rows()));
  }
  Matrix out = vectors;
  for (std::size_t r = 0; r < vectors.rows(); ++r) {
    const double p = positions[r];
    auto row = out.row(r);
    for (std::size_t j = 0; j < width / 2; ++j) {
      const double angle = p * std::pow(base, -2.0 * static_cast<double>(j) / static_cast<double>(width));
      const auto c = static_cast<float>(std::cos(angle));
      const auto s = static_cast<float>(std::sin(angle));
      const float x = row[2 * j];
      const float y = row[2 * j + 1];
      row[2 * j] = x * c - y * s;
      row[2 * j + 1] = x * s + y * c;
    }
  }
  return out;
}

// Column slice [first, first + count).
inline Matrix column_block(const Matrix& m, std::size_t first, std::size_t count) {
  if (first + count > m.cols()) throw DimensionError("column_block out of range");
  Matrix out(m.rows(), count);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    std::copy_n(m.row(r).begin() + static_cast<std::ptrdiff_t>(first), count, out.row(r).begin());
  }
  return out;
}

inline void set_column_block(Matrix& m, std::size_t first, const Matrix& block) {
  if (block.rows() != m.rows() || first + block.cols() > m.cols()) {
    throw DimensionError("set_column_block out of range");
  }
  for (std::size_t r = 0; r < m.rows(); ++r) {
    std::copy_n(block.row(r).begin(), block.cols(),
                m.row(r).begin() + static_cast<std::ptrdiff_t>(first));
  }
}

// Rotary encoding applied independently inside each head's column slice.
inline Matrix apply_rope_heads(const Matrix& vectors, std::span<const int> positions,
                               std::size_t num_heads, double base) {
  if (num_heads == 0 || vectors.cols() % num_heads != 0) {
    throw DimensionError("width not divisible by head count");
  }
  const std::size_t head_dim = vectors.cols() / num_heads;
  Matrix out(vectors.rows(), vectors.cols());
  for (std::size_t h = 0; h < num_heads; ++h) {
    set_column_block(out, h * head_dim,
                     apply_rope(column_block(vectors, h * head_dim, head_dim), positions, base));
  }
  return out;
}

// gain * x / sqrt(mean(x^2) + epsilon)
inline std::vector<float> rms_normalize(std::span<const float> x, std::span<const float> gain,
                                        float epsilon) {
  if (x.empty()) throw DimensionError("rms_normalize on empty row");
  if (gain.size() != x.size()) throw DimensionError("rms_normalize gain width mismatch");
  float sum_sq = 0.0f;
  for (float v : x) sum_sq += v * v;
  const float denom = std::sqrt(sum_sq / static_cast<float>(x.size()) + epsilon);
  std::vector<float> out(x.size());
  if (denom == 0.0f) return out;
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = gain[i] * x[i] / denom;
  return out;
}

inline Matrix rms_normalize_rows(const Matrix& m, std::span<const float> gain, float epsilon) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto normed = rms_normalize(m.row(r), gain, epsilon);
    std::copy(normed.begin(), normed.end(), out.row(r).begin());
  }
  return out;
}

// Seeded generator with distributions written out by hand: the standard
// library's distribution objects are implementation-defined, which would make
// weights and videos differ between toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform in [0, 1) with 53 random bits.
  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

  // Box-Muller; one draw per call.
  double normal() {
    double u1 = unit();
    while (u1 <= 0.0) u1 = unit();
    const double u2 = unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 engine_;
};

// FNV-1a over raw bytes. Used for weight checksums and config hashes.
inline std::uint64_t fnv1a(std::span<const std::byte> bytes,
                           std::uint64_t state = 0xcbf29ce484222325ULL) {
  for (std::byte b : bytes) {
    state ^= static_cast<std::uint64_t>(b);
    state *= 0x100000001b3ULL;
  }
  return state;
}

inline std::uint64_t fnv1a(std::span<const float> values, std::uint64_t state = 0xcbf29ce484222325ULL) {
  return fnv1a(std::as_bytes(values), state);
}

}  // namespace selfres
