// Copyright 2026 The kvott Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace kvott {

/// Non-owning, read-only view of a row-major float matrix.
class MatrixView {
 public:
  MatrixView() = default;
  MatrixView(std::span<const float> data, std::size_t rows, std::size_t cols);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return rows_ == 0; }

  float operator()(std::size_t r, std::size_t c) const noexcept {
    return data_[r * cols_ + c];
  }
  std::span<const float> row(std::size_t r) const;
  std::span<const float> data() const noexcept { return data_; }

  /// The first `n` rows, n <= rows().
  MatrixView first_rows(std::size_t n) const;

 private:
  std::span<const float> data_;
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
};

/// Dense row-major matrix of 32-bit floats. Rows are tokens, columns are
/// channels.
class Matrix {
 public:
  Matrix() = default;
  /// Zero-filled rows x cols matrix.
  Matrix(std::size_t rows, std::size_t cols);
  Matrix(std::size_t rows, std::size_t cols, std::vector<float> data);

  static Matrix from_rows(std::initializer_list<std::initializer_list<float>> rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return rows_ == 0; }

  float operator()(std::size_t r, std::size_t c) const noexcept {
    return data_[r * cols_ + c];
  }
  float& operator()(std::size_t r, std::size_t c) noexcept {
    return data_[r * cols_ + c];
  }

  std::span<const float> row(std::size_t r) const;
  std::span<float> row(std::size_t r);
  std::span<const float> data() const noexcept { return data_; }

  /// Appends one row. An empty (0 x 0) matrix adopts the row's width.
  void append_row(std::span<const float> values);
  /// Removes the first `n` rows, n <= rows().
  void erase_front_rows(std::size_t n);

  Matrix slice_rows(std::size_t first, std::size_t count) const;
  Matrix transposed() const;

  MatrixView view() const noexcept { return MatrixView(data_, rows_, cols_); }
  operator MatrixView() const noexcept { return view(); }  // NOLINT(google-explicit-constructor)

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

bool all_finite(std::span<const float> values) noexcept;

/// Sum of |m[row, c]| over all channels.
float row_l1_norm(MatrixView m, std::size_t row);

/// Inner product accumulated in double, rounded once to float.
float dot(std::span<const float> a, std::span<const float> b);

/// Numerically stable softmax (max-subtracted). Throws on empty or
/// non-finite input.
std::vector<float> softmax(std::span<const float> logits);

/// a * b^T: result[i, j] = sum_c a[i, c] * b[j, c].
Matrix matmul_t(MatrixView a, MatrixView b);

}  // namespace kvott
