// Copyright 2026 The kvott Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvott/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "kvott/error.hpp"

namespace kvott {

MatrixView::MatrixView(std::span<const float> data, std::size_t rows, std::size_t cols)
    : data_(data), rows_(rows), cols_(cols) {
  require(data.size() == rows * cols, "MatrixView: data length != rows * cols");
}

std::span<const float> MatrixView::row(std::size_t r) const {
  require(r < rows_, "MatrixView::row: index out of range");
  return data_.subspan(r * cols_, cols_);
}

MatrixView MatrixView::first_rows(std::size_t n) const {
  require(n <= rows_, "MatrixView::first_rows: n exceeds row count");
  return MatrixView(data_.first(n * cols_), n, cols_);
}

Matrix::Matrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0f) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<float> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  require(data_.size() == rows_ * cols_, "Matrix: data length != rows * cols");
  require(all_finite(data_), "Matrix: non-finite element");
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<float>> rows) {
  Matrix m;
  for (const auto& r : rows) m.append_row(std::span<const float>(r.begin(), r.size()));
  return m;
}

std::span<const float> Matrix::row(std::size_t r) const {
  require(r < rows_, "Matrix::row: index out of range");
  return std::span<const float>(data_).subspan(r * cols_, cols_);
}

std::span<float> Matrix::row(std::size_t r) {
  require(r < rows_, "Matrix::row: index out of range");
  return std::span<float>(data_).subspan(r * cols_, cols_);
}

void Matrix::append_row(std::span<const float> values) {
  if (rows_ == 0 && cols_ == 0) cols_ = values.size();
  require(values.size() == cols_, "Matrix::append_row: width mismatch");
  require(all_finite(values), "Matrix::append_row: non-finite element");
  data_.insert(data_.end(), values.begin(), values.end());
  ++rows_;
}

void Matrix::erase_front_rows(std::size_t n) {
  require(n <= rows_, "Matrix::erase_front_rows: n exceeds row count");
  data_.erase(data_.begin(), data_.begin() + static_cast<std::ptrdiff_t>(n * cols_));
  rows_ -= n;
}

Matrix Matrix::slice_rows(std::size_t first, std::size_t count) const {
  require(first + count <= rows_, "Matrix::slice_rows: range out of bounds");
  auto begin = data_.begin() + static_cast<std::ptrdiff_t>(first * cols_);
  return Matrix(count, cols_,
                std::vector<float>(begin, begin + static_cast<std::ptrdiff_t>(count * cols_)));
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

bool all_finite(std::span<const float> values) noexcept {
  return std::all_of(values.begin(), values.end(), [](float v) { return std::isfinite(v); });
}

float row_l1_norm(MatrixView m, std::size_t row) {
  require(row < m.rows(), "row_l1_norm: row " + std::to_string(row) + " out of range");
  float sum = 0.0f;
  for (float v : m.row(row)) sum += std::fabs(v);
  return sum;
}

float dot(std::span<const float> a, std::span<const float> b) {
  require(a.size() == b.size(), "dot: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return static_cast<float>(acc);
}

std::vector<float> softmax(std::span<const float> logits) {
  require(!logits.empty(), "softmax: empty input");
  require(all_finite(logits), "softmax: non-finite input");
  const double peak = *std::max_element(logits.begin(), logits.end());
  std::vector<double> e(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    e[i] = std::exp(static_cast<double>(logits[i]) - peak);
    total += e[i];
  }
  std::vector<float> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = static_cast<float>(e[i] / total);
  return out;
}

Matrix matmul_t(MatrixView a, MatrixView b) {
  require(a.cols() == b.cols(), "matmul_t: inner dimension mismatch");
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = dot(a.row(i), b.row(j));
  return out;
}

}  // namespace kvott
