// Copyright 2026 The kvott Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "kvott/tensor.hpp"

namespace kvott {

/// A token held in full precision outside the quantized store.
struct OutlierEntry {
  std::size_t position = 0;  // absolute token index in the sequence
  std::vector<float> key;
  std::vector<float> value;
  float score = 0.0f;  // L1 norm of `key`, cached at construction

  bool operator==(const OutlierEntry&) const = default;
};

OutlierEntry make_outlier_entry(std::size_t position, std::span<const float> key,
                                std::span<const float> value);

/// Outlier score of every row: its key L1 norm. Smaller means more likely an
/// outlier token.
std::vector<float> score_tokens(MatrixView keys);

/// Result of one competition round.
struct PoolUpdate {
  std::vector<std::size_t> selected_positions;  // candidates that won a slot, ascending
  std::vector<OutlierEntry> evicted;            // former members that lost their slot
};

/// Fixed-capacity pool of the lowest-score tokens seen so far.
///
/// Every update merges the current members with a new group of candidates
/// and keeps the `capacity` smallest scores (ties go to the smaller
/// position). Members that lose their slot move to an auxiliary pool of
/// `aux_capacity` entries; overflow beyond that is discarded. Once an update
/// leaves the auxiliary pool full the pool freezes and ignores every later
/// update.
class OutlierPool {
 public:
  OutlierPool() = default;
  OutlierPool(std::size_t capacity, std::size_t aux_capacity);

  PoolUpdate update(std::vector<OutlierEntry> candidates);

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t aux_capacity() const noexcept { return aux_capacity_; }
  bool frozen() const noexcept { return frozen_; }

  /// Members sorted by (score, position).
  std::span<const OutlierEntry> entries() const noexcept { return entries_; }
  std::span<const OutlierEntry> aux() const noexcept { return aux_; }
  bool contains(std::size_t position) const noexcept;

 private:
  std::size_t capacity_ = 0;
  std::size_t aux_capacity_ = 0;
  bool frozen_ = false;
  std::vector<OutlierEntry> entries_;
  std::vector<OutlierEntry> aux_;
};

/// Replaces the selected rows (in-group indices) of both matrices with the
/// per-channel mean of all group rows, computed before substitution.
std::pair<Matrix, Matrix> substitute_means(MatrixView group_k, MatrixView group_v,
                                           std::span<const std::size_t> selected);

}  // namespace kvott
