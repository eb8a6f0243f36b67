// Copyright 2026 The kvott Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvott/outlier.hpp"

#include <algorithm>
#include <iterator>
#include <unordered_set>

#include "kvott/error.hpp"

namespace kvott {
namespace {

bool ranks_before(const OutlierEntry& a, const OutlierEntry& b) noexcept {
  if (a.score != b.score) return a.score < b.score;
  return a.position < b.position;
}

std::vector<float> column_means(MatrixView m) {
  std::vector<double> acc(m.cols(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) acc[c] += m(r, c);
  std::vector<float> means(m.cols());
  for (std::size_t c = 0; c < m.cols(); ++c)
    means[c] = static_cast<float>(acc[c] / static_cast<double>(m.rows()));
  return means;
}

Matrix with_rows_replaced(MatrixView m, std::span<const std::size_t> rows,
                          std::span<const float> replacement) {
  Matrix out(m.rows(), m.cols(), std::vector<float>(m.data().begin(), m.data().end()));
  for (auto r : rows) std::copy(replacement.begin(), replacement.end(), out.row(r).begin());
  return out;
}

}  // namespace

OutlierEntry make_outlier_entry(std::size_t position, std::span<const float> key,
                                std::span<const float> value) {
  require(key.size() == value.size(), "make_outlier_entry: key/value width mismatch");
  OutlierEntry e;
  e.position = position;
  e.key.assign(key.begin(), key.end());
  e.value.assign(value.begin(), value.end());
  e.score = row_l1_norm(MatrixView(key, 1, key.size()), 0);
  return e;
}

std::vector<float> score_tokens(MatrixView keys) {
  require(keys.rows() >= 1, "score_tokens: empty key group");
  std::vector<float> scores(keys.rows());
  for (std::size_t i = 0; i < keys.rows(); ++i) scores[i] = row_l1_norm(keys, i);
  return scores;
}

OutlierPool::OutlierPool(std::size_t capacity, std::size_t aux_capacity)
    : capacity_(capacity), aux_capacity_(aux_capacity) {
  entries_.reserve(capacity);
  aux_.reserve(aux_capacity);
}

bool OutlierPool::contains(std::size_t position) const noexcept {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const OutlierEntry& e) { return e.position == position; });
}

PoolUpdate OutlierPool::update(std::vector<OutlierEntry> candidates) {
  PoolUpdate result;
  if (frozen_ || capacity_ == 0) return result;

  std::unordered_set<std::size_t> seen;
  for (const auto& e : entries_) seen.insert(e.position);
  for (const auto& c : candidates)
    require(seen.insert(c.position).second, "OutlierPool::update: duplicate token position");

  const std::size_t members = entries_.size();
  std::vector<OutlierEntry> pooled = std::move(entries_);
  pooled.reserve(members + candidates.size());
  std::move(candidates.begin(), candidates.end(), std::back_inserter(pooled));

  // Indices below `members` are incumbents.
  std::vector<std::size_t> order(pooled.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const std::size_t keep = std::min(capacity_, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                    [&](std::size_t a, std::size_t b) { return ranks_before(pooled[a], pooled[b]); });

  std::vector<bool> kept(pooled.size(), false);
  entries_.clear();
  for (std::size_t i = 0; i < keep; ++i) {
    kept[order[i]] = true;
    if (order[i] >= members) result.selected_positions.push_back(pooled[order[i]].position);
    entries_.push_back(std::move(pooled[order[i]]));
  }
  std::sort(result.selected_positions.begin(), result.selected_positions.end());

  for (std::size_t i = 0; i < members; ++i) {
    if (kept[i]) continue;
    if (aux_.size() < aux_capacity_) aux_.push_back(pooled[i]);
    result.evicted.push_back(std::move(pooled[i]));
  }
  if (!result.evicted.empty() && aux_.size() == aux_capacity_) frozen_ = true;
  return result;
}

std::pair<Matrix, Matrix> substitute_means(MatrixView group_k, MatrixView group_v,
                                           std::span<const std::size_t> selected) {
  require(group_k.rows() == group_v.rows(), "substitute_means: key/value row count mismatch");
  for (auto r : selected) require(r < group_k.rows(), "substitute_means: selected row out of range");
  if (selected.empty()) {
    return {with_rows_replaced(group_k, {}, {}), with_rows_replaced(group_v, {}, {})};
  }
  const auto k_mean = column_means(group_k);
  const auto v_mean = column_means(group_v);
  return {with_rows_replaced(group_k, selected, k_mean), with_rows_replaced(group_v, selected, v_mean)};
}

}  // namespace kvott
