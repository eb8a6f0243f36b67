// Copyright 2026 The kvott Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvott/attention.hpp"

#include <algorithm>
#include <cmath>

#include "kvott/error.hpp"

namespace kvott {
namespace {

float inverse_sqrt_dim(std::size_t dim) {
  return static_cast<float>(1.0 / std::sqrt(static_cast<double>(dim)));
}

float scaled_logit(std::span<const float> query, std::span<const float> key, float scale) {
  return dot(query, key) * scale;
}

// Softmax over `logits` and the weighted sum of `values` rows, shared by the
// mixed and full-precision paths so both round identically.
AttentionResult finish(std::vector<float> logits, MatrixView values) {
  AttentionResult r;
  r.weights = softmax(logits);
  r.scores = std::move(logits);
  std::vector<double> acc(values.cols(), 0.0);
  for (std::size_t i = 0; i < values.rows(); ++i) {
    const double w = r.weights[i];
    const auto row = values.row(i);
    for (std::size_t c = 0; c < acc.size(); ++c) acc[c] += w * row[c];
  }
  r.output.assign(acc.begin(), acc.end());
  return r;
}

}  // namespace

AttentionResult attend_full_precision(std::span<const float> query, MatrixView keys,
                                      MatrixView values) {
  require(keys.rows() == values.rows(), "attend_full_precision: key/value row count mismatch");
  require(keys.rows() >= 1, "attend_full_precision: empty key set");
  require(query.size() == keys.cols() && keys.cols() == values.cols(),
          "attend_full_precision: width mismatch");
  const float scale = inverse_sqrt_dim(keys.cols());
  std::vector<float> logits(keys.rows());
  for (std::size_t i = 0; i < keys.rows(); ++i) logits[i] = scaled_logit(query, keys.row(i), scale);
  return finish(std::move(logits), values);
}

AttentionResult attend_mixed(std::span<const float> query, const TieredCache& cache) {
  return attend_tiers(query, cache.view());
}

AttentionResult attend_tiers(std::span<const float> query, const CacheView& tiers) {
  const std::size_t d = tiers.head_dim;
  require(query.size() == d, "attend_mixed: query width != head_dim");
  require(tiers.total_tokens >= 1, "attend_mixed: empty cache");
  require(tiers.key_tiles.size() == tiers.value_tiles.size(), "attend_mixed: tier count mismatch");

  const float scale = inverse_sqrt_dim(d);
  std::vector<float> logits(tiers.total_tokens);
  Matrix values(tiers.total_tokens, d);

  std::size_t pos = 0;
  for (std::size_t t = 0; t < tiers.key_tiles.size(); ++t) {
    const Matrix k = expand(tiers.key_tiles[t]);
    const Matrix v = expand(tiers.value_tiles[t]);
    require(k.rows() == tiers.group_size && v.rows() == tiers.group_size,
            "attend_mixed: tile does not cover one group");
    for (std::size_t r = 0; r < k.rows(); ++r, ++pos) {
      logits[pos] = scaled_logit(query, k.row(r), scale);
      std::copy_n(v.row(r).begin(), d, values.row(pos).begin());
    }
  }
  for (std::size_t r = 0; r < tiers.pending_keys.rows(); ++r, ++pos) {
    logits[pos] = scaled_logit(query, tiers.pending_keys.row(r), scale);
    std::copy_n(tiers.pending_values.row(r).begin(), d, values.row(pos).begin());
  }
  require(pos == tiers.total_tokens, "attend_mixed: tiers do not cover every position");

  for (const auto& entry : tiers.pool) {
    require(entry.position < tiers.total_tokens, "attend_mixed: pool position out of range");
    logits[entry.position] = scaled_logit(query, entry.key, scale);
    std::copy(entry.value.begin(), entry.value.end(), values.row(entry.position).begin());
  }

  return finish(std::move(logits), values);
}

float l1_error(std::span<const float> a, std::span<const float> b) {
  require(a.size() == b.size(), "l1_error: length mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += std::fabs(static_cast<double>(a[i]) - b[i]);
  return static_cast<float>(sum);
}

}  // namespace kvott
