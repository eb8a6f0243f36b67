// Copyright 2026 The kvott Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "kvott/cache.hpp"
#include "kvott/tensor.hpp"

namespace kvott {

struct AttentionResult {
  std::vector<float> output;   // head_dim values
  std::vector<float> weights;  // post-softmax, one per cached token
  std::vector<float> scores;   // logits q.k / sqrt(head_dim), before softmax
};

/// Single-query scaled dot-product attention over raw keys and values.
AttentionResult attend_full_precision(std::span<const float> query, MatrixView keys,
                                      MatrixView values);

/// Decode attention over the three tiers of a cache.
///
/// Quantized positions use dequantized keys and values, pending positions
/// use the full-precision buffer. For each outlier-pool entry the logit and
/// value at its position are overwritten with the pool's full-precision
/// copy, so every token contributes exactly one logit.
AttentionResult attend_mixed(std::span<const float> query, const TieredCache& cache);
AttentionResult attend_tiers(std::span<const float> query, const CacheView& tiers);

/// Sum of |a_i - b_i|.
float l1_error(std::span<const float> a, std::span<const float> b);

}  // namespace kvott
