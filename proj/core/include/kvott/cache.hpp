// Copyright 2026 The kvott Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <set>
#include <span>
#include <variant>
#include <vector>

#include "kvott/outlier.hpp"
#include "kvott/quant.hpp"
#include "kvott/tensor.hpp"

namespace kvott {

enum class Quantizer : std::uint8_t {
  Uniform,      // b-bit floor quantization
  Passthrough,  // stores raw floats; equivalence-testing fixture
};

/// Settings of one (layer, head) cache.
struct CacheConfig {
  int bits = 2;
  std::size_t group_size = 128;
  std::size_t residual = 32;
  std::size_t outlier_num = 3;
  std::size_t aux_capacity = 32;
  std::size_t head_dim = 64;
  Quantizer quantizer = Quantizer::Uniform;

  void validate() const;
};

/// Engine-wide settings. Defaults are the main 2-bit configuration: G=128,
/// R=32, three outlier slots, a 32-entry auxiliary pool, and outlier tracing
/// disabled on layers 0 and 1.
struct EngineConfig {
  int bits = 2;
  std::size_t group_size = 128;
  std::size_t residual = 32;
  std::size_t outlier_num = 3;
  std::vector<std::size_t> skip_layers{0, 1};
  std::size_t aux_capacity = 32;
  std::size_t n_layers = 1;
  std::size_t n_heads = 1;
  std::size_t head_dim = 64;
  Quantizer quantizer = Quantizer::Uniform;

  std::size_t outlier_num_for(std::size_t layer) const;
  CacheConfig cache_config(std::size_t layer) const;
  void validate() const;
};

/// A stored group: quantized codes, or raw rows under the passthrough
/// quantizer.
using StoredTile = std::variant<QuantizedBlock, Matrix>;

Matrix expand(const StoredTile& tile);

/// Storage accounting in bits. Full-precision tiers are counted at 16 bits
/// per value and every QuantParams line as two 16-bit numbers.
struct MemoryBreakdown {
  std::uint64_t quantized_bits = 0;
  std::uint64_t param_bits = 0;
  std::uint64_t pending_bits = 0;
  std::uint64_t pool_bits = 0;  // outlier pool plus auxiliary pool
  std::uint64_t total_bits = 0;

  MemoryBreakdown& operator+=(const MemoryBreakdown& other) noexcept;
  bool operator==(const MemoryBreakdown&) const = default;
};

/// fp16 storage of `tokens` keys and values of width `head_dim`.
std::uint64_t fp16_bits(std::size_t tokens, std::size_t head_dim) noexcept;

/// Read-only view of the three tiers, as consumed by attention.
struct CacheView {
  std::span<const StoredTile> key_tiles;
  std::span<const StoredTile> value_tiles;
  MatrixView pending_keys;
  MatrixView pending_values;
  std::span<const OutlierEntry> pool;
  std::size_t group_size = 0;
  std::size_t head_dim = 0;
  std::size_t total_tokens = 0;
};

/// Per-(layer, head) KV cache with a quantized store, a full-precision
/// pending buffer and an outlier pool.
///
/// Tokens enter the pending buffer. Whenever the buffer holds at least
/// G + R rows, its oldest G rows are quantized as one group, so the newest
/// R tokens always stay in full precision. Before quantization, group tokens
/// compete for the outlier pool; winners keep a full-precision copy in the
/// pool and their group rows are replaced by the group's per-channel mean.
class TieredCache {
 public:
  explicit TieredCache(CacheConfig config);

  void append(std::span<const float> key, std::span<const float> value);
  /// Quantizes the oldest G pending rows. Requires pending - R >= G.
  void quantize_oldest_group();

  MemoryBreakdown memory_usage() const;

  const CacheConfig& config() const noexcept { return config_; }
  std::size_t total_tokens() const noexcept { return total_tokens_; }
  std::size_t quantized_tokens() const noexcept { return key_tiles_.size() * config_.group_size; }
  std::size_t pending_tokens() const noexcept { return pending_k_.rows(); }

  std::span<const StoredTile> key_tiles() const noexcept { return key_tiles_; }
  std::span<const StoredTile> value_tiles() const noexcept { return value_tiles_; }
  const Matrix& pending_keys() const noexcept { return pending_k_; }
  const Matrix& pending_values() const noexcept { return pending_v_; }
  const OutlierPool& pool() const noexcept { return pool_; }
  const std::set<std::size_t>& substituted_positions() const noexcept { return substituted_; }

  CacheView view() const noexcept;

 private:
  CacheConfig config_;
  std::vector<StoredTile> key_tiles_;
  std::vector<StoredTile> value_tiles_;
  Matrix pending_k_;
  Matrix pending_v_;
  OutlierPool pool_;
  std::set<std::size_t> substituted_;
  std::size_t total_tokens_ = 0;
};

/// All (layer, head) caches of one sequence.
class KvEngine {
 public:
  explicit KvEngine(EngineConfig config);

  const EngineConfig& config() const noexcept { return config_; }
  TieredCache& cache(std::size_t layer, std::size_t head);
  const TieredCache& cache(std::size_t layer, std::size_t head) const;

  MemoryBreakdown memory_usage() const;

 private:
  EngineConfig config_;
  std::vector<TieredCache> caches_;
};

}  // namespace kvott
