// Copyright 2026 The kvott Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvott/cache.hpp"

#include <algorithm>

#include "kvott/error.hpp"

namespace kvott {
namespace {

constexpr std::uint64_t kFullPrecisionBits = 16;
constexpr std::uint64_t kParamFieldBits = 16;

std::uint64_t tile_code_bits(const StoredTile& tile) {
  if (const auto* block = std::get_if<QuantizedBlock>(&tile))
    return static_cast<std::uint64_t>(block->n_tokens()) * block->n_channels() *
           static_cast<std::uint64_t>(block->bits());
  const auto& raw = std::get<Matrix>(tile);
  return static_cast<std::uint64_t>(raw.rows()) * raw.cols() * kFullPrecisionBits;
}

std::uint64_t tile_param_bits(const StoredTile& tile) {
  if (const auto* block = std::get_if<QuantizedBlock>(&tile))
    return static_cast<std::uint64_t>(block->params().size()) * 2 * kParamFieldBits;
  return 0;
}

}  // namespace

void CacheConfig::validate() const {
  require(group_size >= 1, "group_size must be >= 1");
  require(head_dim >= 1, "head_dim must be >= 1");
  if (quantizer == Quantizer::Uniform)
    require(bits >= kMinBits && bits <= kMaxBits, "bits must be in [1, 8]");
}

std::size_t EngineConfig::outlier_num_for(std::size_t layer) const {
  const bool skipped = std::find(skip_layers.begin(), skip_layers.end(), layer) != skip_layers.end();
  return skipped ? 0 : outlier_num;
}

CacheConfig EngineConfig::cache_config(std::size_t layer) const {
  CacheConfig c;
  c.bits = bits;
  c.group_size = group_size;
  c.residual = residual;
  c.outlier_num = outlier_num_for(layer);
  c.aux_capacity = aux_capacity;
  c.head_dim = head_dim;
  c.quantizer = quantizer;
  return c;
}

void EngineConfig::validate() const {
  require(n_layers >= 1 && n_heads >= 1, "n_layers and n_heads must be >= 1");
  cache_config(0).validate();
}

Matrix expand(const StoredTile& tile) {
  if (const auto* block = std::get_if<QuantizedBlock>(&tile)) return block->dequantize();
  return std::get<Matrix>(tile);
}

MemoryBreakdown& MemoryBreakdown::operator+=(const MemoryBreakdown& other) noexcept {
  quantized_bits += other.quantized_bits;
  param_bits += other.param_bits;
  pending_bits += other.pending_bits;
  pool_bits += other.pool_bits;
  total_bits += other.total_bits;
  return *this;
}

std::uint64_t fp16_bits(std::size_t tokens, std::size_t head_dim) noexcept {
  return 2 * static_cast<std::uint64_t>(tokens) * head_dim * kFullPrecisionBits;
}

TieredCache::TieredCache(CacheConfig config)
    : config_(config),
      pending_k_(0, config.head_dim),
      pending_v_(0, config.head_dim),
      pool_(config.outlier_num, config.aux_capacity) {
  config_.validate();
}

void TieredCache::append(std::span<const float> key, std::span<const float> value) {
  require(key.size() == config_.head_dim && value.size() == config_.head_dim,
          "TieredCache::append: row width != head_dim");
  pending_k_.append_row(key);
  pending_v_.append_row(value);
  ++total_tokens_;
  if (pending_k_.rows() >= config_.group_size + config_.residual)
    quantize_oldest_group();
}

void TieredCache::quantize_oldest_group() {
  const std::size_t g = config_.group_size;
  require(pending_k_.rows() >= g + config_.residual,
          "quantize_oldest_group: fewer than G + R pending rows");

  const std::size_t base = quantized_tokens();
  Matrix group_k = pending_k_.slice_rows(0, g);
  Matrix group_v = pending_v_.slice_rows(0, g);

  if (config_.outlier_num > 0 && !pool_.frozen()) {
    std::vector<OutlierEntry> candidates;
    candidates.reserve(g);
    for (std::size_t i = 0; i < g; ++i)
      candidates.push_back(make_outlier_entry(base + i, group_k.row(i), group_v.row(i)));
    const PoolUpdate update = pool_.update(std::move(candidates));

    if (!update.selected_positions.empty()) {
      std::vector<std::size_t> rows;
      rows.reserve(update.selected_positions.size());
      for (auto pos : update.selected_positions) {
        rows.push_back(pos - base);
        substituted_.insert(pos);
      }
      auto [k, v] = substitute_means(group_k, group_v, rows);
      group_k = std::move(k);
      group_v = std::move(v);
    }
  }

  if (config_.quantizer == Quantizer::Uniform) {
    key_tiles_.emplace_back(quantize_keys_channelwise(group_k, config_.bits));
    value_tiles_.emplace_back(quantize_values_tokenwise(group_v, config_.bits));
  } else {
    key_tiles_.emplace_back(std::move(group_k));
    value_tiles_.emplace_back(std::move(group_v));
  }

  pending_k_.erase_front_rows(g);
  pending_v_.erase_front_rows(g);
}

MemoryBreakdown TieredCache::memory_usage() const {
  MemoryBreakdown m;
  for (const auto& tiles : {std::span<const StoredTile>(key_tiles_), std::span<const StoredTile>(value_tiles_)}) {
    for (const auto& tile : tiles) {
      m.quantized_bits += tile_code_bits(tile);
      m.param_bits += tile_param_bits(tile);
    }
  }
  const std::uint64_t row_bits = static_cast<std::uint64_t>(config_.head_dim) * kFullPrecisionBits;
  m.pending_bits = 2 * static_cast<std::uint64_t>(pending_k_.rows()) * row_bits;
  m.pool_bits = 2 * static_cast<std::uint64_t>(pool_.entries().size() + pool_.aux().size()) * row_bits;
  m.total_bits = m.quantized_bits + m.param_bits + m.pending_bits + m.pool_bits;
  return m;
}

CacheView TieredCache::view() const noexcept {
  CacheView v;
  v.key_tiles = key_tiles_;
  v.value_tiles = value_tiles_;
  v.pending_keys = pending_k_.view();
  v.pending_values = pending_v_.view();
  v.pool = pool_.entries();
  v.group_size = config_.group_size;
  v.head_dim = config_.head_dim;
  v.total_tokens = total_tokens_;
  return v;
}

KvEngine::KvEngine(EngineConfig config) : config_(std::move(config)) {
  config_.validate();
  caches_.reserve(config_.n_layers * config_.n_heads);
  for (std::size_t layer = 0; layer < config_.n_layers; ++layer)
    for (std::size_t head = 0; head < config_.n_heads; ++head)
      caches_.emplace_back(config_.cache_config(layer));
}

TieredCache& KvEngine::cache(std::size_t layer, std::size_t head) {
  require(layer < config_.n_layers && head < config_.n_heads, "KvEngine::cache: index out of range");
  return caches_[layer * config_.n_heads + head];
}

const TieredCache& KvEngine::cache(std::size_t layer, std::size_t head) const {
  require(layer < config_.n_layers && head < config_.n_heads, "KvEngine::cache: index out of range");
  return caches_[layer * config_.n_heads + head];
}

MemoryBreakdown KvEngine::memory_usage() const {
  MemoryBreakdown total;
  for (const auto& c : caches_) total += c.memory_usage();
  return total;
}

}  // namespace kvott
