// Copyright 2026 The kvott Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "kvott/tensor.hpp"

namespace kvott {

// KVTRACE1 layout, all integers and floats little-endian:
//
//   offset  size  field
//   0       8     magic "KVTRACE1"
//   8       4     n_layers  (u32, >= 1)
//   12      4     n_heads   (u32, >= 1)
//   16      4     head_dim  (u32, >= 1)
//   20      4     seq_len   (u32, >= 1)
//   24      ...   for layer in [0, n_layers), head in [0, n_heads):
//                   Q, K, V, each seq_len x head_dim f32, row-major
inline constexpr std::array<char, 8> kTraceMagic{'K', 'V', 'T', 'R', 'A', 'C', 'E', '1'};
inline constexpr std::size_t kTraceHeaderBytes = 24;

struct TraceHeader {
  std::uint32_t n_layers = 1;
  std::uint32_t n_heads = 1;
  std::uint32_t head_dim = 1;
  std::uint32_t seq_len = 1;

  bool operator==(const TraceHeader&) const = default;
};

/// Post-projection query, key and value rows of one attention head.
struct HeadTrace {
  Matrix q;
  Matrix k;
  Matrix v;

  bool operator==(const HeadTrace&) const = default;
};

struct Trace {
  TraceHeader header;
  std::vector<HeadTrace> heads;  // layer-major, head-minor

  const HeadTrace& at(std::size_t layer, std::size_t head) const;
  bool operator==(const Trace&) const = default;
};

std::vector<std::uint8_t> encode_trace(const Trace& trace);
/// Throws ParseError (with byte offset) on bad magic, zero or overflowing
/// dimensions, truncation, trailing bytes or non-finite payload values.
Trace decode_trace(std::span<const std::uint8_t> bytes);

void write_trace(const std::filesystem::path& path, const Trace& trace);
Trace read_trace(const std::filesystem::path& path);

/// Parameters of the synthetic outlier-channel model.
///
/// In each designated outlier channel, keys are uniform on
/// [mu - sigma, mu + sigma] except for `m` planted tokens drawn uniformly
/// from [eps, delta]. Other key channels, all value channels and non-outlier
/// query channels are unit Gaussian noise. Query outlier channels are fixed
/// at -q_scale, so the planted low-magnitude tokens draw large attention
/// weight.
struct SyntheticSpec {
  float mu = 60.0f;
  float sigma = 20.0f;
  float eps = 0.01f;
  float delta = 0.1f;
  std::size_t m = 3;
  std::size_t outlier_channels = 1;
  float q_scale = 0.5f;
  std::uint64_t seed = 0;

  void validate(std::size_t seq_len, std::size_t head_dim) const;
};

struct SyntheticHead {
  HeadTrace tensors;
  std::vector<std::size_t> outlier_channels;  // ascending
  std::vector<std::size_t> planted_rows;      // ascending
};

/// One head of the synthetic model, seeded directly with `seed`.
SyntheticHead generate_head(const SyntheticSpec& spec, std::size_t seq_len, std::size_t head_dim,
                            std::uint64_t seed);

/// A full trace; head (layer, head) uses derive_seed(spec.seed, layer, head).
Trace generate_synthetic(const SyntheticSpec& spec, const TraceHeader& dims);

/// Seed splitting rule: splitmix64 over (root, layer, head).
std::uint64_t derive_seed(std::uint64_t root, std::size_t layer, std::size_t head) noexcept;

/// Percentage of values in each tenth of [min, max]; the maximum falls in
/// the last bucket. Throws DegenerateInput for a constant column.
std::array<double, 10> decile_stats(std::span<const float> column);

/// Index of the channel with the largest mean |value|.
std::size_t largest_magnitude_channel(MatrixView keys);

std::vector<float> column(MatrixView m, std::size_t channel);

}  // namespace kvott
