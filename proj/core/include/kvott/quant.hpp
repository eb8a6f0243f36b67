// Copyright 2026 The kvott Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "kvott/tensor.hpp"

namespace kvott {

inline constexpr int kMinBits = 1;
inline constexpr int kMaxBits = 8;

/// Zero point and step of one quantization group line.
///
/// Codes reconstruct as x_min + code * step. The step is the group range
/// divided by 2^bits - 1, rounded toward zero to the nearest float so the
/// top code never reconstructs above the group maximum.
struct QuantParams {
  float x_min = 0.0f;
  float step = 0.0f;
  int bits = 2;

  std::uint32_t max_code() const noexcept { return (1u << bits) - 1u; }
  bool operator==(const QuantParams&) const = default;
};

/// Fits (x_min, step) to the extrema of `values`.
QuantParams fit_params(std::span<const float> values, int bits);

/// Largest code whose reconstruction does not exceed `x` (floor rule),
/// clamped to [0, 2^bits - 1]. Returns 0 when step == 0.
std::uint8_t encode(float x, const QuantParams& params);

/// x_min + code * step, evaluated in double and rounded once.
float decode(std::uint32_t code, const QuantParams& params);

struct UniformCodes {
  std::vector<std::uint8_t> codes;
  QuantParams params;
};

/// Uniform floor quantization of one group.
UniformCodes quantize_uniform(std::span<const float> values, int bits);
std::vector<float> dequantize(std::span<const std::uint8_t> codes, const QuantParams& params);

/// Packs `bits`-wide codes densely, little-endian within bytes: code i
/// occupies stream bits [i*bits, (i+1)*bits) and stream bit k is bit (k % 8)
/// of byte k / 8.
std::vector<std::uint8_t> pack_codes(std::span<const std::uint8_t> codes, int bits);
std::vector<std::uint8_t> unpack_codes(std::span<const std::uint8_t> bytes, int bits,
                                       std::size_t count);
std::size_t packed_size(std::size_t count, int bits) noexcept;

enum class GroupAxis : std::uint8_t {
  PerChannel,  // one QuantParams per column (keys)
  PerToken,    // one QuantParams per row (values)
};

/// One quantized group of tokens: packed codes in row-major element order
/// plus one QuantParams per group line.
class QuantizedBlock {
 public:
  QuantizedBlock(GroupAxis axis, int bits, std::size_t n_tokens, std::size_t n_channels,
                 std::vector<std::uint8_t> packed, std::vector<QuantParams> params);

  GroupAxis axis() const noexcept { return axis_; }
  int bits() const noexcept { return bits_; }
  std::size_t n_tokens() const noexcept { return n_tokens_; }
  std::size_t n_channels() const noexcept { return n_channels_; }
  std::span<const std::uint8_t> packed() const noexcept { return packed_; }
  std::span<const QuantParams> params() const noexcept { return params_; }

  const QuantParams& params_for(std::size_t token, std::size_t channel) const noexcept {
    return axis_ == GroupAxis::PerChannel ? params_[channel] : params_[token];
  }
  std::uint32_t code(std::size_t token, std::size_t channel) const;
  std::vector<std::uint8_t> codes() const;

  Matrix dequantize() const;

  bool operator==(const QuantizedBlock&) const = default;

 private:
  GroupAxis axis_;
  int bits_;
  std::size_t n_tokens_;
  std::size_t n_channels_;
  std::vector<std::uint8_t> packed_;
  std::vector<QuantParams> params_;
};

/// Channel-wise key quantization: each column gets its own (x_min, step)
/// computed over the group's tokens.
QuantizedBlock quantize_keys_channelwise(MatrixView group, int bits);

/// Token-wise value quantization: each row gets its own (x_min, step).
QuantizedBlock quantize_values_tokenwise(MatrixView group, int bits);

}  // namespace kvott
