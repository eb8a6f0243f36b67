// Copyright 2026 The kvott Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvott/quant.hpp"

#include <algorithm>
#include <cmath>

#include "kvott/error.hpp"

namespace kvott {
namespace {

void require_bits(int bits) {
  require(bits >= kMinBits && bits <= kMaxBits, "quantization bits must be in [1, 8]");
}

// Reads the `bits`-wide code at element `index` of a packed stream.
std::uint32_t read_code(std::span<const std::uint8_t> bytes, int bits, std::size_t index) {
  const std::size_t bit = index * static_cast<std::size_t>(bits);
  const std::size_t byte = bit / 8;
  const unsigned shift = static_cast<unsigned>(bit % 8);
  // A code spans at most two bytes since bits <= 8.
  std::uint32_t window = bytes[byte];
  if (shift + static_cast<unsigned>(bits) > 8) window |= static_cast<std::uint32_t>(bytes[byte + 1]) << 8;
  return (window >> shift) & ((1u << bits) - 1u);
}

}  // namespace

QuantParams fit_params(std::span<const float> values, int bits) {
  require_bits(bits);
  require(!values.empty(), "quantize: empty group");
  require(all_finite(values), "quantize: non-finite input");
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());

  QuantParams p;
  p.bits = bits;
  p.x_min = *lo;
  const double range = static_cast<double>(*hi) - static_cast<double>(*lo);
  const double levels = static_cast<double>(p.max_code());
  float step = static_cast<float>(range / levels);
  // Round toward zero so x_min + max_code * step stays <= x_max.
  if (static_cast<double>(step) * levels > range) step = std::nextafter(step, 0.0f);
  p.step = step;
  return p;
}

float decode(std::uint32_t code, const QuantParams& params) {
  return static_cast<float>(static_cast<double>(params.x_min) +
                            static_cast<double>(code) * static_cast<double>(params.step));
}

std::uint8_t encode(float x, const QuantParams& params) {
  if (params.step == 0.0f) return 0;
  const std::uint32_t top = params.max_code();
  const double raw = std::floor((static_cast<double>(x) - params.x_min) / params.step);
  auto code = static_cast<std::uint32_t>(std::clamp(raw, 0.0, static_cast<double>(top)));
  // The division above can land one code off the float lattice; settle on
  // the largest code whose reconstruction is <= x.
  while (code > 0 && decode(code, params) > x) --code;
  while (code < top && decode(code + 1, params) <= x) ++code;
  return static_cast<std::uint8_t>(code);
}

UniformCodes quantize_uniform(std::span<const float> values, int bits) {
  UniformCodes out;
  out.params = fit_params(values, bits);
  out.codes.reserve(values.size());
  for (float v : values) out.codes.push_back(encode(v, out.params));
  return out;
}

std::vector<float> dequantize(std::span<const std::uint8_t> codes, const QuantParams& params) {
  require_bits(params.bits);
  std::vector<float> out;
  out.reserve(codes.size());
  for (auto c : codes) {
    require(c <= params.max_code(), "dequantize: code exceeds 2^bits - 1");
    out.push_back(decode(c, params));
  }
  return out;
}

std::size_t packed_size(std::size_t count, int bits) noexcept {
  return (count * static_cast<std::size_t>(bits) + 7) / 8;
}

std::vector<std::uint8_t> pack_codes(std::span<const std::uint8_t> codes, int bits) {
  require_bits(bits);
  std::vector<std::uint8_t> out(packed_size(codes.size(), bits), 0);
  const std::uint32_t limit = 1u << bits;
  std::size_t bit = 0;
  for (auto code : codes) {
    require(code < limit, "pack_codes: code does not fit in the given bit width");
    const std::size_t byte = bit / 8;
    const unsigned shift = static_cast<unsigned>(bit % 8);
    const std::uint32_t shifted = static_cast<std::uint32_t>(code) << shift;
    out[byte] |= static_cast<std::uint8_t>(shifted & 0xFFu);
    if (shift + static_cast<unsigned>(bits) > 8) out[byte + 1] |= static_cast<std::uint8_t>(shifted >> 8);
    bit += static_cast<std::size_t>(bits);
  }
  return out;
}

std::vector<std::uint8_t> unpack_codes(std::span<const std::uint8_t> bytes, int bits,
                                       std::size_t count) {
  require_bits(bits);
  require(bytes.size() >= packed_size(count, bits), "unpack_codes: byte stream too short");
  std::vector<std::uint8_t> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = static_cast<std::uint8_t>(read_code(bytes, bits, i));
  return out;
}

QuantizedBlock::QuantizedBlock(GroupAxis axis, int bits, std::size_t n_tokens,
                               std::size_t n_channels, std::vector<std::uint8_t> packed,
                               std::vector<QuantParams> params)
    : axis_(axis),
      bits_(bits),
      n_tokens_(n_tokens),
      n_channels_(n_channels),
      packed_(std::move(packed)),
      params_(std::move(params)) {
  require_bits(bits);
  require(packed_.size() == packed_size(n_tokens * n_channels, bits),
          "QuantizedBlock: packed length does not match dimensions");
  const std::size_t lines = axis == GroupAxis::PerChannel ? n_channels : n_tokens;
  require(params_.size() == lines, "QuantizedBlock: one QuantParams per group line required");
  for (const auto& p : params_) require(p.bits == bits, "QuantizedBlock: params bit width mismatch");
}

std::uint32_t QuantizedBlock::code(std::size_t token, std::size_t channel) const {
  require(token < n_tokens_ && channel < n_channels_, "QuantizedBlock::code: index out of range");
  return read_code(packed_, bits_, token * n_channels_ + channel);
}

std::vector<std::uint8_t> QuantizedBlock::codes() const {
  return unpack_codes(packed_, bits_, n_tokens_ * n_channels_);
}

Matrix QuantizedBlock::dequantize() const {
  std::vector<float> data(n_tokens_ * n_channels_);
  for (std::size_t t = 0; t < n_tokens_; ++t)
    for (std::size_t c = 0; c < n_channels_; ++c)
      data[t * n_channels_ + c] =
          decode(read_code(packed_, bits_, t * n_channels_ + c), params_for(t, c));
  return Matrix(n_tokens_, n_channels_, std::move(data));
}

QuantizedBlock quantize_keys_channelwise(MatrixView group, int bits) {
  require(!group.empty() && group.cols() > 0, "quantize_keys_channelwise: empty group");
  const std::size_t tokens = group.rows();
  const std::size_t channels = group.cols();

  std::vector<QuantParams> params;
  params.reserve(channels);
  std::vector<float> column(tokens);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t t = 0; t < tokens; ++t) column[t] = group(t, c);
    params.push_back(fit_params(column, bits));
  }

  std::vector<std::uint8_t> codes(tokens * channels);
  for (std::size_t t = 0; t < tokens; ++t)
    for (std::size_t c = 0; c < channels; ++c) codes[t * channels + c] = encode(group(t, c), params[c]);

  return QuantizedBlock(GroupAxis::PerChannel, bits, tokens, channels, pack_codes(codes, bits),
                        std::move(params));
}

QuantizedBlock quantize_values_tokenwise(MatrixView group, int bits) {
  require(!group.empty() && group.cols() > 0, "quantize_values_tokenwise: empty group");
  const std::size_t tokens = group.rows();
  const std::size_t channels = group.cols();

  std::vector<QuantParams> params;
  params.reserve(tokens);
  std::vector<std::uint8_t> codes(tokens * channels);
  for (std::size_t t = 0; t < tokens; ++t) {
    const auto row = group.row(t);
    params.push_back(fit_params(row, bits));
    for (std::size_t c = 0; c < channels; ++c) codes[t * channels + c] = encode(row[c], params.back());
  }

  return QuantizedBlock(GroupAxis::PerToken, bits, tokens, channels, pack_codes(codes, bits),
                        std::move(params));
}

}  // namespace kvott
