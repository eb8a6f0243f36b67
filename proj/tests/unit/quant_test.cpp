// Copyright 2026 The kvott Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvott/quant.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "kvott/error.hpp"
#include "kvott_test/generators.hpp"

namespace kvott {
namespace {

using testing::Gen;

// Floor quantizer evaluated independently in double: q from the extrema, floor, clamp.
struct OracleCodes {
  std::vector<int> codes;
  std::vector<bool> near_boundary;  // (x - min)/q within 1e-4 of an integer
  double step = 0.0;
};

OracleCodes oracle_quantize(std::span<const float> x, int bits) {
  const double lo = *std::min_element(x.begin(), x.end());
  const double hi = *std::max_element(x.begin(), x.end());
  const int top = (1 << bits) - 1;
  OracleCodes o;
  o.step = (hi - lo) / top;
  for (float v : x) {
    if (o.step == 0.0) {
      o.codes.push_back(0);
      o.near_boundary.push_back(false);
      continue;
    }
    const double t = (v - lo) / o.step;
    o.codes.push_back(std::clamp(static_cast<int>(std::floor(t)), 0, top));
    o.near_boundary.push_back(std::fabs(t - std::round(t)) < 1e-4);
  }
  return o;
}

void expect_matches_oracle(std::span<const float> x, std::span<const std::uint8_t> codes, int bits) {
  const auto o = oracle_quantize(x, bits);
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!o.near_boundary[i]) {
      EXPECT_EQ(codes[i], o.codes[i]) << "element " << i;
    }
}

TEST(QuantizeUniform, LatticeExample) {
  const auto r = quantize_uniform(std::vector<float>{0, 1, 2, 3}, 2);
  EXPECT_EQ(r.params.step, 1.0f);
  EXPECT_EQ(r.params.x_min, 0.0f);
  EXPECT_EQ(r.codes, (std::vector<std::uint8_t>{0, 1, 2, 3}));
}

TEST(QuantizeUniform, ConstantGroup) {
  const auto r = quantize_uniform(std::vector<float>{5, 5, 5}, 4);
  EXPECT_EQ(r.params.step, 0.0f);
  EXPECT_EQ(r.params.x_min, 5.0f);
  EXPECT_EQ(r.codes, (std::vector<std::uint8_t>{0, 0, 0}));
  EXPECT_EQ(dequantize(r.codes, r.params), (std::vector<float>{5, 5, 5}));
}

TEST(QuantizeUniform, OneBitFloor) {
  const auto r = quantize_uniform(std::vector<float>{0.0f, 0.5f, 1.0f}, 1);
  EXPECT_EQ(r.params.step, 1.0f);
  EXPECT_EQ(r.codes, (std::vector<std::uint8_t>{0, 0, 1}));
}

TEST(QuantizeUniform, RejectsBadInput) {
  EXPECT_THROW((void)quantize_uniform(std::vector<float>{1.0f, std::numeric_limits<float>::quiet_NaN()}, 2),
               ContractViolation);
  EXPECT_THROW((void)quantize_uniform(std::vector<float>{}, 2), ContractViolation);
  EXPECT_THROW((void)quantize_uniform(std::vector<float>{1.0f}, 0), ContractViolation);
  EXPECT_THROW((void)quantize_uniform(std::vector<float>{1.0f}, 9), ContractViolation);
}

TEST(Dequantize, Examples) {
  const QuantParams p{0.0f, 1.0f, 2};
  EXPECT_EQ(dequantize(std::vector<std::uint8_t>{0, 1, 2, 3}, p), (std::vector<float>{0, 1, 2, 3}));
  EXPECT_THROW((void)dequantize(std::vector<std::uint8_t>{4}, p), ContractViolation);
}

TEST(Dequantize, RandomTwoBitAgainstOracle) {
  Gen g(11);
  const auto x = g.floats(1000, -3.0f, 3.0f);
  const auto r = quantize_uniform(x, 2);
  expect_matches_oracle(x, r.codes, 2);
  const auto back = dequantize(r.codes, r.params);
  const double q = r.params.step;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double err = static_cast<double>(x[i]) - back[i];
    EXPECT_GE(err, 0.0);
    EXPECT_LE(err, q);
  }
}

TEST(QuantizeUniform, RoundTripBoundProperty) {
  Gen g(12);
  for (int trial = 0; trial < 2000; ++trial) {
    const int bits = 1 << g.size(0, 3);
    const auto x = g.floats(g.size(1, 256), -10.0f, 10.0f);
    const auto r = quantize_uniform(x, bits);
    const auto back = dequantize(r.codes, r.params);
    const auto top = r.params.max_code();
    const float hi = *std::max_element(x.begin(), x.end());
    for (std::size_t i = 0; i < x.size(); ++i) {
      ASSERT_LE(r.codes[i], top);
      const double err = static_cast<double>(x[i]) - back[i];
      ASSERT_GE(err, 0.0);
      ASSERT_LE(err, static_cast<double>(r.params.step));
      if (r.params.step > 0.0f && x[i] == hi) {
        ASSERT_EQ(r.codes[i], top);
      }
    }
  }
}

TEST(QuantizeUniform, LatticeAlignedInputsAreExact) {
  Gen g(13);
  for (int trial = 0; trial < 500; ++trial) {
    const int bits = static_cast<int>(g.size(1, 8));
    const int top = (1 << bits) - 1;
    const float x_min = static_cast<float>(static_cast<int>(g.size(0, 20)) - 10);
    const float q = std::ldexp(static_cast<float>(g.size(1, 7)), -static_cast<int>(g.size(0, 4)));
    std::vector<float> x{x_min, x_min + top * q};
    for (std::size_t n = g.size(0, 50); n > 0; --n) x.push_back(x_min + static_cast<float>(g.size(0, top)) * q);
    const auto r = quantize_uniform(x, bits);
    EXPECT_EQ(r.params.step, q);
    EXPECT_EQ(dequantize(r.codes, r.params), x);
  }
}

TEST(StepInflation, AppendedLowValueWidensStepByRangeRatio) {
  Gen g(14);
  for (int trial = 0; trial < 100; ++trial) {
    const float mu = g.uniform(5.0f, 100.0f);
    const float sigma = g.uniform(0.5f, 0.9f * mu);
    const float eps = g.uniform(0.0f, 0.5f * (mu - sigma));
    auto x = g.floats(g.size(2, 256), mu - sigma, mu + sigma);
    const double hi = *std::max_element(x.begin(), x.end());
    const double lo = *std::min_element(x.begin(), x.end());
    const int bits = static_cast<int>(g.size(1, 8));
    const double q_old = fit_params(x, bits).step;
    x.push_back(eps);
    const double q_new = fit_params(x, bits).step;
    const double expected = (hi - eps) / (hi - lo);
    EXPECT_GT(q_new / q_old, 1.0);
    EXPECT_NEAR(q_new / q_old / expected, 1.0, 1e-6);
  }
}

TEST(KeysChannelwise, SmallExamples) {
  const auto b = quantize_keys_channelwise(Matrix::from_rows({{0}, {3}}), 2);
  EXPECT_EQ(b.axis(), GroupAxis::PerChannel);
  ASSERT_EQ(b.params().size(), 1u);
  EXPECT_EQ(b.params()[0].step, 1.0f);
  EXPECT_EQ(b.codes(), (std::vector<std::uint8_t>{0, 3}));

  const Matrix constant = Matrix::from_rows({{1, -2}, {1, -2}, {1, -2}});
  const auto c = quantize_keys_channelwise(constant, 2);
  for (const auto& p : c.params()) EXPECT_EQ(p.step, 0.0f);
  EXPECT_EQ(c.dequantize(), constant);
  EXPECT_THROW((void)quantize_keys_channelwise(Matrix(), 2), ContractViolation);
}

TEST(ValuesTokenwise, SmallExamples) {
  const auto b = quantize_values_tokenwise(Matrix::from_rows({{0, 1, 2, 3}}), 2);
  EXPECT_EQ(b.axis(), GroupAxis::PerToken);
  ASSERT_EQ(b.params().size(), 1u);
  EXPECT_EQ(b.params()[0].step, 1.0f);
  EXPECT_EQ(b.codes(), (std::vector<std::uint8_t>{0, 1, 2, 3}));

  const Matrix constant = Matrix::from_rows({{4, 4, 4}, {-1, -1, -1}});
  EXPECT_EQ(quantize_values_tokenwise(constant, 3).dequantize(), constant);
}

TEST(KeysChannelwise, PerColumnOracle) {
  Gen g(15);
  const Matrix m = g.matrix(128, 8, -4, 4);
  const auto block = quantize_keys_channelwise(m, 2);
  ASSERT_EQ(block.params().size(), 8u);
  const Matrix back = block.dequantize();
  for (std::size_t c = 0; c < 8; ++c) {
    std::vector<float> col(128);
    for (std::size_t t = 0; t < 128; ++t) col[t] = m(t, c);
    const auto ref = quantize_uniform(col, 2);
    EXPECT_EQ(block.params()[c], ref.params);
    std::vector<std::uint8_t> got(128);
    for (std::size_t t = 0; t < 128; ++t) got[t] = static_cast<std::uint8_t>(block.code(t, c));
    expect_matches_oracle(col, got, 2);
    for (std::size_t t = 0; t < 128; ++t) {
      const double err = static_cast<double>(m(t, c)) - back(t, c);
      EXPECT_GE(err, 0.0);
      EXPECT_LE(err, block.params()[c].step);
    }
  }
}

TEST(ValuesTokenwise, PerRowOracle) {
  Gen g(16);
  const Matrix m = g.matrix(128, 8, -4, 4);
  const auto block = quantize_values_tokenwise(m, 2);
  ASSERT_EQ(block.params().size(), 128u);
  const Matrix back = block.dequantize();
  for (std::size_t t = 0; t < 128; ++t) {
    const auto ref = quantize_uniform(m.row(t), 2);
    EXPECT_EQ(block.params()[t], ref.params);
    std::vector<std::uint8_t> got(8);
    for (std::size_t c = 0; c < 8; ++c) got[c] = static_cast<std::uint8_t>(block.code(t, c));
    expect_matches_oracle(m.row(t), got, 2);
    for (std::size_t c = 0; c < 8; ++c) {
      const double err = static_cast<double>(m(t, c)) - back(t, c);
      EXPECT_GE(err, 0.0);
      EXPECT_LE(err, block.params()[t].step);
    }
  }
}

TEST(GroupQuantizers, CommuteWithTranspose) {
  Gen g(17);
  for (int trial = 0; trial < 50; ++trial) {
    const int bits = static_cast<int>(g.size(1, 8));
    const Matrix m = g.matrix(g.size(1, 40), g.size(1, 40), -5, 5);
    const auto keys = quantize_keys_channelwise(m, bits);
    const auto vals = quantize_values_tokenwise(m.transposed(), bits);
    ASSERT_EQ(keys.params().size(), vals.params().size());
    for (std::size_t i = 0; i < keys.params().size(); ++i) EXPECT_EQ(keys.params()[i], vals.params()[i]);
    for (std::size_t t = 0; t < m.rows(); ++t)
      for (std::size_t c = 0; c < m.cols(); ++c) EXPECT_EQ(keys.code(t, c), vals.code(c, t));
  }
}

TEST(QuantizedBlock, ValidatesLayout) {
  const QuantParams p{0.0f, 1.0f, 2};
  EXPECT_NO_THROW(QuantizedBlock(GroupAxis::PerToken, 2, 2, 3, std::vector<std::uint8_t>(2), {p, p}));
  EXPECT_THROW(QuantizedBlock(GroupAxis::PerToken, 2, 2, 3, std::vector<std::uint8_t>(3), {p, p}),
               ContractViolation);
  EXPECT_THROW(QuantizedBlock(GroupAxis::PerChannel, 2, 2, 3, std::vector<std::uint8_t>(2), {p, p}),
               ContractViolation);
  const auto b = quantize_keys_channelwise(Matrix::from_rows({{0, 1}, {3, 2}}), 2);
  EXPECT_THROW((void)b.code(2, 0), ContractViolation);
}

TEST(Packing, Examples) {
  const auto bytes = pack_codes(std::vector<std::uint8_t>{0, 1, 2, 3}, 2);
  EXPECT_EQ(bytes, std::vector<std::uint8_t>{0xE4});
  EXPECT_EQ(unpack_codes(bytes, 2, 4), (std::vector<std::uint8_t>{0, 1, 2, 3}));
  EXPECT_TRUE(pack_codes(std::vector<std::uint8_t>{}, 3).empty());
  EXPECT_TRUE(unpack_codes(std::vector<std::uint8_t>{}, 3, 0).empty());
  EXPECT_THROW((void)pack_codes(std::vector<std::uint8_t>{4}, 2), ContractViolation);
  EXPECT_THROW((void)unpack_codes(std::vector<std::uint8_t>{0}, 3, 3), ContractViolation);
}

TEST(Packing, ThreeBitCodesStraddleBytesLittleEndian) {
  // 5 = 101b at bits 0..2, 6 = 110b at bits 3..5, 7 = 111b at bits 6..8.
  const auto bytes = pack_codes(std::vector<std::uint8_t>{5, 6, 7}, 3);
  ASSERT_EQ(bytes.size(), 2u);
  EXPECT_EQ(bytes[0], 0b11110101);
  EXPECT_EQ(bytes[1], 0b00000001);
}

TEST(Packing, RandomRoundTripAtEveryWidth) {
  Gen g(18);
  for (int bits = 1; bits <= 8; ++bits) {
    std::vector<std::uint8_t> codes(10000);
    for (auto& c : codes) c = static_cast<std::uint8_t>(g.size(0, (1u << bits) - 1));
    const auto bytes = pack_codes(codes, bits);
    EXPECT_EQ(bytes.size(), (codes.size() * bits + 7) / 8);
    EXPECT_EQ(unpack_codes(bytes, bits, codes.size()), codes);
  }
}

TEST(Packing, PaddingIsUnderOneByte) {
  for (int bits = 1; bits <= 8; ++bits)
    for (std::size_t n = 0; n < 40; ++n) {
      const std::size_t size = packed_size(n, bits);
      EXPECT_GE(size * 8, n * bits);
      EXPECT_LT(size * 8, n * bits + 8);
    }
}

}  // namespace
}  // namespace kvott
