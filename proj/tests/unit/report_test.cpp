// Copyright 2026 The kvott Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvott/report.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>

#include "kvott/attention.hpp"
#include "kvott/error.hpp"
#include "kvott_test/generators.hpp"

namespace kvott {
namespace {

using testing::Gen;

TEST(EstimateKvBytes, LargeModelSetting) {
  const auto bytes = estimate_kv_bytes(32, 8, 512, 8192, 64, 2);
  EXPECT_EQ(bytes, 274877906944ull);
  EXPECT_EQ(bytes, 256ull << 30);
}

TEST(EstimateKvBytes, UnitAndErrors) {
  EXPECT_EQ(estimate_kv_bytes(1, 1, 1, 1, 1, 2), 4u);
  EXPECT_THROW((void)estimate_kv_bytes(1, 1, 1, 1, 0, 2), ContractViolation);
  EXPECT_THROW((void)estimate_kv_bytes(1u << 20, 1u << 20, 1u << 20, 1u << 20, 1, 2), ContractViolation);
}

TEST(EstimateKvBytes, LinearInEachArgument) {
  Gen g(61);
  for (int trial = 0; trial < 200; ++trial) {
    std::array<std::uint64_t, 6> a{};
    for (auto& x : a) x = g.size(1, 64);
    const auto base = estimate_kv_bytes(a[0], a[1], a[2], a[3], a[4], a[5]);
    EXPECT_EQ(base, 2 * a[0] * a[1] * a[2] * a[3] * a[4] * a[5]);
    for (std::size_t i = 0; i < 6; ++i) {
      auto b = a;
      const std::uint64_t k = g.size(2, 9);
      b[i] *= k;
      EXPECT_EQ(estimate_kv_bytes(b[0], b[1], b[2], b[3], b[4], b[5]), k * base);
    }
  }
}

TEST(Modes, NamesRoundTrip) {
  for (Mode m : {Mode::FP16, Mode::Baseline, Mode::OTT}) EXPECT_EQ(parse_mode(to_string(m)), m);
  for (Criterion c : {Criterion::SmallestKey, Criterion::LargestKey, Criterion::Random})
    EXPECT_EQ(parse_criterion(to_string(c)), c);
  EXPECT_FALSE(parse_mode("kivi").has_value());
  EXPECT_FALSE(parse_criterion("median").has_value());
}

TEST(Modes, ApplyMode) {
  const EngineConfig e;
  EXPECT_EQ(apply_mode(e, Mode::OTT).outlier_num, 3u);
  EXPECT_EQ(apply_mode(e, Mode::Baseline).outlier_num, 0u);
  EXPECT_EQ(apply_mode(e, Mode::Baseline).quantizer, Quantizer::Uniform);
  EXPECT_EQ(apply_mode(e, Mode::FP16).quantizer, Quantizer::Passthrough);
  EXPECT_EQ(apply_mode(e, Mode::FP16).outlier_num, 0u);
}

TEST(SelectRetained, MatchesSortOracle) {
  Gen g(62);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix k = g.matrix(g.size(1, 100), 4, -3, 3);
    const std::size_t n = g.size(0, k.rows());
    std::vector<std::pair<float, std::size_t>> by_score;
    for (std::size_t r = 0; r < k.rows(); ++r) by_score.emplace_back(row_l1_norm(k, r), r);
    std::sort(by_score.begin(), by_score.end());
    std::vector<std::size_t> lo, hi;
    for (std::size_t i = 0; i < n; ++i) {
      lo.push_back(by_score[i].second);
      hi.push_back(by_score[by_score.size() - 1 - i].second);
    }
    std::sort(lo.begin(), lo.end());
    std::sort(hi.begin(), hi.end());
    EXPECT_EQ(select_retained(k, n, Criterion::SmallestKey, 0), lo);
    EXPECT_EQ(select_retained(k, n, Criterion::LargestKey, 0), hi);
    const auto r1 = select_retained(k, n, Criterion::Random, 9);
    EXPECT_EQ(r1, select_retained(k, n, Criterion::Random, 9));
    EXPECT_EQ(r1.size(), n);
    EXPECT_TRUE(std::is_sorted(r1.begin(), r1.end()));
    EXPECT_EQ(std::adjacent_find(r1.begin(), r1.end()), r1.end());
  }
  EXPECT_THROW((void)select_retained(Matrix(2, 2), 3, Criterion::Random, 0), ContractViolation);
}

HeadTrace random_head(Gen& g, std::size_t len, std::size_t d) {
  return {g.matrix(len, d, -2, 2), g.matrix(len, d, -2, 2), g.matrix(len, d, -2, 2)};
}

TEST(CompareCriteria, AlmostEverythingRetainedIsNearlyExact) {
  Gen g(63);
  const HeadTrace h = random_head(g, 64, 8);
  CriteriaOptions o;
  o.budget = 63;
  o.group_size = 16;
  o.quantizer = Quantizer::Passthrough;
  for (Criterion c : {Criterion::SmallestKey, Criterion::LargestKey, Criterion::Random}) {
    o.criterion = c;
    EXPECT_NEAR(compare_criteria(h, o), 0.0f, 1e-5f);
  }
}

TEST(CompareCriteria, ZeroBudgetIsCriterionFree) {
  Gen g(64);
  const HeadTrace h = random_head(g, 200, 8);
  CriteriaOptions o;
  o.budget = 0;
  o.criterion = Criterion::SmallestKey;
  const float s = compare_criteria(h, o);
  o.criterion = Criterion::LargestKey;
  EXPECT_EQ(compare_criteria(h, o), s);
  o.criterion = Criterion::Random;
  EXPECT_EQ(compare_criteria(h, o), s);
  EXPECT_GT(s, 0.0f);
}

TEST(CompareCriteria, BudgetMustLeaveATokenToQuantize) {
  Gen g(65);
  const HeadTrace h = random_head(g, 10, 4);
  CriteriaOptions o;
  o.budget = 10;
  EXPECT_THROW((void)compare_criteria(h, o), ContractViolation);
}

TEST(CompareCriteria, RetainingPlantedTokensHelpsMost) {
  const SyntheticSpec spec;
  double s = 0.0, r = 0.0, l = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const std::uint64_t derived = derive_seed(seed, 0, 0);
    const auto h = generate_head(spec, 1024, 64, derived).tensors;
    CriteriaOptions o;
    o.seed = derived;
    o.criterion = Criterion::SmallestKey;
    s += compare_criteria(h, o);
    o.criterion = Criterion::Random;
    r += compare_criteria(h, o);
    o.criterion = Criterion::LargestKey;
    l += compare_criteria(h, o);
  }
  EXPECT_LT(s, r);
  EXPECT_LT(r, l);
}

EngineConfig single_head(std::size_t d = 64) {
  EngineConfig e;
  e.skip_layers.clear();
  e.head_dim = d;
  return e;
}

TEST(RatioCurve, NothingQuantizedBelowGroupPlusResidual) {
  const std::vector<std::size_t> lens{30, 100, 159};
  for (const auto& row : ratio_curve(single_head(), Mode::OTT, lens, SyntheticSpec{})) {
    EXPECT_EQ(row.ratio_vs_fp16, 1.0);
    EXPECT_TRUE(std::isnan(row.l1_output_error));
  }
}

TEST(RatioCurve, PassthroughStaysAtOne) {
  const std::vector<std::size_t> lens{50, 160, 1000, 4000};
  for (const auto& row : ratio_curve(single_head(), Mode::FP16, lens, SyntheticSpec{})) {
    EXPECT_EQ(row.ratio_vs_fp16, 1.0);
    EXPECT_EQ(row.bits, 16);
    EXPECT_EQ(row.outlier_num, 0u);
  }
}

TEST(RatioCurve, LongSequenceRatioInBand) {
  const std::vector<std::size_t> lens{65536};
  const auto rows = ratio_curve(single_head(), Mode::OTT, lens, SyntheticSpec{});
  EXPECT_GE(rows[0].ratio_vs_fp16, 6.0);
  EXPECT_LE(rows[0].ratio_vs_fp16, 7.2);
  EXPECT_EQ(rows[0].seq_len, 65536u);
}

// Between quantization events the ratio falls as full-precision rows pile up,
// so monotonicity and convergence are checked at lengths k*G + R.
TEST(RatioCurve, MonotoneAndConvergentAtGroupAlignedLengths) {
  std::vector<std::size_t> lens;
  for (std::size_t k = 1; k <= 512; k *= 2) lens.push_back(k * 128 + 32);
  const auto rows = ratio_curve(single_head(), Mode::OTT, lens, SyntheticSpec{});
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_GE(rows[i].ratio_vs_fp16, rows[i - 1].ratio_vs_fp16);
  const double block_rate = 262144.0 / 38912.0;
  EXPECT_NEAR(rows.back().ratio_vs_fp16 / block_rate, 1.0, 0.01);
}

TEST(RatioCurve, SawtoothBetweenEvents) {
  const std::vector<std::size_t> lens{160, 287, 288};
  const auto rows = ratio_curve(single_head(), Mode::Baseline, lens, SyntheticSpec{});
  EXPECT_GT(rows[0].ratio_vs_fp16, rows[1].ratio_vs_fp16);
  EXPECT_GT(rows[2].ratio_vs_fp16, rows[1].ratio_vs_fp16);
}

TEST(RatioCurve, RejectsUnsortedLengths) {
  const std::vector<std::size_t> lens{200, 100};
  EXPECT_THROW((void)ratio_curve(single_head(), Mode::OTT, lens, SyntheticSpec{}), ContractViolation);
}

Trace small_trace(std::uint64_t seed, std::uint32_t layers, std::uint32_t len) {
  SyntheticSpec s;
  s.seed = seed;
  return generate_synthetic(s, {layers, 2, 16, len});
}

TEST(Simulate, Fp16ModeIsExact) {
  const Trace t = small_trace(1, 2, 300);
  EngineConfig e = apply_mode(EngineConfig{}, Mode::FP16);
  e.group_size = 32;
  e.residual = 8;
  const auto r = simulate(t, e);
  ASSERT_EQ(r.steps.size(), 2u * 2 * 300);
  for (const auto& s : r.steps) ASSERT_EQ(s.l1_error, 0.0);
  EXPECT_EQ(r.mean_l1_error, 0.0);
  EXPECT_LE(r.max_weight_sum_error, 1e-6);
  const auto row = summarize(r, e, Mode::FP16, 300);
  EXPECT_EQ(row.ratio_vs_fp16, 1.0);
  EXPECT_EQ(row.total_bits, r.fp16_bits);
}

TEST(Simulate, StepsAndMemoryAreConsistent) {
  const Trace t = small_trace(2, 3, 200);
  EngineConfig e;
  e.group_size = 32;
  e.residual = 8;
  const auto r = simulate(t, e);
  ASSERT_EQ(r.memory.size(), 6u);
  MemoryBreakdown total;
  for (const auto& m : r.memory) total += m;
  EXPECT_EQ(total, r.total_memory);
  EXPECT_EQ(r.fp16_bits, 6 * fp16_bits(200, 16));
  EXPECT_LE(r.max_weight_sum_error, 1e-6);
  // Before the first quantization event every tier is full precision.
  for (const auto& s : r.steps)
    if (s.step + 1 < 40) {
      ASSERT_EQ(s.l1_error, 0.0);
    }
  const auto row = summarize(r, e, Mode::OTT, 200);
  EXPECT_GT(row.ratio_vs_fp16, 1.0);
  EXPECT_GT(row.l1_output_error, 0.0);
}

TEST(Simulate, OttBeatsBaselineOnSyntheticTraces) {
  double ott = 0.0, base = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SyntheticSpec s;
    s.seed = seed;
    const Trace t = generate_synthetic(s, {1, 1, 64, 512});
    EngineConfig e = single_head();
    ott += simulate(t, apply_mode(e, Mode::OTT)).mean_l1_error;
    base += simulate(t, apply_mode(e, Mode::Baseline)).mean_l1_error;
  }
  EXPECT_LT(ott, base);
}

TEST(Csv, FormatSig6) {
  EXPECT_EQ(format_sig6(6.4), "6.4");
  EXPECT_EQ(format_sig6(1234567.0), "1.23457e+06");
  EXPECT_EQ(format_sig6(0.000123456789), "0.000123457");
  EXPECT_EQ(format_sig6(std::numeric_limits<double>::quiet_NaN()), "nan");
}

ExperimentRow random_row(Gen& g) {
  ExperimentRow r;
  r.mode = static_cast<Mode>(g.size(0, 2));
  r.bits = static_cast<int>(g.size(1, 16));
  r.group_size = g.size(1, 1024);
  r.residual = g.size(0, 256);
  r.outlier_num = g.size(0, 8);
  r.seq_len = g.size(1, 1u << 20);
  r.l1_output_error = g.coin() ? std::numeric_limits<double>::quiet_NaN() : g.uniform_d(0, 1e3);
  r.total_bits = g.size(0, 1ull << 40);
  r.ratio_vs_fp16 = g.uniform_d(0.5, 16);
  return r;
}

TEST(Csv, ExperimentRoundTrip) {
  Gen g(66);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<ExperimentRow> rows(g.size(0, 20));
    for (auto& r : rows) r = random_row(g);
    std::stringstream first;
    write_experiment_csv(first, rows);
    std::stringstream in(first.str());
    const auto back = read_experiment_csv(in);
    ASSERT_EQ(back.size(), rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      EXPECT_EQ(back[i].mode, rows[i].mode);
      EXPECT_EQ(back[i].bits, rows[i].bits);
      EXPECT_EQ(back[i].group_size, rows[i].group_size);
      EXPECT_EQ(back[i].residual, rows[i].residual);
      EXPECT_EQ(back[i].outlier_num, rows[i].outlier_num);
      EXPECT_EQ(back[i].seq_len, rows[i].seq_len);
      EXPECT_EQ(back[i].total_bits, rows[i].total_bits);
      EXPECT_EQ(std::isnan(back[i].l1_output_error), std::isnan(rows[i].l1_output_error));
      if (!std::isnan(rows[i].l1_output_error)) {
        EXPECT_NEAR(back[i].l1_output_error, rows[i].l1_output_error, 5e-6 * rows[i].l1_output_error);
      }
      EXPECT_NEAR(back[i].ratio_vs_fp16, rows[i].ratio_vs_fp16, 5e-6 * rows[i].ratio_vs_fp16);
    }
    std::stringstream second;
    write_experiment_csv(second, back);
    EXPECT_EQ(second.str(), first.str());
  }
}

TEST(Csv, HeaderOrder) {
  std::stringstream out;
  write_experiment_csv(out, std::vector<ExperimentRow>{});
  EXPECT_EQ(out.str(),
            "mode,bits,group_size,residual,outlier_num,seq_len,l1_output_error,total_bits,ratio_vs_fp16\n");
}

std::uint64_t csv_error_line(const std::string& text) {
  std::stringstream in(text);
  try {
    (void)read_experiment_csv(in);
  } catch (const ParseError& e) {
    return e.offset();
  }
  ADD_FAILURE() << "expected ParseError";
  return ~0ull;
}

TEST(Csv, MalformedInputReportsLine) {
  const std::string header =
      "mode,bits,group_size,residual,outlier_num,seq_len,l1_output_error,total_bits,ratio_vs_fp16\n";
  EXPECT_EQ(csv_error_line("nope\n"), 0u);
  EXPECT_EQ(csv_error_line(header + "ott,2,128,32,3,10,nan,100,1\nott,2,128,32\n"), 2u);
  EXPECT_EQ(csv_error_line(header + "kivi,2,128,32,3,10,nan,100,1\n"), 1u);
  EXPECT_EQ(csv_error_line(header + "ott,two,128,32,3,10,nan,100,1\n"), 1u);
}

TEST(Csv, StepAndMemoryWriters) {
  const Trace t = small_trace(3, 1, 50);
  EngineConfig e;
  e.group_size = 16;
  e.residual = 4;
  const auto r = simulate(t, e);
  std::stringstream steps, memory;
  write_step_csv(steps, r.steps);
  write_memory_csv(memory, r, 2);
  std::string line;
  std::size_t lines = 0;
  while (std::getline(steps, line)) ++lines;
  EXPECT_EQ(lines, 1 + r.steps.size());
  std::getline(memory, line);
  EXPECT_EQ(line, "layer,head,quantized_bits,param_bits,pending_bits,pool_bits,total_bits");
  std::getline(memory, line);
  EXPECT_EQ(line.rfind("0,0,", 0), 0u);
  std::getline(memory, line);
  EXPECT_EQ(line.rfind("0,1,", 0), 0u);
  std::getline(memory, line);
  EXPECT_EQ(line, "all,all," + std::to_string(r.total_memory.quantized_bits) + "," +
                      std::to_string(r.total_memory.param_bits) + "," +
                      std::to_string(r.total_memory.pending_bits) + "," +
                      std::to_string(r.total_memory.pool_bits) + "," +
                      std::to_string(r.total_memory.total_bits));
}

}  // namespace
}  // namespace kvott
