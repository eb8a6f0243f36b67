// Copyright 2026 The kvott Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <random>

#include "kvott/attention.hpp"
#include "kvott/cache.hpp"
#include "kvott/outlier.hpp"
#include "kvott/quant.hpp"

namespace {

using namespace kvott;

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> dist;
  std::vector<float> data(rows * cols);
  for (auto& x : data) x = dist(rng);
  return Matrix(rows, cols, std::move(data));
}

void BM_QuantizeKeys(benchmark::State& state) {
  const int bits = static_cast<int>(state.range(0));
  const Matrix group = random_matrix(128, 64, 1);
  for (auto _ : state) benchmark::DoNotOptimize(quantize_keys_channelwise(group, bits));
  state.SetItemsProcessed(state.iterations() * 128 * 64);
}
BENCHMARK(BM_QuantizeKeys)->Arg(2)->Arg(4)->Arg(8);

void BM_QuantizeValues(benchmark::State& state) {
  const Matrix group = random_matrix(128, 64, 2);
  for (auto _ : state) benchmark::DoNotOptimize(quantize_values_tokenwise(group, 2));
  state.SetItemsProcessed(state.iterations() * 128 * 64);
}
BENCHMARK(BM_QuantizeValues);

void BM_PackUnpack(benchmark::State& state) {
  const int bits = static_cast<int>(state.range(0));
  std::mt19937_64 rng(3);
  std::vector<std::uint8_t> codes(8192);
  for (auto& c : codes) c = static_cast<std::uint8_t>(rng() & ((1u << bits) - 1));
  for (auto _ : state) {
    const auto packed = pack_codes(codes, bits);
    benchmark::DoNotOptimize(unpack_codes(packed, bits, codes.size()));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(codes.size()));
}
BENCHMARK(BM_PackUnpack)->Arg(1)->Arg(2)->Arg(3)->Arg(4)->Arg(8);

void BM_AttendMixed(benchmark::State& state) {
  const auto len = static_cast<std::size_t>(state.range(0));
  CacheConfig c;
  TieredCache cache(c);
  const Matrix k = random_matrix(len, c.head_dim, 4);
  const Matrix v = random_matrix(len, c.head_dim, 5);
  for (std::size_t t = 0; t < len; ++t) cache.append(k.row(t), v.row(t));
  const Matrix q = random_matrix(1, c.head_dim, 6);
  for (auto _ : state) benchmark::DoNotOptimize(attend_mixed(q.row(0), cache));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(len));
}
BENCHMARK(BM_AttendMixed)->Arg(1024)->Arg(8192);

void BM_AttendFullPrecision(benchmark::State& state) {
  const auto len = static_cast<std::size_t>(state.range(0));
  const Matrix k = random_matrix(len, 64, 4);
  const Matrix v = random_matrix(len, 64, 5);
  const Matrix q = random_matrix(1, 64, 6);
  for (auto _ : state) benchmark::DoNotOptimize(attend_full_precision(q.row(0), k, v));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(len));
}
BENCHMARK(BM_AttendFullPrecision)->Arg(1024)->Arg(8192);

void BM_CacheAppend(benchmark::State& state) {
  const Matrix k = random_matrix(4096, 64, 7);
  const Matrix v = random_matrix(4096, 64, 8);
  for (auto _ : state) {
    TieredCache cache{CacheConfig{}};
    for (std::size_t t = 0; t < k.rows(); ++t) cache.append(k.row(t), v.row(t));
    benchmark::DoNotOptimize(cache.memory_usage());
  }
  state.SetItemsProcessed(state.iterations() * 4096);
}
BENCHMARK(BM_CacheAppend);

void BM_PoolUpdate(benchmark::State& state) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<float> dist(0.0f, 100.0f);
  for (auto _ : state) {
    OutlierPool pool(3, 1u << 20);
    for (std::size_t g = 0; g < 64; ++g) {
      std::vector<OutlierEntry> group(128);
      for (std::size_t i = 0; i < group.size(); ++i) {
        group[i].position = g * 128 + i;
        group[i].score = dist(rng);
      }
      benchmark::DoNotOptimize(pool.update(std::move(group)));
    }
  }
  state.SetItemsProcessed(state.iterations() * 64 * 128);
}
BENCHMARK(BM_PoolUpdate);

}  // namespace

BENCHMARK_MAIN();
