// Copyright 2026 The kvott Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvott/trace.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "kvott/error.hpp"

namespace kvott {
namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[offset + i]) << (8 * i);
  return v;
}

void put_matrix(std::vector<std::uint8_t>& out, const Matrix& m) {
  for (float f : m.data()) put_u32(out, std::bit_cast<std::uint32_t>(f));
}

bool checked_mul(std::uint64_t a, std::uint64_t b, std::uint64_t& out) {
  if (a != 0 && b > std::numeric_limits<std::uint64_t>::max() / a) return false;
  out = a * b;
  return true;
}

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

const HeadTrace& Trace::at(std::size_t layer, std::size_t head) const {
  require(layer < header.n_layers && head < header.n_heads, "Trace::at: index out of range");
  return heads[layer * header.n_heads + head];
}

std::vector<std::uint8_t> encode_trace(const Trace& trace) {
  const auto& h = trace.header;
  require(h.n_layers >= 1 && h.n_heads >= 1 && h.head_dim >= 1 && h.seq_len >= 1,
          "encode_trace: all dimensions must be >= 1");
  require(trace.heads.size() == static_cast<std::size_t>(h.n_layers) * h.n_heads,
          "encode_trace: head count does not match header");
  for (const auto& head : trace.heads)
    for (const Matrix* m : {&head.q, &head.k, &head.v})
      require(m->rows() == h.seq_len && m->cols() == h.head_dim,
              "encode_trace: tensor shape does not match header");

  std::vector<std::uint8_t> out(kTraceMagic.begin(), kTraceMagic.end());
  out.reserve(kTraceHeaderBytes + trace.heads.size() * 3 * h.seq_len * h.head_dim * 4);
  put_u32(out, h.n_layers);
  put_u32(out, h.n_heads);
  put_u32(out, h.head_dim);
  put_u32(out, h.seq_len);
  for (const auto& head : trace.heads) {
    put_matrix(out, head.q);
    put_matrix(out, head.k);
    put_matrix(out, head.v);
  }
  return out;
}

Trace decode_trace(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kTraceMagic.size()) throw ParseError("truncated trace header", bytes.size());
  if (!std::equal(kTraceMagic.begin(), kTraceMagic.end(), bytes.begin(),
                  [](char a, std::uint8_t b) { return static_cast<std::uint8_t>(a) == b; }))
    throw ParseError("bad trace magic, expected KVTRACE1", 0);
  if (bytes.size() < kTraceHeaderBytes) throw ParseError("truncated trace header", bytes.size());

  Trace trace;
  trace.header.n_layers = get_u32(bytes, 8);
  trace.header.n_heads = get_u32(bytes, 12);
  trace.header.head_dim = get_u32(bytes, 16);
  trace.header.seq_len = get_u32(bytes, 20);
  const std::uint32_t dims[] = {trace.header.n_layers, trace.header.n_heads, trace.header.head_dim,
                                trace.header.seq_len};
  for (std::size_t i = 0; i < 4; ++i)
    if (dims[i] == 0) throw ParseError("trace dimension must be >= 1", 8 + 4 * i);

  std::uint64_t elements = 3;
  for (auto d : dims)
    if (!checked_mul(elements, d, elements)) throw ParseError("trace dimensions overflow", 8);
  std::uint64_t payload = 0;
  if (!checked_mul(elements, 4, payload) ||
      payload > std::numeric_limits<std::uint64_t>::max() - kTraceHeaderBytes)
    throw ParseError("trace dimensions overflow", 8);
  const std::uint64_t expected = kTraceHeaderBytes + payload;
  if (bytes.size() < expected) throw ParseError("truncated trace payload", bytes.size());
  if (bytes.size() > expected) throw ParseError("trailing bytes after trace payload", expected);

  const std::size_t rows = trace.header.seq_len;
  const std::size_t cols = trace.header.head_dim;
  std::size_t offset = kTraceHeaderBytes;
  auto read_matrix = [&]() {
    std::vector<float> data(rows * cols);
    for (auto& f : data) {
      f = std::bit_cast<float>(get_u32(bytes, offset));
      if (!std::isfinite(f)) throw ParseError("non-finite value in trace payload", offset);
      offset += 4;
    }
    return Matrix(rows, cols, std::move(data));
  };

  const std::size_t n_heads = static_cast<std::size_t>(trace.header.n_layers) * trace.header.n_heads;
  trace.heads.reserve(n_heads);
  for (std::size_t i = 0; i < n_heads; ++i) {
    HeadTrace h;
    h.q = read_matrix();
    h.k = read_matrix();
    h.v = read_matrix();
    trace.heads.push_back(std::move(h));
  }
  return trace;
}

void write_trace(const std::filesystem::path& path, const Trace& trace) {
  const auto bytes = encode_trace(trace);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Trace read_trace(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  return decode_trace(bytes);
}

void SyntheticSpec::validate(std::size_t seq_len, std::size_t head_dim) const {
  require(seq_len >= 1 && head_dim >= 1, "synthetic trace: dimensions must be >= 1");
  require(std::isfinite(mu) && std::isfinite(sigma) && std::isfinite(q_scale),
          "synthetic trace: non-finite parameter");
  require(sigma >= 0.0f, "synthetic trace: sigma must be >= 0");
  require(eps > 0.0f && eps <= delta && delta < mu - sigma,
          "synthetic trace: need 0 < eps <= delta < mu - sigma");
  require(m <= seq_len / 10, "synthetic trace: m must be <= seq_len / 10");
  require(outlier_channels <= head_dim, "synthetic trace: more outlier channels than head_dim");
}

SyntheticHead generate_head(const SyntheticSpec& spec, std::size_t seq_len, std::size_t head_dim,
                            std::uint64_t seed) {
  spec.validate(seq_len, head_dim);
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> noise(0.0f, 1.0f);

  SyntheticHead out;
  std::vector<std::size_t> channels(head_dim);
  std::iota(channels.begin(), channels.end(), std::size_t{0});
  std::shuffle(channels.begin(), channels.end(), rng);
  out.outlier_channels.assign(channels.begin(), channels.begin() + static_cast<std::ptrdiff_t>(spec.outlier_channels));
  std::sort(out.outlier_channels.begin(), out.outlier_channels.end());

  std::vector<std::size_t> rows(seq_len);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  std::shuffle(rows.begin(), rows.end(), rng);
  out.planted_rows.assign(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(spec.m));
  std::sort(out.planted_rows.begin(), out.planted_rows.end());

  auto gaussian = [&]() {
    std::vector<float> data(seq_len * head_dim);
    for (auto& x : data) x = noise(rng);
    return Matrix(seq_len, head_dim, std::move(data));
  };
  out.tensors.q = gaussian();
  out.tensors.k = gaussian();
  out.tensors.v = gaussian();

  std::uniform_real_distribution<float> bulk(spec.mu - spec.sigma, spec.mu + spec.sigma);
  std::uniform_real_distribution<float> low(spec.eps, spec.delta);
  std::vector<bool> planted(seq_len, false);
  for (auto r : out.planted_rows) planted[r] = true;
  for (auto c : out.outlier_channels) {
    for (std::size_t t = 0; t < seq_len; ++t) {
      // uniform_real_distribution is half-open; eps == delta still yields eps.
      out.tensors.k(t, c) = planted[t] ? (spec.eps == spec.delta ? spec.eps : low(rng)) : bulk(rng);
      out.tensors.q(t, c) = -spec.q_scale;
    }
  }
  return out;
}

Trace generate_synthetic(const SyntheticSpec& spec, const TraceHeader& dims) {
  require(dims.n_layers >= 1 && dims.n_heads >= 1, "generate_synthetic: dimensions must be >= 1");
  Trace trace;
  trace.header = dims;
  trace.heads.reserve(static_cast<std::size_t>(dims.n_layers) * dims.n_heads);
  for (std::size_t layer = 0; layer < dims.n_layers; ++layer)
    for (std::size_t head = 0; head < dims.n_heads; ++head)
      trace.heads.push_back(
          generate_head(spec, dims.seq_len, dims.head_dim, derive_seed(spec.seed, layer, head)).tensors);
  return trace;
}

std::uint64_t derive_seed(std::uint64_t root, std::size_t layer, std::size_t head) noexcept {
  return splitmix64(splitmix64(splitmix64(root) ^ static_cast<std::uint64_t>(layer)) ^
                    static_cast<std::uint64_t>(head));
}

std::array<double, 10> decile_stats(std::span<const float> values) {
  if (values.empty()) throw DegenerateInput("decile_stats: empty column");
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  if (!(*hi > *lo)) throw DegenerateInput("decile_stats: constant column has no range");
  const double min = *lo;
  const double span = static_cast<double>(*hi) - min;

  std::array<std::size_t, 10> counts{};
  for (float v : values) {
    const auto bucket = static_cast<std::size_t>(std::floor((v - min) / span * 10.0));
    ++counts[std::min<std::size_t>(bucket, 9)];
  }
  std::array<double, 10> pct{};
  for (std::size_t i = 0; i < 10; ++i)
    pct[i] = 100.0 * static_cast<double>(counts[i]) / static_cast<double>(values.size());
  return pct;
}

std::size_t largest_magnitude_channel(MatrixView keys) {
  require(!keys.empty() && keys.cols() > 0, "largest_magnitude_channel: empty matrix");
  std::vector<double> mag(keys.cols(), 0.0);
  for (std::size_t r = 0; r < keys.rows(); ++r)
    for (std::size_t c = 0; c < keys.cols(); ++c) mag[c] += std::fabs(keys(r, c));
  return static_cast<std::size_t>(std::max_element(mag.begin(), mag.end()) - mag.begin());
}

std::vector<float> column(MatrixView m, std::size_t channel) {
  require(channel < m.cols(), "column: channel out of range");
  std::vector<float> out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) out[r] = m(r, channel);
  return out;
}

}  // namespace kvott
