// Copyright 2026 The kvott Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvott/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

#include "kvott/attention.hpp"
#include "kvott/error.hpp"
#include "kvott/outlier.hpp"

namespace kvott {
namespace {

constexpr std::string_view kExperimentHeader =
    "mode,bits,group_size,residual,outlier_num,seq_len,l1_output_error,total_bits,ratio_vs_fp16";

std::uint64_t checked_product(std::initializer_list<std::uint64_t> factors) {
  std::uint64_t acc = 1;
  for (auto f : factors) {
    require(f > 0, "estimate_kv_bytes: every argument must be positive");
    require(acc <= std::numeric_limits<std::uint64_t>::max() / f, "estimate_kv_bytes: overflow");
    acc *= f;
  }
  return acc;
}

// Quantize-then-reconstruct one group under the configured quantizer.
std::pair<Matrix, Matrix> round_trip(MatrixView k, MatrixView v, int bits, Quantizer quantizer) {
  if (quantizer == Quantizer::Passthrough)
    return {Matrix(k.rows(), k.cols(), {k.data().begin(), k.data().end()}),
            Matrix(v.rows(), v.cols(), {v.data().begin(), v.data().end()})};
  return {quantize_keys_channelwise(k, bits).dequantize(), quantize_values_tokenwise(v, bits).dequantize()};
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view field, std::size_t line_no) {
  T value{};
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size())
    throw ParseError("malformed CSV field '" + std::string(field) + "'", line_no);
  return value;
}

}  // namespace

std::uint64_t estimate_kv_bytes(std::uint64_t n_layers, std::uint64_t n_heads,
                                std::uint64_t head_dim, std::uint64_t seq_len, std::uint64_t batch,
                                std::uint64_t bytes_per_value) {
  return checked_product({2, bytes_per_value, batch, n_heads, head_dim, seq_len, n_layers});
}

std::string_view to_string(Mode mode) noexcept {
  switch (mode) {
    case Mode::FP16:
      return "fp16";
    case Mode::Baseline:
      return "baseline";
    case Mode::OTT:
      return "ott";
  }
  return "?";
}

std::optional<Mode> parse_mode(std::string_view text) noexcept {
  if (text == "fp16") return Mode::FP16;
  if (text == "baseline") return Mode::Baseline;
  if (text == "ott") return Mode::OTT;
  return std::nullopt;
}

EngineConfig apply_mode(EngineConfig config, Mode mode) {
  switch (mode) {
    case Mode::FP16:
      config.quantizer = Quantizer::Passthrough;
      config.outlier_num = 0;
      break;
    case Mode::Baseline:
      config.outlier_num = 0;
      break;
    case Mode::OTT:
      break;
  }
  return config;
}

std::string_view to_string(Criterion criterion) noexcept {
  switch (criterion) {
    case Criterion::SmallestKey:
      return "smallest";
    case Criterion::LargestKey:
      return "largest";
    case Criterion::Random:
      return "random";
  }
  return "?";
}

std::optional<Criterion> parse_criterion(std::string_view text) noexcept {
  if (text == "smallest") return Criterion::SmallestKey;
  if (text == "largest") return Criterion::LargestKey;
  if (text == "random") return Criterion::Random;
  return std::nullopt;
}

std::vector<std::size_t> select_retained(MatrixView keys, std::size_t budget, Criterion criterion,
                                         std::uint64_t seed) {
  require(budget <= keys.rows(), "select_retained: budget exceeds token count");
  std::vector<std::size_t> order(keys.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto begin = order.begin();
  const auto mid = order.begin() + static_cast<std::ptrdiff_t>(budget);

  if (criterion == Criterion::Random) {
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
  } else {
    const auto scores = score_tokens(keys);
    const bool smallest = criterion == Criterion::SmallestKey;
    std::partial_sort(begin, mid, order.end(), [&](std::size_t a, std::size_t b) {
      if (scores[a] != scores[b]) return smallest ? scores[a] < scores[b] : scores[a] > scores[b];
      return a < b;
    });
  }
  std::vector<std::size_t> kept(begin, mid);
  std::sort(kept.begin(), kept.end());
  return kept;
}

float compare_criteria(const HeadTrace& head, const CriteriaOptions& options) {
  const std::size_t len = head.k.rows();
  require(options.budget < len, "compare_criteria: budget must be < seq_len");
  require(options.group_size >= 1, "compare_criteria: group_size must be >= 1");
  require(head.q.rows() == len && head.v.rows() == len, "compare_criteria: Q/K/V length mismatch");

  const auto retained = select_retained(head.k, options.budget, options.criterion, options.seed);
  Matrix mixed_k(0, head.k.cols());
  Matrix mixed_v(0, head.v.cols());
  for (std::size_t first = 0; first < len; first += options.group_size) {
    const std::size_t count = std::min(options.group_size, len - first);
    std::vector<std::size_t> local;
    for (auto p : retained)
      if (p >= first && p < first + count) local.push_back(p - first);
    const auto [sub_k, sub_v] =
        substitute_means(head.k.slice_rows(first, count), head.v.slice_rows(first, count), local);
    const auto [rec_k, rec_v] = round_trip(sub_k, sub_v, options.bits, options.quantizer);
    for (std::size_t r = 0; r < count; ++r) {
      mixed_k.append_row(rec_k.row(r));
      mixed_v.append_row(rec_v.row(r));
    }
  }
  for (auto p : retained) {
    std::ranges::copy(head.k.row(p), mixed_k.row(p).begin());
    std::ranges::copy(head.v.row(p), mixed_v.row(p).begin());
  }

  const auto query = head.q.row(len - 1);
  const auto approx = attend_full_precision(query, mixed_k, mixed_v);
  const auto exact = attend_full_precision(query, head.k, head.v);
  return l1_error(approx.output, exact.output);
}

std::vector<ExperimentRow> ratio_curve(const EngineConfig& config, Mode mode,
                                       std::span<const std::size_t> seq_lens,
                                       const SyntheticSpec& spec) {
  if (seq_lens.empty()) return {};
  require(std::is_sorted(seq_lens.begin(), seq_lens.end()), "ratio_curve: seq_lens must be ascending");
  require(seq_lens.front() >= 1, "ratio_curve: lengths must be >= 1");
  const EngineConfig effective = apply_mode(config, mode);
  effective.validate();
  const std::size_t max_len = seq_lens.back();

  std::vector<MemoryBreakdown> totals(seq_lens.size());
  for (std::size_t layer = 0; layer < effective.n_layers; ++layer) {
    for (std::size_t head = 0; head < effective.n_heads; ++head) {
      const auto data = generate_head(spec, max_len, effective.head_dim,
                                      derive_seed(spec.seed, layer, head));
      TieredCache cache(effective.cache_config(layer));
      std::size_t next = 0;
      for (std::size_t t = 0; t < max_len && next < seq_lens.size(); ++t) {
        cache.append(data.tensors.k.row(t), data.tensors.v.row(t));
        while (next < seq_lens.size() && seq_lens[next] == t + 1) totals[next++] += cache.memory_usage();
      }
    }
  }

  std::vector<ExperimentRow> rows;
  rows.reserve(seq_lens.size());
  const std::size_t caches = effective.n_layers * effective.n_heads;
  for (std::size_t i = 0; i < seq_lens.size(); ++i) {
    ExperimentRow row;
    row.mode = mode;
    row.bits = effective.quantizer == Quantizer::Passthrough ? 16 : effective.bits;
    row.group_size = effective.group_size;
    row.residual = effective.residual;
    row.outlier_num = effective.outlier_num;
    row.seq_len = seq_lens[i];
    row.l1_output_error = std::numeric_limits<double>::quiet_NaN();
    row.total_bits = totals[i].total_bits;
    const auto baseline = fp16_bits(seq_lens[i], effective.head_dim) * caches;
    row.ratio_vs_fp16 = static_cast<double>(baseline) / static_cast<double>(row.total_bits);
    rows.push_back(row);
  }
  return rows;
}

SimulationResult simulate(const Trace& trace, const EngineConfig& config) {
  EngineConfig dims = config;
  dims.n_layers = trace.header.n_layers;
  dims.n_heads = trace.header.n_heads;
  dims.head_dim = trace.header.head_dim;
  KvEngine engine(dims);

  SimulationResult result;
  const std::size_t len = trace.header.seq_len;
  result.steps.reserve(trace.heads.size() * len);
  double sum = 0.0;
  for (std::size_t layer = 0; layer < dims.n_layers; ++layer) {
    for (std::size_t head = 0; head < dims.n_heads; ++head) {
      const HeadTrace& h = trace.at(layer, head);
      TieredCache& cache = engine.cache(layer, head);
      for (std::size_t t = 0; t < len; ++t) {
        cache.append(h.k.row(t), h.v.row(t));
        const auto query = h.q.row(t);
        const auto mixed = attend_mixed(query, cache);
        const auto exact =
            attend_full_precision(query, h.k.view().first_rows(t + 1), h.v.view().first_rows(t + 1));
        const double weight_sum = std::accumulate(mixed.weights.begin(), mixed.weights.end(), 0.0);
        result.max_weight_sum_error = std::max(result.max_weight_sum_error, std::fabs(weight_sum - 1.0));
        const double err = l1_error(mixed.output, exact.output);
        sum += err;
        result.steps.push_back({layer, head, t, err});
      }
      result.memory.push_back(cache.memory_usage());
      result.total_memory += result.memory.back();
    }
  }
  result.fp16_bits = fp16_bits(len, dims.head_dim) * trace.heads.size();
  result.mean_l1_error = result.steps.empty() ? 0.0 : sum / static_cast<double>(result.steps.size());
  return result;
}

ExperimentRow summarize(const SimulationResult& result, const EngineConfig& config, Mode mode,
                        std::size_t seq_len) {
  ExperimentRow row;
  row.mode = mode;
  row.bits = config.quantizer == Quantizer::Passthrough ? 16 : config.bits;
  row.group_size = config.group_size;
  row.residual = config.residual;
  row.outlier_num = config.outlier_num;
  row.seq_len = seq_len;
  row.l1_output_error = result.mean_l1_error;
  row.total_bits = result.total_memory.total_bits;
  row.ratio_vs_fp16 = row.total_bits == 0
                          ? 1.0
                          : static_cast<double>(result.fp16_bits) / static_cast<double>(row.total_bits);
  return row;
}

std::string format_sig6(double value) {
  if (std::isnan(value)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", value);
  return buf;
}

void write_experiment_csv(std::ostream& out, std::span<const ExperimentRow> rows) {
  out << kExperimentHeader << '\n';
  for (const auto& r : rows) {
    out << to_string(r.mode) << ',' << r.bits << ',' << r.group_size << ',' << r.residual << ','
        << r.outlier_num << ',' << r.seq_len << ',' << format_sig6(r.l1_output_error) << ','
        << r.total_bits << ',' << format_sig6(r.ratio_vs_fp16) << '\n';
  }
}

std::vector<ExperimentRow> read_experiment_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kExperimentHeader) throw ParseError("missing CSV header", 0);
  std::vector<ExperimentRow> rows;
  for (std::size_t line_no = 1; std::getline(in, line); ++line_no) {
    if (line.empty()) continue;
    const auto fields = split(line, ',');
    if (fields.size() != 9) throw ParseError("expected 9 CSV fields", line_no);
    ExperimentRow r;
    const auto mode = parse_mode(fields[0]);
    if (!mode) throw ParseError("unknown mode '" + std::string(fields[0]) + "'", line_no);
    r.mode = *mode;
    r.bits = parse_number<int>(fields[1], line_no);
    r.group_size = parse_number<std::size_t>(fields[2], line_no);
    r.residual = parse_number<std::size_t>(fields[3], line_no);
    r.outlier_num = parse_number<std::size_t>(fields[4], line_no);
    r.seq_len = parse_number<std::size_t>(fields[5], line_no);
    r.l1_output_error = parse_number<double>(fields[6], line_no);
    r.total_bits = parse_number<std::uint64_t>(fields[7], line_no);
    r.ratio_vs_fp16 = parse_number<double>(fields[8], line_no);
    rows.push_back(r);
  }
  return rows;
}

void write_memory_csv(std::ostream& out, const SimulationResult& result, std::size_t n_heads) {
  out << "layer,head,quantized_bits,param_bits,pending_bits,pool_bits,total_bits\n";
  auto emit = [&](const std::string& layer, const std::string& head, const MemoryBreakdown& m) {
    out << layer << ',' << head << ',' << m.quantized_bits << ',' << m.param_bits << ','
        << m.pending_bits << ',' << m.pool_bits << ',' << m.total_bits << '\n';
  };
  for (std::size_t i = 0; i < result.memory.size(); ++i)
    emit(std::to_string(i / n_heads), std::to_string(i % n_heads), result.memory[i]);
  emit("all", "all", result.total_memory);
}

void write_step_csv(std::ostream& out, std::span<const StepError> steps) {
  out << "layer,head,step,l1_error\n";
  for (const auto& s : steps)
    out << s.layer << ',' << s.head << ',' << s.step << ',' << format_sig6(s.l1_error) << '\n';
}

}  // namespace kvott
