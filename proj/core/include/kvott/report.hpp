// Copyright 2026 The kvott Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kvott/cache.hpp"
#include "kvott/trace.hpp"

namespace kvott {

/// Bytes needed to hold keys and values for a batch:
/// 2 * bytes_per_value * batch * n_heads * head_dim * seq_len * n_layers.
/// Throws ContractViolation on a zero argument or on overflow.
std::uint64_t estimate_kv_bytes(std::uint64_t n_layers, std::uint64_t n_heads,
                                std::uint64_t head_dim, std::uint64_t seq_len, std::uint64_t batch,
                                std::uint64_t bytes_per_value);

enum class Mode : std::uint8_t { FP16, Baseline, OTT };

std::string_view to_string(Mode mode) noexcept;
std::optional<Mode> parse_mode(std::string_view text) noexcept;

/// Engine settings for a mode: FP16 stores everything raw with no outlier
/// pool, Baseline disables the outlier pool on every layer, OTT leaves the
/// configuration as given.
EngineConfig apply_mode(EngineConfig config, Mode mode);

/// Token-retention rule for the post-hoc criteria experiment.
enum class Criterion : std::uint8_t { SmallestKey, LargestKey, Random };

std::string_view to_string(Criterion criterion) noexcept;
std::optional<Criterion> parse_criterion(std::string_view text) noexcept;

struct CriteriaOptions {
  std::size_t budget = 3;
  Criterion criterion = Criterion::SmallestKey;
  int bits = 2;
  std::size_t group_size = 128;
  Quantizer quantizer = Quantizer::Uniform;
  std::uint64_t seed = 0;  // drives Random
};

/// Keeps `budget` tokens, chosen over the whole sequence by key L1 norm (or
/// at random), in full precision; quantizes everything else in consecutive
/// groups of `group_size` (the last group may be short) with retained rows
/// mean-substituted. Returns the L1 distance between the attention output
/// for the final query over that mixed cache and the full-precision output.
float compare_criteria(const HeadTrace& head, const CriteriaOptions& options);

/// Positions a criterion retains, ascending.
std::vector<std::size_t> select_retained(MatrixView keys, std::size_t budget, Criterion criterion,
                                         std::uint64_t seed);

struct ExperimentRow {
  Mode mode = Mode::OTT;
  int bits = 2;
  std::size_t group_size = 128;
  std::size_t residual = 32;
  std::size_t outlier_num = 3;
  std::size_t seq_len = 0;
  double l1_output_error = 0.0;  // NaN when the experiment measures memory only
  std::uint64_t total_bits = 0;
  double ratio_vs_fp16 = 1.0;
};

/// Replays a synthetic trace (dims from `config`, seeded by `spec.seed`)
/// through every (layer, head) cache and records fp16-equivalent bits over
/// stored bits at each requested length. `seq_lens` must be ascending.
std::vector<ExperimentRow> ratio_curve(const EngineConfig& config, Mode mode,
                                       std::span<const std::size_t> seq_lens,
                                       const SyntheticSpec& spec);

struct StepError {
  std::size_t layer = 0;
  std::size_t head = 0;
  std::size_t step = 0;
  double l1_error = 0.0;
};

struct SimulationResult {
  std::vector<StepError> steps;
  std::vector<MemoryBreakdown> memory;  // per cache, layer-major
  MemoryBreakdown total_memory;
  std::uint64_t fp16_bits = 0;
  double mean_l1_error = 0.0;
  double max_weight_sum_error = 0.0;  // max |sum(weights) - 1| over all calls
};

/// Token-by-token decode replay: after appending token t to every cache,
/// attends with query t over the mixed cache and over the raw prefix
/// [0, t], recording their L1 distance. O(seq_len^2) per head.
SimulationResult simulate(const Trace& trace, const EngineConfig& config);

ExperimentRow summarize(const SimulationResult& result, const EngineConfig& config, Mode mode,
                        std::size_t seq_len);

/// Decimal float with 6 significant digits.
std::string format_sig6(double value);

void write_experiment_csv(std::ostream& out, std::span<const ExperimentRow> rows);
/// Parses what write_experiment_csv emits. Throws ParseError on malformed
/// input; the offset is the 0-based line number.
std::vector<ExperimentRow> read_experiment_csv(std::istream& in);

void write_memory_csv(std::ostream& out, const SimulationResult& result, std::size_t n_heads);
void write_step_csv(std::ostream& out, std::span<const StepError> steps);

}  // namespace kvott
