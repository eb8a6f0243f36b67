// Copyright 2026 The kvott Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvott_cli/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <ostream>
#include <sstream>

#include "kvott/error.hpp"
#include "kvott/report.hpp"
#include "kvott/trace.hpp"

namespace kvott::cli {
namespace {

namespace fs = std::filesystem;

struct EngineFlags {
  EngineConfig config;
  std::string skip_layers = "0,1";
  std::string mode = "ott";
};

struct GeneratorFlags {
  SyntheticSpec spec;
  std::uint32_t n_layers = 4;
  std::uint32_t n_heads = 1;
  std::uint32_t head_dim = 64;
  std::uint32_t seq_len = 1024;
};

void add_engine_flags(CLI::App& app, EngineFlags& f) {
  app.add_option("--bits", f.config.bits, "Quantization bits per value")->capture_default_str();
  app.add_option("--group-size", f.config.group_size, "Tokens per quantization group (G)")
      ->capture_default_str();
  app.add_option("--residual", f.config.residual, "Recent tokens kept full precision (R)")
      ->capture_default_str();
  app.add_option("--outlier-num", f.config.outlier_num, "Outlier pool capacity (N)")
      ->capture_default_str();
  app.add_option("--skip-layers", f.skip_layers,
                 "Comma-separated layers with no outlier pool, or 'none'")
      ->capture_default_str();
  app.add_option("--aux-capacity", f.config.aux_capacity, "Auxiliary pool capacity (A)")
      ->capture_default_str();
  app.add_option("--mode", f.mode, "fp16, baseline or ott")
      ->check(CLI::IsMember({"fp16", "baseline", "ott"}))
      ->capture_default_str();
}

void add_seed_flag(CLI::App& app, SyntheticSpec& spec) {
  app.add_option("--seed", spec.seed, "Root seed")->capture_default_str();
}

void add_generator_flags(CLI::App& app, GeneratorFlags& g, bool with_layout) {
  auto& s = g.spec;
  app.add_option("--mu", s.mu, "Outlier-channel center")->capture_default_str();
  app.add_option("--sigma", s.sigma, "Outlier-channel half-width")->capture_default_str();
  app.add_option("--eps", s.eps, "Planted-token lower bound")->capture_default_str();
  app.add_option("--delta", s.delta, "Planted-token upper bound")->capture_default_str();
  app.add_option("--m", s.m, "Planted low-magnitude tokens per head")->capture_default_str();
  app.add_option("--outlier-channels", s.outlier_channels, "Outlier channels per head")
      ->capture_default_str();
  app.add_option("--q-scale", s.q_scale, "Query magnitude in outlier channels")->capture_default_str();
  app.add_option("--head-dim", g.head_dim, "Head dimension")->capture_default_str();
  app.add_option("--seq-len", g.seq_len, "Tokens per head")->capture_default_str();
  if (with_layout) {
    app.add_option("--layers", g.n_layers, "Layers")->capture_default_str();
    app.add_option("--heads", g.n_heads, "Heads per layer")->capture_default_str();
  }
}

std::vector<std::size_t> parse_layer_list(const std::string& text) {
  std::vector<std::size_t> layers;
  if (text.empty() || text == "none") return layers;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t value = 0;
    std::size_t used = 0;
    try {
      value = std::stoul(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw CLI::ValidationError("--skip-layers", "bad layer '" + item + "'");
    layers.push_back(value);
  }
  return layers;
}

EngineConfig resolve_engine(const EngineFlags& f, Mode& mode) {
  mode = *parse_mode(f.mode);
  EngineConfig config = f.config;
  config.skip_layers = parse_layer_list(f.skip_layers);
  return apply_mode(config, mode);
}

std::unique_ptr<std::ostream> open_output(const std::string& path) {
  auto file = std::make_unique<std::ofstream>(path, std::ios::trunc);
  if (!*file) throw std::runtime_error("cannot open " + path + " for writing");
  return file;
}

// Writes through `path` when given, otherwise to `out`.
void emit(const std::string& path, std::ostream& out, const std::function<void(std::ostream&)>& body) {
  if (path.empty()) {
    body(out);
    return;
  }
  auto file = open_output(path);
  body(*file);
  if (!*file) throw std::runtime_error("failed writing " + path);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"KV-cache quantization with outlier-token tracing", "kvott"};
  app.require_subcommand(1);

  EngineFlags engine;
  GeneratorFlags gen;
  std::string trace_path;
  std::string out_path;

  auto* gen_cmd = app.add_subcommand("gen-synthetic", "Write a synthetic KVTRACE1 file");
  add_generator_flags(*gen_cmd, gen, true);
  add_seed_flag(*gen_cmd, gen.spec);
  gen_cmd->add_option("--out", out_path, "Output trace path")->required();
  gen_cmd->callback([&] {
    const TraceHeader dims{gen.n_layers, gen.n_heads, gen.head_dim, gen.seq_len};
    write_trace(out_path, generate_synthetic(gen.spec, dims));
    out << "wrote " << out_path << '\n';
  });

  auto* sim_cmd = app.add_subcommand("simulate", "Replay a trace token by token against the oracle");
  add_engine_flags(*sim_cmd, engine);
  sim_cmd->add_option("--trace", trace_path, "Input KVTRACE1 file")->required();
  sim_cmd->add_option("--out", out_path, "Output directory for steps/summary/memory CSVs")->required();
  sim_cmd->callback([&] {
    Mode mode{};
    const EngineConfig config = resolve_engine(engine, mode);
    const Trace trace = read_trace(trace_path);
    const SimulationResult result = simulate(trace, config);
    const ExperimentRow row = summarize(result, config, mode, trace.header.seq_len);

    const fs::path dir(out_path);
    fs::create_directories(dir);
    emit((dir / "steps.csv").string(), out, [&](std::ostream& o) { write_step_csv(o, result.steps); });
    emit((dir / "summary.csv").string(), out,
         [&](std::ostream& o) { write_experiment_csv(o, std::span(&row, 1)); });
    emit((dir / "memory.csv").string(), out,
         [&](std::ostream& o) { write_memory_csv(o, result, trace.header.n_heads); });
    write_experiment_csv(out, std::span(&row, 1));
  });

  CriteriaOptions criteria;
  std::string criterion_name = "all";
  std::size_t seeds = 20;
  std::size_t layer = 0;
  std::size_t head = 0;
  auto* cmp_cmd = app.add_subcommand(
      "compare-criteria", "L1 error of the final query when retaining tokens by a criterion");
  add_generator_flags(*cmp_cmd, gen, false);
  add_seed_flag(*cmp_cmd, gen.spec);
  cmp_cmd->add_option("--trace", trace_path, "Input KVTRACE1 file (default: synthetic traces)");
  cmp_cmd->add_option("--layer", layer, "Layer to read from --trace")->capture_default_str();
  cmp_cmd->add_option("--head", head, "Head to read from --trace")->capture_default_str();
  cmp_cmd->add_option("--seeds", seeds, "Synthetic traces to average over")->capture_default_str();
  cmp_cmd->add_option("--budget", criteria.budget, "Tokens retained in full precision")
      ->capture_default_str();
  cmp_cmd->add_option("--criterion", criterion_name, "smallest, largest, random or all")
      ->check(CLI::IsMember({"smallest", "largest", "random", "all"}))
      ->capture_default_str();
  cmp_cmd->add_option("--bits", criteria.bits, "Quantization bits")->capture_default_str();
  cmp_cmd->add_option("--group-size", criteria.group_size, "Tokens per group")->capture_default_str();
  cmp_cmd->add_option("--out", out_path, "Output CSV (default: stdout)");
  cmp_cmd->callback([&] {
    std::vector<Criterion> which;
    if (criterion_name == "all")
      which = {Criterion::SmallestKey, Criterion::Random, Criterion::LargestKey};
    else
      which = {*parse_criterion(criterion_name)};

    std::vector<std::pair<HeadTrace, std::uint64_t>> heads;
    if (!trace_path.empty()) {
      const Trace trace = read_trace(trace_path);
      heads.emplace_back(trace.at(layer, head), gen.spec.seed);
    } else {
      require(seeds >= 1, "--seeds must be >= 1");
      for (std::size_t i = 0; i < seeds; ++i) {
        const std::uint64_t seed = derive_seed(gen.spec.seed + i, 0, 0);
        heads.emplace_back(generate_head(gen.spec, gen.seq_len, gen.head_dim, seed).tensors, seed);
      }
    }

    emit(out_path, out, [&](std::ostream& o) {
      o << "criterion,budget,bits,traces,mean_l1_error\n";
      for (Criterion c : which) {
        double sum = 0.0;
        for (const auto& [h, seed] : heads) {
          CriteriaOptions opts = criteria;
          opts.criterion = c;
          opts.seed = seed;
          sum += compare_criteria(h, opts);
        }
        o << to_string(c) << ',' << criteria.budget << ',' << criteria.bits << ',' << heads.size()
          << ',' << format_sig6(sum / static_cast<double>(heads.size())) << '\n';
      }
    });
  });

  std::vector<std::size_t> seq_lens{64,   128,  159,  160,   288,   544,   1056,
                                    2080, 4128, 8224, 16416, 32800, 65536};
  auto* ratio_cmd = app.add_subcommand("ratio-curve", "Compression ratio versus sequence length");
  add_engine_flags(*ratio_cmd, engine);
  add_generator_flags(*ratio_cmd, gen, true);
  add_seed_flag(*ratio_cmd, gen.spec);
  ratio_cmd->add_option("--seq-lens", seq_lens, "Ascending sequence lengths")->delimiter(',');
  ratio_cmd->add_option("--out", out_path, "Output CSV (default: stdout)");
  ratio_cmd->callback([&] {
    Mode mode{};
    EngineConfig config = resolve_engine(engine, mode);
    config.n_layers = gen.n_layers;
    config.n_heads = gen.n_heads;
    config.head_dim = gen.head_dim;
    const auto rows = ratio_curve(config, mode, seq_lens, gen.spec);
    emit(out_path, out, [&](std::ostream& o) { write_experiment_csv(o, rows); });
  });

  std::uint64_t est_layers = 32, est_heads = 8, est_dim = 512, est_len = 8192, est_batch = 64,
                est_bpv = 2;
  auto* mem_cmd = app.add_subcommand("mem-estimate", "Full-precision KV cache size in bytes");
  mem_cmd->add_option("--layers", est_layers)->capture_default_str();
  mem_cmd->add_option("--heads", est_heads)->capture_default_str();
  mem_cmd->add_option("--head-dim", est_dim)->capture_default_str();
  mem_cmd->add_option("--seq-len", est_len)->capture_default_str();
  mem_cmd->add_option("--batch", est_batch)->capture_default_str();
  mem_cmd->add_option("--bytes-per-value", est_bpv)->capture_default_str();
  mem_cmd->callback([&] {
    const auto bytes = estimate_kv_bytes(est_layers, est_heads, est_dim, est_len, est_batch, est_bpv);
    out << bytes << " bytes (" << format_sig6(static_cast<double>(bytes) / (1ull << 30)) << " GiB)\n";
  });

  long channel = -1;
  auto* dec_cmd = app.add_subcommand("decile-stats", "Share of key values per tenth of a channel's range");
  add_generator_flags(*dec_cmd, gen, false);
  add_seed_flag(*dec_cmd, gen.spec);
  dec_cmd->add_option("--trace", trace_path, "Input KVTRACE1 file (default: one synthetic head)");
  dec_cmd->add_option("--layer", layer)->capture_default_str();
  dec_cmd->add_option("--head", head)->capture_default_str();
  dec_cmd->add_option("--channel", channel, "Key channel (default: largest mean magnitude)");
  dec_cmd->add_option("--out", out_path, "Output CSV (default: stdout)");
  dec_cmd->callback([&] {
    Matrix keys;
    if (!trace_path.empty())
      keys = read_trace(trace_path).at(layer, head).k;
    else
      keys = generate_head(gen.spec, gen.seq_len, gen.head_dim, derive_seed(gen.spec.seed, 0, 0)).tensors.k;
    const std::size_t c =
        channel < 0 ? largest_magnitude_channel(keys) : static_cast<std::size_t>(channel);
    const auto pct = decile_stats(column(keys, c));
    emit(out_path, out, [&](std::ostream& o) {
      o << "channel,decile,percent\n";
      for (std::size_t i = 0; i < pct.size(); ++i)
        o << c << ',' << i * 10 << '-' << (i + 1) * 10 << "%," << format_sig6(pct[i]) << '\n';
    });
  });

  std::vector<const char*> argv{"kvott"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitBadTrace;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitOk;
}

}  // namespace kvott::cli
