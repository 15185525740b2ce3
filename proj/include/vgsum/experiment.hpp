/*
 * Copyright 2026 The vgsum Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Ablation harness: named runs, repeated over seeds, trained, decoded and
// scored into CSV and Markdown tables.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vgsum/data.hpp"
#include "vgsum/metrics.hpp"
#include "vgsum/training.hpp"

namespace vgsum {

struct RunSpec {
  std::string name;
  ModelConfig model;
  SyntheticSpec corpus;
  /// When set, splits are loaded from this directory instead of generated.
  std::optional<std::filesystem::path> data_dir;
  TrainSchedule schedule;
  std::uint64_t seed = 0;
  int repetitions = 1;
  /// Replace visual features with uniform [0, 3) noise in every split.
  bool noise_features = false;
};

struct ExperimentSpec {
  std::string name = "experiment";
  std::vector<RunSpec> runs;
  int test_beam = 5;
  int jobs = 1;  ///< parallel runs; each worker owns its model

  void validate() const;
};

struct RunRow {
  std::string run;
  int repetition = 0;
  std::uint64_t seed = 0;
  std::string config_hash;
  MetricReport metrics;
  double topic_accuracy = 0.0;
  int best_epoch = -1;
  long steps = 0;
  double seconds = 0.0;
  bool failed = false;
  std::string error;
};

struct ExperimentReport {
  std::string name;
  std::vector<RunRow> rows;  ///< grouped by run in spec order, repetitions ascending

  /// One line per (run, repetition).
  void write_csv(const std::filesystem::path& path) const;
  /// One row per run; mean ± sample standard deviation when a run has several repetitions.
  std::string to_markdown() const;
  /// Rows of one run, failures excluded.
  std::vector<const RunRow*> rows_for(const std::string& run) const;
};

using RunCallback = std::function<void(const RunRow&)>;

/// Model and corpus seeds for repetition r are `seed + r`. Failed runs are
/// recorded and the remaining runs continue. With `out_dir`, writes
/// report.csv, report.md and per-run histories there.
ExperimentReport run_experiment(const ExperimentSpec& spec, const std::optional<std::filesystem::path>& out_dir = {},
                                const RunCallback& on_row = {});

/// Trains and scores a single repetition of `run`; rethrows failures.
RunRow execute_run(const RunSpec& run, int repetition, int test_beam,
                   const std::optional<std::filesystem::path>& out_dir = {});

enum class Stack { Encoder, Decoder };

Stack parse_stack(const std::string& name);

/// Single-layer patterns (one per layer) and/or suffix patterns
/// (layers 1..L, 2..L, ..., L-1..L).
std::vector<std::vector<bool>> location_patterns(int layers, bool singles, bool suffixes);

/// Human-readable layer set, e.g. "enc{1,2}".
std::string pattern_name(Stack stack, const std::vector<bool>& pattern);

/// A text-only baseline row plus one fusion run per pattern on `stack`.
ExperimentSpec location_grid(const RunSpec& base, Stack stack, const std::vector<std::vector<bool>>& patterns);

/// Text-only, dot-product, dot-product variant and multi-head runs.
ExperimentSpec mechanism_ablation(const RunSpec& base);
/// Multi-head with and without the forget gate and the visual encoder.
ExperimentSpec fg_vtf_ablation(const RunSpec& base);
/// Text-only, fusion on clean features, fusion on uniform noise.
ExperimentSpec noise_ablation(const RunSpec& base);

/// Scaled-down visual encoder for desk runs (1 layer, 4 heads, hidden 128).
void use_desk_vtf(FusionConfig& fusion);

struct GateHistogram {
  std::vector<std::string> ids;
  std::vector<double> scores;  ///< per-sample mean gate activation
  double lo = 0.0;
  double hi = 1.0;
  std::vector<int> counts;

  /// Bar chart, one line per bin.
  std::string render() const;
};

/// Mean forget-gate score per sample, binned over the observed score range.
GateHistogram fg_histogram(const VisionGuidedModel& model, std::span<const Sample> samples, int bins);

/// Writes <stem>.csv (sample_id,mean_score) and <stem>.txt (rendered histogram).
void write_histogram(const GateHistogram& hist, const std::filesystem::path& stem);

}  // namespace vgsum
