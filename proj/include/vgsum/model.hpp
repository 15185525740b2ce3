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

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vgsum/batch.hpp"
#include "vgsum/fusion.hpp"
#include "vgsum/transformer.hpp"

namespace vgsum {

struct ModelConfig {
  BackboneConfig backbone;
  std::optional<FusionConfig> fusion;  ///< absent: text-only backbone
  int d_visual = 64;
  int visual_cap = 256;
  std::uint64_t seed = 0;

  /// Also fills default fusion locations when they are empty.
  void validate();
  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
  /// Stable 16-hex-digit FNV-1a digest of the canonical JSON form.
  std::string hash() const;
};

/// Values captured from the fusion sub-layers of one forward pass.
struct ForwardTrace {
  FusionTrace encoder;
  FusionTrace decoder;
};

/// Encoder output plus the (possibly VTF-encoded) visual features reused by decoder fusion.
struct EncodedSource {
  Tensor memory;
  SequenceLayout source;
  std::optional<VisualFeatures> visual;

  /// Tiles a single-sample encoding `copies` times (for batched beam expansion).
  EncodedSource replicate(Index copies) const;
};

class VisionGuidedModel {
 public:
  explicit VisionGuidedModel(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }
  const Backbone& backbone() const { return backbone_; }
  const std::vector<std::optional<FusionSublayer>>& encoder_fusion() const { return encoder_fusion_; }
  const std::vector<std::optional<FusionSublayer>>& decoder_fusion() const { return decoder_fusion_; }
  /// True when at least one fusion sub-layer exists.
  bool uses_visual() const { return uses_visual_; }

  EncodedSource encode(std::span<const int> source_ids, const SequenceLayout& source,
                       const RowMatrix<double>* visual, const SequenceLayout* visual_layout,
                       const ForwardContext& ctx, ForwardTrace* trace = nullptr) const;

  /// Decoder logits as a (batch·T) x vocab matrix.
  Tensor decode(const EncodedSource& encoded, std::span<const int> target_in, const SequenceLayout& target,
                const ForwardContext& ctx, ForwardTrace* trace = nullptr) const;

  /// Teacher-forced vocabulary logits, shape batch x T x vocab.
  Tensor forward(const MultimodalBatch& batch, const ForwardContext& ctx, ForwardTrace* trace = nullptr) const;

  /// Writes config.json and params.bin into `dir`.
  void save(const std::filesystem::path& dir) const;
  static VisionGuidedModel load(const std::filesystem::path& dir);

  /// Copies parameter values (not gradients) from another model with the same layout.
  void copy_parameters_from(const VisionGuidedModel& other);

 private:
  ModelConfig config_;
  ParameterSet params_;
  Backbone backbone_;
  std::optional<VisualEncoder> vtf_;
  std::vector<std::optional<FusionSublayer>> encoder_fusion_;
  std::vector<std::optional<FusionSublayer>> decoder_fusion_;
  bool uses_visual_ = false;
};

struct Hypothesis {
  std::vector<int> tokens;  ///< ends in EOS unless the length cap was hit
  double logprob = 0.0;
};

struct BeamOptions {
  int beam = 5;
  int max_len = kMaxSummaryTokens;
};

/// Log-probabilities over the vocabulary for each prefix (one row per prefix).
/// Entries equal to -infinity are never expanded.
using StepScorer = std::function<std::vector<std::vector<double>>(const std::vector<std::vector<int>>&)>;

/// Length-capped beam search without length normalization. A hypothesis
/// finishes on `eos` or at `max_len` tokens; the best finished one wins, ties
/// going to the shorter sequence, then the lexicographically smaller one.
Hypothesis beam_search(const StepScorer& scorer, const BeamOptions& options, int eos);

/// Scorer over a trained model for one source sample (PAD is never emitted).
StepScorer model_scorer(const VisionGuidedModel& model, const Sample& sample);

Hypothesis beam_decode(const VisionGuidedModel& model, const Sample& sample, const BeamOptions& options);

/// Decodes every sample; `jobs` > 1 fans out over worker threads sharing the frozen model.
std::vector<Hypothesis> decode_corpus(const VisionGuidedModel& model, std::span<const Sample> samples,
                                      const BeamOptions& options, int jobs = 1);

}  // namespace vgsum
