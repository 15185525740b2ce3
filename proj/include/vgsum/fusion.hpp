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

// Text-vision fusion: cross-modal dot-product attention (and its variant that
// concatenates projected visual features), cross-modal multi-head attention,
// the sigmoid forget gate, the visual transformer encoder, and the
// residual + layer-norm sub-layer wrapping a mechanism.

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "vgsum/transformer.hpp"

namespace vgsum {

enum class FusionMechanism { DotProduct, DotProductVariant, MultiHead };

std::string to_string(FusionMechanism m);
FusionMechanism parse_fusion_mechanism(const std::string& name);

struct FusionConfig {
  FusionMechanism mechanism = FusionMechanism::MultiHead;
  int d_cross = 0;  ///< cross-attention width; 0 means "same as d_model"
  int fusion_heads = 4;
  bool use_forget_gate = false;
  bool use_vtf = false;
  int vtf_layers = 4;
  int vtf_heads = 8;
  int vtf_ff = 2048;
  std::vector<bool> encoder_locations;  ///< one flag per encoder layer
  std::vector<bool> decoder_locations;  ///< one flag per decoder layer

  int cross_width(int d_model) const { return d_cross > 0 ? d_cross : d_model; }
  bool any_location() const;
  /// Fills empty location vectors (encoder: every layer, decoder: none).
  void fill_default_locations(int layers);
  void validate(const BackboneConfig& backbone, int d_visual) const;
};

/// Stacked visual sequences for a batch; validity flags double as the mask.
struct VisualFeatures {
  Tensor features;  ///< (batch·M) x d_v
  SequenceLayout layout;
};

/// Values captured during a forward pass for analysis.
struct FusionTrace {
  std::vector<RowMatrix<double>> gates;      ///< forget-gate activations, one matrix per fusion sub-layer
  std::vector<RowMatrix<double>> attention;  ///< fusion attention weights (per head for multi-head)
};

/// F = sigmoid(Concat(O, Z_t)·W_f); returns F ⊗ O.
struct ForgetGate {
  Tensor wf;  ///< (width + d_t) x width

  static ForgetGate create(ParameterSet& params, Rng& rng, const std::string& name, int width, int d_text);
  Tensor operator()(const Tensor& attended, const Tensor& text, FusionTrace* trace = nullptr) const;
};

/// Z_v' = Z_v·W1, A = softmax(Z_t·Z_v'ᵀ) over unmasked visual rows, output
/// Concat(Z_t, A·Z_v)·W2, or Concat(Z_t, A·Z_v')·W2 for the variant.
struct DotProductFusion {
  Tensor w1;  ///< d_v x d_t
  Tensor w2;  ///< (d_t + d_v) x d_t, or 2d_t x d_t for the variant
  bool variant = false;
  std::optional<ForgetGate> gate;

  static DotProductFusion create(ParameterSet& params, Rng& rng, const std::string& name, int d_text, int d_visual,
                                 bool variant, bool forget_gate);
  Tensor operator()(const Tensor& text, const Tensor& visual, const Mask& keep, FusionTrace* trace = nullptr) const;
};

/// Q = Z_t·W_q, K = Z_v·W_k, V = Z_v·W_v, O = CMA(Q, K, V), output Concat(Z_t, O)·W3.
struct MultiHeadFusion {
  Tensor wq;  ///< d_t x d_c
  Tensor wk;  ///< d_v x d_c
  Tensor wv;  ///< d_v x d_c
  Tensor w3;  ///< (d_t + d_c) x d_t
  int heads = 1;
  std::optional<ForgetGate> gate;

  static MultiHeadFusion create(ParameterSet& params, Rng& rng, const std::string& name, int d_text, int d_visual,
                                int d_cross, int heads, bool forget_gate);
  Tensor operator()(const Tensor& text, const Tensor& visual, const Mask& keep, FusionTrace* trace = nullptr) const;
};

/// Transformer encoder over the visual sequence with its own sinusoidal positions.
struct VisualEncoder {
  RowMatrix<double> positions;
  std::vector<EncoderLayer> layers;

  static VisualEncoder create(ParameterSet& params, Rng& rng, const std::string& name, int d_visual, int layers,
                              int heads, int hidden, int max_positions);
  VisualFeatures operator()(const VisualFeatures& raw, const ForwardContext& ctx) const;
};

/// LN(fusion(Z, Z_v) + Z). Samples whose visual sequence is fully masked
/// bypass the mechanism and receive LN(Z).
struct FusionSublayer {
  std::variant<DotProductFusion, MultiHeadFusion> mechanism;
  LayerNormParams norm;

  static FusionSublayer create(ParameterSet& params, Rng& rng, const std::string& name, const FusionConfig& config,
                               int d_text, int d_visual);
  Tensor operator()(const Tensor& text, const SequenceLayout& text_layout, const VisualFeatures& visual,
                    FusionTrace* trace = nullptr) const;
  /// The concat-then-project matrix (W2 or W3).
  Tensor output_projection() const;
};

/// Mean forget-gate score per sample over the trace's gate matrices. Rows
/// are averaged over the sample's valid text positions, or over all of its
/// rows when it has none.
std::vector<double> mean_gate_scores(const FusionTrace& trace, const SequenceLayout& text_layout);

}  // namespace vgsum
