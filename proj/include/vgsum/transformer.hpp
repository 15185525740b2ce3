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

// Text encoder-decoder backbone: sinusoidal positions, post-norm residual
// sub-layers, multi-head self/cross attention and a GELU feed-forward block.
//
// A batch is processed as one stacked matrix of B·P rows (P = padded length);
// sample boundaries and padding live entirely in the attention masks.

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "vgsum/tensor.hpp"

namespace vgsum {

using Rng = std::mt19937_64;

enum class ParamGroup { Backbone, Fusion };

/// Named, grouped parameter handles. Handles share storage with the layers holding them.
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
    ParamGroup group;
  };

  Tensor add(std::string name, Tensor init, ParamGroup group);
  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }
  std::vector<Tensor> tensors() const;
  std::vector<Tensor> tensors(ParamGroup group) const;
  Index count() const;
  void zero_grad();

 private:
  std::vector<Entry> entries_;
};

struct BackboneConfig {
  int layers = 2;
  int d_model = 64;
  int heads = 4;
  int d_ff = 128;
  int vocab_size = 200;
  int max_positions = 512;
  double dropout = 0.1;

  void validate() const;
};

/// Training-time switches threaded through a forward pass.
struct ForwardContext {
  bool training = false;
  Rng* dropout_rng = nullptr;
  double dropout = 0.0;

  Tensor maybe_dropout(const Tensor& x) const;
};

/// Where the rows of a stacked batch come from.
struct SequenceLayout {
  Index batch = 0;
  Index length = 0;        ///< padded length per sample
  std::vector<bool> valid;  ///< batch·length flags, true for real tokens

  Index rows() const { return batch * length; }
  bool sample_empty(Index b) const;
  static SequenceLayout from_lengths(std::span<const Index> lengths, Index padded_length);
};

/// keep(i, j) = same sample, key j valid, and (if causal) pos(j) ≤ pos(i).
Mask attention_mask(const SequenceLayout& queries, const SequenceLayout& keys, bool causal);

/// Optional capture of per-head attention weights (one matrix per head per call).
struct AttentionProbe {
  std::vector<RowMatrix<double>> weights;
};

/// Splits Q/K/V column-wise into `heads` slices, runs scaled dot-product
/// attention per slice under `keep`, and concatenates the head outputs.
Tensor multi_head_attend(const Tensor& q, const Tensor& k, const Tensor& v, const Mask& keep, int heads,
                         AttentionProbe* probe = nullptr);

struct LayerNormParams {
  Tensor gain;
  Tensor bias;

  static LayerNormParams create(ParameterSet& params, const std::string& name, int width, ParamGroup group);
  Tensor operator()(const Tensor& x) const;
};

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kInitStddev = 0.02;

/// Q/K/V/O projections without biases.
struct MultiHeadAttention {
  Tensor wq, wk, wv, wo;
  int heads = 1;

  static MultiHeadAttention create(ParameterSet& params, Rng& rng, const std::string& name, int width, int heads,
                                   ParamGroup group);
  Tensor operator()(const Tensor& queries, const Tensor& keys_values, const Mask& keep,
                    AttentionProbe* probe = nullptr) const;
};

/// GELU(Z·W1)·W2 with dropout after each projection in training mode.
struct FeedForward {
  Tensor w1, w2;

  static FeedForward create(ParameterSet& params, Rng& rng, const std::string& name, int width, int hidden,
                            ParamGroup group);
  Tensor operator()(const Tensor& z, const ForwardContext& ctx) const;
};

/// Extra sub-layer inserted by a host layer at a fixed point (used for fusion).
using SublayerHook = std::function<Tensor(const Tensor&)>;

struct EncoderLayer {
  MultiHeadAttention self_attention;
  LayerNormParams norm1;
  FeedForward ffn;
  LayerNormParams norm2;

  static EncoderLayer create(ParameterSet& params, Rng& rng, const std::string& name, int width, int heads,
                             int hidden, ParamGroup group);
  /// LN(MSA(Z)+Z) then LN(FFN(·)+·); `after_ffn` runs last when set.
  Tensor operator()(const Tensor& z, const Mask& self_keep, const ForwardContext& ctx,
                    const SublayerHook& after_ffn = {}, AttentionProbe* probe = nullptr) const;
};

struct DecoderLayer {
  MultiHeadAttention self_attention;
  LayerNormParams norm1;
  MultiHeadAttention cross_attention;
  LayerNormParams norm2;
  FeedForward ffn;
  LayerNormParams norm3;

  static DecoderLayer create(ParameterSet& params, Rng& rng, const std::string& name, int width, int heads,
                             int hidden, ParamGroup group);
  /// Causal self-attention, encoder-decoder attention, optional hook, then FFN.
  Tensor operator()(const Tensor& y, const Tensor& memory, const Mask& self_keep, const Mask& cross_keep,
                    const ForwardContext& ctx, const SublayerHook& after_cross = {}) const;
};

/// Sinusoidal table: row p holds sin/cos pairs of p / 10000^(2i/width).
RowMatrix<double> sinusoidal_positions(Index positions, Index width);

/// Token embeddings plus positional encodings for one sequence.
Tensor embed_and_position(std::span<const int> token_ids, const Tensor& embedding_table,
                          const RowMatrix<double>& pe_table);

/// Same as above for a stacked batch; positions restart at every sample.
Tensor embed_and_position(std::span<const int> token_ids, const SequenceLayout& layout,
                          const Tensor& embedding_table, const RowMatrix<double>& pe_table);

/// Embedding table, positional table and both layer stacks.
struct Backbone {
  BackboneConfig config;
  Tensor embedding;  ///< vocab_size x d_model, shared with the output head
  RowMatrix<double> positions;
  std::vector<EncoderLayer> encoder;
  std::vector<DecoderLayer> decoder;

  static Backbone create(const BackboneConfig& config, ParameterSet& params, Rng& rng);

  /// Vocabulary logits through the tied embedding: Y·Eᵀ.
  Tensor output_logits(const Tensor& decoder_out) const;
};

}  // namespace vgsum
