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

#include "vgsum/transformer.hpp"

#include <cmath>

namespace vgsum {

Tensor ParameterSet::add(std::string name, Tensor init, ParamGroup group) {
  for (const auto& e : entries_)
    if (e.name == name) throw ContractError("duplicate parameter name " + name);
  init.set_requires_grad(true);
  entries_.push_back({std::move(name), init, group});
  return init;
}

std::vector<Tensor> ParameterSet::tensors() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.tensor);
  return out;
}

std::vector<Tensor> ParameterSet::tensors(ParamGroup group) const {
  std::vector<Tensor> out;
  for (const auto& e : entries_)
    if (e.group == group) out.push_back(e.tensor);
  return out;
}

Index ParameterSet::count() const {
  Index n = 0;
  for (const auto& e : entries_) n += e.tensor.numel();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

void BackboneConfig::validate() const {
  if (layers <= 0 || d_model <= 0 || heads <= 0 || d_ff <= 0 || vocab_size <= 0 || max_positions <= 0)
    throw ConfigError("backbone extents must be positive");
  if (d_model % heads != 0)
    throw ConfigError("d_model " + std::to_string(d_model) + " is not divisible by " + std::to_string(heads) +
                      " heads");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout rate must be in [0,1)");
}

Tensor ForwardContext::maybe_dropout(const Tensor& x) const {
  if (!training || dropout <= 0.0) return x;
  if (dropout_rng == nullptr) throw ContractError("training forward pass needs a dropout generator");
  return vgsum::dropout(x, dropout, *dropout_rng);
}

bool SequenceLayout::sample_empty(Index b) const {
  for (Index p = 0; p < length; ++p)
    if (valid[static_cast<std::size_t>(b * length + p)]) return false;
  return true;
}

SequenceLayout SequenceLayout::from_lengths(std::span<const Index> lengths, Index padded_length) {
  SequenceLayout layout;
  layout.batch = static_cast<Index>(lengths.size());
  layout.length = padded_length;
  layout.valid.assign(static_cast<std::size_t>(layout.rows()), false);
  for (Index b = 0; b < layout.batch; ++b) {
    if (lengths[b] > padded_length) throw ShapeError("sequence length exceeds padded length");
    for (Index p = 0; p < lengths[b]; ++p) layout.valid[static_cast<std::size_t>(b * padded_length + p)] = true;
  }
  return layout;
}

Mask attention_mask(const SequenceLayout& queries, const SequenceLayout& keys, bool causal) {
  if (queries.batch != keys.batch) throw ShapeError("attention_mask: batch sizes differ");
  if (static_cast<Index>(keys.valid.size()) != keys.rows())
    throw ShapeError("attention_mask: key validity flags do not cover the layout");
  Mask keep = Mask::Constant(queries.rows(), keys.rows(), false);
  for (Index b = 0; b < queries.batch; ++b) {
    for (Index i = 0; i < queries.length; ++i) {
      const Index r = b * queries.length + i;
      for (Index j = 0; j < keys.length; ++j) {
        const Index c = b * keys.length + j;
        keep(r, c) = keys.valid[static_cast<std::size_t>(c)] && (!causal || j <= i);
      }
    }
  }
  return keep;
}

Tensor multi_head_attend(const Tensor& q, const Tensor& k, const Tensor& v, const Mask& keep, int heads,
                         AttentionProbe* probe) {
  if (heads <= 0 || q.cols() % heads != 0 || v.cols() % heads != 0)
    throw ShapeError("multi_head_attend: widths " + shape_string(q.shape()) + " / " + shape_string(v.shape()) +
                     " not divisible by " + std::to_string(heads) + " heads");
  if (q.cols() != k.cols() || k.rows() != v.rows())
    throw ShapeError("multi_head_attend: incompatible Q " + shape_string(q.shape()) + ", K " +
                     shape_string(k.shape()) + ", V " + shape_string(v.shape()));
  const Index dk = q.cols() / heads;
  const Index dv = v.cols() / heads;
  const double scaling = 1.0 / std::sqrt(static_cast<double>(dk));
  std::vector<Tensor> outputs;
  outputs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const Tensor qh = heads == 1 ? q : slice_last(q, h * dk, dk);
    const Tensor kh = heads == 1 ? k : slice_last(k, h * dk, dk);
    const Tensor vh = heads == 1 ? v : slice_last(v, h * dv, dv);
    const Tensor weights = masked_softmax(scale(matmul_nt(qh, kh), scaling), keep);
    if (probe) probe->weights.push_back(weights.value());
    outputs.push_back(matmul(weights, vh));
  }
  return heads == 1 ? outputs.front() : concat(outputs);
}

LayerNormParams LayerNormParams::create(ParameterSet& params, const std::string& name, int width, ParamGroup group) {
  return {params.add(name + ".gain", Tensor::ones({width}), group),
          params.add(name + ".bias", Tensor::zeros({width}), group)};
}

Tensor LayerNormParams::operator()(const Tensor& x) const { return layer_norm(x, gain, bias, kLayerNormEps); }

namespace {

Tensor projection(ParameterSet& params, Rng& rng, const std::string& name, int rows, int cols, ParamGroup group) {
  return params.add(name, Tensor::randn({rows, cols}, rng, kInitStddev), group);
}

}  // namespace

MultiHeadAttention MultiHeadAttention::create(ParameterSet& params, Rng& rng, const std::string& name, int width,
                                              int heads, ParamGroup group) {
  MultiHeadAttention mha;
  mha.wq = projection(params, rng, name + ".wq", width, width, group);
  mha.wk = projection(params, rng, name + ".wk", width, width, group);
  mha.wv = projection(params, rng, name + ".wv", width, width, group);
  mha.wo = projection(params, rng, name + ".wo", width, width, group);
  mha.heads = heads;
  return mha;
}

Tensor MultiHeadAttention::operator()(const Tensor& queries, const Tensor& keys_values, const Mask& keep,
                                      AttentionProbe* probe) const {
  const Tensor q = matmul(queries, wq);
  const Tensor k = matmul(keys_values, wk);
  const Tensor v = matmul(keys_values, wv);
  return matmul(multi_head_attend(q, k, v, keep, heads, probe), wo);
}

FeedForward FeedForward::create(ParameterSet& params, Rng& rng, const std::string& name, int width, int hidden,
                                ParamGroup group) {
  FeedForward ffn;
  ffn.w1 = projection(params, rng, name + ".w1", width, hidden, group);
  ffn.w2 = projection(params, rng, name + ".w2", hidden, width, group);
  return ffn;
}

Tensor FeedForward::operator()(const Tensor& z, const ForwardContext& ctx) const {
  const Tensor hidden = gelu(ctx.maybe_dropout(matmul(z, w1)));
  return ctx.maybe_dropout(matmul(hidden, w2));
}

EncoderLayer EncoderLayer::create(ParameterSet& params, Rng& rng, const std::string& name, int width, int heads,
                                  int hidden, ParamGroup group) {
  EncoderLayer layer;
  layer.self_attention = MultiHeadAttention::create(params, rng, name + ".self_attention", width, heads, group);
  layer.norm1 = LayerNormParams::create(params, name + ".norm1", width, group);
  layer.ffn = FeedForward::create(params, rng, name + ".ffn", width, hidden, group);
  layer.norm2 = LayerNormParams::create(params, name + ".norm2", width, group);
  return layer;
}

Tensor EncoderLayer::operator()(const Tensor& z, const Mask& self_keep, const ForwardContext& ctx,
                                const SublayerHook& after_ffn, AttentionProbe* probe) const {
  const Tensor attended = norm1(self_attention(z, z, self_keep, probe) + z);
  Tensor out = norm2(ffn(attended, ctx) + attended);
  if (after_ffn) out = after_ffn(out);
  return out;
}

DecoderLayer DecoderLayer::create(ParameterSet& params, Rng& rng, const std::string& name, int width, int heads,
                                  int hidden, ParamGroup group) {
  DecoderLayer layer;
  layer.self_attention = MultiHeadAttention::create(params, rng, name + ".self_attention", width, heads, group);
  layer.norm1 = LayerNormParams::create(params, name + ".norm1", width, group);
  layer.cross_attention = MultiHeadAttention::create(params, rng, name + ".cross_attention", width, heads, group);
  layer.norm2 = LayerNormParams::create(params, name + ".norm2", width, group);
  layer.ffn = FeedForward::create(params, rng, name + ".ffn", width, hidden, group);
  layer.norm3 = LayerNormParams::create(params, name + ".norm3", width, group);
  return layer;
}

Tensor DecoderLayer::operator()(const Tensor& y, const Tensor& memory, const Mask& self_keep, const Mask& cross_keep,
                                const ForwardContext& ctx, const SublayerHook& after_cross) const {
  const Tensor s = norm1(self_attention(y, y, self_keep) + y);
  Tensor c = norm2(cross_attention(s, memory, cross_keep) + s);
  if (after_cross) c = after_cross(c);
  return norm3(ffn(c, ctx) + c);
}

RowMatrix<double> sinusoidal_positions(Index positions, Index width) {
  RowMatrix<double> pe(positions, width);
  for (Index p = 0; p < positions; ++p) {
    for (Index i = 0; i < width; i += 2) {
      const double angle = static_cast<double>(p) / std::pow(10000.0, static_cast<double>(i) / static_cast<double>(width));
      pe(p, i) = std::sin(angle);
      if (i + 1 < width) pe(p, i + 1) = std::cos(angle);
    }
  }
  return pe;
}

Tensor embed_and_position(std::span<const int> token_ids, const Tensor& embedding_table,
                          const RowMatrix<double>& pe_table) {
  SequenceLayout layout;
  layout.batch = 1;
  layout.length = static_cast<Index>(token_ids.size());
  layout.valid.assign(token_ids.size(), true);
  return embed_and_position(token_ids, layout, embedding_table, pe_table);
}

Tensor embed_and_position(std::span<const int> token_ids, const SequenceLayout& layout,
                          const Tensor& embedding_table, const RowMatrix<double>& pe_table) {
  if (static_cast<Index>(token_ids.size()) != layout.rows())
    throw ShapeError("embed_and_position: " + std::to_string(token_ids.size()) + " ids for a " +
                     std::to_string(layout.batch) + "x" + std::to_string(layout.length) + " layout");
  if (layout.length > pe_table.rows())
    throw LengthError("sequence of " + std::to_string(layout.length) + " tokens exceeds the " +
                      std::to_string(pe_table.rows()) + "-position cap");
  if (pe_table.cols() != embedding_table.cols())
    throw ShapeError("positional table width does not match embedding width");
  for (int id : token_ids)
    if (id < 0 || id >= embedding_table.rows())
      throw VocabularyError("token id " + std::to_string(id) + " outside vocabulary of " +
                            std::to_string(embedding_table.rows()));
  RowMatrix<double> pe(layout.rows(), pe_table.cols());
  for (Index b = 0; b < layout.batch; ++b) pe.middleRows(b * layout.length, layout.length) = pe_table.topRows(layout.length);
  return gather_rows(embedding_table, token_ids) + Tensor(std::move(pe));
}

Backbone Backbone::create(const BackboneConfig& config, ParameterSet& params, Rng& rng) {
  config.validate();
  Backbone bb;
  bb.config = config;
  const double embed_std = 1.0 / std::sqrt(static_cast<double>(config.d_model));
  bb.embedding = params.add("embedding", Tensor::randn({config.vocab_size, config.d_model}, rng, embed_std),
                            ParamGroup::Backbone);
  bb.positions = sinusoidal_positions(config.max_positions, config.d_model);
  for (int l = 0; l < config.layers; ++l)
    bb.encoder.push_back(EncoderLayer::create(params, rng, "encoder." + std::to_string(l), config.d_model,
                                              config.heads, config.d_ff, ParamGroup::Backbone));
  for (int l = 0; l < config.layers; ++l)
    bb.decoder.push_back(DecoderLayer::create(params, rng, "decoder." + std::to_string(l), config.d_model,
                                              config.heads, config.d_ff, ParamGroup::Backbone));
  return bb;
}

Tensor Backbone::output_logits(const Tensor& decoder_out) const { return matmul_nt(decoder_out, embedding); }

}  // namespace vgsum
