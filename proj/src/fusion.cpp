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

#include "vgsum/fusion.hpp"

#include <atomic>
#include <iostream>

namespace vgsum {

std::string to_string(FusionMechanism m) {
  switch (m) {
    case FusionMechanism::DotProduct:
      return "dot_product";
    case FusionMechanism::DotProductVariant:
      return "dot_product_variant";
    case FusionMechanism::MultiHead:
      return "multi_head";
  }
  return "unknown";
}

FusionMechanism parse_fusion_mechanism(const std::string& name) {
  if (name == "dot_product" || name == "dot") return FusionMechanism::DotProduct;
  if (name == "dot_product_variant" || name == "variant") return FusionMechanism::DotProductVariant;
  if (name == "multi_head" || name == "multihead") return FusionMechanism::MultiHead;
  throw ConfigError("unknown fusion mechanism '" + name + "'");
}

bool FusionConfig::any_location() const {
  for (bool b : encoder_locations)
    if (b) return true;
  for (bool b : decoder_locations)
    if (b) return true;
  return false;
}

void FusionConfig::fill_default_locations(int layers) {
  if (encoder_locations.empty()) encoder_locations.assign(static_cast<std::size_t>(layers), true);
  if (decoder_locations.empty()) decoder_locations.assign(static_cast<std::size_t>(layers), false);
}

void FusionConfig::validate(const BackboneConfig& backbone, int d_visual) const {
  const auto layers = static_cast<std::size_t>(backbone.layers);
  if (encoder_locations.size() != layers || decoder_locations.size() != layers)
    throw ConfigError("fusion location patterns must have one flag per layer (" + std::to_string(layers) + ")");
  if (d_visual <= 0) throw ConfigError("visual width must be positive");
  const int dc = cross_width(backbone.d_model);
  if (mechanism == FusionMechanism::MultiHead) {
    if (fusion_heads <= 0 || dc % fusion_heads != 0)
      throw ConfigError("cross width " + std::to_string(dc) + " is not divisible by " +
                        std::to_string(fusion_heads) + " fusion heads");
  }
  if (use_vtf) {
    if (vtf_layers <= 0 || vtf_heads <= 0 || vtf_ff <= 0) throw ConfigError("VTF extents must be positive");
    if (d_visual % vtf_heads != 0)
      throw ConfigError("visual width " + std::to_string(d_visual) + " is not divisible by " +
                        std::to_string(vtf_heads) + " VTF heads");
  }
}

namespace {

Tensor fusion_projection(ParameterSet& params, Rng& rng, const std::string& name, int rows, int cols) {
  return params.add(name, Tensor::randn({rows, cols}, rng, kInitStddev), ParamGroup::Fusion);
}

void require_some_visual(const Mask& keep) {
  if (!keep.any()) throw DegenerateInputError("fusion received a visual sequence with every position masked");
}

void warn_empty_visual() {
  static std::atomic<bool> warned{false};
  if (!warned.exchange(true))
    std::cerr << "warning: sample with no visual positions; fusion sub-layer reduces to LN(Z)\n";
}

}  // namespace

ForgetGate ForgetGate::create(ParameterSet& params, Rng& rng, const std::string& name, int width, int d_text) {
  return {fusion_projection(params, rng, name + ".wf", width + d_text, width)};
}

Tensor ForgetGate::operator()(const Tensor& attended, const Tensor& text, FusionTrace* trace) const {
  const Tensor f = sigmoid(matmul(concat(attended, text), wf));
  if (trace) trace->gates.push_back(f.value());
  return mul(f, attended);
}

DotProductFusion DotProductFusion::create(ParameterSet& params, Rng& rng, const std::string& name, int d_text,
                                          int d_visual, bool variant, bool forget_gate) {
  DotProductFusion f;
  f.variant = variant;
  f.w1 = fusion_projection(params, rng, name + ".w1", d_visual, d_text);
  const int attended_width = variant ? d_text : d_visual;
  f.w2 = fusion_projection(params, rng, name + ".w2", d_text + attended_width, d_text);
  if (forget_gate) f.gate = ForgetGate::create(params, rng, name + ".gate", attended_width, d_text);
  return f;
}

Tensor DotProductFusion::operator()(const Tensor& text, const Tensor& visual, const Mask& keep,
                                    FusionTrace* trace) const {
  require_some_visual(keep);
  const Tensor projected = matmul(visual, w1);
  const Tensor scores = masked_softmax(matmul_nt(text, projected), keep);
  if (trace) trace->attention.push_back(scores.value());
  Tensor attended = matmul(scores, variant ? projected : visual);
  if (gate) attended = (*gate)(attended, text, trace);
  return matmul(concat(text, attended), w2);
}

MultiHeadFusion MultiHeadFusion::create(ParameterSet& params, Rng& rng, const std::string& name, int d_text,
                                        int d_visual, int d_cross, int heads, bool forget_gate) {
  MultiHeadFusion f;
  f.heads = heads;
  f.wq = fusion_projection(params, rng, name + ".wq", d_text, d_cross);
  f.wk = fusion_projection(params, rng, name + ".wk", d_visual, d_cross);
  f.wv = fusion_projection(params, rng, name + ".wv", d_visual, d_cross);
  f.w3 = fusion_projection(params, rng, name + ".w3", d_text + d_cross, d_text);
  if (forget_gate) f.gate = ForgetGate::create(params, rng, name + ".gate", d_cross, d_text);
  return f;
}

Tensor MultiHeadFusion::operator()(const Tensor& text, const Tensor& visual, const Mask& keep,
                                   FusionTrace* trace) const {
  require_some_visual(keep);
  AttentionProbe probe;
  Tensor o = multi_head_attend(matmul(text, wq), matmul(visual, wk), matmul(visual, wv), keep, heads,
                               trace ? &probe : nullptr);
  if (trace)
    for (auto& w : probe.weights) trace->attention.push_back(std::move(w));
  if (gate) o = (*gate)(o, text, trace);
  return matmul(concat(text, o), w3);
}

VisualEncoder VisualEncoder::create(ParameterSet& params, Rng& rng, const std::string& name, int d_visual, int layers,
                                    int heads, int hidden, int max_positions) {
  if (d_visual % heads != 0)
    throw ConfigError("visual width " + std::to_string(d_visual) + " is not divisible by " + std::to_string(heads) +
                      " VTF heads");
  VisualEncoder enc;
  enc.positions = sinusoidal_positions(max_positions, d_visual);
  for (int l = 0; l < layers; ++l)
    enc.layers.push_back(EncoderLayer::create(params, rng, name + "." + std::to_string(l), d_visual, heads, hidden,
                                              ParamGroup::Fusion));
  return enc;
}

VisualFeatures VisualEncoder::operator()(const VisualFeatures& raw, const ForwardContext& ctx) const {
  const Index m = raw.layout.length;
  if (m > positions.rows())
    throw LengthError("visual sequence of " + std::to_string(m) + " exceeds the VTF position cap");
  RowMatrix<double> pe(raw.layout.rows(), positions.cols());
  for (Index b = 0; b < raw.layout.batch; ++b) pe.middleRows(b * m, m) = positions.topRows(m);
  Tensor z = raw.features + Tensor(std::move(pe));
  const Mask keep = attention_mask(raw.layout, raw.layout, false);
  for (const auto& layer : layers) z = layer(z, keep, ctx);
  return {z, raw.layout};
}

FusionSublayer FusionSublayer::create(ParameterSet& params, Rng& rng, const std::string& name,
                                      const FusionConfig& config, int d_text, int d_visual) {
  FusionSublayer s{DotProductFusion{}, {}};
  switch (config.mechanism) {
    case FusionMechanism::DotProduct:
    case FusionMechanism::DotProductVariant:
      s.mechanism = DotProductFusion::create(params, rng, name + ".dot", d_text, d_visual,
                                             config.mechanism == FusionMechanism::DotProductVariant,
                                             config.use_forget_gate);
      break;
    case FusionMechanism::MultiHead:
      s.mechanism = MultiHeadFusion::create(params, rng, name + ".cma", d_text, d_visual,
                                            config.cross_width(d_text), config.fusion_heads, config.use_forget_gate);
      break;
  }
  s.norm = LayerNormParams::create(params, name + ".norm", d_text, ParamGroup::Fusion);
  return s;
}

Tensor FusionSublayer::operator()(const Tensor& text, const SequenceLayout& text_layout, const VisualFeatures& visual,
                                  FusionTrace* trace) const {
  if (text_layout.batch != visual.layout.batch) throw ShapeError("fusion: text and visual batch sizes differ");
  Eigen::VectorXd row_gate = Eigen::VectorXd::Ones(text.rows());
  bool any_visual = false;
  for (Index b = 0; b < visual.layout.batch; ++b) {
    if (visual.layout.sample_empty(b)) {
      row_gate.segment(b * text_layout.length, text_layout.length).setZero();
      warn_empty_visual();
    } else {
      any_visual = true;
    }
  }
  if (!any_visual) return norm(text);

  const Mask keep = attention_mask(text_layout, visual.layout, false);
  Tensor fused = std::visit([&](const auto& m) { return m(text, visual.features, keep, trace); }, mechanism);
  if (row_gate.minCoeff() < 1.0) fused = scale_rows(fused, row_gate);
  return norm(fused + text);
}

Tensor FusionSublayer::output_projection() const {
  return std::visit(
      [](const auto& m) -> Tensor {
        if constexpr (std::is_same_v<std::decay_t<decltype(m)>, DotProductFusion>)
          return m.w2;
        else
          return m.w3;
      },
      mechanism);
}

std::vector<double> mean_gate_scores(const FusionTrace& trace, const SequenceLayout& text_layout) {
  std::vector<double> scores(static_cast<std::size_t>(text_layout.batch), 0.0);
  if (trace.gates.empty()) return scores;
  for (Index b = 0; b < text_layout.batch; ++b) {
    const bool empty = text_layout.sample_empty(b);
    double total = 0.0;
    Index count = 0;
    for (const auto& g : trace.gates) {
      if (g.rows() != text_layout.rows()) throw ShapeError("gate trace does not match the text layout");
      for (Index p = 0; p < text_layout.length; ++p) {
        const Index r = b * text_layout.length + p;
        if (!empty && !text_layout.valid[static_cast<std::size_t>(r)]) continue;
        total += g.row(r).sum();
        count += g.cols();
      }
    }
    scores[static_cast<std::size_t>(b)] = total / static_cast<double>(count);
  }
  return scores;
}

}  // namespace vgsum
