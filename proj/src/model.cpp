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

#include "vgsum/model.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "vgsum/tensor_io.hpp"

namespace vgsum {

using nlohmann::json;

namespace {

constexpr const char* kConfigSchema = "vgsum.model_config";
constexpr int kConfigVersion = 1;
constexpr std::uint64_t kFusionStream = 0x9E3779B97F4A7C15ULL;

json backbone_json(const BackboneConfig& c) {
  return {{"layers", c.layers},     {"d_model", c.d_model},       {"heads", c.heads},
          {"d_ff", c.d_ff},         {"vocab_size", c.vocab_size}, {"max_positions", c.max_positions},
          {"dropout", c.dropout}};
}

json fusion_json(const FusionConfig& f) {
  return {{"mechanism", to_string(f.mechanism)},
          {"d_cross", f.d_cross},
          {"fusion_heads", f.fusion_heads},
          {"use_forget_gate", f.use_forget_gate},
          {"use_vtf", f.use_vtf},
          {"vtf_layers", f.vtf_layers},
          {"vtf_heads", f.vtf_heads},
          {"vtf_ff", f.vtf_ff},
          {"encoder_locations", f.encoder_locations},
          {"decoder_locations", f.decoder_locations}};
}

json config_json(const ModelConfig& c) {
  json j = {{"schema", kConfigSchema},
            {"version", kConfigVersion},
            {"backbone", backbone_json(c.backbone)},
            {"d_visual", c.d_visual},
            {"visual_cap", c.visual_cap},
            {"seed", c.seed}};
  j["fusion"] = c.fusion ? fusion_json(*c.fusion) : json(nullptr);
  return j;
}

template <typename T>
T required(const json& j, const char* key) {
  if (!j.contains(key)) throw InputError(std::string("model config is missing '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw InputError(std::string("model config field '") + key + "': " + e.what());
  }
}

}  // namespace

void ModelConfig::validate() {
  backbone.validate();
  if (d_visual <= 0) throw ConfigError("d_visual must be positive");
  if (visual_cap <= 0) throw ConfigError("visual_cap must be positive");
  if (backbone.max_positions < kMaxSummaryTokens)
    throw ConfigError("max_positions must cover the " + std::to_string(kMaxSummaryTokens) + "-token summary cap");
  if (fusion) {
    fusion->fill_default_locations(backbone.layers);
    fusion->validate(backbone, d_visual);
  }
}

std::string ModelConfig::to_json() const { return config_json(*this).dump(2); }

ModelConfig ModelConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("model config is not valid JSON: ") + e.what());
  }
  if (required<std::string>(j, "schema") != kConfigSchema) throw InputError("not a model config document");
  const int version = required<int>(j, "version");
  if (version != kConfigVersion) throw InputError("unsupported model config version " + std::to_string(version));

  ModelConfig c;
  const json& b = j.at("backbone");
  c.backbone.layers = required<int>(b, "layers");
  c.backbone.d_model = required<int>(b, "d_model");
  c.backbone.heads = required<int>(b, "heads");
  c.backbone.d_ff = required<int>(b, "d_ff");
  c.backbone.vocab_size = required<int>(b, "vocab_size");
  c.backbone.max_positions = required<int>(b, "max_positions");
  c.backbone.dropout = required<double>(b, "dropout");
  c.d_visual = required<int>(j, "d_visual");
  c.visual_cap = required<int>(j, "visual_cap");
  c.seed = required<std::uint64_t>(j, "seed");
  if (j.contains("fusion") && !j.at("fusion").is_null()) {
    const json& f = j.at("fusion");
    FusionConfig fc;
    fc.mechanism = parse_fusion_mechanism(required<std::string>(f, "mechanism"));
    fc.d_cross = required<int>(f, "d_cross");
    fc.fusion_heads = required<int>(f, "fusion_heads");
    fc.use_forget_gate = required<bool>(f, "use_forget_gate");
    fc.use_vtf = required<bool>(f, "use_vtf");
    fc.vtf_layers = required<int>(f, "vtf_layers");
    fc.vtf_heads = required<int>(f, "vtf_heads");
    fc.vtf_ff = required<int>(f, "vtf_ff");
    fc.encoder_locations = required<std::vector<bool>>(f, "encoder_locations");
    fc.decoder_locations = required<std::vector<bool>>(f, "decoder_locations");
    c.fusion = fc;
  }
  c.validate();
  return c;
}

std::string ModelConfig::hash() const {
  const std::string canonical = config_json(*this).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

EncodedSource EncodedSource::replicate(Index copies) const {
  if (source.batch != 1) throw ContractError("replicate() expects a single-sample encoding");
  EncodedSource out;
  RowMatrix<double> mem(memory.rows() * copies, memory.cols());
  for (Index c = 0; c < copies; ++c) mem.middleRows(c * memory.rows(), memory.rows()) = memory.value();
  out.memory = Tensor(std::move(mem));
  out.source.batch = copies;
  out.source.length = source.length;
  for (Index c = 0; c < copies; ++c) out.source.valid.insert(out.source.valid.end(), source.valid.begin(), source.valid.end());
  if (visual) {
    const auto& f = visual->features;
    RowMatrix<double> vis(f.rows() * copies, f.cols());
    for (Index c = 0; c < copies; ++c) vis.middleRows(c * f.rows(), f.rows()) = f.value();
    VisualFeatures vf{Tensor(std::move(vis)), {}};
    vf.layout.batch = copies;
    vf.layout.length = visual->layout.length;
    for (Index c = 0; c < copies; ++c)
      vf.layout.valid.insert(vf.layout.valid.end(), visual->layout.valid.begin(), visual->layout.valid.end());
    out.visual = std::move(vf);
  }
  return out;
}

VisionGuidedModel::VisionGuidedModel(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  Rng rng(config_.seed);
  backbone_ = Backbone::create(config_.backbone, params_, rng);
  const int layers = config_.backbone.layers;
  encoder_fusion_.resize(static_cast<std::size_t>(layers));
  decoder_fusion_.resize(static_cast<std::size_t>(layers));
  if (!config_.fusion || !config_.fusion->any_location()) return;

  // Separate stream so backbone parameters do not depend on the fusion setup.
  const FusionConfig& fc = *config_.fusion;
  Rng fusion_rng(config_.seed ^ kFusionStream);
  const int d_t = config_.backbone.d_model;
  if (fc.use_vtf)
    vtf_ = VisualEncoder::create(params_, fusion_rng, "vtf", config_.d_visual, fc.vtf_layers, fc.vtf_heads, fc.vtf_ff,
                                 config_.visual_cap);
  for (int l = 0; l < layers; ++l)
    if (fc.encoder_locations[static_cast<std::size_t>(l)])
      encoder_fusion_[static_cast<std::size_t>(l)] =
          FusionSublayer::create(params_, fusion_rng, "encoder." + std::to_string(l) + ".fusion", fc, d_t,
                                 config_.d_visual);
  for (int l = 0; l < layers; ++l)
    if (fc.decoder_locations[static_cast<std::size_t>(l)])
      decoder_fusion_[static_cast<std::size_t>(l)] =
          FusionSublayer::create(params_, fusion_rng, "decoder." + std::to_string(l) + ".fusion", fc, d_t,
                                 config_.d_visual);
  uses_visual_ = true;
}

EncodedSource VisionGuidedModel::encode(std::span<const int> source_ids, const SequenceLayout& source,
                                        const RowMatrix<double>* visual, const SequenceLayout* visual_layout,
                                        const ForwardContext& outer_ctx, ForwardTrace* trace) const {
  ForwardContext ctx = outer_ctx;
  ctx.dropout = config_.backbone.dropout;
  EncodedSource out;
  out.source = source;
  if (uses_visual_) {
    if (visual == nullptr || visual_layout == nullptr || visual_layout->batch == 0)
      throw InputError("model has fusion layers but the batch carries no visual features");
    if (visual_layout->batch != source.batch) throw InputError("visual and text batch sizes differ");
    if (visual->cols() != config_.d_visual)
      throw InputError("visual width " + std::to_string(visual->cols()) + " does not match d_visual " +
                       std::to_string(config_.d_visual));
    if (visual_layout->length > config_.visual_cap)
      throw LengthError("visual sequence of " + std::to_string(visual_layout->length) + " exceeds cap " +
                        std::to_string(config_.visual_cap));
    VisualFeatures raw{Tensor(*visual), *visual_layout};
    out.visual = vtf_ ? (*vtf_)(raw, ctx) : raw;
  }

  Tensor z = embed_and_position(source_ids, source, backbone_.embedding, backbone_.positions);
  const Mask self_keep = attention_mask(source, source, false);
  for (std::size_t l = 0; l < backbone_.encoder.size(); ++l) {
    SublayerHook hook;
    if (encoder_fusion_[l]) {
      hook = [&, l](const Tensor& x) {
        return (*encoder_fusion_[l])(x, source, *out.visual, trace ? &trace->encoder : nullptr);
      };
    }
    z = backbone_.encoder[l](z, self_keep, ctx, hook);
  }
  out.memory = z;
  return out;
}

Tensor VisionGuidedModel::decode(const EncodedSource& encoded, std::span<const int> target_in,
                                 const SequenceLayout& target, const ForwardContext& outer_ctx,
                                 ForwardTrace* trace) const {
  ForwardContext ctx = outer_ctx;
  ctx.dropout = config_.backbone.dropout;
  Tensor y = embed_and_position(target_in, target, backbone_.embedding, backbone_.positions);
  const Mask self_keep = attention_mask(target, target, true);
  const Mask cross_keep = attention_mask(target, encoded.source, false);
  for (std::size_t l = 0; l < backbone_.decoder.size(); ++l) {
    SublayerHook hook;
    if (decoder_fusion_[l]) {
      hook = [&, l](const Tensor& x) {
        return (*decoder_fusion_[l])(x, target, *encoded.visual, trace ? &trace->decoder : nullptr);
      };
    }
    y = backbone_.decoder[l](y, encoded.memory, self_keep, cross_keep, ctx, hook);
  }
  return backbone_.output_logits(y);
}

Tensor VisionGuidedModel::forward(const MultimodalBatch& batch, const ForwardContext& ctx, ForwardTrace* trace) const {
  const EncodedSource encoded =
      encode(batch.source_ids, batch.source, batch.has_visual() ? &batch.visual : nullptr,
             batch.has_visual() ? &batch.visual_layout : nullptr, ctx, trace);
  const Tensor logits = decode(encoded, batch.target_in, batch.target, ctx, trace);
  return reshape(logits, {batch.target.batch, batch.target.length, logits.cols()});
}

void VisionGuidedModel::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "config.json");
    if (!out) throw InputError("cannot write " + (dir / "config.json").string());
    out << config_.to_json() << '\n';
  }
  TensorMap tensors;
  for (const auto& e : params_.entries()) tensors.emplace(e.name, e.tensor.detach());
  save_tensors(dir / "params.bin", tensors);
}

VisionGuidedModel VisionGuidedModel::load(const std::filesystem::path& dir) {
  std::ifstream in(dir / "config.json");
  if (!in) throw InputError("cannot open " + (dir / "config.json").string());
  std::stringstream text;
  text << in.rdbuf();
  VisionGuidedModel model(ModelConfig::from_json(text.str()));
  const TensorMap tensors = load_tensors(dir / "params.bin");
  if (tensors.size() != model.params_.entries().size())
    throw InputError("checkpoint holds " + std::to_string(tensors.size()) + " tensors, model expects " +
                     std::to_string(model.params_.entries().size()));
  for (auto& e : model.params_.entries()) {
    const auto it = tensors.find(e.name);
    if (it == tensors.end()) throw InputError("checkpoint is missing parameter " + e.name);
    if (it->second.shape() != e.tensor.shape())
      throw InputError("parameter " + e.name + " has shape " + shape_string(it->second.shape()) + ", expected " +
                       shape_string(e.tensor.shape()));
    e.tensor.mutable_value() = it->second.value();
  }
  return model;
}

void VisionGuidedModel::copy_parameters_from(const VisionGuidedModel& other) {
  auto& mine = params_.entries();
  const auto& theirs = other.params_.entries();
  if (mine.size() != theirs.size()) throw ContractError("parameter layouts differ");
  for (std::size_t i = 0; i < mine.size(); ++i) {
    if (mine[i].name != theirs[i].name || mine[i].tensor.shape() != theirs[i].tensor.shape())
      throw ContractError("parameter layouts differ at " + mine[i].name);
    mine[i].tensor.mutable_value() = theirs[i].tensor.value();
  }
}

}  // namespace vgsum
