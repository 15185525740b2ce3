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

// Model assembly: reduction to the text backbone, shapes, errors, checkpoints.

#include <filesystem>

#include "doctest.h"
#include "test_support.hpp"

using namespace vgsum;
using vgsum::testing::random_sample;
using vgsum::testing::tiny_fusion;
using vgsum::testing::tiny_model;

namespace {

std::vector<Sample> sample_batch(Rng& rng, int d_visual = 6) {
  return {random_sample(rng, 12, d_visual, 5, 4, 3, "a"), random_sample(rng, 12, d_visual, 3, 7, 5, "b"),
          random_sample(rng, 12, d_visual, 6, 2, 2, "c")};
}

RowMatrix<double> eval_logits(const VisionGuidedModel& model, const MultimodalBatch& batch) {
  return model.forward(batch, ForwardContext{}).value();
}

}  // namespace

TEST_CASE("fusion with every location off is the text-only backbone") {
  Rng rng(40);
  const auto samples = sample_batch(rng);
  FusionConfig off = tiny_fusion(FusionMechanism::MultiHead, true, true);
  off.encoder_locations = {false, false};
  off.decoder_locations = {false, false};
  const VisionGuidedModel text_only(tiny_model());
  const VisionGuidedModel disabled(tiny_model(off));
  CHECK_FALSE(disabled.uses_visual());
  REQUIRE(text_only.parameters().count() == disabled.parameters().count());
  const auto a = text_only.parameters().tensors();
  const auto b = disabled.parameters().tensors();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].value() == b[i].value());

  const MultimodalBatch text_batch = make_batch(samples, 0);
  const MultimodalBatch full_batch = make_batch(samples, 6);
  CHECK(eval_logits(text_only, text_batch) == eval_logits(disabled, full_batch));
}

TEST_CASE("backbone parameters do not depend on the fusion setup") {
  const VisionGuidedModel text_only(tiny_model());
  const VisionGuidedModel vg(tiny_model(tiny_fusion(FusionMechanism::DotProduct, true, true)));
  const auto text_params = text_only.parameters().tensors(ParamGroup::Backbone);
  const auto vg_params = vg.parameters().tensors(ParamGroup::Backbone);
  REQUIRE(text_params.size() == vg_params.size());
  for (std::size_t i = 0; i < text_params.size(); ++i) CHECK(text_params[i].value() == vg_params[i].value());
  CHECK(vg.parameters().tensors(ParamGroup::Fusion).size() > 0);
}

TEST_CASE("logits shape and input errors") {
  Rng rng(41);
  const auto samples = sample_batch(rng);
  const VisionGuidedModel vg(tiny_model(tiny_fusion()));
  const MultimodalBatch batch = make_batch(samples, 6);
  const Tensor logits = vg.forward(batch, ForwardContext{});
  CHECK(logits.shape() == Shape{3, batch.target.length, 12});
  CHECK(batch.target.length == 6);  // longest summary (5) plus EOS

  CHECK_THROWS_AS(vg.forward(make_batch(samples, 0), ForwardContext{}), InputError);

  std::vector<Sample> wide = {random_sample(rng, 12, 6, 4, 33, 2)};
  CHECK_THROWS_AS(vg.forward(make_batch(wide, 6), ForwardContext{}), LengthError);

  std::vector<Sample> bad_token = {random_sample(rng, 12, 6, 4, 3, 2)};
  bad_token[0].transcript[1] = 12;
  CHECK_THROWS_AS(vg.forward(make_batch(bad_token, 6), ForwardContext{}), VocabularyError);
}

TEST_CASE("visual permutation leaves logits unchanged without VTF, not with it") {
  Rng rng(42);
  for (const auto mech : {FusionMechanism::DotProduct, FusionMechanism::DotProductVariant, FusionMechanism::MultiHead}) {
    CAPTURE(to_string(mech));
    FusionConfig both = tiny_fusion(mech, true, false);
    both.decoder_locations = {true, true};
    const VisionGuidedModel plain(tiny_model(both));
    both.use_vtf = true;
    const VisionGuidedModel with_vtf(tiny_model(both));

    auto samples = sample_batch(rng);
    const auto permuted = [&] {
      auto out = samples;
      for (auto& s : out) s.visual = s.visual.colwise().reverse().eval();
      return out;
    }();
    const MultimodalBatch a = make_batch(samples, 6), b = make_batch(permuted, 6);
    CHECK((eval_logits(plain, a) - eval_logits(plain, b)).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((eval_logits(with_vtf, a) - eval_logits(with_vtf, b)).cwiseAbs().maxCoeff() > 1e-6);
  }
}

TEST_CASE("same seed and config give identical parameters and outputs") {
  Rng rng(43);
  const auto samples = sample_batch(rng);
  const ModelConfig cfg = tiny_model(tiny_fusion(FusionMechanism::MultiHead, true, true), 6, 99);
  const VisionGuidedModel a(cfg), b(cfg);
  const MultimodalBatch batch = make_batch(samples, 6);
  CHECK(eval_logits(a, batch) == eval_logits(b, batch));
  const VisionGuidedModel c(tiny_model(tiny_fusion(FusionMechanism::MultiHead, true, true), 6, 100));
  CHECK(eval_logits(a, batch) != eval_logits(c, batch));
}

TEST_CASE("config json round trip, schema checks and hash") {
  ModelConfig cfg = tiny_model(tiny_fusion(FusionMechanism::DotProductVariant, true, false));
  cfg.validate();
  const ModelConfig back = ModelConfig::from_json(cfg.to_json());
  CHECK(back.to_json() == cfg.to_json());
  CHECK(back.hash() == cfg.hash());
  CHECK(cfg.hash().size() == 16);

  ModelConfig other = cfg;
  other.fusion->use_forget_gate = false;
  CHECK(other.hash() != cfg.hash());

  CHECK_THROWS_AS(ModelConfig::from_json("{not json"), InputError);
  CHECK_THROWS_AS(ModelConfig::from_json(R"({"schema":"something-else","version":1})"), InputError);
  std::string missing = cfg.to_json();
  missing.replace(missing.find("\"d_visual\""), 10, "\"d_vis\"");
  CHECK_THROWS_AS(ModelConfig::from_json(missing), InputError);
}

TEST_CASE("checkpoint save/load reproduces logits exactly") {
  Rng rng(44);
  const auto samples = sample_batch(rng);
  const VisionGuidedModel model(tiny_model(tiny_fusion(FusionMechanism::MultiHead, true, true), 6, 5));
  const auto dir = std::filesystem::temp_directory_path() / "vgsum_model_ckpt_test";
  std::filesystem::remove_all(dir);
  model.save(dir);
  const VisionGuidedModel loaded = VisionGuidedModel::load(dir);
  const MultimodalBatch batch = make_batch(samples, 6);
  CHECK(eval_logits(model, batch) == eval_logits(loaded, batch));
  CHECK(loaded.config().hash() == model.config().hash());
  std::filesystem::remove_all(dir);
}

TEST_CASE("invalid model configs") {
  ModelConfig cfg = tiny_model();
  cfg.backbone.max_positions = 32;
  CHECK_THROWS_AS(VisionGuidedModel{cfg}, ConfigError);
  cfg = tiny_model();
  cfg.backbone.heads = 3;
  CHECK_THROWS_AS(VisionGuidedModel{cfg}, ConfigError);
  FusionConfig bad = tiny_fusion();
  bad.encoder_locations = {true};
  CHECK_THROWS_AS(VisionGuidedModel{tiny_model(bad)}, ConfigError);
}
