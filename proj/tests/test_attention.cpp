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

// Backbone layers, attention masking and the fusion mechanisms.

#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "test_support.hpp"
#include "vgsum/grad_check.hpp"

using namespace vgsum;
using vgsum::testing::random_matrix;

namespace {

SequenceLayout full_layout(Index length) { return SequenceLayout::from_lengths(std::vector<Index>{length}, length); }

RowMatrix<double> permute_rows(const RowMatrix<double>& x, const std::vector<Index>& perm) {
  RowMatrix<double> out(x.rows(), x.cols());
  for (std::size_t i = 0; i < perm.size(); ++i) out.row(static_cast<Index>(i)) = x.row(perm[i]);
  return out;
}

double max_abs_diff(const RowMatrix<double>& a, const RowMatrix<double>& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("sinusoidal positions") {
  const RowMatrix<double> pe = sinusoidal_positions(4, 6);
  for (Index i = 0; i < 6; ++i) CHECK(pe(0, i) == (i % 2 == 0 ? 0.0 : 1.0));
  CHECK(std::abs(pe(3, 2) - std::sin(3.0 / std::pow(10000.0, 2.0 / 6.0))) < 1e-15);
  CHECK(std::abs(pe(3, 3) - std::cos(3.0 / std::pow(10000.0, 2.0 / 6.0))) < 1e-15);
}

TEST_CASE("embed_and_position") {
  const RowMatrix<double> pe = sinusoidal_positions(8, 4);
  const std::vector<int> ids = {3, 0, 5};
  const Tensor out = embed_and_position(ids, Tensor::zeros({6, 4}), pe);
  CHECK(out.value() == pe.topRows(3));

  const std::vector<int> bad = {6};
  CHECK_THROWS_AS(embed_and_position(bad, Tensor::zeros({6, 4}), pe), VocabularyError);
  const std::vector<int> long_seq(9, 1);
  CHECK_THROWS_AS(embed_and_position(long_seq, Tensor::zeros({6, 4}), pe), LengthError);

  const RowMatrix<double> pe512 = sinusoidal_positions(512, 4);
  const std::vector<int> cap(512, 1), over(513, 1);
  CHECK(embed_and_position(cap, Tensor::zeros({6, 4}), pe512).rows() == 512);
  CHECK_THROWS_AS(embed_and_position(over, Tensor::zeros({6, 4}), pe512), LengthError);
}

TEST_CASE("self-attention over a single position returns the projected value row") {
  Rng rng(20);
  ParameterSet params;
  const auto mha = MultiHeadAttention::create(params, rng, "a", 8, 2, ParamGroup::Backbone);
  const Tensor z(random_matrix(rng, 1, 8));
  const SequenceLayout one = full_layout(1);
  const RowMatrix<double> got = mha(z, z, attention_mask(one, one, false)).value();
  const RowMatrix<double> want = z.value() * mha.wv.value() * mha.wo.value();
  CHECK(max_abs_diff(got, want) < 1e-12);
}

TEST_CASE("attention weights are distributions over unmasked keys") {
  Rng rng(21);
  std::uniform_int_distribution<Index> len(1, 6);
  for (int trial = 0; trial < 100; ++trial) {
    const std::vector<Index> q_len = {len(rng), len(rng)};
    const std::vector<Index> k_len = {len(rng), len(rng)};
    const SequenceLayout ql = SequenceLayout::from_lengths(q_len, 6);
    const SequenceLayout kl = SequenceLayout::from_lengths(k_len, 6);
    const Mask keep = attention_mask(ql, kl, false);
    AttentionProbe probe;
    multi_head_attend(Tensor(random_matrix(rng, 12, 8, 3.0)), Tensor(random_matrix(rng, 12, 8, 3.0)),
                      Tensor(random_matrix(rng, 12, 8)), keep, 2, &probe);
    REQUIRE(probe.weights.size() == 2);
    for (const auto& w : probe.weights)
      for (Index r = 0; r < 12; ++r) {
        double total = 0.0;
        for (Index c = 0; c < 12; ++c) {
          if (keep(r, c))
            total += w(r, c);
          else
            CHECK(w(r, c) < 1e-12);
        }
        CHECK(std::abs(total - 1.0) < 1e-9);
      }
  }
}

TEST_CASE("feed-forward: zero in, zero out; eval mode deterministic") {
  Rng rng(22);
  ParameterSet params;
  const auto ffn = FeedForward::create(params, rng, "f", 8, 16, ParamGroup::Backbone);
  CHECK(ffn(Tensor::zeros({3, 8}), ForwardContext{}).value().isZero(0));
  const Tensor z(random_matrix(rng, 3, 8));
  CHECK(ffn(z, ForwardContext{}).value() == ffn(z, ForwardContext{}).value());

  Rng drop(1);
  const ForwardContext train{true, &drop, 0.5};
  CHECK(ffn(z, train).value() != ffn(z, ForwardContext{}).value());
}

TEST_CASE("layers preserve shape; decoder is causal; encoder ignores padding") {
  Rng rng(23);
  ParameterSet params;
  const auto enc = EncoderLayer::create(params, rng, "e", 8, 2, 16, ParamGroup::Backbone);
  const auto dec = DecoderLayer::create(params, rng, "d", 8, 2, 16, ParamGroup::Backbone);
  const ForwardContext eval;

  // Padding invariance: the same three tokens with and without two pad rows.
  const RowMatrix<double> x = random_matrix(rng, 3, 8);
  RowMatrix<double> padded = RowMatrix<double>::Zero(5, 8);
  padded.topRows(3) = x;
  padded.bottomRows(2) = random_matrix(rng, 2, 8, 10.0);
  const SequenceLayout short_l = full_layout(3);
  const SequenceLayout pad_l = SequenceLayout::from_lengths(std::vector<Index>{3}, 5);
  const RowMatrix<double> a = enc(Tensor(x), attention_mask(short_l, short_l, false), eval).value();
  const RowMatrix<double> b = enc(Tensor(padded), attention_mask(pad_l, pad_l, false), eval).value();
  CHECK(a.rows() == 3);
  CHECK(max_abs_diff(a, b.topRows(3)) < 1e-9);

  // Causality: perturbing inputs after position i leaves outputs up to i unchanged.
  const SequenceLayout tl = full_layout(5);
  const Mask causal = attention_mask(tl, tl, true);
  const Tensor memory(random_matrix(rng, 4, 8));
  const SequenceLayout ml = full_layout(4);
  const Mask cross = attention_mask(tl, ml, false);
  const RowMatrix<double> y = random_matrix(rng, 5, 8);
  const RowMatrix<double> base = dec(Tensor(y), memory, causal, cross, eval).value();
  CHECK(base.rows() == 5);
  for (Index i = 0; i < 4; ++i) {
    RowMatrix<double> perturbed = y;
    perturbed.bottomRows(4 - i) += random_matrix(rng, 4 - i, 8);
    const RowMatrix<double> out = dec(Tensor(perturbed), memory, causal, cross, eval).value();
    CHECK(max_abs_diff(out.topRows(i + 1), base.topRows(i + 1)) < 1e-9);
  }
}

// ---------------------------------------------------------------------------
// Fusion mechanisms

TEST_CASE("dot-product fusion worked examples") {
  Rng rng(30);
  ParameterSet params;
  auto dot = DotProductFusion::create(params, rng, "dot", 2, 3, false, false);

  SUBCASE("single visual row is attended with weight 1") {
    FusionTrace trace;
    const Tensor text(random_matrix(rng, 4, 2));
    const Tensor vis(random_matrix(rng, 1, 3));
    dot(text, vis, Mask::Constant(4, 1, true), &trace);
    REQUIRE(trace.attention.size() == 1);
    CHECK((trace.attention[0].array() == 1.0).all());
  }
  SUBCASE("zero W2 annihilates the output") {
    dot.w2.mutable_value().setZero();
    const Tensor out = dot(Tensor(random_matrix(rng, 4, 2)), Tensor(random_matrix(rng, 5, 3)), Mask::Constant(4, 5, true));
    CHECK(out.value().isZero(0));
  }
  SUBCASE("hand-set scores [0, ln 3]") {
    // Z_t = [1, 0]; W1 maps v1 -> [0, *] and v2 -> [ln 3, *], so Z_t Z_v'^T = [0, ln 3].
    dot.w1.mutable_value() << 1, 0, 0, 0, 0, 0;
    RowMatrix<double> v(2, 3);
    v << 0, 5, -1, std::log(3.0), 2, 4;
    RowMatrix<double> t(1, 2);
    t << 1, 0;
    // W2 selects the attended block.
    dot.w2 = Tensor(RowMatrix<double>::Zero(5, 2));
    dot.w2.mutable_value()(2, 0) = 1;
    dot.w2.mutable_value()(3, 1) = 1;
    FusionTrace trace;
    const Tensor out = dot(Tensor(t), Tensor(v), Mask::Constant(1, 2, true), &trace);
    CHECK(std::abs(trace.attention[0](0, 0) - 0.25) < 1e-15);
    CHECK(std::abs(trace.attention[0](0, 1) - 0.75) < 1e-15);
    const RowMatrix<double> attended = 0.25 * v.row(0) + 0.75 * v.row(1);
    CHECK(std::abs(out.value()(0, 0) - attended(0, 0)) < 1e-15);
    CHECK(std::abs(out.value()(0, 1) - attended(0, 1)) < 1e-15);
  }
  SUBCASE("fully masked visual input is degenerate") {
    CHECK_THROWS_AS(dot(Tensor(random_matrix(rng, 2, 2)), Tensor(random_matrix(rng, 3, 3)), Mask::Constant(2, 3, false)),
                    DegenerateInputError);
  }
}

TEST_CASE("dot-product weight shapes follow the attended width") {
  Rng rng(31);
  ParameterSet params;
  const auto plain = DotProductFusion::create(params, rng, "p", 8, 6, false, false);
  const auto variant = DotProductFusion::create(params, rng, "v", 8, 6, true, false);
  CHECK(plain.w1.shape() == Shape{6, 8});
  CHECK(plain.w2.shape() == Shape{14, 8});
  CHECK(variant.w2.shape() == Shape{16, 8});
}

TEST_CASE("multi-head fusion worked examples") {
  Rng rng(32);
  ParameterSet params;
  auto cma = MultiHeadFusion::create(params, rng, "cma", 4, 3, 4, 2, false);
  CHECK(cma.w3.shape() == Shape{8, 4});

  SUBCASE("selector W3 passes text through") {
    RowMatrix<double> sel = RowMatrix<double>::Zero(8, 4);
    sel.topRows(4).setIdentity();
    cma.w3 = Tensor(sel);
    const RowMatrix<double> t = random_matrix(rng, 3, 4);
    const Tensor out = cma(Tensor(t), Tensor(random_matrix(rng, 5, 3)), Mask::Constant(3, 5, true));
    CHECK(out.value() == t);
  }
  SUBCASE("single visual position: output independent of queries") {
    RowMatrix<double> sel = RowMatrix<double>::Zero(8, 4);
    sel.bottomRows(4).setIdentity();
    cma.w3 = Tensor(sel);
    const RowMatrix<double> v = random_matrix(rng, 1, 3);
    const Tensor out = cma(Tensor(random_matrix(rng, 3, 4, 5.0)), Tensor(v), Mask::Constant(3, 1, true));
    const RowMatrix<double> want = v * cma.wv.value();
    for (Index r = 0; r < 3; ++r) CHECK(max_abs_diff(out.value().row(r), want) < 1e-12);
  }
  SUBCASE("attention rows sum to one over unmasked visual positions") {
    std::uniform_int_distribution<Index> len(1, 7);
    for (int trial = 0; trial < 100; ++trial) {
      const SequenceLayout tl = SequenceLayout::from_lengths(std::vector<Index>{3, 2}, 3);
      const SequenceLayout vl = SequenceLayout::from_lengths(std::vector<Index>{len(rng), len(rng)}, 7);
      const Mask keep = attention_mask(tl, vl, false);
      FusionTrace trace;
      cma(Tensor(random_matrix(rng, 6, 4, 2.0)), Tensor(random_matrix(rng, 14, 3, 2.0)), keep, &trace);
      REQUIRE(trace.attention.size() == 2);
      for (const auto& w : trace.attention) {
        CHECK(((w.rowwise().sum().array() - 1.0).abs() < 1e-9).all());
        for (Index r = 0; r < w.rows(); ++r)
          for (Index c = 0; c < w.cols(); ++c)
            if (!keep(r, c)) CHECK(w(r, c) < 1e-12);
      }
    }
  }
}

TEST_CASE("forget gate worked examples") {
  Rng rng(33);
  ParameterSet params;
  auto gate = ForgetGate::create(params, rng, "g", 4, 3);
  CHECK(gate.wf.shape() == Shape{7, 4});
  const RowMatrix<double> o = random_matrix(rng, 5, 4);
  const Tensor text(random_matrix(rng, 5, 3));

  FusionTrace trace;
  const Tensor out = gate(Tensor(o), text, &trace);
  REQUIRE(trace.gates.size() == 1);
  CHECK((trace.gates[0].array() > 0.0).all());
  CHECK((trace.gates[0].array() < 1.0).all());
  CHECK(gate(Tensor::zeros({5, 4}), text).value().isZero(0));

  gate.wf.mutable_value().setZero();
  CHECK(max_abs_diff(gate(Tensor(o), text).value(), 0.5 * o) == 0.0);
}

TEST_CASE("visual encoder preserves shape and breaks permutation symmetry") {
  Rng rng(34);
  ParameterSet params;
  const auto vtf = VisualEncoder::create(params, rng, "vtf", 6, 1, 2, 8, 16);
  const RowMatrix<double> v = random_matrix(rng, 5, 6);
  const SequenceLayout vl = full_layout(5);
  const VisualFeatures out = vtf({Tensor(v), vl}, ForwardContext{});
  CHECK(out.features.shape() == Shape{5, 6});
  const std::vector<Index> perm = {4, 2, 0, 1, 3};
  const VisualFeatures permuted = vtf({Tensor(permute_rows(v, perm)), vl}, ForwardContext{});
  CHECK(max_abs_diff(permuted.features.value(), permute_rows(out.features.value(), perm)) > 1e-6);

  CHECK_THROWS_AS(VisualEncoder::create(params, rng, "bad", 6, 1, 4, 8, 16), ConfigError);
}

TEST_CASE("fusion sub-layer laws") {
  Rng rng(35);
  for (const auto mech : {FusionMechanism::DotProduct, FusionMechanism::DotProductVariant, FusionMechanism::MultiHead}) {
    CAPTURE(to_string(mech));
    ParameterSet params;
    auto cfg = vgsum::testing::tiny_fusion(mech, true);
    auto sub = FusionSublayer::create(params, rng, "f", cfg, 8, 6);
    const Tensor text(random_matrix(rng, 6, 8));
    const SequenceLayout tl = SequenceLayout::from_lengths(std::vector<Index>{3, 2}, 3);
    const SequenceLayout vl = SequenceLayout::from_lengths(std::vector<Index>{4, 2}, 4);
    const RowMatrix<double> v = random_matrix(rng, 8, 6);

    const Tensor out = sub(text, tl, {Tensor(v), vl});
    CHECK(out.shape() == Shape{6, 8});

    // Permuting each sample's valid visual rows (padding stays put) changes nothing.
    const std::vector<Index> perm = {2, 0, 3, 1, 5, 4, 6, 7};
    const Tensor permuted = sub(text, tl, {Tensor(permute_rows(v, perm)), vl});
    CHECK(max_abs_diff(out.value(), permuted.value()) < 1e-9);

    // Empty visual sequence for sample 1: its rows reduce to LN(Z).
    const SequenceLayout vl_empty = SequenceLayout::from_lengths(std::vector<Index>{4, 0}, 4);
    const RowMatrix<double> partial = sub(text, tl, {Tensor(v), vl_empty}).value();
    const RowMatrix<double> ln = sub.norm(text).value();
    CHECK(max_abs_diff(partial.bottomRows(3), ln.bottomRows(3)) < 1e-12);
    CHECK(max_abs_diff(partial.topRows(3), out.value().topRows(3)) < 1e-12);

    // Zeroed output projection severs the vision path.
    Tensor proj = sub.output_projection();
    proj.mutable_value().setZero();
    CHECK(max_abs_diff(sub(text, tl, {Tensor(v), vl}).value(), ln) < 1e-12);
  }
}

TEST_CASE("fusion gradients") {
  Rng rng(36);
  for (const auto mech : {FusionMechanism::DotProduct, FusionMechanism::DotProductVariant, FusionMechanism::MultiHead}) {
    for (const bool fg : {false, true}) {
      CAPTURE(to_string(mech));
      CAPTURE(fg);
      ParameterSet params;
      const auto sub = FusionSublayer::create(params, rng, "f", vgsum::testing::tiny_fusion(mech, fg), 4, 6);
      // Larger weights keep gradients well above finite-difference noise.
      for (auto& e : params.entries())
        if (e.name.find("norm") == std::string::npos) e.tensor.mutable_value() *= 20.0;
      Tensor text(random_matrix(rng, 4, 4));
      Tensor vis(random_matrix(rng, 6, 6));
      const SequenceLayout tl = SequenceLayout::from_lengths(std::vector<Index>{2, 2}, 2);
      const SequenceLayout vl = SequenceLayout::from_lengths(std::vector<Index>{3, 2}, 3);
      const RowMatrix<double> w = random_matrix(rng, 4, 4);
      auto all = params.tensors();
      all.push_back(text);
      all.push_back(vis);
      const auto f = [&] { return vgsum::testing::readout(sub(text, tl, {vis, vl}), w); };
      CHECK(grad_check<double>(f, all).max_error < 1e-4);
    }
  }
}

TEST_CASE("mean gate scores") {
  FusionTrace trace;
  RowMatrix<double> g(4, 2);
  g << 0.2, 0.4, 0.9, 0.9, 0.6, 0.8, 0.1, 0.3;
  trace.gates.push_back(g);
  const SequenceLayout tl = SequenceLayout::from_lengths(std::vector<Index>{1, 0}, 2);
  const auto s = mean_gate_scores(trace, tl);
  CHECK(std::abs(s[0] - 0.3) < 1e-15);
  CHECK(std::abs(s[1] - 0.45) < 1e-15);
}
