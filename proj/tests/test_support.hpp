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

// Small shared fixtures for the unit and acceptance tests.

#include <random>
#include <vector>

#include "vgsum/data.hpp"
#include "vgsum/model.hpp"

namespace vgsum::testing {

inline BackboneConfig tiny_backbone(int vocab = 12) {
  BackboneConfig c;
  c.layers = 2;
  c.d_model = 8;
  c.heads = 2;
  c.d_ff = 16;
  c.vocab_size = vocab;
  c.max_positions = 64;
  c.dropout = 0.0;
  return c;
}

inline ModelConfig tiny_model(std::optional<FusionConfig> fusion = {}, int d_visual = 6, std::uint64_t seed = 7) {
  ModelConfig m;
  m.backbone = tiny_backbone();
  m.fusion = std::move(fusion);
  m.d_visual = d_visual;
  m.visual_cap = 32;
  m.seed = seed;
  return m;
}

inline FusionConfig tiny_fusion(FusionMechanism mech = FusionMechanism::MultiHead, bool fg = false, bool vtf = false) {
  FusionConfig f;
  f.mechanism = mech;
  f.fusion_heads = 2;
  f.use_forget_gate = fg;
  f.use_vtf = vtf;
  f.vtf_layers = 1;
  f.vtf_heads = 2;
  f.vtf_ff = 8;
  return f;
}

inline RowMatrix<double> random_matrix(Rng& rng, Index rows, Index cols, double stddev = 1.0) {
  std::normal_distribution<double> dist(0.0, stddev);
  RowMatrix<double> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

inline Tensor random_tensor(Rng& rng, Index rows, Index cols, double stddev = 1.0) {
  return Tensor(random_matrix(rng, rows, cols, stddev));
}

/// Tokens drawn from [kReserved, vocab).
inline Sample random_sample(Rng& rng, int vocab, int d_visual, int n, int m, int t, const std::string& id = "s") {
  std::uniform_int_distribution<int> tok(tokens::kReserved, vocab - 1);
  Sample s;
  s.id = id;
  for (int i = 0; i < n; ++i) s.transcript.push_back(tok(rng));
  for (int i = 0; i < t; ++i) s.summary.push_back(tok(rng));
  s.visual = random_matrix(rng, m, d_visual);
  return s;
}

/// Weighted sum of all entries: a generic scalar readout with non-degenerate gradients.
inline Tensor readout(const Tensor& x, const RowMatrix<double>& weights) {
  return sum(mul(x, Tensor(x.shape(), weights)));
}

}  // namespace vgsum::testing
