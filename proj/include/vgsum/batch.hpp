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

#include <span>
#include <string>
#include <vector>

#include "vgsum/fusion.hpp"

namespace vgsum {

namespace tokens {
inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kUnk = 3;
inline constexpr int kReserved = 4;
}  // namespace tokens

/// Longest summary (EOS included) the decoder is trained on or allowed to emit.
inline constexpr int kMaxSummaryTokens = 64;

struct Sample {
  std::string id;
  std::vector<int> transcript;
  RowMatrix<double> visual;  ///< M x d_v, M may be 0
  std::vector<int> summary;  ///< without BOS/EOS
};

/// Padded, stacked inputs for one training or scoring step.
struct MultimodalBatch {
  std::vector<int> source_ids;  ///< batch·N, PAD-filled
  SequenceLayout source;
  RowMatrix<double> visual;  ///< batch·M x d_v, zero-filled padding; empty when absent
  SequenceLayout visual_layout;
  std::vector<int> target_in;   ///< BOS-shifted decoder inputs, batch·T
  std::vector<int> target_out;  ///< gold next tokens ending in EOS, batch·T
  SequenceLayout target;

  Index size() const { return source.batch; }
  bool has_visual() const { return visual_layout.batch > 0; }
};

/// Pads every sequence to the batch maximum (at least one position).
/// Summaries are truncated so that summary + EOS fits kMaxSummaryTokens.
/// `d_visual` ≤ 0 builds a text-only batch.
MultimodalBatch make_batch(std::span<const Sample* const> samples, int d_visual);
MultimodalBatch make_batch(std::span<const Sample> samples, int d_visual);

}  // namespace vgsum
