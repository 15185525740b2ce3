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

#include "vgsum/batch.hpp"

#include <algorithm>

namespace vgsum {

MultimodalBatch make_batch(std::span<const Sample* const> samples, int d_visual) {
  if (samples.empty()) throw InputError("cannot build an empty batch");
  const auto b_count = static_cast<Index>(samples.size());
  Index n = 1, m = 1, t = 1;
  for (const Sample* s : samples) {
    n = std::max<Index>(n, static_cast<Index>(s->transcript.size()));
    m = std::max<Index>(m, s->visual.rows());
    const auto summary = std::min<Index>(static_cast<Index>(s->summary.size()), kMaxSummaryTokens - 1);
    t = std::max<Index>(t, summary + 1);
  }

  MultimodalBatch batch;
  std::vector<Index> src_len, vis_len, tgt_len;
  batch.source_ids.assign(static_cast<std::size_t>(b_count * n), tokens::kPad);
  batch.target_in.assign(static_cast<std::size_t>(b_count * t), tokens::kPad);
  batch.target_out.assign(static_cast<std::size_t>(b_count * t), tokens::kPad);
  if (d_visual > 0) batch.visual = RowMatrix<double>::Zero(b_count * m, d_visual);

  for (Index b = 0; b < b_count; ++b) {
    const Sample& s = *samples[static_cast<std::size_t>(b)];
    std::copy(s.transcript.begin(), s.transcript.end(), batch.source_ids.begin() + b * n);
    src_len.push_back(static_cast<Index>(s.transcript.size()));

    const auto summary = std::min<Index>(static_cast<Index>(s.summary.size()), kMaxSummaryTokens - 1);
    batch.target_in[static_cast<std::size_t>(b * t)] = tokens::kBos;
    for (Index i = 0; i < summary; ++i) {
      batch.target_in[static_cast<std::size_t>(b * t + i + 1)] = s.summary[static_cast<std::size_t>(i)];
      batch.target_out[static_cast<std::size_t>(b * t + i)] = s.summary[static_cast<std::size_t>(i)];
    }
    batch.target_out[static_cast<std::size_t>(b * t + summary)] = tokens::kEos;
    tgt_len.push_back(summary + 1);

    if (d_visual > 0) {
      if (s.visual.rows() > 0 && s.visual.cols() != d_visual)
        throw InputError("sample " + s.id + " has visual width " + std::to_string(s.visual.cols()) + ", expected " +
                         std::to_string(d_visual));
      if (s.visual.rows() > 0) batch.visual.middleRows(b * m, s.visual.rows()) = s.visual;
      vis_len.push_back(s.visual.rows());
    }
  }
  batch.source = SequenceLayout::from_lengths(src_len, n);
  batch.target = SequenceLayout::from_lengths(tgt_len, t);
  if (d_visual > 0) batch.visual_layout = SequenceLayout::from_lengths(vis_len, m);
  return batch;
}

MultimodalBatch make_batch(std::span<const Sample> samples, int d_visual) {
  std::vector<const Sample*> ptrs;
  ptrs.reserve(samples.size());
  for (const auto& s : samples) ptrs.push_back(&s);
  return make_batch(std::span<const Sample* const>(ptrs), d_visual);
}

}  // namespace vgsum
