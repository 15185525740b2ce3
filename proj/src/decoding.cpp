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

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <thread>

#include "vgsum/model.hpp"

namespace vgsum {

namespace {

struct Candidate {
  std::vector<int> tokens;
  double score = 0.0;
};

bool ranks_before(const Candidate& a, const Candidate& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.tokens.size() != b.tokens.size()) return a.tokens.size() < b.tokens.size();
  return a.tokens < b.tokens;
}

}  // namespace

Hypothesis beam_search(const StepScorer& scorer, const BeamOptions& options, int eos) {
  if (options.beam < 1) throw ConfigError("beam size must be at least 1");
  if (options.max_len < 1) throw ConfigError("max_len must be at least 1");
  const auto beam = static_cast<std::size_t>(options.beam);
  const auto max_len = static_cast<std::size_t>(options.max_len);

  std::vector<Candidate> alive{Candidate{}};
  std::vector<Candidate> finished;
  for (std::size_t step = 0; step < max_len && !alive.empty(); ++step) {
    std::vector<std::vector<int>> prefixes;
    prefixes.reserve(alive.size());
    for (const auto& c : alive) prefixes.push_back(c.tokens);
    const auto logprobs = scorer(prefixes);
    if (logprobs.size() != alive.size()) throw ContractError("scorer returned the wrong number of rows");

    std::vector<Candidate> expanded;
    for (std::size_t i = 0; i < alive.size(); ++i) {
      for (std::size_t v = 0; v < logprobs[i].size(); ++v) {
        const double lp = logprobs[i][v];
        if (!std::isfinite(lp)) continue;
        Candidate c{alive[i].tokens, alive[i].score + lp};
        c.tokens.push_back(static_cast<int>(v));
        expanded.push_back(std::move(c));
      }
    }
    if (expanded.empty()) break;
    std::sort(expanded.begin(), expanded.end(), ranks_before);

    // Finished candidates go to their own pool; the beam keeps `beam` live ones.
    alive.clear();
    for (auto& c : expanded) {
      if (alive.size() == beam) break;
      if (c.tokens.back() == eos || c.tokens.size() >= max_len)
        finished.push_back(std::move(c));
      else
        alive.push_back(std::move(c));
    }
    // Extensions only lower the score and lengthen the sequence, so a
    // finished hypothesis at least as good as every live one is final.
    if (!finished.empty() && !alive.empty()) {
      const auto best = std::min_element(finished.begin(), finished.end(), ranks_before);
      const auto best_alive = std::min_element(alive.begin(), alive.end(), ranks_before);
      if (best->score >= best_alive->score) break;
    }
  }
  if (finished.empty()) finished = std::move(alive);
  if (finished.empty()) throw ContractError("beam search produced no hypothesis");
  const auto best = std::min_element(finished.begin(), finished.end(), ranks_before);
  return {best->tokens, best->score};
}

StepScorer model_scorer(const VisionGuidedModel& model, const Sample& sample) {
  NoGradGuard no_grad;
  const int d_visual = model.uses_visual() ? model.config().d_visual : 0;
  const Sample* ptr = &sample;
  const MultimodalBatch batch = make_batch(std::span<const Sample* const>(&ptr, 1), d_visual);
  auto encoded = std::make_shared<EncodedSource>(
      model.encode(batch.source_ids, batch.source, batch.has_visual() ? &batch.visual : nullptr,
                   batch.has_visual() ? &batch.visual_layout : nullptr, ForwardContext{}));

  return [&model, encoded](const std::vector<std::vector<int>>& prefixes) {
    NoGradGuard guard;
    const auto k = static_cast<Index>(prefixes.size());
    const auto t = static_cast<Index>(prefixes.front().size()) + 1;
    std::vector<int> target_in;
    target_in.reserve(static_cast<std::size_t>(k * t));
    for (const auto& p : prefixes) {
      if (static_cast<Index>(p.size()) + 1 != t) throw ContractError("beam prefixes must share one length");
      target_in.push_back(tokens::kBos);
      target_in.insert(target_in.end(), p.begin(), p.end());
    }
    SequenceLayout target;
    target.batch = k;
    target.length = t;
    target.valid.assign(static_cast<std::size_t>(k * t), true);
    const EncodedSource tiled = k == 1 ? *encoded : encoded->replicate(k);
    const Tensor logits = model.decode(tiled, target_in, target, ForwardContext{});

    std::vector<std::vector<double>> out(static_cast<std::size_t>(k));
    for (Index b = 0; b < k; ++b) {
      Eigen::RowVectorXd row = logits.value().row(b * t + t - 1);
      row(tokens::kPad) = -std::numeric_limits<double>::infinity();
      const double mx = row.maxCoeff();
      const double lse = mx + std::log((row.array() - mx).exp().sum());
      auto& lp = out[static_cast<std::size_t>(b)];
      lp.resize(static_cast<std::size_t>(row.size()));
      for (Index v = 0; v < row.size(); ++v) lp[static_cast<std::size_t>(v)] = row(v) - lse;
    }
    return out;
  };
}

Hypothesis beam_decode(const VisionGuidedModel& model, const Sample& sample, const BeamOptions& options) {
  if (options.beam < 1) throw ConfigError("beam size must be at least 1");
  return beam_search(model_scorer(model, sample), options, tokens::kEos);
}

std::vector<Hypothesis> decode_corpus(const VisionGuidedModel& model, std::span<const Sample> samples,
                                      const BeamOptions& options, int jobs) {
  std::vector<Hypothesis> out(samples.size());
  const auto workers = static_cast<std::size_t>(std::max(1, jobs));
  if (workers == 1) {
    for (std::size_t i = 0; i < samples.size(); ++i) out[i] = beam_decode(model, samples[i], options);
    return out;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < samples.size(); i += workers) out[i] = beam_decode(model, samples[i], options);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace vgsum
