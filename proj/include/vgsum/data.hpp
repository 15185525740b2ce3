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

// Synthetic vision-keyed corpus, JSONL + feature-sidecar ingestion, and the
// uniform-noise control.
//
// Feature sidecar (little-endian):
//   "VGFT" version:u32 count:u32 { id_len:u32 id:bytes M:u32 d_v:u32 value:f32[M*d_v] }[count]

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "vgsum/batch.hpp"
#include "vgsum/model.hpp"

namespace vgsum {

inline constexpr Index kTranscriptCap = 512;
inline constexpr Index kVisualCap = 256;

/// Closed word-level vocabulary. Ids 0..3 are PAD, BOS, EOS, UNK.
class Vocab {
 public:
  Vocab();

  /// Returns the id of `word`, inserting it if new.
  int add(const std::string& word);
  /// UNK for unknown words.
  int id(const std::string& word) const;
  bool contains(const std::string& word) const { return ids_.count(word) != 0; }
  const std::string& word(int id) const;
  int size() const { return static_cast<int>(words_.size()); }

  /// Whitespace-split and map to ids.
  std::vector<int> encode(const std::string& text) const;
  /// Space-joined words, stopping at EOS and skipping PAD/BOS.
  std::string decode(std::span<const int> ids) const;

  /// One word per line, in id order.
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

 private:
  std::vector<std::string> words_;
  std::map<std::string, int> ids_;
};

struct SyntheticSpec {
  int samples = 2000;
  int topics = 4;            ///< K
  int d_visual = 64;
  double noise_scale = 1.0;  ///< per-dimension Gaussian stddev on top of the prototype
  int content_words = 180;
  int min_frames = 8;
  int max_frames = 32;
  int min_transcript = 8;
  int max_transcript = 16;
  int summary_content = 4;   ///< transcript tokens copied after the topic word
  std::uint64_t seed = 0;

  void validate() const;
};

/// Names available as topic words (How2-style categories); K may not exceed this.
const std::vector<std::string>& topic_words();

struct Corpus {
  Vocab vocab;
  std::vector<Sample> samples;
  std::vector<int> topics;  ///< per-sample topic index; empty for loaded data
};

/// Each sample draws a topic t; its frames are prototype(t) + noise with
/// orthogonal prototypes; the transcript is topic-independent and the summary
/// is [topic word, first `summary_content` transcript tokens]. Features are
/// rounded to float32 so they survive the sidecar format unchanged.
Corpus generate_synthetic_corpus(const SyntheticSpec& spec);

struct Splits {
  std::vector<Sample> train;
  std::vector<Sample> validation;
  std::vector<Sample> test;
};

/// Contiguous split in corpus order (defaults 90/5/5).
Splits split_corpus(const std::vector<Sample>& samples, double train_frac = 0.9, double validation_frac = 0.05);

/// Lines of {"id", "transcript", "summary"} with space-joined words.
void write_jsonl(const std::filesystem::path& path, std::span<const Sample> samples, const Vocab& vocab);
void write_features(const std::filesystem::path& path, std::span<const Sample> samples);
std::map<std::string, RowMatrix<double>> read_features(const std::filesystem::path& path);

/// Parses, tokenizes and truncates (512 transcript tokens, 256 frames).
/// Output follows the JSONL line order.
std::vector<Sample> load_dataset(const std::filesystem::path& jsonl_path, const std::filesystem::path& features_path,
                                 const Vocab& vocab);

/// Writes <dir>/{vocab.txt, <split>.jsonl, <split>.feat} for train/valid/test.
void write_splits(const std::filesystem::path& dir, const Splits& splits, const Vocab& vocab);

struct Dataset {
  Vocab vocab;
  Splits splits;
};

Dataset load_splits(const std::filesystem::path& dir);

/// Replaces every visual feature with i.i.d. uniform [0, 3) values, keeping shapes.
std::vector<Sample> noise_replace(std::span<const Sample> samples, std::uint64_t seed);

/// Fraction of hypotheses whose first token equals the reference summary's first token.
double topic_accuracy(const std::vector<Hypothesis>& hyps, std::span<const Sample> samples);

}  // namespace vgsum
