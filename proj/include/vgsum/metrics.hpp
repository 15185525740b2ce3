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

// Corpus-level summarization metrics over pre-tokenized sequences.

#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace vgsum {

using TokenSeq = std::vector<std::string>;

/// Lowercases and splits on whitespace and ASCII punctuation.
TokenSeq tokenize(std::string_view text);

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Clipped n-gram overlap. Empty n-gram sets on either side give zeros.
PRF rouge_n(const TokenSeq& hyp, const TokenSeq& ref, int n);

/// Longest-common-subsequence precision/recall and their harmonic mean.
PRF rouge_l(const TokenSeq& hyp, const TokenSeq& ref);

/// Corpus BLEU-1..max_n: clipped precisions, geometric mean, brevity penalty.
/// With `smooth` set, orders ≥ 2 use add-one counts.
std::vector<double> bleu(const std::vector<TokenSeq>& hyps, const std::vector<TokenSeq>& refs, int max_n = 4,
                         bool smooth = false);

/// Mean over samples of 10 · mean_n cos(tfidf_n(hyp), tfidf_n(ref)), n = 1..4,
/// with idf(g) = log(corpus size / (1 + reference document frequency of g)).
double cider(const std::vector<TokenSeq>& hyps, const std::vector<TokenSeq>& refs);

using StopWords = std::set<std::string>;

/// Shipped stop-word list (resources/stopwords.txt).
const StopWords& default_stopwords();
StopWords load_stopwords(const std::filesystem::path& path);

/// Light suffix stripping used as the second alignment pass.
std::string simple_stem(const std::string& word);

/// Stop words removed, then one-to-one alignment by exact match followed by
/// stem match; both sides empty scores 0.
PRF content_f1(const TokenSeq& hyp, const TokenSeq& ref, const StopWords& stopwords);

/// Mean per-pair Content F1.
double content_f1(const std::vector<TokenSeq>& hyps, const std::vector<TokenSeq>& refs, const StopWords& stopwords);

/// ROUGE values are mean per-sample F1.
struct MetricReport {
  double rouge1 = 0.0;
  double rouge2 = 0.0;
  double rougeL = 0.0;
  double bleu1 = 0.0;
  double bleu2 = 0.0;
  double bleu3 = 0.0;
  double bleu4 = 0.0;
  double cider = 0.0;
  double content_f1 = 0.0;
};

enum class MetricSet { All, Rouge, Bleu, Cider, ContentF1 };

MetricSet parse_metric_set(const std::string& name);

MetricReport evaluate(const std::vector<TokenSeq>& hyps, const std::vector<TokenSeq>& refs,
                      const StopWords& stopwords = default_stopwords(), MetricSet which = MetricSet::All);

/// JSON object with the fields of `which` (all fields for MetricSet::All).
std::string to_json(const MetricReport& report, MetricSet which = MetricSet::All);

/// Mean per-sample ROUGE-2 F1.
double mean_rouge2(const std::vector<TokenSeq>& hyps, const std::vector<TokenSeq>& refs);

}  // namespace vgsum
