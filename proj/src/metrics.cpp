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

#include "vgsum/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "vgsum/errors.hpp"
#include "stopwords_resource.hpp"

namespace vgsum {

namespace {

using NgramCounts = std::map<std::vector<std::string>, int>;

NgramCounts ngrams(const TokenSeq& seq, int n) {
  NgramCounts counts;
  const auto len = static_cast<int>(seq.size());
  for (int i = 0; i + n <= len; ++i) ++counts[std::vector<std::string>(seq.begin() + i, seq.begin() + i + n)];
  return counts;
}

int total(const NgramCounts& c) {
  int t = 0;
  for (const auto& [_, k] : c) t += k;
  return t;
}

int clipped_overlap(const NgramCounts& hyp, const NgramCounts& ref) {
  int overlap = 0;
  for (const auto& [g, k] : hyp) {
    const auto it = ref.find(g);
    if (it != ref.end()) overlap += std::min(k, it->second);
  }
  return overlap;
}

PRF make_prf(double matched, double hyp_total, double ref_total) {
  PRF r;
  if (hyp_total <= 0 || ref_total <= 0) return r;
  r.precision = matched / hyp_total;
  r.recall = matched / ref_total;
  if (r.precision + r.recall > 0) r.f1 = 2 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

void require_parallel(const std::vector<TokenSeq>& hyps, const std::vector<TokenSeq>& refs) {
  if (hyps.size() != refs.size())
    throw InputError("hypothesis corpus has " + std::to_string(hyps.size()) + " entries, reference corpus " +
                     std::to_string(refs.size()));
}

}  // namespace

TokenSeq tokenize(std::string_view text) {
  TokenSeq out;
  std::string cur;
  for (char ch : text) {
    const auto u = static_cast<unsigned char>(ch);
    if (std::isspace(u) || std::ispunct(u)) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(u)));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

PRF rouge_n(const TokenSeq& hyp, const TokenSeq& ref, int n) {
  if (n < 1) throw InputError("ROUGE-N needs n >= 1");
  const auto h = ngrams(hyp, n);
  const auto r = ngrams(ref, n);
  return make_prf(clipped_overlap(h, r), total(h), total(r));
}

PRF rouge_l(const TokenSeq& hyp, const TokenSeq& ref) {
  if (hyp.empty() || ref.empty()) return {};
  std::vector<int> prev(ref.size() + 1, 0), cur(ref.size() + 1, 0);
  for (std::size_t i = 1; i <= hyp.size(); ++i) {
    for (std::size_t j = 1; j <= ref.size(); ++j)
      cur[j] = hyp[i - 1] == ref[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return make_prf(prev[ref.size()], static_cast<double>(hyp.size()), static_cast<double>(ref.size()));
}

std::vector<double> bleu(const std::vector<TokenSeq>& hyps, const std::vector<TokenSeq>& refs, int max_n,
                         bool smooth) {
  require_parallel(hyps, refs);
  if (max_n < 1) throw InputError("BLEU needs max_n >= 1");
  std::vector<double> matched(static_cast<std::size_t>(max_n), 0.0), possible(static_cast<std::size_t>(max_n), 0.0);
  double hyp_len = 0, ref_len = 0;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    hyp_len += static_cast<double>(hyps[i].size());
    ref_len += static_cast<double>(refs[i].size());
    for (int n = 1; n <= max_n; ++n) {
      const auto h = ngrams(hyps[i], n);
      matched[static_cast<std::size_t>(n - 1)] += clipped_overlap(h, ngrams(refs[i], n));
      possible[static_cast<std::size_t>(n - 1)] += total(h);
    }
  }
  std::vector<double> scores(static_cast<std::size_t>(max_n), 0.0);
  if (hyp_len == 0) return scores;
  const double bp = hyp_len > ref_len ? 1.0 : std::exp(1.0 - ref_len / hyp_len);
  double log_sum = 0.0;
  bool zero = false;
  for (int n = 1; n <= max_n; ++n) {
    double m = matched[static_cast<std::size_t>(n - 1)];
    double p = possible[static_cast<std::size_t>(n - 1)];
    if (smooth && n >= 2) {
      m += 1;
      p += 1;
    }
    if (m <= 0 || p <= 0) zero = true;
    if (!zero) log_sum += std::log(m / p);
    scores[static_cast<std::size_t>(n - 1)] = zero ? 0.0 : bp * std::exp(log_sum / n);
  }
  return scores;
}

double cider(const std::vector<TokenSeq>& hyps, const std::vector<TokenSeq>& refs) {
  require_parallel(hyps, refs);
  if (hyps.empty()) throw InputError("CIDEr needs a non-empty corpus");
  const auto corpus = static_cast<double>(refs.size());
  constexpr int kMaxN = 4;
  std::vector<std::map<std::vector<std::string>, int>> df(kMaxN);
  std::vector<std::vector<NgramCounts>> ref_grams(kMaxN);
  for (int n = 1; n <= kMaxN; ++n) {
    for (const auto& r : refs) {
      ref_grams[static_cast<std::size_t>(n - 1)].push_back(ngrams(r, n));
      for (const auto& [g, _] : ref_grams[static_cast<std::size_t>(n - 1)].back()) ++df[static_cast<std::size_t>(n - 1)][g];
    }
  }
  auto weight = [&](const std::vector<std::string>& g, int n) {
    const auto& d = df[static_cast<std::size_t>(n - 1)];
    const auto it = d.find(g);
    const double freq = it == d.end() ? 0.0 : it->second;
    return std::log(corpus / (1.0 + freq));
  };

  double sum = 0.0;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    double per_sample = 0.0;
    for (int n = 1; n <= kMaxN; ++n) {
      const auto h = ngrams(hyps[i], n);
      const auto& r = ref_grams[static_cast<std::size_t>(n - 1)][i];
      const double th = total(h), tr = total(r);
      if (th == 0 || tr == 0) continue;
      double dot = 0, nh = 0, nr = 0;
      for (const auto& [g, k] : h) {
        const double w = weight(g, n) * k / th;
        nh += w * w;
        const auto it = r.find(g);
        if (it != r.end()) dot += w * weight(g, n) * it->second / tr;
      }
      for (const auto& [g, k] : r) {
        const double w = weight(g, n) * k / tr;
        nr += w * w;
      }
      if (nh > 0 && nr > 0) per_sample += dot / (std::sqrt(nh) * std::sqrt(nr));
    }
    sum += 10.0 * per_sample / kMaxN;
  }
  return sum / static_cast<double>(hyps.size());
}

StopWords load_stopwords(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open stop-word list " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  StopWords words;
  std::string line;
  std::istringstream lines(ss.str());
  while (std::getline(lines, line)) {
    if (line.empty() || line.front() == '#') continue;
    for (auto& w : tokenize(line)) words.insert(std::move(w));
  }
  return words;
}

const StopWords& default_stopwords() {
  static const StopWords words = [] {
    StopWords w;
    std::istringstream lines{std::string(kStopwordsResource)};
    std::string line;
    while (std::getline(lines, line)) {
      if (line.empty() || line.front() == '#') continue;
      for (auto& t : tokenize(line)) w.insert(std::move(t));
    }
    return w;
  }();
  return words;
}

std::string simple_stem(const std::string& word) {
  auto ends_with = [&](std::string_view suffix) {
    return word.size() >= suffix.size() && word.compare(word.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  if (word.size() > 5 && ends_with("ing")) return word.substr(0, word.size() - 3);
  if (word.size() > 4 && ends_with("ies")) return word.substr(0, word.size() - 3) + "y";
  if (word.size() > 4 && ends_with("ed")) return word.substr(0, word.size() - 2);
  if (word.size() > 4 && ends_with("es")) return word.substr(0, word.size() - 2);
  if (word.size() > 3 && ends_with("s") && !ends_with("ss")) return word.substr(0, word.size() - 1);
  return word;
}

PRF content_f1(const TokenSeq& hyp, const TokenSeq& ref, const StopWords& stopwords) {
  std::vector<std::string> h, r;
  for (const auto& w : hyp)
    if (!stopwords.count(w)) h.push_back(w);
  for (const auto& w : ref)
    if (!stopwords.count(w)) r.push_back(w);
  if (h.empty() || r.empty()) return {};

  std::vector<bool> h_used(h.size(), false), r_used(r.size(), false);
  int aligned = 0;
  auto align = [&](auto&& key) {
    for (std::size_t i = 0; i < h.size(); ++i) {
      if (h_used[i]) continue;
      for (std::size_t j = 0; j < r.size(); ++j) {
        if (r_used[j] || key(h[i]) != key(r[j])) continue;
        h_used[i] = r_used[j] = true;
        ++aligned;
        break;
      }
    }
  };
  align([](const std::string& w) { return w; });
  align([](const std::string& w) { return simple_stem(w); });
  return make_prf(aligned, static_cast<double>(h.size()), static_cast<double>(r.size()));
}

double content_f1(const std::vector<TokenSeq>& hyps, const std::vector<TokenSeq>& refs, const StopWords& stopwords) {
  require_parallel(hyps, refs);
  if (hyps.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < hyps.size(); ++i) sum += content_f1(hyps[i], refs[i], stopwords).f1;
  return sum / static_cast<double>(hyps.size());
}

MetricSet parse_metric_set(const std::string& name) {
  if (name == "all") return MetricSet::All;
  if (name == "rouge") return MetricSet::Rouge;
  if (name == "bleu") return MetricSet::Bleu;
  if (name == "cider") return MetricSet::Cider;
  if (name == "contentf1") return MetricSet::ContentF1;
  throw ConfigError("unknown metric '" + name + "' (expected all|rouge|bleu|cider|contentf1)");
}

double mean_rouge2(const std::vector<TokenSeq>& hyps, const std::vector<TokenSeq>& refs) {
  require_parallel(hyps, refs);
  if (hyps.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < hyps.size(); ++i) sum += rouge_n(hyps[i], refs[i], 2).f1;
  return sum / static_cast<double>(hyps.size());
}

MetricReport evaluate(const std::vector<TokenSeq>& hyps, const std::vector<TokenSeq>& refs, const StopWords& stopwords,
                      MetricSet which) {
  require_parallel(hyps, refs);
  if (hyps.empty()) throw InputError("cannot score an empty corpus");
  MetricReport rep;
  const bool all = which == MetricSet::All;
  if (all || which == MetricSet::Rouge) {
    double r1 = 0, r2 = 0, rl = 0;
    for (std::size_t i = 0; i < hyps.size(); ++i) {
      r1 += rouge_n(hyps[i], refs[i], 1).f1;
      r2 += rouge_n(hyps[i], refs[i], 2).f1;
      rl += rouge_l(hyps[i], refs[i]).f1;
    }
    const auto n = static_cast<double>(hyps.size());
    rep.rouge1 = r1 / n;
    rep.rouge2 = r2 / n;
    rep.rougeL = rl / n;
  }
  if (all || which == MetricSet::Bleu) {
    const auto b = bleu(hyps, refs, 4);
    rep.bleu1 = b[0];
    rep.bleu2 = b[1];
    rep.bleu3 = b[2];
    rep.bleu4 = b[3];
  }
  if (all || which == MetricSet::Cider) rep.cider = cider(hyps, refs);
  if (all || which == MetricSet::ContentF1) rep.content_f1 = content_f1(hyps, refs, stopwords);
  return rep;
}

std::string to_json(const MetricReport& r, MetricSet which) {
  nlohmann::ordered_json j;
  const bool all = which == MetricSet::All;
  if (all || which == MetricSet::Rouge) {
    j["rouge1"] = r.rouge1;
    j["rouge2"] = r.rouge2;
    j["rougeL"] = r.rougeL;
  }
  if (all || which == MetricSet::Bleu) {
    j["bleu1"] = r.bleu1;
    j["bleu2"] = r.bleu2;
    j["bleu3"] = r.bleu3;
    j["bleu4"] = r.bleu4;
  }
  if (all || which == MetricSet::Cider) j["cider"] = r.cider;
  if (all || which == MetricSet::ContentF1) j["content_f1"] = r.content_f1;
  return j.dump();
}

}  // namespace vgsum
