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

// Brute-force reference implementations of the summarization metrics.

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "vgsum/metrics.hpp"

namespace vgsum::oracles {

using Gram = std::vector<std::string>;

inline std::vector<Gram> all_grams(const TokenSeq& s, int n) {
  std::vector<Gram> out;
  for (int i = 0; i + n <= static_cast<int>(s.size()); ++i) out.emplace_back(s.begin() + i, s.begin() + i + n);
  return out;
}

// Matches by repeatedly striking used reference grams off a list.
inline double clipped_matches(const std::vector<Gram>& h, std::vector<Gram> r) {
  double m = 0;
  for (const auto& g : h) {
    const auto it = std::find(r.begin(), r.end(), g);
    if (it != r.end()) {
      r.erase(it);
      ++m;
    }
  }
  return m;
}

inline double f1_of(double m, double hl, double rl) {
  if (hl == 0 || rl == 0 || m == 0) return 0.0;
  const double p = m / hl, r = m / rl;
  return 2 * p * r / (p + r);
}

inline double oracle_rouge_n(const TokenSeq& h, const TokenSeq& r, int n) {
  const auto hg = all_grams(h, n), rg = all_grams(r, n);
  return f1_of(clipped_matches(hg, rg), static_cast<double>(hg.size()), static_cast<double>(rg.size()));
}

inline bool is_subsequence(const TokenSeq& sub, const TokenSeq& seq) {
  std::size_t j = 0;
  for (const auto& w : seq)
    if (j < sub.size() && sub[j] == w) ++j;
  return j == sub.size();
}

// Longest subsequence of h, over all 2^|h| masks, that is also a subsequence of r.
inline double oracle_rouge_l(const TokenSeq& h, const TokenSeq& r) {
  std::size_t best = 0;
  for (unsigned mask = 0; mask < (1u << h.size()); ++mask) {
    TokenSeq sub;
    for (std::size_t i = 0; i < h.size(); ++i)
      if (mask & (1u << i)) sub.push_back(h[i]);
    if (sub.size() > best && is_subsequence(sub, r)) best = sub.size();
  }
  return f1_of(static_cast<double>(best), static_cast<double>(h.size()), static_cast<double>(r.size()));
}

std::vector<double> oracle_bleu(const std::vector<TokenSeq>& hs, const std::vector<TokenSeq>& rs) {
  double c = 0, rl = 0;
  for (std::size_t i = 0; i < hs.size(); ++i) {
    c += static_cast<double>(hs[i].size());
    rl += static_cast<double>(rs[i].size());
  }
  std::vector<double> prec;
  for (int n = 1; n <= 4; ++n) {
    double m = 0, t = 0;
    for (std::size_t i = 0; i < hs.size(); ++i) {
      const auto hg = all_grams(hs[i], n);
      m += clipped_matches(hg, all_grams(rs[i], n));
      t += static_cast<double>(hg.size());
    }
    prec.push_back(t == 0 ? 0.0 : m / t);
  }
  const double bp = c == 0 ? 0.0 : (c > rl ? 1.0 : std::exp(1.0 - rl / c));
  std::vector<double> out;
  double product = 1.0;
  for (int n = 1; n <= 4; ++n) {
    product *= prec[static_cast<std::size_t>(n - 1)];
    out.push_back(bp * std::pow(product, 1.0 / n));
  }
  return out;
}

// Dense tf-idf vectors over every gram that appears anywhere in the corpus.
inline double oracle_cider(const std::vector<TokenSeq>& hs, const std::vector<TokenSeq>& rs) {
  const double corpus = static_cast<double>(rs.size());
  double total = 0;
  for (std::size_t i = 0; i < hs.size(); ++i) {
    double s = 0;
    for (int n = 1; n <= 4; ++n) {
      std::vector<Gram> space;
      for (const auto& seq : {hs[i], rs[i]})
        for (const auto& g : all_grams(seq, n))
          if (std::find(space.begin(), space.end(), g) == space.end()) space.push_back(g);
      const auto hg = all_grams(hs[i], n), rg = all_grams(rs[i], n);
      if (hg.empty() || rg.empty()) continue;
      std::vector<double> vh, vr;
      for (const auto& g : space) {
        double df = 0;
        for (const auto& r : rs) {
          const auto grams = all_grams(r, n);
          if (std::find(grams.begin(), grams.end(), g) != grams.end()) ++df;
        }
        const double idf = std::log(corpus / (1.0 + df));
        vh.push_back(idf * static_cast<double>(std::count(hg.begin(), hg.end(), g)) / static_cast<double>(hg.size()));
        vr.push_back(idf * static_cast<double>(std::count(rg.begin(), rg.end(), g)) / static_cast<double>(rg.size()));
      }
      double dot = 0, nh = 0, nr = 0;
      for (std::size_t k = 0; k < vh.size(); ++k) {
        dot += vh[k] * vr[k];
        nh += vh[k] * vh[k];
        nr += vr[k] * vr[k];
      }
      if (nh > 0 && nr > 0) s += dot / std::sqrt(nh * nr);
    }
    total += 10.0 * s / 4.0;
  }
  return total / static_cast<double>(hs.size());
}

// Exact matches always share a stem, so the best one-to-one alignment size is
// the multiset intersection of stems.
inline double oracle_content_f1(const TokenSeq& h, const TokenSeq& r, const StopWords& stop) {
  std::vector<std::string> hs, rs;
  for (const auto& w : h)
    if (!stop.count(w)) hs.push_back(simple_stem(w));
  for (const auto& w : r)
    if (!stop.count(w)) rs.push_back(simple_stem(w));
  std::sort(hs.begin(), hs.end());
  std::sort(rs.begin(), rs.end());
  std::vector<std::string> common;
  std::set_intersection(hs.begin(), hs.end(), rs.begin(), rs.end(), std::back_inserter(common));
  return f1_of(static_cast<double>(common.size()), static_cast<double>(hs.size()), static_cast<double>(rs.size()));
}

inline TokenSeq random_seq(std::mt19937_64& rng, const std::vector<std::string>& vocab) {
  std::uniform_int_distribution<int> len(0, 12), pick(0, static_cast<int>(vocab.size()) - 1);
  TokenSeq s(static_cast<std::size_t>(len(rng)));
  for (auto& w : s) w = vocab[static_cast<std::size_t>(pick(rng))];
  return s;
}

}  // namespace vgsum::oracles
