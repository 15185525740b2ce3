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

// Vocabulary, synthetic corpus, ingestion rules and the noise control.

#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "test_support.hpp"

using namespace vgsum;

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("vgsum_data_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

SyntheticSpec small_spec(std::uint64_t seed = 1) {
  SyntheticSpec s;
  s.samples = 40;
  s.d_visual = 16;
  s.seed = seed;
  return s;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

}  // namespace

TEST_CASE("vocabulary basics") {
  Vocab v;
  CHECK(v.size() == 4);
  CHECK(v.word(tokens::kPad) == "<pad>");
  const int a = v.add("apple");
  CHECK(v.add("apple") == a);
  CHECK(v.id("pear") == tokens::kUnk);
  CHECK(v.encode("apple  pear") == std::vector<int>{a, tokens::kUnk});
  const std::vector<int> ids = {tokens::kBos, a, a, tokens::kEos, a};
  CHECK(v.decode(ids) == "apple apple");
  CHECK_THROWS_AS(v.word(99), VocabularyError);
  CHECK_THROWS_AS(v.add("two words"), InputError);

  const fs::path dir = scratch("vocab");
  v.save(dir / "v.txt");
  const Vocab back = Vocab::load(dir / "v.txt");
  CHECK(back.size() == v.size());
  CHECK(back.id("apple") == a);

  write_text(dir / "dup.txt", "<pad>\n<bos>\n<eos>\n<unk>\nx\nx\n");
  try {
    Vocab::load(dir / "dup.txt");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 6);
  }
  write_text(dir / "bad.txt", "<bos>\n");
  CHECK_THROWS_AS(Vocab::load(dir / "bad.txt"), ParseError);
  fs::remove_all(dir);
}

TEST_CASE("synthetic corpus structure") {
  const SyntheticSpec spec = small_spec();
  const Corpus c = generate_synthetic_corpus(spec);
  REQUIRE(c.samples.size() == 40);
  CHECK(c.vocab.size() == 4 + 16 + 180);
  std::set<std::string> ids;
  for (std::size_t i = 0; i < c.samples.size(); ++i) {
    const Sample& s = c.samples[i];
    ids.insert(s.id);
    CHECK(s.visual.cols() == 16);
    CHECK(s.visual.rows() >= 8);
    CHECK(s.visual.rows() <= 32);
    CHECK(s.transcript.size() >= 8);
    CHECK(s.transcript.size() <= 16);
    REQUIRE(s.summary.size() == 5);
    CHECK(c.vocab.word(s.summary[0]) == topic_words()[static_cast<std::size_t>(c.topics[i])]);
    CHECK(std::vector<int>(s.summary.begin() + 1, s.summary.end()) ==
          std::vector<int>(s.transcript.begin(), s.transcript.begin() + 4));
  }
  CHECK(ids.size() == 40);
}

TEST_CASE("synthetic corpus is deterministic per seed") {
  const Corpus a = generate_synthetic_corpus(small_spec(5));
  const Corpus b = generate_synthetic_corpus(small_spec(5));
  const Corpus c = generate_synthetic_corpus(small_spec(6));
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    CHECK(a.samples[i].transcript == b.samples[i].transcript);
    CHECK(a.samples[i].visual == b.samples[i].visual);
  }
  CHECK(a.samples[0].visual != c.samples[0].visual);
}

TEST_CASE("topic frequencies stay near the uniform prior") {
  SyntheticSpec spec = small_spec();
  spec.samples = 4000;
  spec.d_visual = 4;
  spec.max_frames = 8;
  const Corpus c = generate_synthetic_corpus(spec);
  std::vector<int> counts(4, 0);
  for (int t : c.topics) ++counts[static_cast<std::size_t>(t)];
  for (int n : counts) CHECK(std::abs(n / 4000.0 - 0.25) < 0.03);
}

TEST_CASE("noise-free prototypes are orthogonal and separate the topics") {
  SyntheticSpec spec = small_spec();
  spec.noise_scale = 0.0;
  const Corpus c = generate_synthetic_corpus(spec);
  std::vector<Eigen::RowVectorXd> proto(4);
  for (std::size_t i = 0; i < c.samples.size(); ++i) {
    const Eigen::RowVectorXd mean = c.samples[i].visual.colwise().mean();
    auto& p = proto[static_cast<std::size_t>(c.topics[i])];
    if (p.size() == 0)
      p = mean;
    else
      CHECK((p - mean).cwiseAbs().maxCoeff() < 1e-6);
  }
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) {
      if (proto[a].size() == 0 || proto[b].size() == 0) continue;
      const double dot = proto[a].dot(proto[b]);
      if (a == b)
        CHECK(std::abs(dot - 16.0) < 1e-4);
      else
        CHECK(std::abs(dot) < 1e-4);
    }
  // Nearest prototype by inner product recovers every topic.
  for (std::size_t i = 0; i < c.samples.size(); ++i) {
    const Eigen::RowVectorXd mean = c.samples[i].visual.colwise().mean();
    int best = -1;
    double score = -1e300;
    for (int t = 0; t < 4; ++t) {
      if (proto[t].size() == 0) continue;
      if (proto[t].dot(mean) > score) {
        score = proto[t].dot(mean);
        best = t;
      }
    }
    CHECK(best == c.topics[i]);
  }
}

TEST_CASE("synthetic spec errors") {
  SyntheticSpec s = small_spec();
  s.topics = 17;
  s.d_visual = 64;
  CHECK_THROWS_AS(generate_synthetic_corpus(s), ConfigError);
  s = small_spec();
  s.topics = 1;
  CHECK_THROWS_AS(generate_synthetic_corpus(s), ConfigError);
  s = small_spec();
  s.topics = 8;
  s.d_visual = 4;
  CHECK_THROWS_AS(generate_synthetic_corpus(s), ConfigError);
}

TEST_CASE("write and load round-trip bit-exactly") {
  const Corpus c = generate_synthetic_corpus(small_spec(9));
  const fs::path dir = scratch("roundtrip");
  const Splits splits = split_corpus(c.samples);
  write_splits(dir, splits, c.vocab);
  const Dataset d = load_splits(dir);
  CHECK(d.vocab.size() == c.vocab.size());
  REQUIRE(d.splits.train.size() == splits.train.size());
  REQUIRE(d.splits.test.size() == splits.test.size());
  for (std::size_t i = 0; i < splits.train.size(); ++i) {
    CHECK(d.splits.train[i].id == splits.train[i].id);
    CHECK(d.splits.train[i].transcript == splits.train[i].transcript);
    CHECK(d.splits.train[i].summary == splits.train[i].summary);
    CHECK(d.splits.train[i].visual == splits.train[i].visual);
  }
  fs::remove_all(dir);
}

TEST_CASE("splits are contiguous and disjoint") {
  const Corpus c = generate_synthetic_corpus(small_spec());
  const Splits s = split_corpus(c.samples);
  CHECK(s.train.size() == 36);
  CHECK(s.validation.size() == 2);
  CHECK(s.test.size() == 2);
  std::set<std::string> seen;
  for (const auto* part : {&s.train, &s.validation, &s.test})
    for (const auto& x : *part) CHECK(seen.insert(x.id).second);
  CHECK_THROWS_AS(split_corpus(c.samples, 0.9, 0.2), ConfigError);
}

TEST_CASE("ingestion truncates and accepts empty transcripts") {
  const fs::path dir = scratch("ingest");
  Vocab v;
  v.add("w");
  std::string long_text;
  for (int i = 0; i < 600; ++i) long_text += i ? " w" : "w";
  write_text(dir / "d.jsonl", "{\"id\":\"long\",\"transcript\":\"" + long_text +
                                  "\",\"summary\":\"w w\"}\n{\"id\":\"empty\",\"transcript\":\"\",\"summary\":\"w\"}\n");
  Sample a{"long", {}, RowMatrix<double>::Constant(300, 3, 0.5), {}};
  Sample b{"empty", {}, RowMatrix<double>::Constant(5, 3, 1.0), {}};
  const std::vector<Sample> feats = {a, b};
  write_features(dir / "d.feat", feats);

  const auto loaded = load_dataset(dir / "d.jsonl", dir / "d.feat", v);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].transcript.size() == 512);
  CHECK(loaded[0].visual.rows() == 256);
  CHECK(loaded[0].summary.size() == 2);
  CHECK(loaded[1].transcript.empty());
  CHECK(loaded[1].visual.rows() == 5);

  // The empty transcript becomes one fully padded position.
  const MultimodalBatch batch = make_batch(std::span<const Sample>(loaded.data() + 1, 1), 3);
  CHECK(batch.source.length == 1);
  CHECK_FALSE(batch.source.valid[0]);

  write_text(dir / "missing.jsonl", "{\"id\":\"nope\",\"transcript\":\"w\",\"summary\":\"w\"}\n");
  try {
    load_dataset(dir / "missing.jsonl", dir / "d.feat", v);
    FAIL("expected InputError");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("'nope'") != std::string::npos);
  }

  write_text(dir / "bad.jsonl", "{\"id\":\"long\",\"transcript\":\"w\",\"summary\":\"w\"}\n\n{oops\n");
  try {
    load_dataset(dir / "bad.jsonl", dir / "d.feat", v);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  write_text(dir / "field.jsonl", "{\"id\":\"long\",\"summary\":\"w\"}\n");
  CHECK_THROWS_AS(load_dataset(dir / "field.jsonl", dir / "d.feat", v), ParseError);
  write_text(dir / "junk.feat", "JUNKJUNK");
  CHECK_THROWS_AS(read_features(dir / "junk.feat"), InputError);
  fs::remove_all(dir);
}

TEST_CASE("uniform noise replacement") {
  SyntheticSpec spec = small_spec();
  spec.samples = 30;
  spec.d_visual = 64;
  const Corpus c = generate_synthetic_corpus(spec);
  const auto noisy = noise_replace(c.samples, 4);
  double sum = 0;
  Index count = 0;
  for (std::size_t i = 0; i < noisy.size(); ++i) {
    CHECK(noisy[i].visual.rows() == c.samples[i].visual.rows());
    CHECK(noisy[i].visual.cols() == c.samples[i].visual.cols());
    CHECK(noisy[i].transcript == c.samples[i].transcript);
    CHECK(noisy[i].visual.minCoeff() >= 0.0);
    CHECK(noisy[i].visual.maxCoeff() < 3.0);
    sum += noisy[i].visual.sum();
    count += noisy[i].visual.size();
  }
  REQUIRE(count >= 10000);
  CHECK(std::abs(sum / static_cast<double>(count) - 1.5) < 0.05);
  CHECK(noise_replace(c.samples, 4)[0].visual == noisy[0].visual);
}

TEST_CASE("topic accuracy") {
  std::vector<Sample> s(4);
  for (int i = 0; i < 4; ++i) s[i].summary = {10 + i % 2, 5};
  const std::vector<Hypothesis> h = {{{10, 5, 2}, 0}, {{10, 2}, 0}, {{2}, 0}, {{11}, 0}};
  CHECK(topic_accuracy(h, s) == 0.5);
  CHECK_THROWS_AS(topic_accuracy({}, s), InputError);
}
