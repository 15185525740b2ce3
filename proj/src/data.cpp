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

#include "vgsum/data.hpp"

#include <fstream>
#include <random>
#include <sstream>

#include <Eigen/QR>
#include <nlohmann/json.hpp>

#include "vgsum/tensor_io.hpp"

namespace vgsum {

namespace {

constexpr char kFeatureMagic[4] = {'V', 'G', 'F', 'T'};
constexpr std::uint32_t kFeatureVersion = 1;

std::vector<std::string> split_words(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> out;
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

}  // namespace

Vocab::Vocab() {
  for (const char* w : {"<pad>", "<bos>", "<eos>", "<unk>"}) add(w);
}

int Vocab::add(const std::string& word) {
  if (const auto it = ids_.find(word); it != ids_.end()) return it->second;
  if (word.empty() || word.find_first_of(" \t\r\n") != std::string::npos)
    throw InputError("vocabulary entries must be non-empty and whitespace-free: '" + word + "'");
  const int id = size();
  words_.push_back(word);
  ids_.emplace(word, id);
  return id;
}

int Vocab::id(const std::string& word) const {
  const auto it = ids_.find(word);
  return it == ids_.end() ? tokens::kUnk : it->second;
}

const std::string& Vocab::word(int id) const {
  if (id < 0 || id >= size()) throw VocabularyError("token id " + std::to_string(id) + " outside vocabulary");
  return words_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocab::encode(const std::string& text) const {
  std::vector<int> out;
  for (const auto& w : split_words(text)) out.push_back(id(w));
  return out;
}

std::string Vocab::decode(std::span<const int> ids) const {
  std::string out;
  for (int t : ids) {
    if (t == tokens::kEos) break;
    if (t == tokens::kPad || t == tokens::kBos) continue;
    if (!out.empty()) out += ' ';
    out += word(t);
  }
  return out;
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  for (const auto& w : words_) out << w << '\n';
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open vocabulary " + path.string());
  Vocab v;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (n <= static_cast<std::size_t>(tokens::kReserved)) {
      if (line != v.words_[n - 1]) throw ParseError("reserved token mismatch '" + line + "'", n);
      continue;
    }
    if (line.empty()) continue;
    if (v.contains(line)) throw ParseError("duplicate vocabulary entry '" + line + "'", n);
    v.add(line);
  }
  return v;
}

void SyntheticSpec::validate() const {
  if (samples < 1) throw ConfigError("synthetic corpus needs at least one sample");
  if (topics < 2) throw ConfigError("need at least 2 topics");
  if (topics > static_cast<int>(topic_words().size()))
    throw ConfigError("K=" + std::to_string(topics) + " exceeds the " + std::to_string(topic_words().size()) +
                      " available topic words");
  if (topics > d_visual) throw ConfigError("orthogonal prototypes need K <= d_visual");
  if (noise_scale < 0) throw ConfigError("noise_scale must be non-negative");
  if (content_words < summary_content || content_words < 1) throw ConfigError("too few content words");
  if (min_frames < 0 || max_frames < min_frames || max_frames > kVisualCap) throw ConfigError("bad frame range");
  if (min_transcript < summary_content || max_transcript < min_transcript || max_transcript > kTranscriptCap)
    throw ConfigError("bad transcript length range");
  if (summary_content + 1 >= kMaxSummaryTokens) throw ConfigError("summary too long");
}

const std::vector<std::string>& topic_words() {
  static const std::vector<std::string> words = {
      "cooking", "guitar",  "yoga",     "painting", "gardening", "knitting", "soccer", "makeup",
      "baking",  "fishing", "carpentry", "dance",    "chess",     "swimming", "piano",  "photography"};
  return words;
}

Corpus generate_synthetic_corpus(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  Corpus c;
  for (const auto& w : topic_words()) c.vocab.add(w);
  std::vector<int> content;
  for (int i = 0; i < spec.content_words; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "w%03d", i);
    content.push_back(c.vocab.add(buf));
  }

  // Orthonormal columns from a QR factorization, scaled so each coordinate is O(1).
  RowMatrix<double> gauss(spec.d_visual, spec.topics);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Index i = 0; i < gauss.size(); ++i) gauss.data()[i] = normal(rng);
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(gauss).householderQ();
  const Eigen::MatrixXd prototypes =
      q.leftCols(spec.topics).transpose() * std::sqrt(static_cast<double>(spec.d_visual));

  std::uniform_int_distribution<int> topic_dist(0, spec.topics - 1);
  std::uniform_int_distribution<int> frame_dist(spec.min_frames, spec.max_frames);
  std::uniform_int_distribution<int> len_dist(spec.min_transcript, spec.max_transcript);
  std::uniform_int_distribution<std::size_t> word_dist(0, content.size() - 1);
  std::normal_distribution<double> noise(0.0, spec.noise_scale > 0 ? spec.noise_scale : 1.0);

  for (int n = 0; n < spec.samples; ++n) {
    Sample s;
    char id[32];
    std::snprintf(id, sizeof id, "syn-%05d", n);
    s.id = id;
    const int topic = topic_dist(rng);
    const int frames = frame_dist(rng);
    s.visual.resize(frames, spec.d_visual);
    for (Index r = 0; r < frames; ++r)
      for (Index k = 0; k < spec.d_visual; ++k) {
        const double eps = spec.noise_scale > 0 ? noise(rng) : 0.0;
        s.visual(r, k) = static_cast<double>(static_cast<float>(prototypes(topic, k) + eps));
      }
    const int len = len_dist(rng);
    for (int i = 0; i < len; ++i) s.transcript.push_back(content[word_dist(rng)]);
    s.summary.push_back(c.vocab.id(topic_words()[static_cast<std::size_t>(topic)]));
    s.summary.insert(s.summary.end(), s.transcript.begin(), s.transcript.begin() + spec.summary_content);
    c.samples.push_back(std::move(s));
    c.topics.push_back(topic);
  }
  return c;
}

Splits split_corpus(const std::vector<Sample>& samples, double train_frac, double validation_frac) {
  if (train_frac <= 0 || validation_frac < 0 || train_frac + validation_frac > 1)
    throw ConfigError("split fractions must be positive and sum to at most 1");
  const auto n = samples.size();
  const auto n_train = static_cast<std::size_t>(std::llround(train_frac * static_cast<double>(n)));
  const auto n_val = std::min(n - n_train, static_cast<std::size_t>(std::llround(validation_frac * static_cast<double>(n))));
  Splits s;
  s.train.assign(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.validation.assign(samples.begin() + static_cast<std::ptrdiff_t>(n_train),
                      samples.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(samples.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), samples.end());
  return s;
}

void write_jsonl(const std::filesystem::path& path, std::span<const Sample> samples, const Vocab& vocab) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  for (const auto& s : samples) {
    nlohmann::ordered_json j;
    j["id"] = s.id;
    j["transcript"] = vocab.decode(s.transcript);
    j["summary"] = vocab.decode(s.summary);
    out << j.dump() << '\n';
  }
}

void write_features(const std::filesystem::path& path, std::span<const Sample> samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out.write(kFeatureMagic, 4);
  io::put_u32(out, kFeatureVersion);
  io::put_u32(out, static_cast<std::uint32_t>(samples.size()));
  for (const auto& s : samples) {
    io::put_u32(out, static_cast<std::uint32_t>(s.id.size()));
    out.write(s.id.data(), static_cast<std::streamsize>(s.id.size()));
    io::put_u32(out, static_cast<std::uint32_t>(s.visual.rows()));
    io::put_u32(out, static_cast<std::uint32_t>(s.visual.cols()));
    for (Index i = 0; i < s.visual.size(); ++i) io::put_f32(out, static_cast<float>(s.visual.data()[i]));
  }
  if (!out) throw InputError("failed while writing " + path.string());
}

std::map<std::string, RowMatrix<double>> read_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open feature file " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != std::string(kFeatureMagic, 4))
    throw InputError(path.string() + " is not a feature file");
  const auto version = io::get_u32(in);
  if (version != kFeatureVersion) throw InputError("unsupported feature file version " + std::to_string(version));
  const auto count = io::get_u32(in);
  std::map<std::string, RowMatrix<double>> out;
  for (std::uint32_t n = 0; n < count; ++n) {
    const auto id_len = io::get_u32(in);
    std::string id(id_len, '\0');
    in.read(id.data(), id_len);
    const auto m = io::get_u32(in);
    const auto d = io::get_u32(in);
    RowMatrix<double> x(m, d);
    for (Index i = 0; i < x.size(); ++i) x.data()[i] = static_cast<double>(io::get_f32(in));
    if (!in) throw InputError("truncated feature file " + path.string());
    out[id] = std::move(x);
  }
  return out;
}

std::vector<Sample> load_dataset(const std::filesystem::path& jsonl_path, const std::filesystem::path& features_path,
                                 const Vocab& vocab) {
  std::ifstream in(jsonl_path);
  if (!in) throw InputError("cannot open " + jsonl_path.string());
  auto features = read_features(features_path);
  std::vector<Sample> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("malformed JSON: ") + e.what(), n);
    }
    if (!j.is_object()) throw ParseError("expected a JSON object", n);
    for (const char* key : {"id", "transcript", "summary"})
      if (!j.contains(key) || !j[key].is_string()) throw ParseError(std::string("missing string field '") + key + "'", n);
    Sample s;
    s.id = j["id"].get<std::string>();
    s.transcript = vocab.encode(j["transcript"].get<std::string>());
    if (static_cast<Index>(s.transcript.size()) > kTranscriptCap) s.transcript.resize(kTranscriptCap);
    s.summary = vocab.encode(j["summary"].get<std::string>());
    const auto it = features.find(s.id);
    if (it == features.end()) throw InputError("no feature record for sample '" + s.id + "'");
    s.visual = it->second.topRows(std::min(it->second.rows(), kVisualCap));
    out.push_back(std::move(s));
  }
  return out;
}

void write_splits(const std::filesystem::path& dir, const Splits& splits, const Vocab& vocab) {
  std::filesystem::create_directories(dir);
  vocab.save(dir / "vocab.txt");
  const std::pair<const char*, const std::vector<Sample>*> parts[] = {
      {"train", &splits.train}, {"valid", &splits.validation}, {"test", &splits.test}};
  for (const auto& [name, samples] : parts) {
    write_jsonl(dir / (std::string(name) + ".jsonl"), *samples, vocab);
    write_features(dir / (std::string(name) + ".feat"), *samples);
  }
}

Dataset load_splits(const std::filesystem::path& dir) {
  Dataset d;
  d.vocab = Vocab::load(dir / "vocab.txt");
  d.splits.train = load_dataset(dir / "train.jsonl", dir / "train.feat", d.vocab);
  d.splits.validation = load_dataset(dir / "valid.jsonl", dir / "valid.feat", d.vocab);
  d.splits.test = load_dataset(dir / "test.jsonl", dir / "test.feat", d.vocab);
  return d;
}

std::vector<Sample> noise_replace(std::span<const Sample> samples, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 3.0);
  std::vector<Sample> out(samples.begin(), samples.end());
  for (auto& s : out)
    for (Index i = 0; i < s.visual.size(); ++i) s.visual.data()[i] = uniform(rng);
  return out;
}

double topic_accuracy(const std::vector<Hypothesis>& hyps, std::span<const Sample> samples) {
  if (hyps.size() != samples.size()) throw InputError("hypothesis and sample counts differ");
  if (samples.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (!hyps[i].tokens.empty() && !samples[i].summary.empty() && hyps[i].tokens.front() == samples[i].summary.front())
      ++hits;
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

}  // namespace vgsum
