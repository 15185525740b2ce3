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

#include "vgsum/experiment.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace vgsum {

void ExperimentSpec::validate() const {
  if (runs.empty()) throw ConfigError("experiment '" + name + "' has no runs");
  if (test_beam < 1) throw ConfigError("test beam must be at least 1");
  if (jobs < 1) throw ConfigError("jobs must be at least 1");
  std::set<std::string> names;
  for (const auto& r : runs) {
    if (r.name.empty()) throw ConfigError("run names must be non-empty");
    if (!names.insert(r.name).second) throw ConfigError("duplicate run name '" + r.name + "'");
    if (r.repetitions < 1) throw ConfigError("run '" + r.name + "' needs at least one repetition");
    ModelConfig m = r.model;
    m.validate();
    r.schedule.validate();
    if (!r.data_dir) r.corpus.validate();
  }
}

namespace {

std::string fmt(double v, int precision = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<TokenSeq> to_words(const Vocab& vocab, const std::vector<std::vector<int>>& seqs) {
  std::vector<TokenSeq> out;
  for (const auto& s : seqs) out.push_back(tokenize(vocab.decode(s)));
  return out;
}

struct Column {
  const char* header;
  double (*get)(const RunRow&);
  double scale;
};

const std::vector<Column>& table_columns() {
  static const std::vector<Column> cols = {
      {"R-1", [](const RunRow& r) { return r.metrics.rouge1; }, 100},
      {"R-2", [](const RunRow& r) { return r.metrics.rouge2; }, 100},
      {"R-L", [](const RunRow& r) { return r.metrics.rougeL; }, 100},
      {"B-1", [](const RunRow& r) { return r.metrics.bleu1; }, 100},
      {"B-2", [](const RunRow& r) { return r.metrics.bleu2; }, 100},
      {"B-3", [](const RunRow& r) { return r.metrics.bleu3; }, 100},
      {"B-4", [](const RunRow& r) { return r.metrics.bleu4; }, 100},
      {"C", [](const RunRow& r) { return r.metrics.cider; }, 1},
      {"CF", [](const RunRow& r) { return r.metrics.content_f1; }, 100},
      {"Topic acc", [](const RunRow& r) { return r.topic_accuracy; }, 100},
  };
  return cols;
}

}  // namespace

void ExperimentReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << "run,repetition,seed,config_hash,rouge1,rouge2,rougeL,bleu1,bleu2,bleu3,bleu4,cider,content_f1,"
         "topic_accuracy,best_epoch,steps,seconds,status,error\n";
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    out << csv_escape(r.run) << ',' << r.repetition << ',' << r.seed << ',' << r.config_hash << ',' << fmt(m.rouge1, 6)
        << ',' << fmt(m.rouge2, 6) << ',' << fmt(m.rougeL, 6) << ',' << fmt(m.bleu1, 6) << ',' << fmt(m.bleu2, 6)
        << ',' << fmt(m.bleu3, 6) << ',' << fmt(m.bleu4, 6) << ',' << fmt(m.cider, 6) << ',' << fmt(m.content_f1, 6)
        << ',' << fmt(r.topic_accuracy, 6) << ',' << r.best_epoch << ',' << r.steps << ',' << fmt(r.seconds, 2) << ','
        << (r.failed ? "failed" : "ok") << ',' << csv_escape(r.error) << '\n';
  }
}

std::vector<const RunRow*> ExperimentReport::rows_for(const std::string& run) const {
  std::vector<const RunRow*> out;
  for (const auto& r : rows)
    if (r.run == run && !r.failed) out.push_back(&r);
  return out;
}

std::string ExperimentReport::to_markdown() const {
  std::vector<std::string> order;
  for (const auto& r : rows)
    if (std::find(order.begin(), order.end(), r.run) == order.end()) order.push_back(r.run);

  std::ostringstream md;
  md << "### " << name << "\n\n";
  md << "| Run |";
  for (const auto& c : table_columns()) md << ' ' << c.header << " |";
  md << " Config | Reps | Time (s) |\n|---|";
  for (std::size_t i = 0; i < table_columns().size(); ++i) md << "---:|";
  md << "---|---:|---:|\n";

  for (const auto& run : order) {
    const auto ok = rows_for(run);
    std::size_t failed = 0;
    std::string hash;
    for (const auto& r : rows)
      if (r.run == run) {
        failed += r.failed ? 1 : 0;
        hash = r.config_hash;
      }
    md << "| " << run << " |";
    for (const auto& c : table_columns()) {
      if (ok.empty()) {
        md << " n/a |";
        continue;
      }
      double mean = 0;
      for (const auto* r : ok) mean += c.get(*r) * c.scale;
      mean /= static_cast<double>(ok.size());
      md << ' ' << fmt(mean, 2);
      if (ok.size() > 1) {
        double var = 0;
        for (const auto* r : ok) var += std::pow(c.get(*r) * c.scale - mean, 2);
        md << " ± " << fmt(std::sqrt(var / static_cast<double>(ok.size() - 1)), 2);
      }
      md << " |";
    }
    double secs = 0;
    for (const auto* r : ok) secs += r->seconds;
    md << ' ' << hash << " | " << ok.size();
    if (failed) md << " (+" << failed << " failed)";
    md << " | " << fmt(secs, 1) << " |\n";
  }
  md << "\nROUGE, BLEU, CF and topic accuracy are percentages; ROUGE is mean per-sample F1.\n";
  return md.str();
}

RunRow execute_run(const RunSpec& run, int repetition, int test_beam, const std::optional<std::filesystem::path>& out_dir) {
  const auto start = std::chrono::steady_clock::now();
  RunRow row;
  row.run = run.name;
  row.repetition = repetition;
  row.seed = run.seed + static_cast<std::uint64_t>(repetition);

  Dataset data;
  if (run.data_dir) {
    data = load_splits(*run.data_dir);
  } else {
    SyntheticSpec cs = run.corpus;
    cs.seed = run.corpus.seed + static_cast<std::uint64_t>(repetition);
    Corpus corpus = generate_synthetic_corpus(cs);
    data.vocab = std::move(corpus.vocab);
    data.splits = split_corpus(corpus.samples);
  }
  if (run.noise_features) {
    const std::uint64_t s = row.seed ^ 0x6E6F697365ULL;
    data.splits.train = noise_replace(data.splits.train, s);
    data.splits.validation = noise_replace(data.splits.validation, s + 1);
    data.splits.test = noise_replace(data.splits.test, s + 2);
  }

  ModelConfig mc = run.model;
  mc.seed = row.seed;
  mc.backbone.vocab_size = data.vocab.size();
  mc.validate();
  row.config_hash = mc.hash();
  VisionGuidedModel model(mc);

  TrainSchedule schedule = run.schedule;
  schedule.seed = row.seed;
  std::optional<std::filesystem::path> run_dir;
  if (out_dir) {
    std::string dir_name;
    for (char c : run.name) dir_name += std::isalnum(static_cast<unsigned char>(c)) ? c : '_';
    run_dir = *out_dir / (dir_name + "-rep" + std::to_string(repetition));
    std::filesystem::create_directories(*run_dir);
  }
  const TrainResult tr = train(model, data.splits.train, data.splits.validation, schedule,
                               run_dir ? std::optional(*run_dir / "checkpoint") : std::nullopt);
  if (run_dir) write_history_csv(*run_dir / "history.csv", tr.history);
  row.best_epoch = tr.best_epoch;
  row.steps = tr.steps;

  const auto hyps = decode_corpus(model, data.splits.test, BeamOptions{test_beam, kMaxSummaryTokens});
  std::vector<std::vector<int>> h, r;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    h.push_back(hyps[i].tokens);
    r.push_back(data.splits.test[i].summary);
  }
  row.metrics = evaluate(to_words(data.vocab, h), to_words(data.vocab, r));
  row.topic_accuracy = topic_accuracy(hyps, data.splits.test);
  row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return row;
}

ExperimentReport run_experiment(const ExperimentSpec& spec, const std::optional<std::filesystem::path>& out_dir,
                                const RunCallback& on_row) {
  spec.validate();
  struct Task {
    const RunSpec* run;
    int repetition;
  };
  std::vector<Task> tasks;
  for (const auto& r : spec.runs)
    for (int k = 0; k < r.repetitions; ++k) tasks.push_back({&r, k});

  ExperimentReport report;
  report.name = spec.name;
  report.rows.resize(tasks.size());
  std::mutex callback_mutex;

  auto run_task = [&](std::size_t i) {
    const Task& t = tasks[i];
    RunRow row;
    try {
      row = execute_run(*t.run, t.repetition, spec.test_beam, out_dir);
    } catch (const std::exception& e) {
      row = RunRow{};
      row.run = t.run->name;
      row.repetition = t.repetition;
      row.seed = t.run->seed + static_cast<std::uint64_t>(t.repetition);
      row.failed = true;
      row.error = e.what();
    }
    report.rows[i] = row;
    if (on_row) {
      std::lock_guard lock(callback_mutex);
      on_row(row);
    }
  };

  if (spec.jobs <= 1) {
    for (std::size_t i = 0; i < tasks.size(); ++i) run_task(i);
  } else {
    std::vector<std::thread> pool;
    const auto workers = std::min<std::size_t>(static_cast<std::size_t>(spec.jobs), tasks.size());
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < tasks.size(); i += workers) run_task(i);
      });
    for (auto& th : pool) th.join();
  }

  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    report.write_csv(*out_dir / "report.csv");
    std::ofstream md(*out_dir / "report.md");
    md << report.to_markdown();
  }
  return report;
}

Stack parse_stack(const std::string& name) {
  if (name == "encoder") return Stack::Encoder;
  if (name == "decoder") return Stack::Decoder;
  throw ConfigError("unknown stack '" + name + "' (expected encoder|decoder)");
}

std::vector<std::vector<bool>> location_patterns(int layers, bool singles, bool suffixes) {
  if (layers < 1) throw ConfigError("need at least one layer");
  std::vector<std::vector<bool>> out;
  if (singles)
    for (int i = 0; i < layers; ++i) {
      std::vector<bool> p(static_cast<std::size_t>(layers), false);
      p[static_cast<std::size_t>(i)] = true;
      out.push_back(p);
    }
  if (suffixes)
    for (int start = 0; start <= std::max(0, layers - 2); ++start) {
      std::vector<bool> p(static_cast<std::size_t>(layers), false);
      for (int i = start; i < layers; ++i) p[static_cast<std::size_t>(i)] = true;
      if (std::find(out.begin(), out.end(), p) == out.end()) out.push_back(p);
    }
  return out;
}

std::string pattern_name(Stack stack, const std::vector<bool>& pattern) {
  std::string s = stack == Stack::Encoder ? "enc{" : "dec{";
  bool first = true;
  for (std::size_t i = 0; i < pattern.size(); ++i)
    if (pattern[i]) {
      if (!first) s += ',';
      s += std::to_string(i + 1);
      first = false;
    }
  return s + "}";
}

namespace {

RunSpec text_only(const RunSpec& base) {
  RunSpec r = base;
  r.name = "text-only";
  r.model.fusion.reset();
  r.noise_features = false;
  return r;
}

FusionConfig base_fusion(const RunSpec& base) {
  return base.model.fusion ? *base.model.fusion : FusionConfig{};
}

}  // namespace

ExperimentSpec location_grid(const RunSpec& base, Stack stack, const std::vector<std::vector<bool>>& patterns) {
  const int layers = base.model.backbone.layers;
  ExperimentSpec spec;
  spec.name = std::string("locations-") + (stack == Stack::Encoder ? "encoder" : "decoder");
  spec.runs.push_back(text_only(base));
  for (const auto& p : patterns) {
    if (static_cast<int>(p.size()) != layers)
      throw ConfigError("location pattern has " + std::to_string(p.size()) + " entries, the stack has " +
                        std::to_string(layers) + " layers");
    RunSpec r = base;
    r.name = pattern_name(stack, p);
    FusionConfig f = base_fusion(base);
    const std::vector<bool> none(static_cast<std::size_t>(layers), false);
    f.encoder_locations = stack == Stack::Encoder ? p : none;
    f.decoder_locations = stack == Stack::Decoder ? p : none;
    r.model.fusion = f;
    spec.runs.push_back(r);
  }
  return spec;
}

ExperimentSpec mechanism_ablation(const RunSpec& base) {
  ExperimentSpec spec;
  spec.name = "mechanisms";
  spec.runs.push_back(text_only(base));
  const std::pair<const char*, FusionMechanism> mechs[] = {{"VG dot-product", FusionMechanism::DotProduct},
                                                           {"VG dot-product variant", FusionMechanism::DotProductVariant},
                                                           {"VG multi-head", FusionMechanism::MultiHead}};
  for (const auto& [name, m] : mechs) {
    RunSpec r = base;
    r.name = name;
    FusionConfig f = base_fusion(base);
    f.mechanism = m;
    r.model.fusion = f;
    spec.runs.push_back(r);
  }
  return spec;
}

void use_desk_vtf(FusionConfig& fusion) {
  fusion.vtf_layers = 1;
  fusion.vtf_heads = 4;
  fusion.vtf_ff = 128;
}

ExperimentSpec fg_vtf_ablation(const RunSpec& base) {
  ExperimentSpec spec;
  spec.name = "fg-vtf";
  const std::tuple<const char*, bool, bool> variants[] = {
      {"VG multi-head", false, false}, {"+FG", true, false}, {"+VTF", false, true}, {"+FG+VTF", true, true}};
  for (const auto& [name, fg, vtf] : variants) {
    RunSpec r = base;
    r.name = name;
    FusionConfig f = base_fusion(base);
    f.mechanism = FusionMechanism::MultiHead;
    f.use_forget_gate = fg;
    f.use_vtf = vtf;
    r.model.fusion = f;
    spec.runs.push_back(r);
  }
  return spec;
}

ExperimentSpec noise_ablation(const RunSpec& base) {
  ExperimentSpec spec;
  spec.name = "noise";
  spec.runs.push_back(text_only(base));
  RunSpec clean = base;
  clean.name = "VG clean features";
  clean.model.fusion = base_fusion(base);
  clean.noise_features = false;
  spec.runs.push_back(clean);
  RunSpec noisy = clean;
  noisy.name = "VG uniform noise";
  noisy.noise_features = true;
  spec.runs.push_back(noisy);
  return spec;
}

GateHistogram fg_histogram(const VisionGuidedModel& model, std::span<const Sample> samples, int bins) {
  if (!model.config().fusion || !model.config().fusion->use_forget_gate)
    throw ConfigError("forget-gate histogram needs a model trained with the forget gate");
  if (bins < 1) throw ConfigError("need at least one bin");
  if (samples.empty()) throw InputError("no samples to score");
  NoGradGuard no_grad;
  GateHistogram h;
  constexpr std::size_t kChunk = 8;
  for (std::size_t start = 0; start < samples.size(); start += kChunk) {
    const auto chunk = samples.subspan(start, std::min(kChunk, samples.size() - start));
    const MultimodalBatch batch = make_batch(chunk, model.config().d_visual);
    ForwardTrace trace;
    model.forward(batch, ForwardContext{}, &trace);
    const bool encoder = !trace.encoder.gates.empty();
    const auto scores = encoder ? mean_gate_scores(trace.encoder, batch.source)
                                : mean_gate_scores(trace.decoder, batch.target);
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      h.ids.push_back(chunk[i].id);
      h.scores.push_back(scores[i]);
    }
  }
  h.lo = *std::min_element(h.scores.begin(), h.scores.end());
  h.hi = *std::max_element(h.scores.begin(), h.scores.end());
  if (h.hi - h.lo < 1e-9) {
    h.lo -= 5e-4;
    h.hi += 5e-4;
  }
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  for (double s : h.scores) {
    auto b = static_cast<std::size_t>((s - h.lo) / (h.hi - h.lo) * bins);
    ++h.counts[std::min(b, h.counts.size() - 1)];
  }
  return h;
}

std::string GateHistogram::render() const {
  std::ostringstream out;
  const int peak = counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end());
  const double width = (hi - lo) / static_cast<double>(std::max<std::size_t>(1, counts.size()));
  out << "mean forget-gate score per sample (" << scores.size() << " samples)\n";
  for (std::size_t b = 0; b < counts.size(); ++b) {
    const int bar = peak > 0 ? counts[b] * 50 / peak : 0;
    out << '[' << fmt(lo + width * static_cast<double>(b), 5) << ", " << fmt(lo + width * static_cast<double>(b + 1), 5)
        << ") " << std::string(static_cast<std::size_t>(bar), '#') << ' ' << counts[b] << '\n';
  }
  return out.str();
}

void write_histogram(const GateHistogram& hist, const std::filesystem::path& stem) {
  std::ofstream csv(stem.string() + ".csv");
  if (!csv) throw InputError("cannot write " + stem.string() + ".csv");
  csv << "sample_id,mean_score\n";
  csv.precision(12);
  for (std::size_t i = 0; i < hist.ids.size(); ++i) csv << csv_escape(hist.ids[i]) << ',' << hist.scores[i] << '\n';
  std::ofstream txt(stem.string() + ".txt");
  txt << hist.render();
}

}  // namespace vgsum
