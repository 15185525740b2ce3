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

// vgsum: data generation, training, decoding, scoring and the ablation harness.
//
// Every subcommand accepts --config FILE (INI, one [section] per subcommand);
// flags given on the command line override file values.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "vgsum/experiment.hpp"

namespace fs = std::filesystem;
using namespace vgsum;

namespace {

/// Options shared by every subcommand that builds a model and trains it.
struct RunOptions {
  RunSpec run;
  bool text_only = false;
  std::string mechanism = "multi_head";
  int fusion_heads = 4;
  bool forget_gate = false;
  bool vtf = false;
  int vtf_layers = 1, vtf_heads = 4, vtf_ff = 128;  // desk sizes
  std::string encoder_locations, decoder_locations;
  std::string data_dir;
  int test_beam = 5;
  int jobs = 1;

  RunOptions() {
    run.name = "model";
    run.schedule.max_epochs = 8;
  }
};

std::vector<bool> parse_locations(const std::string& text) {
  std::vector<bool> out;
  std::stringstream in(text);
  for (std::string item; std::getline(in, item, ',');) {
    if (item == "1")
      out.push_back(true);
    else if (item == "0")
      out.push_back(false);
    else
      throw ConfigError("location flags are comma-separated 0/1, got '" + text + "'");
  }
  return out;
}

void add_run_options(CLI::App* app, RunOptions& o) {
  auto& m = o.run.model;
  auto& c = o.run.corpus;
  auto& s = o.run.schedule;
  app->add_option("--data", o.data_dir, "Data directory from gen-data (default: synthetic corpus)");
  app->add_option("--layers", m.backbone.layers, "Encoder and decoder layers")->capture_default_str();
  app->add_option("--d-model", m.backbone.d_model, "Model width")->capture_default_str();
  app->add_option("--heads", m.backbone.heads, "Attention heads")->capture_default_str();
  app->add_option("--d-ff", m.backbone.d_ff, "Feed-forward width")->capture_default_str();
  app->add_option("--dropout", m.backbone.dropout)->capture_default_str();
  app->add_option("--d-visual", m.d_visual, "Visual feature width")->capture_default_str();
  app->add_flag("--text-only", o.text_only, "No fusion sub-layers");
  app->add_option("--mechanism", o.mechanism, "dot_product | dot_product_variant | multi_head")
      ->capture_default_str();
  app->add_option("--fusion-heads", o.fusion_heads)->capture_default_str();
  app->add_flag("--forget-gate", o.forget_gate);
  app->add_flag("--vtf", o.vtf, "Visual transformer encoder before fusion");
  app->add_option("--vtf-layers", o.vtf_layers)->capture_default_str();
  app->add_option("--vtf-heads", o.vtf_heads)->capture_default_str();
  app->add_option("--vtf-ff", o.vtf_ff)->capture_default_str();
  app->add_option("--encoder-locations", o.encoder_locations, "e.g. 1,1 (default: every encoder layer)");
  app->add_option("--decoder-locations", o.decoder_locations, "e.g. 0,1 (default: none)");

  app->add_option("--samples", c.samples, "Synthetic corpus size")->capture_default_str();
  app->add_option("--topics", c.topics)->capture_default_str();
  app->add_option("--content-words", c.content_words)->capture_default_str();
  app->add_option("--noise-scale", c.noise_scale)->capture_default_str();
  app->add_option("--corpus-seed", c.seed)->capture_default_str();

  app->add_option("--epochs", s.max_epochs)->capture_default_str();
  app->add_option("--batch", s.batch_size)->capture_default_str();
  app->add_option("--patience", s.patience)->capture_default_str();
  app->add_option("--max-steps", s.max_steps, "0 = unlimited")->capture_default_str();
  app->add_option("--lr", s.base_rates.backbone)->capture_default_str();
  app->add_option("--fusion-lr", s.base_rates.fusion)->capture_default_str();
  app->add_option("--clip", s.clip_norm, "Global gradient-norm clip, 0 disables")->capture_default_str();
  app->add_option("--val-beam", s.validation_beam)->capture_default_str();

  app->add_option("--seed", o.run.seed)->capture_default_str();
  app->add_option("--repetitions", o.run.repetitions)->capture_default_str();
  app->add_flag("--noise-features", o.run.noise_features, "Replace visual features with uniform [0,3) noise");
  app->add_option("--beam", o.test_beam, "Test-time beam size")->capture_default_str();
  app->add_option("--jobs", o.jobs, "Parallel runs")->capture_default_str();
}

RunSpec finish(RunOptions& o) {
  RunSpec r = o.run;
  r.corpus.d_visual = r.model.d_visual;
  if (!o.data_dir.empty()) r.data_dir = fs::path(o.data_dir);
  if (o.text_only) {
    r.model.fusion.reset();
    return r;
  }
  FusionConfig f;
  f.mechanism = parse_fusion_mechanism(o.mechanism);
  f.fusion_heads = o.fusion_heads;
  f.use_forget_gate = o.forget_gate;
  f.use_vtf = o.vtf;
  f.vtf_layers = o.vtf_layers;
  f.vtf_heads = o.vtf_heads;
  f.vtf_ff = o.vtf_ff;
  if (!o.encoder_locations.empty()) f.encoder_locations = parse_locations(o.encoder_locations);
  if (!o.decoder_locations.empty()) {
    f.decoder_locations = parse_locations(o.decoder_locations);
    if (f.encoder_locations.empty()) f.encoder_locations.assign(f.decoder_locations.size(), false);
  }
  r.model.fusion = f;
  return r;
}

/// Creates the run directory and snapshots the effective configuration in a
/// form `--config` reads back.
void prepare_run_dir(const fs::path& dir, const CLI::App& cmd) {
  fs::create_directories(dir);
  std::ofstream(dir / "config.ini") << "[" << cmd.get_name() << "]\n" << cmd.config_to_str(true, false);
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << v;
  return s.str();
}

void print_row(const RunRow& row) {
  if (row.failed) {
    std::cout << row.run << " rep " << row.repetition << ": FAILED (" << row.error << ")\n";
    return;
  }
  std::cout << row.run << " rep " << row.repetition << ": R-2 " << fmt(100 * row.metrics.rouge2) << ", topic acc "
            << fmt(100 * row.topic_accuracy) << ", " << fmt(row.seconds) << " s\n";
}

Dataset load_data(const std::string& dir) {
  if (dir.empty()) throw ConfigError("--data is required");
  return load_splits(dir);
}

const std::vector<Sample>& pick_split(const Dataset& d, const std::string& split) {
  if (split == "train") return d.splits.train;
  if (split == "valid" || split == "validation") return d.splits.validation;
  if (split == "test") return d.splits.test;
  throw ConfigError("unknown split '" + split + "'");
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return lines;
}

void run_report(const ExperimentSpec& spec, const fs::path& out) {
  const ExperimentReport rep = run_experiment(spec, out, print_row);
  std::cout << "\n" << rep.to_markdown() << "\nwritten to " << out.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vision-guided summarization toolkit"};
  app.set_config("--config", "", "INI file; command-line flags override it");
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic vision-keyed corpus (vocab, JSONL, features)");
  SyntheticSpec gen_spec;
  std::string gen_out;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--samples", gen_spec.samples)->capture_default_str();
  gen->add_option("--topics", gen_spec.topics)->capture_default_str();
  gen->add_option("--d-visual", gen_spec.d_visual)->capture_default_str();
  gen->add_option("--content-words", gen_spec.content_words)->capture_default_str();
  gen->add_option("--noise-scale", gen_spec.noise_scale)->capture_default_str();
  gen->add_option("--seed", gen_spec.seed)->capture_default_str();

  // inspect
  auto* inspect = app.add_subcommand("inspect", "Summarize a data directory");
  std::string inspect_dir;
  inspect->add_option("--data", inspect_dir)->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "Train one model, decode its test split and score it");
  RunOptions train_opts;
  std::string train_dir;
  add_run_options(train_cmd, train_opts);
  train_cmd->add_option("--run-dir", train_dir, "Output directory")->required();

  // decode
  auto* decode_cmd = app.add_subcommand("decode", "Beam-decode a split with a saved checkpoint");
  std::string dec_ckpt, dec_data, dec_split = "test", dec_out;
  BeamOptions dec_beam;
  int dec_jobs = 1;
  decode_cmd->add_option("--checkpoint", dec_ckpt)->required();
  decode_cmd->add_option("--data", dec_data)->required();
  decode_cmd->add_option("--split", dec_split)->capture_default_str();
  decode_cmd->add_option("--beam", dec_beam.beam)->capture_default_str();
  decode_cmd->add_option("--max-len", dec_beam.max_len)->capture_default_str();
  decode_cmd->add_option("--jobs", dec_jobs)->capture_default_str();
  decode_cmd->add_option("--out", dec_out, "Write hypotheses here (one per line) instead of stdout");
  std::string dec_refs;
  decode_cmd->add_option("--refs-out", dec_refs, "Also write the reference summaries, line-aligned");

  // score
  auto* score = app.add_subcommand("score", "Score line-aligned hypothesis and reference files; prints JSON");
  std::string hyp_file, ref_file, metric = "all", stop_file;
  score->add_option("--hyp", hyp_file)->required();
  score->add_option("--ref", ref_file)->required();
  score->add_option("--metric", metric, "all | rouge | bleu | cider | contentf1")->capture_default_str();
  score->add_option("--stopwords", stop_file, "Stop-word list for Content F1 (default: shipped list)");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "Run an ablation table");
  RunOptions ablate_opts;
  std::string preset = "mechanisms", ablate_dir;
  add_run_options(ablate, ablate_opts);
  ablate->add_option("--preset", preset, "mechanisms | fg-vtf | noise")->capture_default_str();
  ablate->add_option("--run-dir", ablate_dir)->required();

  // locations
  auto* locations = app.add_subcommand("locations", "Fusion-location grid over one stack");
  RunOptions loc_opts;
  std::string stack = "encoder", loc_dir;
  bool singles = true, suffixes = true;
  add_run_options(locations, loc_opts);
  locations->add_option("--stack", stack, "encoder | decoder")->capture_default_str();
  locations->add_option("--singles", singles, "Include single-layer patterns")->capture_default_str();
  locations->add_option("--suffixes", suffixes, "Include suffix patterns")->capture_default_str();
  locations->add_option("--run-dir", loc_dir)->required();

  // fg-hist
  auto* hist = app.add_subcommand("fg-hist", "Per-sample mean forget-gate score histogram");
  std::string hist_ckpt, hist_data, hist_split = "test", hist_out;
  int bins = 10;
  hist->add_option("--checkpoint", hist_ckpt)->required();
  hist->add_option("--data", hist_data)->required();
  hist->add_option("--split", hist_split)->capture_default_str();
  hist->add_option("--bins", bins)->capture_default_str();
  hist->add_option("--out", hist_out, "Output stem; writes STEM.csv and STEM.txt")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const Corpus corpus = generate_synthetic_corpus(gen_spec);
      const Splits splits = split_corpus(corpus.samples);
      write_splits(gen_out, splits, corpus.vocab);
      prepare_run_dir(gen_out, *gen);
      std::cout << "wrote " << splits.train.size() << "/" << splits.validation.size() << "/" << splits.test.size()
                << " samples, vocabulary " << corpus.vocab.size() << ", to " << gen_out << "\n";
    } else if (*inspect) {
      const Dataset d = load_splits(inspect_dir);
      std::cout << "vocabulary: " << d.vocab.size() << "\n";
      for (const char* name : {"train", "valid", "test"}) {
        const auto& part = pick_split(d, name);
        std::size_t frames = 0, words = 0;
        for (const auto& s : part) {
          frames += static_cast<std::size_t>(s.visual.rows());
          words += s.transcript.size();
        }
        std::cout << name << ": " << part.size() << " samples";
        if (!part.empty())
          std::cout << ", mean transcript " << fmt(double(words) / part.size()) << " words, mean frames "
                    << fmt(double(frames) / part.size()) << ", d_v " << part.front().visual.cols();
        std::cout << "\n";
      }
      if (!d.splits.train.empty()) {
        const Sample& s = d.splits.train.front();
        std::cout << "first sample " << s.id << "\n  transcript: " << d.vocab.decode(s.transcript)
                  << "\n  summary: " << d.vocab.decode(s.summary) << "\n";
      }
    } else if (*train_cmd) {
      const RunSpec run = finish(train_opts);
      prepare_run_dir(train_dir, *train_cmd);
      RunRow row;
      for (int rep = 0; rep < run.repetitions; ++rep) {
        row = execute_run(run, rep, train_opts.test_beam, fs::path(train_dir));
        print_row(row);
        std::ofstream(fs::path(train_dir) / ("metrics-rep" + std::to_string(rep) + ".json"))
            << to_json(row.metrics) << "\n";
      }
      std::cout << "checkpoint: " << (fs::path(train_dir) / (run.name + "-rep0") / "checkpoint").string() << "\n";
    } else if (*decode_cmd) {
      const VisionGuidedModel model = VisionGuidedModel::load(dec_ckpt);
      const Dataset d = load_data(dec_data);
      const auto& samples = pick_split(d, dec_split);
      const auto hyps = decode_corpus(model, samples, dec_beam, dec_jobs);
      std::ofstream file;
      if (!dec_out.empty()) {
        if (fs::path(dec_out).has_parent_path()) fs::create_directories(fs::path(dec_out).parent_path());
        file.open(dec_out);
      }
      std::ostream& out = dec_out.empty() ? std::cout : file;
      for (const auto& h : hyps) out << d.vocab.decode(h.tokens) << "\n";
      if (!dec_refs.empty()) {
        std::ofstream refs(dec_refs);
        for (const auto& s : samples) refs << d.vocab.decode(s.summary) << "\n";
      }
      if (!dec_out.empty())
        std::cerr << "decoded " << hyps.size() << " samples, topic accuracy "
                  << fmt(100 * topic_accuracy(hyps, samples)) << "\n";
    } else if (*score) {
      const auto hyp_lines = read_lines(hyp_file), ref_lines = read_lines(ref_file);
      if (hyp_lines.size() != ref_lines.size())
        throw InputError("hypothesis and reference files differ in length (" + std::to_string(hyp_lines.size()) +
                         " vs " + std::to_string(ref_lines.size()) + " lines)");
      std::vector<TokenSeq> h, r;
      for (std::size_t i = 0; i < hyp_lines.size(); ++i) {
        h.push_back(tokenize(hyp_lines[i]));
        r.push_back(tokenize(ref_lines[i]));
      }
      const MetricSet which = parse_metric_set(metric);
      const StopWords stop = stop_file.empty() ? default_stopwords() : load_stopwords(stop_file);
      std::cout << to_json(evaluate(h, r, stop, which), which) << "\n";
    } else if (*ablate) {
      const RunSpec base = finish(ablate_opts);
      ExperimentSpec spec;
      if (preset == "mechanisms")
        spec = mechanism_ablation(base);
      else if (preset == "fg-vtf")
        spec = fg_vtf_ablation(base);
      else if (preset == "noise")
        spec = noise_ablation(base);
      else
        throw ConfigError("unknown preset '" + preset + "'");
      spec.test_beam = ablate_opts.test_beam;
      spec.jobs = ablate_opts.jobs;
      prepare_run_dir(ablate_dir, *ablate);
      run_report(spec, ablate_dir);
    } else if (*locations) {
      const RunSpec base = finish(loc_opts);
      ExperimentSpec spec =
          location_grid(base, parse_stack(stack), location_patterns(base.model.backbone.layers, singles, suffixes));
      spec.test_beam = loc_opts.test_beam;
      spec.jobs = loc_opts.jobs;
      prepare_run_dir(loc_dir, *locations);
      run_report(spec, loc_dir);
    } else if (*hist) {
      const VisionGuidedModel model = VisionGuidedModel::load(hist_ckpt);
      const Dataset d = load_data(hist_data);
      const GateHistogram h = fg_histogram(model, pick_split(d, hist_split), bins);
      write_histogram(h, hist_out);
      std::cout << h.render();
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
