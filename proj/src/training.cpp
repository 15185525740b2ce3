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

#include "vgsum/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "vgsum/metrics.hpp"

namespace vgsum {

Tensor cross_entropy_loss(const Tensor& logits, std::span<const int> targets, const std::vector<bool>& keep) {
  const Index rows = logits.rows();
  const Index vocab = logits.cols();
  if (static_cast<Index>(targets.size()) != rows || static_cast<Index>(keep.size()) != rows)
    throw ShapeError("cross-entropy: " + std::to_string(rows) + " logit rows but " + std::to_string(targets.size()) +
                     " targets and " + std::to_string(keep.size()) + " mask flags");
  Index count = 0;
  for (Index r = 0; r < rows; ++r) {
    if (!keep[static_cast<std::size_t>(r)]) continue;
    const int t = targets[static_cast<std::size_t>(r)];
    if (t < 0 || t >= vocab)
      throw VocabularyError("target id " + std::to_string(t) + " outside vocabulary of " + std::to_string(vocab));
    ++count;
  }
  if (count == 0) throw DegenerateInputError("cross-entropy over a fully masked batch");

  const auto& x = logits.value();
  RowMatrix<double> probs = RowMatrix<double>::Zero(rows, vocab);
  double total = 0.0;
  for (Index r = 0; r < rows; ++r) {
    if (!keep[static_cast<std::size_t>(r)]) continue;
    const double mx = x.row(r).maxCoeff();
    const Eigen::RowVectorXd e = (x.row(r).array() - mx).exp();
    const double z = e.sum();
    total += mx + std::log(z) - x(r, targets[static_cast<std::size_t>(r)]);
    probs.row(r) = e / z;
  }
  RowMatrix<double> out(1, 1);
  out(0, 0) = total / static_cast<double>(count);

  std::vector<int> tgt(targets.begin(), targets.end());
  return make_op<double>("cross_entropy", Shape{1}, std::move(out), {logits},
                         [probs = std::move(probs), tgt = std::move(tgt), keep, count](detail::Node<double>& self) {
                           auto& g = self.parents[0]->ensure_grad();
                           const double s = self.grad(0, 0) / static_cast<double>(count);
                           for (Index r = 0; r < probs.rows(); ++r) {
                             if (!keep[static_cast<std::size_t>(r)]) continue;
                             g.row(r) += s * probs.row(r);
                             g(r, tgt[static_cast<std::size_t>(r)]) -= s;
                           }
                         });
}

Adam::Adam(const ParameterSet& params, AdamOptions options) : params_(&params), options_(options) {
  for (const auto& e : params.entries()) {
    m_.push_back(RowMatrix<double>::Zero(e.tensor.value().rows(), e.tensor.value().cols()));
    v_.push_back(RowMatrix<double>::Zero(e.tensor.value().rows(), e.tensor.value().cols()));
  }
}

void Adam::step(const GroupRates& rates) {
  const auto& entries = params_->entries();
  if (entries.size() != m_.size()) throw ContractError("parameter set changed after the optimizer was built");
  ++step_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    Tensor p = entries[i].tensor;
    if (!p.has_grad()) continue;
    if (p.grad().rows() != m_[i].rows() || p.grad().cols() != m_[i].cols())
      throw ContractError("gradient of " + entries[i].name + " does not match its parameter shape");
    const double lr = entries[i].group == ParamGroup::Fusion ? rates.fusion : rates.backbone;
    auto& theta = p.mutable_value();
    const RowMatrix<double> g = p.grad() + options_.weight_decay * theta;
    m_[i] = b1 * m_[i] + (1.0 - b1) * g;
    v_[i] = b2 * v_[i] + (1.0 - b2) * g.cwiseProduct(g);
    theta.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + options_.eps);
  }
}

double lr_at(int epoch, double base, double factor, int interval) {
  if (epoch < 0) throw ConfigError("epoch must be non-negative");
  if (interval < 1) throw ConfigError("decay interval must be at least 1");
  return base * std::pow(factor, epoch / interval);
}

EarlyStopping::EarlyStopping(int patience) : patience_(patience), best_(-std::numeric_limits<double>::infinity()) {
  if (patience < 1) throw ConfigError("patience must be at least 1");
}

bool EarlyStopping::update(double metric) {
  improved_ = metric > best_;
  if (improved_) {
    best_ = metric;
    bad_ = 0;
  } else {
    ++bad_;
  }
  return bad_ >= patience_;
}

void TrainSchedule::validate() const {
  if (max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (patience < 1) throw ConfigError("patience must be at least 1");
  if (validation_beam < 1) throw ConfigError("validation beam must be at least 1");
  if (!(base_rates.backbone > 0) || !(base_rates.fusion > 0)) throw ConfigError("learning rates must be positive");
  if (max_steps < 0) throw ConfigError("max_steps must be non-negative");
  if (clip_norm < 0) throw ConfigError("clip_norm must be non-negative");
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) throw ConfigError("decay factor must lie in (0, 1]");
  if (decay_interval < 1) throw ConfigError("decay interval must be at least 1");
}

namespace {

TokenSeq as_words(const std::vector<int>& ids) {
  TokenSeq out;
  for (int t : ids) {
    if (t == tokens::kEos) break;
    out.push_back(std::to_string(t));
  }
  return out;
}

double validation_rouge2(const VisionGuidedModel& model, std::span<const Sample> validation, int beam) {
  if (validation.empty()) return 0.0;
  const auto hyps = decode_corpus(model, validation, BeamOptions{beam, kMaxSummaryTokens});
  std::vector<TokenSeq> h, r;
  for (std::size_t i = 0; i < validation.size(); ++i) {
    h.push_back(as_words(hyps[i].tokens));
    r.push_back(as_words(validation[i].summary));
  }
  return mean_rouge2(h, r);
}

void clip_gradients(ParameterSet& params, double max_norm) {
  double sq = 0.0;
  for (auto& e : params.entries())
    if (e.tensor.has_grad()) sq += e.tensor.mutable_grad().squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const double s = max_norm / norm;
  for (auto& e : params.entries())
    if (e.tensor.has_grad()) e.tensor.mutable_grad() *= s;
}

std::vector<RowMatrix<double>> snapshot(const ParameterSet& params) {
  std::vector<RowMatrix<double>> out;
  for (const auto& e : params.entries()) out.push_back(e.tensor.value());
  return out;
}

void restore(ParameterSet& params, const std::vector<RowMatrix<double>>& values) {
  auto& entries = params.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) entries[i].tensor.mutable_value() = values[i];
}

}  // namespace

TrainResult train(VisionGuidedModel& model, std::span<const Sample> train_set, std::span<const Sample> validation,
                  const TrainSchedule& schedule, const std::optional<std::filesystem::path>& checkpoint_dir,
                  const EpochCallback& on_epoch) {
  schedule.validate();
  if (train_set.empty()) throw InputError("training split is empty");
  const int d_visual = model.uses_visual() ? model.config().d_visual : 0;

  Rng shuffle_rng(schedule.seed);
  Rng dropout_rng(schedule.seed + 1);
  Adam adam(model.parameters(), schedule.adam);
  EarlyStopping stopper(schedule.patience);
  TrainResult result;
  std::vector<RowMatrix<double>> best = snapshot(model.parameters());

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto bs = static_cast<std::size_t>(schedule.batch_size);
  bool out_of_steps = false;

  for (int epoch = 0; epoch < schedule.max_epochs && !out_of_steps; ++epoch) {
    const GroupRates rates{
        lr_at(epoch, schedule.base_rates.backbone, schedule.decay_factor, schedule.decay_interval),
        lr_at(epoch, schedule.base_rates.fusion, schedule.decay_factor, schedule.decay_interval)};
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    long batches = 0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      if (schedule.max_steps > 0 && result.steps >= schedule.max_steps) {
        out_of_steps = true;
        break;
      }
      std::vector<const Sample*> members;
      for (std::size_t i = start; i < std::min(order.size(), start + bs); ++i) members.push_back(&train_set[order[i]]);
      const MultimodalBatch batch = make_batch(std::span<const Sample* const>(members), d_visual);

      ForwardContext ctx{true, &dropout_rng, model.config().backbone.dropout};
      double value = 0.0;
      try {
        const Tensor logits = model.forward(batch, ctx);
        const Tensor flat = reshape(logits, Shape{batch.target.rows(), logits.dim(2)});
        const Tensor loss = cross_entropy_loss(flat, batch.target_out, batch.target.valid);
        value = loss.item();
        backward(loss);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " (epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(result.steps) + ", first sample " + members.front()->id + ")");
      }
      if (schedule.clip_norm > 0) clip_gradients(model.parameters(), schedule.clip_norm);
      adam.step(rates);
      model.parameters().zero_grad();
      for (const auto& e : model.parameters().entries())
        if (!e.tensor.value().allFinite())
          throw NumericError("parameter " + e.name + " became non-finite at epoch " + std::to_string(epoch) +
                             ", step " + std::to_string(result.steps));

      result.step_losses.push_back(value);
      loss_sum += value;
      ++batches;
      ++result.steps;
    }
    if (batches == 0) break;

    EpochRecord rec{epoch, loss_sum / static_cast<double>(batches),
                    validation_rouge2(model, validation, schedule.validation_beam), rates.backbone, rates.fusion};
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);

    const bool stop = stopper.update(rec.rouge2);
    if (stopper.improved()) {
      best = snapshot(model.parameters());
      result.best_epoch = epoch;
      result.best_rouge2 = rec.rouge2;
    }
    if (stop) {
      result.stopped_early = true;
      break;
    }
  }

  restore(model.parameters(), best);
  if (checkpoint_dir) model.save(*checkpoint_dir);
  return result;
}

double evaluate_loss(const VisionGuidedModel& model, std::span<const Sample> samples, int batch_size) {
  if (samples.empty()) throw InputError("cannot evaluate loss on an empty split");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  NoGradGuard no_grad;
  const int d_visual = model.uses_visual() ? model.config().d_visual : 0;
  double weighted = 0.0;
  double tokens_seen = 0.0;
  for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(batch_size)) {
    const auto n = std::min(samples.size() - start, static_cast<std::size_t>(batch_size));
    const MultimodalBatch batch = make_batch(samples.subspan(start, n), d_visual);
    const Tensor logits = model.forward(batch, ForwardContext{});
    const Tensor flat = reshape(logits, Shape{batch.target.rows(), logits.dim(2)});
    const double kept = static_cast<double>(std::count(batch.target.valid.begin(), batch.target.valid.end(), true));
    weighted += cross_entropy_loss(flat, batch.target_out, batch.target.valid).item() * kept;
    tokens_seen += kept;
  }
  return weighted / tokens_seen;
}

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << "epoch,loss,rouge2,lr_backbone,lr_fusion\n";
  out.precision(10);
  for (const auto& r : history)
    out << r.epoch << ',' << r.loss << ',' << r.rouge2 << ',' << r.lr_backbone << ',' << r.lr_fusion << '\n';
}

}  // namespace vgsum
