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

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "vgsum/model.hpp"

namespace vgsum {

/// Mean negative log-likelihood over rows whose `keep` flag is set.
/// `logits` is viewed as rows x vocab (any leading shape).
Tensor cross_entropy_loss(const Tensor& logits, std::span<const int> targets, const std::vector<bool>& keep);

inline constexpr double kBackboneLr = 6e-4;
/// The second backbone rate used for BART-style fine-tuning.
inline constexpr double kBackboneLrAlt = 3e-5;
inline constexpr double kFusionLr = 1.5e-4;

struct GroupRates {
  double backbone = kBackboneLr;
  double fusion = kFusionLr;
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 1e-5;  ///< L2 term added to the gradient
  double eps = 1e-8;
};

/// Adam with L2-coupled weight decay and per-group learning rates.
class Adam {
 public:
  explicit Adam(const ParameterSet& params, AdamOptions options = {});

  void step(const GroupRates& rates);
  std::int64_t steps() const { return step_; }
  const std::vector<RowMatrix<double>>& first_moments() const { return m_; }
  const std::vector<RowMatrix<double>>& second_moments() const { return v_; }

 private:
  const ParameterSet* params_;
  AdamOptions options_;
  std::vector<RowMatrix<double>> m_;
  std::vector<RowMatrix<double>> v_;
  std::int64_t step_ = 0;
};

/// base · factor^⌊epoch / interval⌋
double lr_at(int epoch, double base, double factor = 0.95, int interval = 10);

/// Stops once `patience` consecutive updates fail to beat the best value.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience);

  /// Returns true when training should stop.
  bool update(double metric);
  bool improved() const { return improved_; }
  double best() const { return best_; }
  int bad_epochs() const { return bad_; }

 private:
  int patience_;
  double best_;
  int bad_ = 0;
  bool improved_ = false;
};

struct TrainSchedule {
  GroupRates base_rates;
  double decay_factor = 0.95;
  int decay_interval = 10;
  int max_epochs = 60;
  int patience = 5;
  int batch_size = 8;
  long max_steps = 0;        ///< 0: unlimited
  double clip_norm = 0.0;    ///< global gradient-norm clip; 0 disables
  int validation_beam = 1;
  std::uint64_t seed = 0;    ///< shuffling and dropout streams
  AdamOptions adam;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double rouge2 = 0.0;
  double lr_backbone = 0.0;
  double lr_fusion = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = -1;
  double best_rouge2 = 0.0;
  long steps = 0;
  bool stopped_early = false;
  std::vector<double> step_losses;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Fine-tunes `model` on `train_set`, selecting by validation ROUGE-2 with
/// early stopping. On return the model holds the best epoch's parameters;
/// if `checkpoint_dir` is set that checkpoint is also written there.
TrainResult train(VisionGuidedModel& model, std::span<const Sample> train_set, std::span<const Sample> validation,
                  const TrainSchedule& schedule, const std::optional<std::filesystem::path>& checkpoint_dir = {},
                  const EpochCallback& on_epoch = {});

/// Mean loss of the model on `samples` in eval mode.
double evaluate_loss(const VisionGuidedModel& model, std::span<const Sample> samples, int batch_size = 8);

/// CSV with header epoch,loss,rouge2,lr_backbone,lr_fusion.
void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history);

}  // namespace vgsum
