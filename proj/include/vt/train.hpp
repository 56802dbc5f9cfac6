// Copyright 2026 The vtrescore Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <string>
#include <vector>

#include "vt/losses.hpp"
#include "vt/model.hpp"

namespace vt {

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig cfg;
  int64_t step = 0;
  ModelGraph first;   // first-moment tensors, parameter-shaped
  ModelGraph second;  // second-moment tensors

  static AdamState create(const ModelGraph& params, const AdamConfig& cfg);
};

// Bias-corrected Adam update. Throws NumericError naming the offending
// tensor if a gradient is not finite.
void adam_step(ModelGraph& params, const ModelGraph& grads, AdamState& state);

double global_grad_norm(const ModelGraph& grads);
void scale_all(ModelGraph& grads, double factor);
void zero_all(ModelGraph& grads);

// ---------------------------------------------------------------------------
// Early stopping
// ---------------------------------------------------------------------------

// Stops after `patience` consecutive epochs without strict improvement of
// the best validation loss.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience) : patience_(patience) {}

  // Returns true when val_loss strictly improves the best seen.
  bool update(double val_loss) {
    ++epoch_;
    if (val_loss < best_) {
      best_ = val_loss;
      best_epoch_ = epoch_;
      since_best_ = 0;
      return true;
    }
    ++since_best_;
    return false;
  }

  bool should_stop() const { return since_best_ >= patience_; }
  double best() const { return best_; }
  int best_epoch() const { return best_epoch_; }

 private:
  int patience_;
  int epoch_ = 0;
  int best_epoch_ = -1;
  int since_best_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
};

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

enum class TrainMode { ctc, ctc_dec, mtl };

std::string train_mode_name(TrainMode mode);
TrainMode train_mode_from_name(const std::string& name);

struct TrainConfig {
  TrainMode mode = TrainMode::ctc;
  int batch_size = 32;
  int patience = 8;
  int max_epochs = 100;
  uint64_t seed = 1;
  AdamConfig adam;
  double grad_clip = 5.0;  // global norm; <= 0 disables
  int threads = 1;
};

struct EpochLog {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double seconds = 0.0;
  double utt_per_sec = 0.0;
};

// One training example at the mel feature stage. AM examples carry phone
// labels; discriminative examples carry a binary trigger target.
struct MelExample {
  Matrix mel;
  std::vector<int> phones;
  int target = -1;
  bool is_am = true;
};

struct TrainData {
  std::vector<MelExample> am_train;
  std::vector<MelExample> am_val;
  std::vector<MelExample> disc_train;  // used in mtl mode
  std::vector<MelExample> disc_val;
};

struct TrainResult {
  ModelGraph best;
  std::vector<EpochLog> log;
  int best_epoch = -1;
  double best_val_loss = 0.0;
  int skipped_infeasible = 0;
  int stopped_epoch = 0;
};

// Mini-batch loop with validation-based early stopping. Deterministic for a
// fixed (seed, data, config) including the thread count.
TrainResult train(const ModelGraph& init, const TrainData& data, const TrainConfig& cfg);

// One epoch line per row: {epoch, train_loss, val_loss, seconds, utt_per_sec}.
void write_train_log(const std::string& path, const std::vector<EpochLog>& log);

// ---------------------------------------------------------------------------
// Pieces exposed for tests and the acceptance suite
// ---------------------------------------------------------------------------

struct PreparedExample {
  Matrix input;  // model-ready (normalized, spliced, encoded)
  std::vector<int> labels;
  int target = -1;
  bool is_am = true;
};

// Composite loss of one example under the given mode recipe; when grads is
// non-null the example's gradient (times scale) is accumulated.
LossBreakdown example_loss(const ModelGraph& m, const PreparedExample& ex, bool decoder_loss,
                           ModelGraph* grads = nullptr, double scale = 1.0);

// Uniform sampling over the concatenation of the AM and discriminative sets;
// entries are (from_disc, index) pairs.
struct ExampleRef {
  bool from_disc = false;
  int index = 0;
};
std::vector<ExampleRef> sample_mixed_batch(int n_am, int n_disc, int batch_size, Rng& rng);

}  // namespace vt
