// Copyright 2026 The vtrescore Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#include <doctest.h>

#include <cmath>

#include "test_util.hpp"
#include "vt/ctc.hpp"
#include "vt/train.hpp"

using namespace vt;
using test::random_matrix;

namespace {

ModelGraph micro_model(bool with_decoder, bool with_mtl, uint64_t seed) {
  EncoderConfig cfg;
  cfg.n_layers = 2;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.d_head = 4;
  cfg.d_ff = 16;
  cfg.input_dim = 12;
  cfg.n_outputs = 5;
  BiLstmConfig lstm;
  lstm.n_layers = 2;
  lstm.units_per_direction = 4;
  lstm.input_dim = 12;
  lstm.n_outputs = 5;
  return build_model(with_decoder ? Arch::tf_encoder : Arch::sa_encoder, cfg, lstm, with_mtl,
                     seed);
}

// Micro model whose input width matches the default frontend splicing, for
// tests that feed mel-stage data through the training loop.
ModelGraph micro_train_model(bool with_mtl, uint64_t seed) {
  EncoderConfig cfg;
  cfg.n_layers = 2;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.d_head = 4;
  cfg.d_ff = 16;
  cfg.input_dim = 280;
  cfg.n_outputs = 5;
  BiLstmConfig lstm;
  lstm.n_layers = 2;
  lstm.units_per_direction = 4;
  lstm.input_dim = 280;
  lstm.n_outputs = 5;
  return build_model(Arch::sa_encoder, cfg, lstm, with_mtl, seed);
}

// Tiny mel-stage dataset with learnable structure: one prototype mel vector
// per phone, labels are the phone sequence.
TrainData toy_data(int n_train, int n_val, uint64_t seed) {
  Rng rng(seed);
  const int n_phones = 4;
  Matrix protos = random_matrix(n_phones, 40, rng, 2.0);
  TrainData data;
  auto make = [&](int count, std::vector<MelExample>& dst) {
    for (int i = 0; i < count; ++i) {
      const int len = rng.uniform_int(2, 4);
      MelExample ex;
      ex.mel.resize(len * 3, 40);
      for (int p = 0; p < len; ++p) {
        int phone = rng.uniform_int(1, n_phones);
        while (p > 0 && phone == ex.phones.back()) phone = rng.uniform_int(1, n_phones);
        ex.phones.push_back(phone);
        for (int f = 0; f < 3; ++f)
          ex.mel.row(3 * p + f) =
              protos.row(phone - 1) + 0.1 * random_matrix(1, 40, rng).row(0);
      }
      dst.push_back(std::move(ex));
    }
  };
  make(n_train, data.am_train);
  make(n_val, data.am_val);
  return data;
}

}  // namespace

TEST_CASE("adam: zero gradients leave parameters unchanged") {
  ModelGraph m = micro_model(false, false, 1);
  const ModelGraph before = m;
  AdamState state = AdamState::create(m, {});
  adam_step(m, zeros_like(m), state);
  CHECK(state.step == 1);
  bool unchanged = true;
  for_each_param(m, [&](const std::string& name, const Matrix& v, bool) {
    for_each_param(before, [&](const std::string& n2, const Matrix& v2, bool) {
      if (n2 == name && (v - v2).cwiseAbs().maxCoeff() != 0.0) unchanged = false;
    });
  });
  CHECK(unchanged);
}

TEST_CASE("adam: first step moves each coordinate by at most lr") {
  ModelGraph m = micro_model(false, false, 2);
  const ModelGraph before = m;
  ModelGraph grads = zeros_like(m);
  Rng rng(3);
  for_each_param(grads, [&](const ParamRef& p) {
    *p.value = random_matrix(static_cast<int>(p.value->rows()),
                             static_cast<int>(p.value->cols()), rng);
  });
  AdamConfig cfg;
  cfg.lr = 5e-5;
  AdamState state = AdamState::create(m, cfg);
  adam_step(m, grads, state);

  double max_step = 0.0;
  // Compare tensors pairwise by name.
  for_each_param(m, [&](const std::string& name, const Matrix& v, bool) {
    for_each_param(before, [&](const std::string& n2, const Matrix& v2, bool) {
      if (n2 != name) return;
      const Matrix d = (v - v2).cwiseAbs();
      max_step = std::max(max_step, d.maxCoeff());
    });
  });
  CHECK(max_step <= 5e-5 * 1.0000001);
  // With |g| >> eps the first update is essentially lr * sign(g).
  CHECK(max_step == doctest::Approx(5e-5).epsilon(1e-3));
}

TEST_CASE("adam: non-finite gradient aborts naming the tensor") {
  ModelGraph m = micro_model(false, false, 4);
  ModelGraph grads = zeros_like(m);
  grads.encoder->input_proj.w(0, 0) = std::nan("");
  AdamState state = AdamState::create(m, {});
  try {
    adam_step(m, grads, state);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("encoder.input_proj.w") != std::string::npos);
  }
}

TEST_CASE("early stopping: the eight-consecutive-epochs rule") {
  SUBCASE("plateau after an early best") {
    EarlyStopper s(8);
    const std::vector<double> losses = {3, 2, 2, 2, 2, 2, 2, 2, 2, 2};
    int stopped_after = -1;
    for (size_t i = 0; i < losses.size(); ++i) {
      s.update(losses[i]);
      if (s.should_stop()) {
        stopped_after = static_cast<int>(i + 1);
        break;
      }
    }
    CHECK(stopped_after == 10);
    CHECK(s.best_epoch() == 2);
    CHECK(s.best() == 2.0);
  }
  SUBCASE("strict improvement resets the counter") {
    EarlyStopper s(3);
    for (double v : {5.0, 4.0, 4.0, 4.0, 3.9}) {
      s.update(v);
      CHECK_FALSE(s.should_stop());
    }
    s.update(3.9);
    s.update(3.9);
    CHECK_FALSE(s.should_stop());
    s.update(3.9);
    CHECK(s.should_stop());
    CHECK(s.best_epoch() == 5);
  }
  SUBCASE("never reports a best above the minimum seen") {
    Rng rng(5);
    EarlyStopper s(4);
    double minimum = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 50 && !s.should_stop(); ++i) {
      const double v = 1.0 + std::abs(rng.normal());
      minimum = std::min(minimum, v);
      s.update(v);
      CHECK(s.best() == minimum);
    }
  }
}

TEST_CASE("sample_mixed_batch: empty discriminative set behaves as plain sampling") {
  Rng rng(6);
  const auto batch = sample_mixed_batch(10, 0, 32, rng);
  for (const auto& ref : batch) {
    CHECK_FALSE(ref.from_disc);
    CHECK(ref.index >= 0);
    CHECK(ref.index < 10);
  }
  CHECK_THROWS_AS(sample_mixed_batch(0, 0, 4, rng), DataError);
}

TEST_CASE("sample_mixed_batch: disc fraction matches the binomial expectation") {
  Rng rng(7);
  const int n_am = 300, n_disc = 100, batch = 32, draws = 10000;
  const double q = static_cast<double>(n_disc) / (n_am + n_disc);
  int64_t disc_count = 0;
  for (int i = 0; i < draws; ++i)
    for (const auto& ref : sample_mixed_batch(n_am, n_disc, batch, rng))
      if (ref.from_disc) ++disc_count;
  const double n = static_cast<double>(draws) * batch;
  const double sigma = std::sqrt(n * q * (1.0 - q));
  CHECK(std::abs(disc_count - n * q) <= 3.0 * sigma);
}

TEST_CASE("sample_mixed_batch: deterministic under a fixed seed") {
  Rng a(8), b(8);
  const auto ba = sample_mixed_batch(50, 20, 32, a);
  const auto bb = sample_mixed_batch(50, 20, 32, b);
  for (size_t i = 0; i < ba.size(); ++i) {
    CHECK(ba[i].from_disc == bb[i].from_disc);
    CHECK(ba[i].index == bb[i].index);
  }
}

TEST_CASE("full micro model: joint-loss gradient matches finite differences") {
  ModelGraph m = micro_model(true, true, 20260807);
  Rng rng(21);
  PreparedExample am;
  am.input = random_matrix(5, 12, rng);
  am.labels = {1, 3};
  am.is_am = true;
  PreparedExample disc;
  disc.input = random_matrix(4, 12, rng);
  disc.target = 1;
  disc.is_am = false;

  auto total = [&] {
    return example_loss(m, am, true).total() + example_loss(m, disc, false).total();
  };
  ModelGraph grads = zeros_like(m);
  example_loss(m, am, true, &grads);
  example_loss(m, disc, false, &grads);

  std::vector<std::string> failures;
  double worst = 0.0;
  for_each_param(m, [&](const ParamRef& p) {
    Matrix analytic;
    for_each_param(grads, [&](const ParamRef& g) {
      if (g.name == p.name) analytic = *g.value;
    });
    const auto stats = test::check_gradient(*p.value, analytic, total, 1e-4, 1e-5, 1e-7);
    worst = std::max(worst, stats.max_rel);
    if (!stats.ok) failures.push_back(p.name);
  });
  CAPTURE(worst);
  CAPTURE(failures.size() > 0 ? failures.front() : std::string("none"));
  CHECK(failures.empty());
}

TEST_CASE("train: reproducible losses and early stop bookkeeping") {
  const TrainData data = toy_data(24, 8, 99);
  TrainConfig cfg;
  cfg.mode = TrainMode::ctc;
  cfg.batch_size = 8;
  cfg.max_epochs = 4;
  cfg.patience = 8;
  cfg.seed = 42;
  cfg.adam.lr = 1e-3;
  cfg.threads = 2;

  const ModelGraph init = micro_train_model(false, 31);
  const TrainResult a = train(init, data, cfg);
  const TrainResult b = train(init, data, cfg);
  REQUIRE(a.log.size() == b.log.size());
  for (size_t i = 0; i < a.log.size(); ++i) {
    CHECK(a.log[i].train_loss == b.log[i].train_loss);
    CHECK(a.log[i].val_loss == b.log[i].val_loss);
  }
  CHECK(a.best_epoch >= 1);
  CHECK(a.best.meta.best_epoch == a.best_epoch);
  CHECK(a.best_val_loss ==
        std::min_element(a.log.begin(), a.log.end(), [](const auto& x, const auto& y) {
          return x.val_loss < y.val_loss;
        })->val_loss);
}

TEST_CASE("train: max_epochs caps the run") {
  const TrainData data = toy_data(12, 4, 100);
  TrainConfig cfg;
  cfg.mode = TrainMode::ctc;
  cfg.batch_size = 4;
  cfg.max_epochs = 3;
  cfg.seed = 1;
  cfg.threads = 1;
  const TrainResult res = train(micro_train_model(false, 32), data, cfg);
  CHECK(res.stopped_epoch == 3);
  CHECK(res.log.size() == 3);
}

TEST_CASE("train: infeasible utterances are skipped with a count") {
  TrainData data = toy_data(8, 3, 101);
  // One utterance whose label sequence cannot fit its frame budget.
  Rng bad_rng(1);
  MelExample bad;
  bad.mel = random_matrix(3, 40, bad_rng);  // 3 mel frames -> 1 subsampled frame
  bad.phones = {1, 2, 3, 1};
  data.am_train.push_back(std::move(bad));
  TrainConfig cfg;
  cfg.mode = TrainMode::ctc;
  cfg.batch_size = 4;
  cfg.max_epochs = 1;
  cfg.threads = 1;
  const TrainResult res = train(micro_train_model(false, 33), data, cfg);
  CHECK(res.skipped_infeasible == 1);
}

TEST_CASE("train: mtl mode consumes discriminative examples") {
  TrainData data = toy_data(10, 4, 102);
  Rng rng(9);
  for (int i = 0; i < 6; ++i) {
    MelExample ex;
    ex.mel = random_matrix(9, 40, rng);
    ex.is_am = false;
    ex.target = i % 2;
    (i < 4 ? data.disc_train : data.disc_val).push_back(std::move(ex));
  }
  TrainConfig cfg;
  cfg.mode = TrainMode::mtl;
  cfg.batch_size = 4;
  cfg.max_epochs = 2;
  cfg.seed = 5;
  cfg.threads = 2;
  const TrainResult res = train(micro_train_model(true, 34), data, cfg);
  CHECK(res.log.size() == 2);
  CHECK(std::isfinite(res.log.back().val_loss));
}
