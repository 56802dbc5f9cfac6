// Copyright 2026 The vtrescore Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#include "vt/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <thread>

#include "vt/ctc.hpp"

namespace vt {
namespace {

std::vector<Matrix*> collect_tensors(ModelGraph& g, std::vector<std::string>* names = nullptr) {
  std::vector<Matrix*> out;
  for_each_param(g, [&](const ParamRef& p) {
    out.push_back(p.value);
    if (names) names->push_back(p.name);
  });
  return out;
}

double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

}  // namespace

AdamState AdamState::create(const ModelGraph& params, const AdamConfig& cfg) {
  AdamState s;
  s.cfg = cfg;
  s.first = zeros_like(params);
  s.second = zeros_like(params);
  return s;
}

void adam_step(ModelGraph& params, const ModelGraph& grads, AdamState& state) {
  std::vector<std::string> names;
  auto p_tensors = collect_tensors(params, &names);
  auto g_tensors = collect_tensors(const_cast<ModelGraph&>(grads));
  auto m_tensors = collect_tensors(state.first);
  auto v_tensors = collect_tensors(state.second);

  ++state.step;
  const double b1 = state.cfg.beta1;
  const double b2 = state.cfg.beta2;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(state.step));

  for (size_t i = 0; i < p_tensors.size(); ++i) {
    const Matrix& g = *g_tensors[i];
    if (!g.allFinite())
      throw NumericError("adam: non-finite gradient in tensor '" + names[i] + "'");
    Matrix& m = *m_tensors[i];
    Matrix& v = *v_tensors[i];
    m = b1 * m + (1.0 - b1) * g;
    v = (b2 * v.array() + (1.0 - b2) * g.array().square()).matrix();
    const auto m_hat = m.array() / bias1;
    const auto v_hat = v.array() / bias2;
    p_tensors[i]->array() -= state.cfg.lr * m_hat / (v_hat.sqrt() + state.cfg.eps);
  }
}

double global_grad_norm(const ModelGraph& grads) {
  double sq = 0.0;
  for_each_param(grads, [&](const std::string&, const Matrix& v, bool) {
    sq += v.array().square().sum();
  });
  return std::sqrt(sq);
}

void scale_all(ModelGraph& grads, double factor) {
  for_each_param(grads, [&](const ParamRef& p) { *p.value *= factor; });
}

void zero_all(ModelGraph& grads) {
  for_each_param(grads, [&](const ParamRef& p) { p.value->setZero(); });
}

std::string train_mode_name(TrainMode mode) {
  switch (mode) {
    case TrainMode::ctc: return "ctc";
    case TrainMode::ctc_dec: return "ctc+dec";
    case TrainMode::mtl: return "mtl";
  }
  throw DataError("unknown train mode");
}

TrainMode train_mode_from_name(const std::string& name) {
  if (name == "ctc") return TrainMode::ctc;
  if (name == "ctc+dec") return TrainMode::ctc_dec;
  if (name == "mtl") return TrainMode::mtl;
  throw UsageError("unknown mode '" + name + "' (expected ctc, ctc+dec or mtl)");
}

LossBreakdown example_loss(const ModelGraph& m, const PreparedExample& ex, bool decoder_loss,
                           ModelGraph* grads, double scale) {
  LossBreakdown parts;
  AmCache cache;
  const AmOut out = am_forward(m, ex.input, grads ? &cache : nullptr);

  if (ex.is_am) {
    Matrix dlogp;
    if (grads) {
      auto ctc = ctc_loss(out.logp, ex.labels);
      parts.ctc = ctc.loss;
      dlogp = scale * ctc.grad;
    } else {
      parts.ctc = -ctc_log_prob(out.logp, ex.labels);
    }
    Matrix dtrunk;
    bool have_dtrunk = false;
    if (decoder_loss) {
      if (!m.decoder) throw UsageError("decoder loss requested but model has no decoder");
      DecoderCache dc;
      const auto in_tokens = decoder_inputs(ex.labels, m.decoder_cfg);
      const auto targets = decoder_targets(ex.labels, m.decoder_cfg);
      const Matrix dec_logp = decoder_forward(out.trunk, in_tokens, m.decoder_cfg, *m.decoder,
                                              grads ? &dc : nullptr);
      auto ce = decoder_ce(dec_logp, targets);
      parts.ce = ce.loss;
      if (grads) {
        ce.dlogp *= scale;
        dtrunk = decoder_backward(ce.dlogp, m.decoder_cfg, *m.decoder, dc, *grads->decoder);
        have_dtrunk = true;
      }
    }
    if (grads) am_backward(m, dlogp, have_dtrunk ? &dtrunk : nullptr, cache, *grads);
  } else {
    if (!m.mtl) throw UsageError("discriminative example but model has no MTL head");
    MtlCache mc;
    const MtlOut mo = mtl_forward(out.trunk, *m.mtl, grads ? &mc : nullptr);
    const auto d = disc_loss(mo.logit, ex.target);
    parts.disc = d.loss;
    if (grads) {
      const Matrix dtrunk = mtl_backward(scale * d.dlogit, *m.mtl, mc, *grads->mtl);
      am_backward(m, Matrix(), &dtrunk, cache, *grads);
    }
  }
  return parts;
}

std::vector<ExampleRef> sample_mixed_batch(int n_am, int n_disc, int batch_size, Rng& rng) {
  const int total = n_am + n_disc;
  if (total == 0) throw DataError("sample_mixed_batch: both datasets empty");
  std::vector<ExampleRef> batch(static_cast<size_t>(batch_size));
  for (auto& ref : batch) {
    const int pick = rng.uniform_int(0, total - 1);
    ref.from_disc = pick >= n_am;
    ref.index = ref.from_disc ? pick - n_am : pick;
  }
  return batch;
}

namespace {

struct PreparedData {
  std::vector<PreparedExample> am_train, am_val, disc_train, disc_val;
  int skipped = 0;
};

PreparedExample prepare_example(const ModelGraph& m, const MelExample& ex) {
  PreparedExample out;
  out.input = prepare_input(m, ex.mel);
  out.labels = ex.phones;
  out.target = ex.target;
  out.is_am = ex.is_am;
  return out;
}

// Prepares model inputs and drops AM examples whose subsampled length cannot
// align their label sequence.
PreparedData prepare_data(const ModelGraph& m, const TrainData& data) {
  PreparedData out;
  auto add_am = [&](const std::vector<MelExample>& src, std::vector<PreparedExample>& dst) {
    for (const auto& ex : src) {
      PreparedExample p = prepare_example(m, ex);
      if (static_cast<int>(p.input.rows()) < ctc_min_frames(p.labels)) {
        ++out.skipped;
        continue;
      }
      dst.push_back(std::move(p));
    }
  };
  add_am(data.am_train, out.am_train);
  add_am(data.am_val, out.am_val);
  for (const auto& ex : data.disc_train) out.disc_train.push_back(prepare_example(m, ex));
  for (const auto& ex : data.disc_val) out.disc_val.push_back(prepare_example(m, ex));
  return out;
}

// Runs `jobs` example evaluations across `threads` workers with a static
// round-robin assignment; per-worker gradient buffers are reduced in worker
// order so results do not depend on scheduling.
double run_batch(const ModelGraph& model, const std::vector<const PreparedExample*>& jobs,
                 bool decoder_loss, int threads, std::vector<ModelGraph>& worker_grads,
                 ModelGraph* total_grads) {
  const int n = static_cast<int>(jobs.size());
  const int workers = std::max(1, std::min(threads, n));
  const double scale = total_grads ? 1.0 / n : 1.0;
  std::vector<double> worker_loss(workers, 0.0);
  std::vector<std::exception_ptr> worker_error(workers);

  auto body = [&](int w) {
    try {
      ModelGraph* g = total_grads ? &worker_grads[w] : nullptr;
      for (int i = w; i < n; i += workers)
        worker_loss[w] += example_loss(model, *jobs[i], decoder_loss, g, scale).total();
    } catch (...) {
      worker_error[w] = std::current_exception();
    }
  };
  if (workers == 1) {
    body(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) pool.emplace_back(body, w);
    for (auto& t : pool) t.join();
  }
  for (const auto& err : worker_error)
    if (err) std::rethrow_exception(err);

  if (total_grads) {
    auto dst = collect_tensors(*total_grads);
    for (int w = 0; w < workers; ++w) {
      auto src = collect_tensors(worker_grads[w]);
      for (size_t i = 0; i < dst.size(); ++i) *dst[i] += *src[i];
    }
  }
  double loss = 0.0;
  for (int w = 0; w < workers; ++w) loss += worker_loss[w];
  return loss;
}

}  // namespace

TrainResult train(const ModelGraph& init, const TrainData& data, const TrainConfig& cfg) {
  if (cfg.batch_size < 1) throw UsageError("train: batch_size must be >= 1");
  if (cfg.patience < 1) throw UsageError("train: patience must be >= 1");
  if (data.am_train.empty() && cfg.mode != TrainMode::mtl)
    throw DataError("train: empty training set");
  if (data.am_val.empty() && data.disc_val.empty())
    throw DataError("train: empty validation set");

  // Parallelism lives at the batch level; the matmul kernels stay
  // single-threaded underneath the workers.
  Eigen::setNbThreads(1);

  ModelGraph model = init;
  // Global normalization statistics from the AM training corpus, stored in
  // the checkpoint so inference reproduces training inputs exactly.
  if (!data.am_train.empty()) {
    std::vector<const Matrix*> mels;
    mels.reserve(data.am_train.size());
    for (const auto& ex : data.am_train) mels.push_back(&ex.mel);
    model.feat_norm = FeatureNorm::estimate(mels);
  }

  const PreparedData prepared = prepare_data(model, data);
  if (prepared.am_train.empty() && !data.am_train.empty())
    throw DataError("train: every training utterance was infeasible for CTC");
  const bool decoder_loss = model.decoder.has_value() &&
                            (cfg.mode == TrainMode::ctc_dec || cfg.mode == TrainMode::mtl);
  if (cfg.mode == TrainMode::ctc_dec && !model.decoder)
    throw UsageError("train: ctc+dec mode requires a decoder");
  if (cfg.mode == TrainMode::mtl && !model.mtl)
    throw UsageError("train: mtl mode requires the discriminative head");

  const int n_am = static_cast<int>(prepared.am_train.size());
  const int n_disc = cfg.mode == TrainMode::mtl ? static_cast<int>(prepared.disc_train.size()) : 0;

  AdamState adam = AdamState::create(model, cfg.adam);
  ModelGraph grads = zeros_like(model);
  const int workers = std::max(1, cfg.threads);
  std::vector<ModelGraph> worker_grads;
  worker_grads.reserve(workers);
  for (int w = 0; w < workers; ++w) worker_grads.push_back(zeros_like(model));

  Rng rng(mix64(cfg.seed ^ 0x7261696eULL));
  EarlyStopper stopper(cfg.patience);
  TrainResult result;
  ModelGraph best = model;

  std::vector<int> order(n_am);
  for (int i = 0; i < n_am; ++i) order[i] = i;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const double t0 = now_seconds();
    Rng epoch_rng = rng.fork(static_cast<uint64_t>(epoch));
    double epoch_loss = 0.0;
    int epoch_examples = 0;

    std::vector<std::vector<const PreparedExample*>> batches;
    if (cfg.mode == TrainMode::mtl) {
      const int total = n_am + n_disc;
      if (total == 0) throw DataError("train: no usable examples in mtl mode");
      const int steps = (total + cfg.batch_size - 1) / cfg.batch_size;
      for (int s = 0; s < steps; ++s) {
        auto refs = sample_mixed_batch(n_am, n_disc, cfg.batch_size, epoch_rng);
        std::vector<const PreparedExample*> batch;
        batch.reserve(refs.size());
        for (const auto& r : refs)
          batch.push_back(r.from_disc ? &prepared.disc_train[r.index]
                                      : &prepared.am_train[r.index]);
        batches.push_back(std::move(batch));
      }
    } else {
      epoch_rng.shuffle(order);
      for (int at = 0; at < n_am; at += cfg.batch_size) {
        std::vector<const PreparedExample*> batch;
        const int end = std::min(n_am, at + cfg.batch_size);
        for (int i = at; i < end; ++i) batch.push_back(&prepared.am_train[order[i]]);
        batches.push_back(std::move(batch));
      }
    }

    for (const auto& batch : batches) {
      zero_all(grads);
      for (auto& wg : worker_grads) zero_all(wg);
      const double batch_loss =
          run_batch(model, batch, decoder_loss, workers, worker_grads, &grads);
      if (!std::isfinite(batch_loss)) throw NumericError("train: non-finite batch loss");
      if (cfg.grad_clip > 0.0) {
        const double norm = global_grad_norm(grads);
        if (norm > cfg.grad_clip) scale_all(grads, cfg.grad_clip / norm);
      }
      adam_step(model, grads, adam);
      epoch_loss += batch_loss;
      epoch_examples += static_cast<int>(batch.size());
    }

    // Validation under the same composite loss as training.
    std::vector<const PreparedExample*> val_jobs;
    for (const auto& ex : prepared.am_val) val_jobs.push_back(&ex);
    if (cfg.mode == TrainMode::mtl)
      for (const auto& ex : prepared.disc_val) val_jobs.push_back(&ex);
    if (val_jobs.empty()) throw DataError("train: empty validation set after preparation");
    const double val_loss =
        run_batch(model, val_jobs, decoder_loss, workers, worker_grads, nullptr) /
        static_cast<double>(val_jobs.size());

    const double seconds = now_seconds() - t0;
    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = epoch_examples > 0 ? epoch_loss / epoch_examples : 0.0;
    entry.val_loss = val_loss;
    entry.seconds = seconds;
    entry.utt_per_sec = seconds > 0 ? (epoch_examples + val_jobs.size()) / seconds : 0.0;
    result.log.push_back(entry);

    if (stopper.update(val_loss)) {
      best = model;
      best.meta.best_epoch = epoch;
      best.meta.best_val_loss = val_loss;
    }
    best.meta.epochs = epoch;
    best.meta.final_train_loss = entry.train_loss;
    result.stopped_epoch = epoch;
    if (stopper.should_stop()) break;
  }

  result.best = std::move(best);
  result.best_epoch = stopper.best_epoch();
  result.best_val_loss = stopper.best();
  result.skipped_infeasible = prepared.skipped;
  return result;
}

void write_train_log(const std::string& path, const std::vector<EpochLog>& log) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write train log: " + path);
  f.setf(std::ios::fmtflags(0), std::ios::floatfield);
  f.precision(17);
  for (const auto& e : log) {
    f << "{\"epoch\": " << e.epoch << ", \"train_loss\": " << e.train_loss
      << ", \"val_loss\": " << e.val_loss << ", \"seconds\": " << e.seconds
      << ", \"utt_per_sec\": " << e.utt_per_sec << "}\n";
  }
}

}  // namespace vt
