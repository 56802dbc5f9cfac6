// Copyright 2026 The vtrescore Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "test_util.hpp"
#include "vt/checkpoint.hpp"
#include "vt/losses.hpp"
#include "vt/model.hpp"

using namespace vt;
using test::random_matrix;

namespace {

EncoderConfig micro_encoder_cfg() {
  EncoderConfig cfg;
  cfg.n_layers = 2;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.d_head = 4;
  cfg.d_ff = 16;
  cfg.input_dim = 12;
  cfg.n_outputs = 5;
  return cfg;
}

BiLstmConfig micro_bilstm_cfg() {
  BiLstmConfig cfg;
  cfg.n_layers = 2;
  cfg.units_per_direction = 4;
  cfg.input_dim = 12;
  cfg.n_outputs = 5;
  return cfg;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("count_params: default encoder is 4,824,374") {
  const ModelGraph m = build_default_model(Arch::sa_encoder);
  CHECK(count_params(m) == 4824374);

  // Shape-sum oracle over the itemized listing.
  int64_t input_proj = 0, per_layer0 = 0, output = 0;
  for (const auto& [name, n] : itemize_params(m)) {
    if (name.rfind("encoder.input_proj", 0) == 0) input_proj += n;
    if (name.rfind("encoder.layer0.", 0) == 0) per_layer0 += n;
    if (name.rfind("encoder.output", 0) == 0) output += n;
  }
  CHECK(input_proj == 71936);
  CHECK(per_layer0 == 789760);
  CHECK(output == 13878);
  CHECK(input_proj + 6 * per_layer0 + output == 4824374);
}

TEST_CASE("count_params: default BiLSTM is 5,852,214 and exceeds the encoder") {
  const ModelGraph m = build_default_model(Arch::bilstm);
  CHECK(count_params(m) == 5852214);
  int64_t lstm = 0, output = 0;
  for (const auto& [name, n] : itemize_params(m)) {
    if (name.rfind("bilstm.layer", 0) == 0) lstm += n;
    if (name.rfind("bilstm.output", 0) == 0) output += n;
  }
  CHECK(lstm == 5824512);
  CHECK(output == 27702);
  CHECK(count_params(build_default_model(Arch::sa_encoder)) < count_params(m));
}

TEST_CASE("count_params: a 2->3 linear layer has 9 scalars") {
  Rng rng(1);
  const LinearParams p = LinearParams::init(2, 3, rng);
  CHECK(p.w.size() + p.b.size() == 9);
}

TEST_CASE("count_params: tf-encoder inference export equals sa-encoder") {
  const ModelGraph tf = build_default_model(Arch::tf_encoder);
  CHECK(count_params(tf) > 4824374);  // decoder adds training-only weights
  CHECK(count_params(export_inference(tf)) == 4824374);
  CHECK(count_params(export_inference(tf)) ==
        count_params(build_default_model(Arch::sa_encoder)));
}

TEST_CASE("encoder: output rows are normalized log-probabilities") {
  const EncoderConfig cfg = micro_encoder_cfg();
  ModelGraph m = build_model(Arch::sa_encoder, cfg, micro_bilstm_cfg(), false, 7);
  Rng rng(2);
  const Matrix x = random_matrix(9, cfg.input_dim, rng);
  const AmOut out = encoder_forward(x, cfg, *m.encoder);
  CHECK(out.logp.rows() == 9);
  CHECK(out.logp.cols() == cfg.n_outputs);
  CHECK(out.logp.allFinite());
  for (int t = 0; t < 9; ++t)
    CHECK(std::abs(out.logp.row(t).array().exp().sum() - 1.0) <= 1e-10);
}

TEST_CASE("encoder: rejects empty and mis-sized inputs") {
  const EncoderConfig cfg = micro_encoder_cfg();
  const ModelGraph m = build_model(Arch::sa_encoder, cfg, micro_bilstm_cfg(), false, 7);
  CHECK_THROWS_AS(encoder_forward(Matrix(0, cfg.input_dim), cfg, *m.encoder), DataError);
  CHECK_THROWS_AS(encoder_forward(Matrix::Zero(4, cfg.input_dim + 1), cfg, *m.encoder),
                  DataError);
}

TEST_CASE("encoder: 60-frame input gives a 60 x 54 posterior matrix") {
  const ModelGraph m = build_default_model(Arch::sa_encoder);
  Rng rng(3);
  const Matrix x = random_matrix(60, 280, rng);
  const AmOut out = am_forward(m, x);
  CHECK(out.logp.rows() == 60);
  CHECK(out.logp.cols() == 54);
  CHECK(out.trunk.rows() == 60);
  CHECK(out.trunk.cols() == 256);
}

TEST_CASE("encoder: every output frame sees every input frame") {
  const EncoderConfig cfg = micro_encoder_cfg();
  const ModelGraph m = build_model(Arch::sa_encoder, cfg, micro_bilstm_cfg(), false, 11);
  Rng rng(4);
  Matrix x = random_matrix(6, cfg.input_dim, rng);
  const Matrix base = encoder_forward(x, cfg, *m.encoder).logp;
  for (int changed = 0; changed < 6; ++changed) {
    Matrix x2 = x;
    x2.row(changed) += random_matrix(1, cfg.input_dim, rng);
    const Matrix moved = encoder_forward(x2, cfg, *m.encoder).logp;
    for (int t = 0; t < 6; ++t)
      CHECK((moved.row(t) - base.row(t)).cwiseAbs().maxCoeff() > 0.0);
  }
}

TEST_CASE("decoder: BOS-only input yields one normalized prediction step") {
  const EncoderConfig ecfg = micro_encoder_cfg();
  const ModelGraph m = build_model(Arch::tf_encoder, ecfg, micro_bilstm_cfg(), false, 5);
  Rng rng(5);
  const Matrix x = random_matrix(7, ecfg.input_dim, rng);
  const AmOut enc = encoder_forward(x, ecfg, *m.encoder);
  const Matrix logp =
      decoder_forward(enc.trunk, {m.decoder_cfg.bos()}, m.decoder_cfg, *m.decoder);
  CHECK(logp.rows() == 1);
  CHECK(logp.cols() == m.decoder_cfg.vocab);
  CHECK(std::abs(logp.row(0).array().exp().sum() - 1.0) <= 1e-10);
  CHECK_THROWS_AS(decoder_forward(enc.trunk, {}, m.decoder_cfg, *m.decoder), DataError);
}

TEST_CASE("decoder: step t ignores later target tokens") {
  const EncoderConfig ecfg = micro_encoder_cfg();
  const ModelGraph m = build_model(Arch::tf_encoder, ecfg, micro_bilstm_cfg(), false, 6);
  Rng rng(6);
  const Matrix x = random_matrix(7, ecfg.input_dim, rng);
  const AmOut enc = encoder_forward(x, ecfg, *m.encoder);
  const auto& dcfg = m.decoder_cfg;
  std::vector<int> tokens = decoder_inputs({1, 2, 3}, dcfg);
  const Matrix base = decoder_forward(enc.trunk, tokens, dcfg, *m.decoder);
  std::vector<int> altered = tokens;
  altered.back() = dcfg.phone_token(4);
  const Matrix moved = decoder_forward(enc.trunk, altered, dcfg, *m.decoder);
  // Steps before the altered position are bit-identical.
  CHECK((base.topRows(3) - moved.topRows(3)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((base.row(3) - moved.row(3)).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("decoder: cross-attention rows sum to one") {
  const EncoderConfig ecfg = micro_encoder_cfg();
  const ModelGraph m = build_model(Arch::tf_encoder, ecfg, micro_bilstm_cfg(), false, 8);
  Rng rng(7);
  const Matrix x = random_matrix(7, ecfg.input_dim, rng);
  const AmOut enc = encoder_forward(x, ecfg, *m.encoder);
  DecoderCache cache;
  decoder_forward(enc.trunk, decoder_inputs({1, 2}, m.decoder_cfg), m.decoder_cfg, *m.decoder,
                  &cache);
  for (const auto& layer : cache.layers)
    for (const auto& probs : layer.cross.probs)
      for (int r = 0; r < probs.rows(); ++r)
        CHECK(std::abs(probs.row(r).sum() - 1.0) <= 1e-12);
}

TEST_CASE("bilstm stack: normalized rows, length preserved, uniform at zero") {
  const BiLstmConfig cfg = micro_bilstm_cfg();
  ModelGraph m = build_model(Arch::bilstm, micro_encoder_cfg(), cfg, false, 9);
  Rng rng(8);
  const Matrix x = random_matrix(11, cfg.input_dim, rng);
  const AmOut out = am_forward(m, x);
  CHECK(out.logp.rows() == 11);
  for (int t = 0; t < 11; ++t)
    CHECK(std::abs(out.logp.row(t).array().exp().sum() - 1.0) <= 1e-10);

  // All-zero parameters: logits vanish, posteriors are uniform.
  ModelGraph zeroed = zeros_like(m);
  const AmOut uniform = am_forward(zeroed, x);
  const double expected = -std::log(static_cast<double>(cfg.n_outputs));
  CHECK((uniform.logp.array() - expected).abs().maxCoeff() <= 1e-12);
}

TEST_CASE("mtl head: zero weights give probability one half") {
  MtlHeadParams head{LinearParams::zeros(6, 1)};
  Rng rng(9);
  const Matrix trunk = random_matrix(5, 6, rng);
  const MtlOut out = mtl_forward(trunk, head);
  CHECK(out.prob == 0.5);
  CHECK_THROWS_AS(mtl_forward(Matrix(0, 6), head), DataError);
}

TEST_CASE("mtl head: pooling is identity on constant sequences") {
  Rng rng(10);
  MtlHeadParams head{LinearParams::init(6, 1, rng)};
  const Matrix row = random_matrix(1, 6, rng);
  Matrix trunk(4, 6);
  for (int t = 0; t < 4; ++t) trunk.row(t) = row;
  MtlCache cache;
  mtl_forward(trunk, head, &cache);
  CHECK((cache.pooled - row).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("mtl head: probability strictly inside (0,1) even for huge logits") {
  MtlHeadParams head{LinearParams::zeros(2, 1)};
  head.classifier.w(0, 0) = 1e6;
  Matrix trunk(1, 2);
  trunk << 1.0, 0.0;
  const MtlOut hi = mtl_forward(trunk, head);
  CHECK(hi.prob < 1.0);
  CHECK(hi.prob > 0.0);
  trunk(0, 0) = -1.0;
  const MtlOut lo = mtl_forward(trunk, head);
  CHECK(lo.prob > 0.0);
  CHECK(lo.prob < 1.0);
}

TEST_CASE("checkpoint: save/load/save is byte-identical and preserves counts") {
  const EncoderConfig cfg = micro_encoder_cfg();
  ModelGraph m = build_model(Arch::tf_encoder, cfg, micro_bilstm_cfg(), true, 123);
  m.meta.epochs = 4;
  m.meta.best_epoch = 2;
  m.meta.final_train_loss = 1.25;
  m.meta.best_val_loss = 1.5;
  m.feat_norm.mean.setConstant(0.25);
  m.feat_norm.var.setConstant(2.0);

  const std::string p1 = temp_path("vt_ckpt_a.vtck");
  const std::string p2 = temp_path("vt_ckpt_b.vtck");
  save_checkpoint(m, p1);
  const auto loaded = load_checkpoint(p1);
  CHECK_FALSE(loaded.quantized.has_value());
  CHECK(count_params(loaded.model) == count_params(m));
  CHECK(loaded.model.meta.best_epoch == 2);
  CHECK(loaded.model.feat_norm.mean(0) == 0.25);

  bool identical = true;
  for_each_param(loaded.model, [&](const std::string& name, const Matrix& v, bool) {
    bool found = false;
    for_each_param(m, [&](const std::string& n2, const Matrix& v2, bool) {
      if (n2 == name) {
        found = true;
        if ((v - v2).cwiseAbs().maxCoeff() != 0.0) identical = false;
      }
    });
    if (!found) identical = false;
  });
  CHECK(identical);

  save_checkpoint(loaded.model, p2);
  CHECK(slurp(p1) == slurp(p2));
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("checkpoint: corrupted magic is reported by name") {
  const std::string path = temp_path("vt_ckpt_bad.vtck");
  ModelGraph m = build_model(Arch::sa_encoder, micro_encoder_cfg(), micro_bilstm_cfg(), false, 1);
  save_checkpoint(m, path);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.write("XXXX", 4);
  }
  try {
    load_checkpoint(path);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("XXXX") != std::string::npos);
    CHECK(std::string(e.what()).find("VTCK") != std::string::npos);
  }
  std::remove(path.c_str());
}

TEST_CASE("checkpoint: truncated payload is rejected") {
  const std::string path = temp_path("vt_ckpt_trunc.vtck");
  ModelGraph m = build_model(Arch::sa_encoder, micro_encoder_cfg(), micro_bilstm_cfg(), false, 1);
  save_checkpoint(m, path);
  const std::string full = slurp(path);
  {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f.write(full.data(), static_cast<std::streamsize>(full.size() - 64));
  }
  CHECK_THROWS_AS(load_checkpoint(path), DataError);
  std::remove(path.c_str());
}

TEST_CASE("checkpoint: inference export drops training-only tensors, scores unchanged") {
  const EncoderConfig cfg = micro_encoder_cfg();
  ModelGraph m = build_model(Arch::tf_encoder, cfg, micro_bilstm_cfg(), true, 17);
  const ModelGraph inf = export_inference(m);
  CHECK_FALSE(inf.decoder.has_value());
  CHECK_FALSE(inf.mtl.has_value());
  bool any_decoder_tensor = false;
  for_each_param(inf, [&](const std::string& name, const Matrix&, bool) {
    if (name.rfind("decoder.", 0) == 0 || name.rfind("mtl.", 0) == 0) any_decoder_tensor = true;
  });
  CHECK_FALSE(any_decoder_tensor);

  Rng rng(11);
  const Matrix x = random_matrix(9, cfg.input_dim, rng);
  const Matrix full_logp = am_forward(m, x).logp;
  const Matrix inf_logp = am_forward(inf, x).logp;
  CHECK((full_logp - inf_logp).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("model outputs stay finite on large inputs") {
  const EncoderConfig cfg = micro_encoder_cfg();
  const ModelGraph m = build_model(Arch::sa_encoder, cfg, micro_bilstm_cfg(), false, 13);
  Rng rng(12);
  const Matrix x = 50.0 * random_matrix(5, cfg.input_dim, rng);
  CHECK(am_forward(m, x).logp.allFinite());
}
