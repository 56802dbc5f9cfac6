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

#include "test_util.hpp"
#include "vt/frontend.hpp"
#include "vt/pe.hpp"
#include "vt/wav.hpp"

using namespace vt;

namespace {

AudioBuffer sine(double freq_hz, double seconds, int rate = 16000, double amp = 0.5) {
  AudioBuffer a;
  a.sample_rate = rate;
  const int n = static_cast<int>(seconds * rate);
  a.samples.resize(n);
  for (int i = 0; i < n; ++i) a.samples[i] = amp * std::sin(2.0 * M_PI * freq_hz * i / rate);
  return a;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("melfb: 1.8 s at 16 kHz yields 180 frames of 40 mels") {
  const FrontendConfig cfg;
  const auto feats = compute_melfb(sine(440.0, 1.8), cfg);
  CHECK(feats.length() == 180);
  CHECK(feats.dim() == 40);
  CHECK(feats.stage == FeatureStage::mel);
  CHECK(feats.frames.allFinite());
}

TEST_CASE("melfb: silence produces a constant log-floor vector") {
  const FrontendConfig cfg;
  AudioBuffer a;
  a.samples.assign(16000, 0.0);
  const auto feats = compute_melfb(a, cfg);
  const double floor_log = std::log(cfg.log_floor);
  CHECK((feats.frames.array() == floor_log).all());
}

TEST_CASE("melfb: pure 1 kHz tone concentrates in the same mel bin everywhere") {
  const FrontendConfig cfg;
  const auto feats = compute_melfb(sine(1000.0, 1.0), cfg);

  // Independently locate which triangle responds most at 1 kHz.
  auto hz_to_mel = [](double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); };
  auto mel_to_hz = [](double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); };
  const double lo = hz_to_mel(cfg.mel_low_hz), hi = hz_to_mel(cfg.mel_high_hz);
  const double step = (hi - lo) / (cfg.n_mels + 1);
  int expected = -1;
  double best = 0.0;
  for (int b = 0; b < cfg.n_mels; ++b) {
    const double left = mel_to_hz(lo + b * step);
    const double center = mel_to_hz(lo + (b + 1) * step);
    const double right = mel_to_hz(lo + (b + 2) * step);
    double w = 0.0;
    if (1000.0 > left && 1000.0 < center) w = (1000.0 - left) / (center - left);
    if (1000.0 >= center && 1000.0 < right) w = (right - 1000.0) / (right - center);
    if (w > best) {
      best = w;
      expected = b;
    }
  }
  REQUIRE(expected >= 0);
  for (int t = 0; t < feats.length(); ++t) {
    int argmax = 0;
    feats.frames.row(t).maxCoeff(&argmax);
    CHECK(argmax == expected);
  }
}

TEST_CASE("melfb: shifting audio by one hop shifts frames by one index") {
  const FrontendConfig cfg;
  Rng rng(42);
  AudioBuffer a;
  a.samples.resize(16000);
  for (auto& s : a.samples) s = 0.3 * rng.normal();
  const auto base = compute_melfb(a, cfg);

  AudioBuffer shifted;
  shifted.sample_rate = a.sample_rate;
  shifted.samples.assign(a.samples.begin() + cfg.hop_samples(a.sample_rate), a.samples.end());
  const auto moved = compute_melfb(shifted, cfg);

  // Interior frames (those whose window does not touch zero padding).
  for (int t = 0; t + 4 < moved.length(); ++t)
    CHECK((moved.frames.row(t) - base.frames.row(t + 1)).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("melfb: rejects audio shorter than one window") {
  const FrontendConfig cfg;
  AudioBuffer a;
  a.samples.assign(399, 0.01);  // window is 400 samples at 16 kHz / 25 ms
  CHECK_THROWS_AS(compute_melfb(a, cfg), DataError);
}

TEST_CASE("splice_subsample: lengths and width") {
  const FrontendConfig cfg;
  Rng rng(1);
  SUBCASE("180 mel frames give 60 spliced windows of 280") {
    FeatureSequence mel{test::random_matrix(180, 40, rng), 100.0, FeatureStage::mel};
    const auto out = splice_subsample(mel, cfg);
    CHECK(out.length() == 60);
    CHECK(out.dim() == 280);
    CHECK(out.dim() == cfg.splice * cfg.n_mels);
    CHECK(out.frame_rate == doctest::Approx(100.0 / 3));
  }
  SUBCASE("single frame is repeated across the whole window") {
    FeatureSequence mel{test::random_matrix(1, 40, rng), 100.0, FeatureStage::mel};
    const auto out = splice_subsample(mel, cfg);
    REQUIRE(out.length() == 1);
    for (int s = 0; s < 7; ++s)
      CHECK((out.frames.block(0, 40 * s, 1, 40) - mel.frames.row(0)).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("T=6 keeps windows at t=0 and t=3") {
    FeatureSequence mel{test::random_matrix(6, 40, rng), 100.0, FeatureStage::mel};
    const auto out = splice_subsample(mel, cfg);
    REQUIRE(out.length() == 2);
    // Center block of window k holds mel frame 3k.
    CHECK((out.frames.block(0, 3 * 40, 1, 40) - mel.frames.row(0)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((out.frames.block(1, 3 * 40, 1, 40) - mel.frames.row(3)).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("splice_subsample: width holds for other configs") {
  Rng rng(2);
  for (int splice : {1, 3, 5, 9}) {
    FrontendConfig cfg;
    cfg.splice = splice;
    cfg.n_mels = 12;
    FeatureSequence mel{test::random_matrix(10, 12, rng), 100.0, FeatureStage::mel};
    CHECK(splice_subsample(mel, cfg).dim() == splice * 12);
  }
}

TEST_CASE("positional encoding: first row alternates 0,1 and column 0 is sin(t)") {
  auto& table = SinusoidalTable::shared(280);
  const Matrix pe = table.rows(12);
  for (int i = 0; i < 280; i += 2) CHECK(pe(0, i) == 0.0);
  for (int i = 1; i < 280; i += 2) CHECK(pe(0, i) == 1.0);
  for (int t = 0; t < 12; ++t) CHECK(pe(t, 0) == doctest::Approx(std::sin(t)).epsilon(1e-15));

  FeatureSequence zero{Matrix::Zero(1, 280), 100.0 / 3, FeatureStage::spliced};
  const auto enc = add_positional_encoding(zero);
  CHECK(enc.stage == FeatureStage::encoded);
  CHECK(enc.frames(0, 0) == 0.0);
  CHECK(enc.frames(0, 1) == 1.0);
  CHECK(enc.frames(0, 278) == 0.0);
  CHECK(enc.frames(0, 279) == 1.0);
}

TEST_CASE("positional encoding: additive inverse recovers the input") {
  Rng rng(3);
  const Matrix x = test::random_matrix(33, 280, rng);
  const Matrix pe = SinusoidalTable::shared(280).rows(33);
  FeatureSequence shifted{x - pe, 100.0 / 3, FeatureStage::spliced};
  const auto enc = add_positional_encoding(shifted);
  CHECK((enc.frames - x).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("augment: unit impulse with zero gain is the identity") {
  Rng rng(4);
  for (int it = 0; it < 20; ++it) {
    AudioBuffer a;
    a.samples.resize(rng.uniform_int(1, 500));
    for (auto& s : a.samples) s = rng.normal();
    AugmentationSpec spec;
    spec.rir = {1.0};
    const auto out = augment(a, spec);
    REQUIRE(out.samples.size() == a.samples.size());
    for (size_t i = 0; i < a.samples.size(); ++i) CHECK(out.samples[i] == a.samples[i]);
  }
}

TEST_CASE("augment: scaling impulse scales the audio") {
  AudioBuffer a;
  a.samples = {0.2, -0.4, 0.6};
  AugmentationSpec spec;
  spec.rir = {0.5};
  const auto out = augment(a, spec);
  CHECK(out.samples[0] == doctest::Approx(0.1));
  CHECK(out.samples[1] == doctest::Approx(-0.2));
  CHECK(out.samples[2] == doctest::Approx(0.3));
}

TEST_CASE("augment: hand-convolved example with residual") {
  AudioBuffer a;
  a.samples = {1.0, 0.0};
  AugmentationSpec spec;
  spec.rir = {1.0, 1.0};
  spec.residual = {0.1, 0.1, 0.1};
  spec.residual_gain = 1.0;
  const auto out = augment(a, spec);
  REQUIRE(out.samples.size() == 3);
  CHECK(out.samples[0] == doctest::Approx(1.1));
  CHECK(out.samples[1] == doctest::Approx(1.1));
  CHECK(out.samples[2] == doctest::Approx(0.1));
}

TEST_CASE("augment: empty impulse response is rejected") {
  AudioBuffer a;
  a.samples = {1.0};
  CHECK_THROWS_AS(augment(a, AugmentationSpec{}), DataError);
}

TEST_CASE("feature norm: standardizes training statistics") {
  Rng rng(5);
  const Matrix data = test::random_matrix(500, 8, rng, 2.5);
  const auto fn = FeatureNorm::estimate({&data});
  const Matrix normed = fn.apply(data);
  for (int c = 0; c < 8; ++c) {
    CHECK(std::abs(normed.col(c).mean()) <= 1e-9);
    const double var = normed.col(c).array().square().mean() - std::pow(normed.col(c).mean(), 2);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
  }
  CHECK(FeatureNorm::identity(8).is_identity());
  CHECK_FALSE(fn.is_identity());
}

TEST_CASE("feature files: round trip through VTFE") {
  Rng rng(6);
  FeatureSequence f{test::random_matrix(17, 40, rng), 100.0, FeatureStage::mel};
  const std::string path = temp_path("vt_test_features.vtfe");
  write_features(path, f);
  const auto back = read_features(path);
  CHECK(back.length() == 17);
  CHECK(back.dim() == 40);
  // float32 on disk
  CHECK((back.frames - f.frames).cwiseAbs().maxCoeff() <= 1e-6);
  std::remove(path.c_str());
}

TEST_CASE("wav: 16-bit mono round trip") {
  const auto a = sine(440.0, 0.05);
  const std::string path = temp_path("vt_test_audio.wav");
  write_wav(path, a);
  const auto back = read_wav(path);
  CHECK(back.sample_rate == 16000);
  REQUIRE(back.samples.size() == a.samples.size());
  double max_err = 0.0;
  for (size_t i = 0; i < a.samples.size(); ++i)
    max_err = std::max(max_err, std::abs(back.samples[i] - a.samples[i]));
  CHECK(max_err <= 1.0 / 32767.0);
  std::remove(path.c_str());
}
