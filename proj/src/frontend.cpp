// Copyright 2026 The vtrescore Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#include "vt/frontend.hpp"

#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>

#include "vt/pe.hpp"

namespace vt {
namespace {

constexpr char kFeatureMagic[4] = {'V', 'T', 'F', 'E'};
constexpr uint32_t kFeatureVersion = 1;

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// In-place iterative radix-2 FFT; n must be a power of two.
void fft_inplace(std::vector<std::complex<double>>& a) {
  const size_t n = a.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * M_PI / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        const auto u = a[i + k];
        const auto v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

// Triangular mel filters as an n_mels x (fft/2 + 1) matrix.
Matrix build_mel_filters(const FrontendConfig& cfg, int sample_rate) {
  const int bins = cfg.fft_size / 2 + 1;
  const double mel_lo = hz_to_mel(cfg.mel_low_hz);
  const double mel_hi = hz_to_mel(cfg.mel_high_hz);
  const double step = (mel_hi - mel_lo) / (cfg.n_mels + 1);
  std::vector<double> edges(cfg.n_mels + 2);
  for (int i = 0; i < cfg.n_mels + 2; ++i) edges[i] = mel_to_hz(mel_lo + i * step);

  Matrix filters = Matrix::Zero(cfg.n_mels, bins);
  const double hz_per_bin = static_cast<double>(sample_rate) / cfg.fft_size;
  for (int b = 0; b < cfg.n_mels; ++b) {
    const double left = edges[b], center = edges[b + 1], right = edges[b + 2];
    for (int j = 0; j < bins; ++j) {
      const double f = j * hz_per_bin;
      if (f > left && f < center) {
        filters(b, j) = (f - left) / (center - left);
      } else if (f >= center && f < right) {
        filters(b, j) = (right - f) / (right - center);
      }
    }
  }
  return filters;
}

}  // namespace

void FrontendConfig::validate() const {
  if (splice % 2 == 0 || splice < 1) throw DataError("frontend: splice must be odd");
  if (subsample < 1) throw DataError("frontend: subsample must be >= 1");
  if (n_mels < 1 || fft_size < 2 || frames_per_sec < 1)
    throw DataError("frontend: invalid config");
}

FeatureSequence compute_melfb(const AudioBuffer& audio, const FrontendConfig& cfg) {
  cfg.validate();
  if (audio.sample_rate <= 0) throw DataError("frontend: sample_rate must be positive");
  if (audio.sample_rate % cfg.frames_per_sec != 0)
    throw DataError("frontend: sample rate not divisible by frame rate");
  const int win = cfg.window_samples(audio.sample_rate);
  const int hop = cfg.hop_samples(audio.sample_rate);
  const int n = static_cast<int>(audio.samples.size());
  if (n < win)
    throw DataError("frontend: audio too short (" + std::to_string(n) + " samples < " +
                    std::to_string(win) + " window)");
  if (win > cfg.fft_size) throw DataError("frontend: window exceeds fft_size");

  std::vector<double> hann(win);
  for (int i = 0; i < win; ++i)
    hann[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / (win - 1));
  const Matrix filters = build_mel_filters(cfg, audio.sample_rate);

  const int T = n / hop;
  Matrix mel(T, cfg.n_mels);
  std::vector<std::complex<double>> buf(cfg.fft_size);
  Eigen::VectorXd power(cfg.fft_size / 2 + 1);
  for (int t = 0; t < T; ++t) {
    const int start = t * hop;
    for (int i = 0; i < cfg.fft_size; ++i) {
      const int s = start + i;
      const double sample = (i < win && s < n) ? audio.samples[s] * hann[i] : 0.0;
      buf[i] = {sample, 0.0};
    }
    fft_inplace(buf);
    for (int j = 0; j <= cfg.fft_size / 2; ++j) power(j) = std::norm(buf[j]);
    mel.row(t) = (filters * power).transpose();
    for (int b = 0; b < cfg.n_mels; ++b)
      mel(t, b) = std::log(std::max(mel(t, b), cfg.log_floor));
  }
  return {std::move(mel), static_cast<double>(cfg.frames_per_sec), FeatureStage::mel};
}

FeatureSequence splice_subsample(const FeatureSequence& mel, const FrontendConfig& cfg) {
  cfg.validate();
  if (mel.stage != FeatureStage::mel) throw DataError("splice_subsample: expects mel input");
  if (mel.dim() != cfg.n_mels) throw DataError("splice_subsample: mel width mismatch");
  const int T = mel.length();
  if (T < 1) throw DataError("splice_subsample: empty input");

  const int half = cfg.splice / 2;
  const int out_len = (T + cfg.subsample - 1) / cfg.subsample;
  Matrix out(out_len, cfg.input_width());
  for (int k = 0; k < out_len; ++k) {
    const int center = k * cfg.subsample;
    for (int o = -half; o <= half; ++o) {
      const int src = std::clamp(center + o, 0, T - 1);
      out.block(k, (o + half) * cfg.n_mels, 1, cfg.n_mels) = mel.frames.row(src);
    }
  }
  return {std::move(out), mel.frame_rate / cfg.subsample, FeatureStage::spliced};
}

FeatureSequence add_positional_encoding(const FeatureSequence& spliced) {
  if (spliced.stage != FeatureStage::spliced)
    throw DataError("add_positional_encoding: expects spliced input");
  FeatureSequence out = spliced;
  SinusoidalTable::shared(spliced.dim()).add_to(out.frames);
  out.stage = FeatureStage::encoded;
  return out;
}

AudioBuffer augment(const AudioBuffer& audio, const AugmentationSpec& spec) {
  if (spec.rir.empty()) throw DataError("augment: empty impulse response");
  const size_t n = audio.samples.size();
  const size_t out_len = n + spec.rir.size() - 1;
  AudioBuffer out;
  out.sample_rate = audio.sample_rate;
  out.samples.assign(out_len, 0.0);
  for (size_t i = 0; i < n; ++i) {
    const double s = audio.samples[i];
    if (s == 0.0) continue;
    for (size_t j = 0; j < spec.rir.size(); ++j) out.samples[i + j] += s * spec.rir[j];
  }
  if (spec.residual_gain != 0.0) {
    if (spec.residual.empty()) throw DataError("augment: gain set but residual empty");
    for (size_t i = 0; i < out_len; ++i)
      out.samples[i] += spec.residual_gain * spec.residual[i % spec.residual.size()];
  }
  return out;
}

FeatureNorm FeatureNorm::identity(int dim) {
  return {RowVec::Zero(dim), RowVec::Ones(dim)};
}

FeatureNorm FeatureNorm::estimate(const std::vector<const Matrix*>& mel_frames) {
  if (mel_frames.empty()) throw DataError("feature norm: no data");
  const int dim = static_cast<int>(mel_frames.front()->cols());
  RowVec sum = RowVec::Zero(dim);
  RowVec sum_sq = RowVec::Zero(dim);
  int64_t count = 0;
  for (const Matrix* m : mel_frames) {
    sum += m->colwise().sum();
    sum_sq += m->array().square().colwise().sum().matrix();
    count += m->rows();
  }
  if (count == 0) throw DataError("feature norm: no frames");
  FeatureNorm fn;
  fn.mean = sum / static_cast<double>(count);
  fn.var = (sum_sq / static_cast<double>(count)) - fn.mean.array().square().matrix();
  fn.var = fn.var.cwiseMax(0.0);
  return fn;
}

Matrix FeatureNorm::apply(const Matrix& mel) const {
  if (mel.cols() != mean.cols()) throw DataError("feature norm: width mismatch");
  const RowVec inv_std = (var.array() + 1e-8).sqrt().inverse();
  Matrix out = mel;
  out.rowwise() -= mean;
  out.array().rowwise() *= inv_std.array();
  return out;
}

bool FeatureNorm::is_identity() const {
  return mean.isZero(0.0) && (var.array() == 1.0).all();
}

void write_features(const std::string& path, const FeatureSequence& features) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write feature file: " + path);
  f.write(kFeatureMagic, 4);
  const uint32_t version = kFeatureVersion;
  const uint32_t T = static_cast<uint32_t>(features.length());
  const uint32_t D = static_cast<uint32_t>(features.dim());
  f.write(reinterpret_cast<const char*>(&version), 4);
  f.write(reinterpret_cast<const char*>(&T), 4);
  f.write(reinterpret_cast<const char*>(&D), 4);
  std::vector<float> row(D);
  for (uint32_t t = 0; t < T; ++t) {
    for (uint32_t d = 0; d < D; ++d) row[d] = static_cast<float>(features.frames(t, d));
    f.write(reinterpret_cast<const char*>(row.data()), sizeof(float) * D);
  }
  if (!f) throw DataError("short write to feature file: " + path);
}

FeatureSequence read_features(const std::string& path, FeatureStage stage) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open feature file: " + path);
  char magic[4];
  uint32_t version = 0, T = 0, D = 0;
  f.read(magic, 4);
  f.read(reinterpret_cast<char*>(&version), 4);
  f.read(reinterpret_cast<char*>(&T), 4);
  f.read(reinterpret_cast<char*>(&D), 4);
  if (!f || std::memcmp(magic, kFeatureMagic, 4) != 0)
    throw DataError("bad feature file magic in " + path);
  if (version != kFeatureVersion)
    throw DataError("unsupported feature file version " + std::to_string(version));
  FeatureSequence out;
  out.stage = stage;
  out.frames.resize(T, D);
  std::vector<float> row(D);
  for (uint32_t t = 0; t < T; ++t) {
    f.read(reinterpret_cast<char*>(row.data()), sizeof(float) * D);
    if (!f) throw DataError("truncated feature file: " + path);
    for (uint32_t d = 0; d < D; ++d) out.frames(t, d) = row[d];
  }
  return out;
}

}  // namespace vt
