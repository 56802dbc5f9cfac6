// Copyright 2026 The vtrescore Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <string>
#include <vector>

#include "vt/common.hpp"

namespace vt {

struct AudioBuffer {
  std::vector<double> samples;  // nominal range [-1, 1]
  int sample_rate = 16000;

  double duration_sec() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

struct FrontendConfig {
  int n_mels = 40;
  int frames_per_sec = 100;
  int splice = 7;     // odd context window, +/- 3 frames
  int subsample = 3;  // keep frames 0, 3, 6, ...
  double window_ms = 25.0;
  int fft_size = 512;
  double log_floor = 1e-10;
  double mel_low_hz = 20.0;
  double mel_high_hz = 8000.0;

  int input_width() const { return n_mels * splice; }
  int window_samples(int sample_rate) const {
    return static_cast<int>(std::lround(sample_rate * window_ms / 1000.0));
  }
  int hop_samples(int sample_rate) const { return sample_rate / frames_per_sec; }
  void validate() const;
};

enum class FeatureStage { mel, spliced, encoded };

struct FeatureSequence {
  Matrix frames;  // T x D
  double frame_rate = 100.0;
  FeatureStage stage = FeatureStage::mel;

  int length() const { return static_cast<int>(frames.rows()); }
  int dim() const { return static_cast<int>(frames.cols()); }
  double duration_sec() const { return length() / frame_rate; }
};

struct AugmentationSpec {
  std::vector<double> rir;       // room impulse response
  std::vector<double> residual;  // noise track, cyclically extended if short
  double residual_gain = 0.0;
  uint64_t rng_seed = 0;
};

// Log mel-filterbank energies: Hann window, 10 ms hop (frames_per_sec=100),
// HTK mel triangle filters, natural log with a floor. Frame t reads samples
// [t*hop, t*hop + window), zero-padded past the end; T = floor(n / hop).
// Throws DataError when the audio is shorter than one window.
FeatureSequence compute_melfb(const AudioBuffer& audio, const FrontendConfig& cfg);

// Context splicing and subsampling: output row k concatenates mel frames
// [t-3 .. t+3] (edges clamped) at t = k * subsample; width = splice * n_mels.
FeatureSequence splice_subsample(const FeatureSequence& mel, const FrontendConfig& cfg);

// Adds the fixed sinusoidal positional encoding at the spliced width.
FeatureSequence add_positional_encoding(const FeatureSequence& spliced);

// conv(audio, rir) + residual_gain * residual, truncated to the convolution
// length. Throws DataError on an empty impulse response.
AudioBuffer augment(const AudioBuffer& audio, const AugmentationSpec& spec);

// Global feature normalization, estimated on training data and stored in
// checkpoints. Applied at the mel stage.
struct FeatureNorm {
  RowVec mean;
  RowVec var;

  static FeatureNorm identity(int dim);
  static FeatureNorm estimate(const std::vector<const Matrix*>& mel_frames);
  Matrix apply(const Matrix& mel) const;
  bool is_identity() const;
};

// Feature file format "VTFE": magic, u32 version, u32 T, u32 D, then T*D
// little-endian float32 values, row-major.
void write_features(const std::string& path, const FeatureSequence& features);
FeatureSequence read_features(const std::string& path,
                              FeatureStage stage = FeatureStage::mel);

}  // namespace vt
