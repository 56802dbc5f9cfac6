// Copyright 2026 The vtrescore Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <string>
#include <vector>

#include "vt/frontend.hpp"
#include "vt/train.hpp"

namespace vt {

// Per-phone emission prototype: frames for that phone are drawn around
// `mean` with per-dimension spread noise_level * sqrt(var).
struct PhonePrototype {
  RowVec mean;
  RowVec var;
  int dur_min = 3;  // frames
  int dur_max = 7;
};

struct PhoneInventory {
  std::vector<PhonePrototype> phones;  // phones[i] is phone id i+1
  int n_mels = 40;

  int size() const { return static_cast<int>(phones.size()); }
  const PhonePrototype& at(int phone_id) const;
  static PhoneInventory make(int n_phones, int n_mels, int dur_min, int dur_max,
                             uint64_t seed);
};

struct SynthCorpusSpec {
  int n_phones = 53;
  int n_train = 500;
  int n_val = 50;
  std::vector<int> trigger;  // empty: generated, length trigger_len
  int trigger_len = 8;
  int confusability = 2;  // substitutions in hard negatives
  int n_positives = 400;
  int n_hard_negatives = 400;
  double negative_hours = 0.5;
  double noise_level = 0.35;
  // Per-utterance log-spectral tilt (one offset vector per utterance or
  // background stream), the mel-domain analogue of room/channel effects.
  double channel_noise = 0.0;
  int utt_phones_min = 5;
  int utt_phones_max = 20;
  int dur_min = 3;
  int dur_max = 7;
  double segment_seconds = 1.8;
  uint64_t seed = 1;

  void validate() const;
};

SynthCorpusSpec corpus_spec_from_json_file(const std::string& path);
void write_corpus_spec(const SynthCorpusSpec& spec, const std::string& path);

enum class SegmentKind { am_train, positive, hard_negative, background };
enum class Split { train, val, eval };

std::string kind_name(SegmentKind k);
std::string split_name(Split s);

struct Utterance {
  std::string id;
  SegmentKind kind = SegmentKind::am_train;
  Split split = Split::train;
  std::vector<int> phones;  // empty for background
  Matrix mel;

  double duration_sec(double frame_rate = 100.0) const { return mel.rows() / frame_rate; }
};

struct Corpus {
  SynthCorpusSpec spec;
  PhoneInventory inventory;
  std::vector<Utterance> utts;
};

// Frames for a phone sequence: per-phone durations are dur_min plus a
// truncated geometric tail, frames are independent Gaussian draws around the
// phone prototype scaled by noise_level.
Matrix render_segment(const std::vector<int>& phones, const PhoneInventory& inv,
                      double noise_level, Rng& rng);

// Sine-mixture waveform for a phone sequence; exists to drive the audio
// frontend end to end, not to match the mel prototypes.
AudioBuffer render_waveform(const std::vector<int>& phones, const PhoneInventory& inv,
                            int sample_rate, Rng& rng);

// Deterministic synthetic corpus: AM utterances with phone labels, positive
// trigger segments, near-trigger hard negatives, and background streams cut
// into fixed-length segments. Utterance i derives its RNG from (seed, i), so
// output is independent of generation order.
Corpus gen_corpus(const SynthCorpusSpec& spec);

// Corpus directory layout: corpus_spec.json, manifest.jsonl and one "VTFE"
// feature file per utterance under features/.
void write_corpus(const Corpus& corpus, const std::string& dir);
Corpus load_corpus(const std::string& dir);

// Training-view of the corpus (AM train/val plus the discriminative splits).
TrainData corpus_train_data(const Corpus& corpus);

// Monte-Carlo frame error of the Bayes-optimal memoryless frame classifier
// (nearest prototype under the shared diagonal covariance) at the given
// noise level; channel_noise adds the per-utterance offset a context-free
// classifier cannot correct.
double measure_frame_error(const PhoneInventory& inv, double noise_level, int samples,
                           uint64_t seed, double channel_noise = 0.0);

}  // namespace vt
