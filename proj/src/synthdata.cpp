// Copyright 2026 The vtrescore Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#include "vt/synthdata.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace vt {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

int sample_duration(const PhonePrototype& proto, Rng& rng) {
  int d = proto.dur_min;
  while (d < proto.dur_max && rng.uniform01() < 0.35) ++d;
  return d;
}

int random_phone(int n_phones, int avoid, Rng& rng) {
  int p = rng.uniform_int(1, n_phones);
  while (n_phones > 1 && p == avoid) p = rng.uniform_int(1, n_phones);
  return p;
}

bool contains_subsequence(const std::vector<int>& haystack, const std::vector<int>& needle) {
  if (needle.empty() || haystack.size() < needle.size()) return false;
  for (size_t i = 0; i + needle.size() <= haystack.size(); ++i) {
    if (std::equal(needle.begin(), needle.end(), haystack.begin() + i)) return true;
  }
  return false;
}

// Random phone sequence without adjacent repeats and without the trigger as
// a contiguous subsequence.
std::vector<int> random_sequence(int len, int n_phones, const std::vector<int>& trigger,
                                 Rng& rng) {
  std::vector<int> seq;
  for (int attempt = 0; attempt < 64; ++attempt) {
    seq.clear();
    for (int i = 0; i < len; ++i)
      seq.push_back(random_phone(n_phones, seq.empty() ? 0 : seq.back(), rng));
    if (!contains_subsequence(seq, trigger)) return seq;
  }
  throw DataError("synthdata: could not draw a non-trigger sequence (inventory too small?)");
}

std::vector<int> mutate_trigger(const std::vector<int>& trigger, int substitutions,
                                int n_phones, Rng& rng) {
  std::vector<int> out = trigger;
  const int n = static_cast<int>(out.size());
  std::vector<int> positions(n);
  for (int i = 0; i < n; ++i) positions[i] = i;
  rng.shuffle(positions);
  const int subs = std::min(substitutions, n);
  for (int s = 0; s < subs; ++s) {
    const int pos = positions[s];
    for (int attempt = 0; attempt < 64; ++attempt) {
      const int candidate = random_phone(n_phones, out[pos], rng);
      const bool repeat_left = pos > 0 && out[pos - 1] == candidate;
      const bool repeat_right = pos + 1 < n && out[pos + 1] == candidate;
      if (!repeat_left && !repeat_right) {
        out[pos] = candidate;
        break;
      }
    }
  }
  return out;
}

}  // namespace

const PhonePrototype& PhoneInventory::at(int phone_id) const {
  if (phone_id < 1 || phone_id > size())
    throw DataError("inventory: unknown phone id " + std::to_string(phone_id));
  return phones[static_cast<size_t>(phone_id - 1)];
}

PhoneInventory PhoneInventory::make(int n_phones, int n_mels, int dur_min, int dur_max,
                                    uint64_t seed) {
  if (n_phones < 1 || n_phones > 53)
    throw DataError("inventory: n_phones must be in 1..53");
  if (dur_min < 1 || dur_max < dur_min) throw DataError("inventory: bad duration range");
  PhoneInventory inv;
  inv.n_mels = n_mels;
  Rng rng(mix64(seed ^ 0x70686f6eULL));
  inv.phones.resize(static_cast<size_t>(n_phones));
  for (auto& p : inv.phones) {
    p.mean.resize(n_mels);
    for (int d = 0; d < n_mels; ++d) p.mean(d) = rng.normal();
    p.var = RowVec::Ones(n_mels);
    p.dur_min = dur_min;
    p.dur_max = dur_max;
  }
  return inv;
}

void SynthCorpusSpec::validate() const {
  if (n_phones < 2) throw DataError("corpus spec: need at least 2 phones");
  if (n_train < 1 || n_val < 1) throw DataError("corpus spec: need train and val utterances");
  if (negative_hours <= 0) throw DataError("corpus spec: negative_hours must be positive");
  if (noise_level < 0) throw DataError("corpus spec: noise_level must be >= 0");
  if (trigger_len < 2 && trigger.empty()) throw DataError("corpus spec: trigger too short");
  if (utt_phones_min < 1 || utt_phones_max < utt_phones_min)
    throw DataError("corpus spec: bad utterance length range");
  for (int p : trigger) {
    if (p < 1 || p > n_phones)
      throw DataError("corpus spec: trigger phone " + std::to_string(p) +
                      " outside inventory 1.." + std::to_string(n_phones));
  }
}

SynthCorpusSpec corpus_spec_from_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open corpus spec: " + path);
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw DataError("corpus spec is not valid JSON: " + std::string(e.what()));
  }
  SynthCorpusSpec s;
  s.n_phones = j.value("n_phones", s.n_phones);
  s.n_train = j.value("n_train", s.n_train);
  s.n_val = j.value("n_val", s.n_val);
  s.trigger = j.value("trigger", s.trigger);
  s.trigger_len = j.value("trigger_len", s.trigger_len);
  s.confusability = j.value("confusability", s.confusability);
  s.n_positives = j.value("n_positives", s.n_positives);
  s.n_hard_negatives = j.value("n_hard_negatives", s.n_hard_negatives);
  s.negative_hours = j.value("negative_hours", s.negative_hours);
  s.noise_level = j.value("noise_level", s.noise_level);
  s.channel_noise = j.value("channel_noise", s.channel_noise);
  s.utt_phones_min = j.value("utt_phones_min", s.utt_phones_min);
  s.utt_phones_max = j.value("utt_phones_max", s.utt_phones_max);
  s.dur_min = j.value("dur_min", s.dur_min);
  s.dur_max = j.value("dur_max", s.dur_max);
  s.segment_seconds = j.value("segment_seconds", s.segment_seconds);
  s.seed = j.value("seed", s.seed);
  s.validate();
  return s;
}

void write_corpus_spec(const SynthCorpusSpec& s, const std::string& path) {
  json j;
  j["n_phones"] = s.n_phones;
  j["n_train"] = s.n_train;
  j["n_val"] = s.n_val;
  j["trigger"] = s.trigger;
  j["trigger_len"] = s.trigger_len;
  j["confusability"] = s.confusability;
  j["n_positives"] = s.n_positives;
  j["n_hard_negatives"] = s.n_hard_negatives;
  j["negative_hours"] = s.negative_hours;
  j["noise_level"] = s.noise_level;
  j["channel_noise"] = s.channel_noise;
  j["utt_phones_min"] = s.utt_phones_min;
  j["utt_phones_max"] = s.utt_phones_max;
  j["dur_min"] = s.dur_min;
  j["dur_max"] = s.dur_max;
  j["segment_seconds"] = s.segment_seconds;
  j["seed"] = s.seed;
  std::ofstream f(path);
  if (!f) throw DataError("cannot write corpus spec: " + path);
  f << j.dump(2) << "\n";
}

std::string kind_name(SegmentKind k) {
  switch (k) {
    case SegmentKind::am_train: return "am_train";
    case SegmentKind::positive: return "positive";
    case SegmentKind::hard_negative: return "hard_negative";
    case SegmentKind::background: return "background";
  }
  throw DataError("unknown segment kind");
}

std::string split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::eval: return "eval";
  }
  throw DataError("unknown split");
}

namespace {

SegmentKind kind_from_name(const std::string& s) {
  if (s == "am_train") return SegmentKind::am_train;
  if (s == "positive") return SegmentKind::positive;
  if (s == "hard_negative") return SegmentKind::hard_negative;
  if (s == "background") return SegmentKind::background;
  throw DataError("manifest: unknown kind '" + s + "'");
}

Split split_from_name(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "eval") return Split::eval;
  throw DataError("manifest: unknown split '" + s + "'");
}

}  // namespace

Matrix render_segment(const std::vector<int>& phones, const PhoneInventory& inv,
                      double noise_level, Rng& rng) {
  if (phones.empty()) throw DataError("render_segment: empty phone sequence");
  std::vector<int> durations;
  int total = 0;
  for (int p : phones) {
    const int d = sample_duration(inv.at(p), rng);
    durations.push_back(d);
    total += d;
  }
  Matrix mel(total, inv.n_mels);
  int row = 0;
  for (size_t i = 0; i < phones.size(); ++i) {
    const auto& proto = inv.at(phones[i]);
    for (int f = 0; f < durations[i]; ++f, ++row) {
      for (int d = 0; d < inv.n_mels; ++d)
        mel(row, d) = proto.mean(d) + noise_level * std::sqrt(proto.var(d)) * rng.normal();
    }
  }
  return mel;
}

AudioBuffer render_waveform(const std::vector<int>& phones, const PhoneInventory& inv,
                            int sample_rate, Rng& rng) {
  if (phones.empty()) throw DataError("render_waveform: empty phone sequence");
  AudioBuffer out;
  out.sample_rate = sample_rate;
  const int hop = sample_rate / 100;
  size_t at = 0;
  for (int p : phones) {
    inv.at(p);  // validates the id
    const int frames = sample_duration(inv.at(p), rng);
    const int n = frames * hop;
    out.samples.resize(at + n);
    // Three harmonically unrelated tones per phone.
    double freqs[3];
    for (int k = 0; k < 3; ++k) freqs[k] = 180.0 + 97.0 * ((p * 5 + k * 11) % 31);
    for (int i = 0; i < n; ++i, ++at) {
      const double t = static_cast<double>(at) / sample_rate;
      double v = 0.0;
      for (double f : freqs) v += 0.22 * std::sin(2.0 * M_PI * f * t);
      out.samples[at] = v;
    }
  }
  return out;
}

Corpus gen_corpus(const SynthCorpusSpec& spec_in) {
  SynthCorpusSpec spec = spec_in;
  spec.validate();
  Corpus corpus;
  corpus.inventory =
      PhoneInventory::make(spec.n_phones, 40, spec.dur_min, spec.dur_max, spec.seed);
  Rng top(mix64(spec.seed ^ 0x636f7270ULL));

  if (spec.trigger.empty()) {
    std::vector<int> trig;
    for (int i = 0; i < spec.trigger_len; ++i)
      trig.push_back(random_phone(spec.n_phones, trig.empty() ? 0 : trig.back(), top));
    spec.trigger = trig;
  }
  corpus.spec = spec;

  uint64_t utt_index = 0;
  auto utt_rng = [&](const char* tag) {
    return top.fork(mix64(utt_index++ ^ mix64(static_cast<uint64_t>(tag[0]))));
  };

  auto channel_offset = [&](Rng& rng) {
    RowVec offset = RowVec::Zero(corpus.inventory.n_mels);
    if (spec.channel_noise > 0.0)
      for (int d = 0; d < corpus.inventory.n_mels; ++d)
        offset(d) = spec.channel_noise * rng.normal();
    return offset;
  };

  auto add = [&](SegmentKind kind, Split split, std::vector<int> phones, Matrix mel) {
    Utterance u;
    u.id = kind_name(kind) + "_" + std::to_string(corpus.utts.size());
    u.kind = kind;
    u.split = split;
    u.phones = std::move(phones);
    u.mel = std::move(mel);
    corpus.utts.push_back(std::move(u));
  };

  // AM utterances with phone transcripts; the trigger phrase never occurs.
  for (int i = 0; i < spec.n_train + spec.n_val; ++i) {
    Rng rng = utt_rng("a");
    const int len = rng.uniform_int(spec.utt_phones_min, spec.utt_phones_max);
    auto phones = random_sequence(len, spec.n_phones, spec.trigger, rng);
    Matrix mel = render_segment(phones, corpus.inventory, spec.noise_level, rng);
    mel.rowwise() += channel_offset(rng);
    add(SegmentKind::am_train, i < spec.n_train ? Split::train : Split::val,
        std::move(phones), std::move(mel));
  }

  // Most trigger/near-trigger segments are held out for evaluation; the
  // discriminative training slice stays small relative to the AM set.
  auto disc_split = [&](int i, int total) {
    const int n_tr = static_cast<int>(0.25 * total);
    const int n_val = static_cast<int>(0.05 * total);
    if (i < n_tr) return Split::train;
    if (i < n_tr + n_val) return Split::val;
    return Split::eval;
  };

  for (int i = 0; i < spec.n_positives; ++i) {
    Rng rng = utt_rng("p");
    Matrix mel = render_segment(spec.trigger, corpus.inventory, spec.noise_level, rng);
    mel.rowwise() += channel_offset(rng);
    add(SegmentKind::positive, disc_split(i, spec.n_positives), spec.trigger, std::move(mel));
  }

  for (int i = 0; i < spec.n_hard_negatives; ++i) {
    Rng rng = utt_rng("n");
    auto phones = mutate_trigger(spec.trigger, spec.confusability, spec.n_phones, rng);
    Matrix mel = render_segment(phones, corpus.inventory, spec.noise_level, rng);
    mel.rowwise() += channel_offset(rng);
    add(SegmentKind::hard_negative, disc_split(i, spec.n_hard_negatives), std::move(phones),
        std::move(mel));
  }

  // Background: long non-trigger streams cut into fixed-length segments.
  const int frames_per_segment = static_cast<int>(std::lround(spec.segment_seconds * 100.0));
  const int n_segments =
      static_cast<int>(std::lround(spec.negative_hours * 3600.0 / spec.segment_seconds));
  constexpr int kSegmentsPerStream = 10;
  int made = 0;
  while (made < n_segments) {
    Rng rng = utt_rng("b");
    const RowVec stream_channel = channel_offset(rng);
    const int want = std::min(kSegmentsPerStream, n_segments - made);
    const int need_frames = want * frames_per_segment;
    std::vector<int> stream_phones;
    int have = 0;
    Matrix stream(need_frames + spec.dur_max * 2, corpus.inventory.n_mels);
    while (have < need_frames) {
      const int len = rng.uniform_int(spec.utt_phones_min, spec.utt_phones_max);
      const auto phones = random_sequence(len, spec.n_phones, spec.trigger, rng);
      const Matrix part = render_segment(phones, corpus.inventory, spec.noise_level, rng);
      const int take = std::min<int>(static_cast<int>(part.rows()),
                                     static_cast<int>(stream.rows()) - have);
      stream.middleRows(have, take) = part.topRows(take);
      have += take;
    }
    for (int s = 0; s < want; ++s, ++made) {
      Matrix segment = stream.middleRows(s * frames_per_segment, frames_per_segment);
      segment.rowwise() += stream_channel;
      add(SegmentKind::background, Split::eval, {}, std::move(segment));
    }
  }
  return corpus;
}

void write_corpus(const Corpus& corpus, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "features");
  write_corpus_spec(corpus.spec, (fs::path(dir) / "corpus_spec.json").string());
  std::ofstream manifest((fs::path(dir) / "manifest.jsonl").string());
  if (!manifest) throw DataError("cannot write manifest in " + dir);
  for (const auto& u : corpus.utts) {
    const std::string rel = "features/" + u.id + ".vtfe";
    write_features((fs::path(dir) / rel).string(),
                   FeatureSequence{u.mel, 100.0, FeatureStage::mel});
    json line;
    line["id"] = u.id;
    line["kind"] = kind_name(u.kind);
    line["split"] = split_name(u.split);
    if (!u.phones.empty()) line["phones"] = u.phones;
    line["feature_file"] = rel;
    line["n_frames"] = u.mel.rows();
    manifest << line.dump() << "\n";
  }
}

Corpus load_corpus(const std::string& dir) {
  Corpus corpus;
  corpus.spec = corpus_spec_from_json_file((fs::path(dir) / "corpus_spec.json").string());
  corpus.inventory = PhoneInventory::make(corpus.spec.n_phones, 40, corpus.spec.dur_min,
                                          corpus.spec.dur_max, corpus.spec.seed);
  std::ifstream manifest((fs::path(dir) / "manifest.jsonl").string());
  if (!manifest) throw DataError("cannot open manifest in " + dir);
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("corrupt manifest line: " + std::string(e.what()));
    }
    Utterance u;
    u.id = j.at("id");
    u.kind = kind_from_name(j.at("kind"));
    u.split = split_from_name(j.at("split"));
    if (j.contains("phones")) u.phones = j.at("phones").get<std::vector<int>>();
    const std::string rel = j.at("feature_file");
    u.mel = read_features((fs::path(dir) / rel).string()).frames;
    if (u.mel.rows() != j.at("n_frames").get<int>())
      throw DataError("manifest frame count mismatch for " + u.id);
    corpus.utts.push_back(std::move(u));
  }
  if (corpus.utts.empty()) throw DataError("empty corpus in " + dir);
  return corpus;
}

TrainData corpus_train_data(const Corpus& corpus) {
  TrainData data;
  for (const auto& u : corpus.utts) {
    MelExample ex;
    ex.mel = u.mel;
    switch (u.kind) {
      case SegmentKind::am_train:
        ex.phones = u.phones;
        ex.is_am = true;
        (u.split == Split::train ? data.am_train : data.am_val).push_back(std::move(ex));
        break;
      case SegmentKind::positive:
      case SegmentKind::hard_negative:
        if (u.split == Split::eval) break;
        ex.is_am = false;
        ex.target = u.kind == SegmentKind::positive ? 1 : 0;
        (u.split == Split::train ? data.disc_train : data.disc_val).push_back(std::move(ex));
        break;
      case SegmentKind::background:
        break;  // evaluation only
    }
  }
  return data;
}

double measure_frame_error(const PhoneInventory& inv, double noise_level, int samples,
                           uint64_t seed, double channel_noise) {
  Rng rng(mix64(seed ^ 0x62617965ULL));
  int errors = 0;
  for (int i = 0; i < samples; ++i) {
    const int phone = rng.uniform_int(1, inv.size());
    const auto& proto = inv.at(phone);
    RowVec frame(inv.n_mels);
    for (int d = 0; d < inv.n_mels; ++d)
      frame(d) = proto.mean(d) + noise_level * std::sqrt(proto.var(d)) * rng.normal() +
                 channel_noise * rng.normal();
    int best = -1;
    double best_dist = std::numeric_limits<double>::infinity();
    for (int p = 1; p <= inv.size(); ++p) {
      const double dist = (frame - inv.at(p).mean).squaredNorm();
      if (dist < best_dist) {
        best_dist = dist;
        best = p;
      }
    }
    if (best != phone) ++errors;
  }
  return static_cast<double>(errors) / samples;
}

}  // namespace vt
