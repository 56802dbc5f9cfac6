// Copyright 2026 The vtrescore Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#include "vt/bench.hpp"

#include <json.hpp>
#include <sys/resource.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <thread>

namespace vt {
namespace {

Matrix bench_input(const ModelGraph& m, int frames, uint64_t seed) {
  Rng rng(mix64(seed));
  Matrix x(frames, m.input_dim());
  for (int r = 0; r < frames; ++r)
    for (int c = 0; c < m.input_dim(); ++c) x(r, c) = rng.normal();
  return x;
}

long peak_rss_kb() {
  rusage u{};
  if (getrusage(RUSAGE_SELF, &u) != 0) return -1;
  return u.ru_maxrss;  // kilobytes on Linux
}

}  // namespace

BenchStats bench_forward(const ModelGraph& m, int frames, int runs, int threads,
                         uint64_t seed) {
  if (runs < 30) throw UsageError("bench: need at least 30 runs");
  if (frames < 1) throw UsageError("bench: frames must be positive");
  Eigen::setNbThreads(std::max(1, threads));
  const Matrix x = bench_input(m, frames, seed);

  double sink = 0.0;
  for (int i = 0; i < 5; ++i) sink += am_forward(m, x).logp(0, 0);  // warm-up

  std::vector<double> times_ms(static_cast<size_t>(runs));
  using clock = std::chrono::steady_clock;
  for (int i = 0; i < runs; ++i) {
    const auto t0 = clock::now();
    const AmOut out = am_forward(m, x);
    const auto t1 = clock::now();
    sink += out.logp(0, 0);
    times_ms[static_cast<size_t>(i)] =
        std::chrono::duration<double, std::milli>(t1 - t0).count();
  }
  // The accumulated value keeps the forward passes observable.
  if (!std::isfinite(sink)) throw NumericError("bench: non-finite forward output");
  std::sort(times_ms.begin(), times_ms.end());
  BenchStats stats;
  stats.runs = runs;
  stats.frames = frames;
  stats.median_ms = times_ms[times_ms.size() / 2];
  stats.p90_ms = times_ms[static_cast<size_t>(0.9 * (times_ms.size() - 1))];
  Eigen::setNbThreads(0);
  return stats;
}

BenchReport bench_compare(int frames, int runs, int threads, uint64_t seed) {
  BenchReport report;
  report.threads = threads;
  report.hardware_concurrency = std::thread::hardware_concurrency();

  const ModelGraph encoder = build_default_model(Arch::sa_encoder, false, seed);
  const ModelGraph lstm = build_default_model(Arch::bilstm, false, seed + 1);

  BenchEntry e;
  e.tag = arch_name(encoder.arch);
  e.params = count_params(encoder);
  e.bytes = model_bytes(encoder);
  e.stats = bench_forward(encoder, frames, runs, threads, seed);
  report.models.push_back(e);

  BenchEntry b;
  b.tag = arch_name(lstm.arch);
  b.params = count_params(lstm);
  b.bytes = model_bytes(lstm);
  b.stats = bench_forward(lstm, frames, runs, threads, seed);
  report.models.push_back(b);

  report.bilstm_over_encoder = b.stats.median_ms / e.stats.median_ms;
  report.peak_rss_kb = peak_rss_kb();
  return report;
}

void write_bench_report(const std::string& path, const BenchReport& report) {
  nlohmann::json j;
  j["threads"] = report.threads;
  j["hardware_concurrency"] = report.hardware_concurrency;
  if (report.peak_rss_kb >= 0) j["peak_rss_kb"] = report.peak_rss_kb;
  if (report.bilstm_over_encoder > 0.0) j["bilstm_over_encoder"] = report.bilstm_over_encoder;
  j["models"] = nlohmann::json::array();
  for (const auto& m : report.models) {
    j["models"].push_back({{"tag", m.tag},
                           {"params", m.params},
                           {"payload_bytes", m.bytes},
                           {"frames", m.stats.frames},
                           {"runs", m.stats.runs},
                           {"median_ms", m.stats.median_ms},
                           {"p90_ms", m.stats.p90_ms}});
  }
  std::ofstream f(path);
  if (!f) throw DataError("cannot write bench report: " + path);
  f << j.dump(2) << "\n";
}

}  // namespace vt
