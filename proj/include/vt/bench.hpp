// Copyright 2026 The vtrescore Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <string>

#include "vt/model.hpp"
#include "vt/quant.hpp"

namespace vt {

struct BenchStats {
  double median_ms = 0.0;
  double p90_ms = 0.0;
  int runs = 0;
  int frames = 0;
};

struct BenchEntry {
  std::string tag;
  int64_t params = 0;
  int64_t bytes = 0;  // serialized tensor payload
  BenchStats stats;
};

struct BenchReport {
  std::vector<BenchEntry> models;
  int threads = 1;
  unsigned hardware_concurrency = 0;
  long peak_rss_kb = -1;  // best effort; -1 when unavailable
  // BiLSTM median over encoder median when both are present.
  double bilstm_over_encoder = 0.0;
};

// Median/p90 wall time of a single forward pass over a fixed random input of
// `frames` rows. The model and input are built outside the timed region;
// warm-up passes precede measurement. `threads` caps the matmul kernels.
BenchStats bench_forward(const ModelGraph& m, int frames, int runs, int threads,
                         uint64_t seed = 7);

// Default encoder vs default BiLSTM at their standing parameter budgets.
BenchReport bench_compare(int frames, int runs, int threads, uint64_t seed = 7);

void write_bench_report(const std::string& path, const BenchReport& report);

}  // namespace vt
