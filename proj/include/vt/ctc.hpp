// Copyright 2026 The vtrescore Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <vector>

#include "vt/common.hpp"

namespace vt {

// The blank symbol is output index 0; label symbols are 1..A-1.
inline constexpr int kCtcBlank = 0;

class CtcInfeasibleError : public DataError {
 public:
  using DataError::DataError;
};

struct CtcResult {
  double loss = 0.0;  // -log P(labels | posteriors)
  // d loss / d log_posteriors, shape T x A. Per frame this equals minus the
  // symbol occupancy gamma(t, a), so each row sums to -1.
  Matrix grad;
};

// Minimum frame count for a feasible alignment: L plus the number of
// adjacent repeated labels (each repeat needs a separating blank).
int ctc_min_frames(const std::vector<int>& labels);

// Forward-backward over the blank-augmented label sequence (2L+1 states),
// entirely in log space. log_posteriors is T x A with rows of per-frame
// log-probabilities; labels take values in 1..A-1.
// Throws CtcInfeasibleError when T < ctc_min_frames(labels).
CtcResult ctc_loss(const Matrix& log_posteriors, const std::vector<int>& labels);

// Forward pass only: log P(labels | posteriors). Same feasibility rules.
double ctc_log_prob(const Matrix& log_posteriors, const std::vector<int>& labels);

// Test oracle: enumerate every frame-label path, collapse it (dedupe
// adjacent repeats, then drop blanks) and sum the probability of paths that
// collapse to `labels`. Requires A^T <= 10^6. Throws CtcInfeasibleError when
// no path collapses to the labels.
double ctc_brute_force(const Matrix& log_posteriors, const std::vector<int>& labels);

}  // namespace vt
