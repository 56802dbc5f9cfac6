// Copyright 2026 The vtrescore Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <optional>
#include <vector>

#include "vt/common.hpp"
#include "vt/model.hpp"

namespace vt {

// Decoder token stream helpers for teacher forcing: inputs are [BOS,
// tokens...], targets are [tokens..., EOS].
std::vector<int> decoder_inputs(const std::vector<int>& phones, const DecoderConfig& cfg);
std::vector<int> decoder_targets(const std::vector<int>& phones, const DecoderConfig& cfg);

struct CeResult {
  double loss = 0.0;  // mean negative log-likelihood over target tokens
  Matrix dlogp;       // gradient wrt the per-step log-probabilities
};

// Cross-entropy of teacher-forced predictions against targets (EOS
// included). Prediction steps must equal the target length.
CeResult decoder_ce(const Matrix& step_logp, const std::vector<int>& targets);

struct DiscResult {
  double loss = 0.0;
  double dlogit = 0.0;  // sigmoid(logit) - y
};

// Binary cross-entropy evaluated from the pre-sigmoid logit, which stays
// finite for any finite input.
DiscResult disc_loss(double logit, int y);

struct LossBreakdown {
  double ctc = 0.0;
  std::optional<double> ce;
  std::optional<double> disc;

  double total() const;
};

// Unity-coefficient sum of the present components.
double joint_loss(const LossBreakdown& parts);

}  // namespace vt
