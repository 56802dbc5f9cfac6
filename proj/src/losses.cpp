// Copyright 2026 The vtrescore Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#include "vt/losses.hpp"

#include <cmath>

namespace vt {

std::vector<int> decoder_inputs(const std::vector<int>& phones, const DecoderConfig& cfg) {
  std::vector<int> tokens;
  tokens.reserve(phones.size() + 1);
  tokens.push_back(cfg.bos());
  for (int p : phones) tokens.push_back(cfg.phone_token(p));
  return tokens;
}

std::vector<int> decoder_targets(const std::vector<int>& phones, const DecoderConfig& cfg) {
  std::vector<int> tokens;
  tokens.reserve(phones.size() + 1);
  for (int p : phones) tokens.push_back(cfg.phone_token(p));
  tokens.push_back(cfg.eos());
  return tokens;
}

CeResult decoder_ce(const Matrix& step_logp, const std::vector<int>& targets) {
  const int steps = static_cast<int>(step_logp.rows());
  if (steps != static_cast<int>(targets.size()))
    throw DataError("decoder_ce: " + std::to_string(steps) + " prediction steps vs " +
                    std::to_string(targets.size()) + " targets");
  if (steps == 0) throw DataError("decoder_ce: empty target sequence");

  CeResult res;
  res.dlogp = Matrix::Zero(steps, step_logp.cols());
  double total = 0.0;
  for (int t = 0; t < steps; ++t) {
    const int tok = targets[t];
    if (tok < 0 || tok >= step_logp.cols()) throw DataError("decoder_ce: target out of range");
    total -= step_logp(t, tok);
    res.dlogp(t, tok) = -1.0 / steps;
  }
  res.loss = total / steps;
  return res;
}

DiscResult disc_loss(double logit, int y) {
  if (y != 0 && y != 1) throw DataError("disc_loss: label must be 0 or 1");
  DiscResult res;
  // softplus(logit) - y*logit, computed in the stable branch.
  const double sp = logit > 0 ? logit + std::log1p(std::exp(-logit))
                              : std::log1p(std::exp(logit));
  res.loss = sp - y * logit;
  res.dlogit = 1.0 / (1.0 + std::exp(-logit)) - y;
  return res;
}

double LossBreakdown::total() const {
  double t = ctc;
  if (ce) t += *ce;
  if (disc) t += *disc;
  return t;
}

double joint_loss(const LossBreakdown& parts) { return parts.total(); }

}  // namespace vt
