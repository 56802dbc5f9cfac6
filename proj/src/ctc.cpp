// Copyright 2026 The vtrescore Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#include "vt/ctc.hpp"

#include <cmath>

namespace vt {
namespace {

void validate_labels(const std::vector<int>& labels, int alphabet) {
  if (labels.empty()) throw DataError("ctc: empty label sequence");
  for (int l : labels) {
    if (l <= kCtcBlank || l >= alphabet)
      throw DataError("ctc: label " + std::to_string(l) + " outside 1.." +
                      std::to_string(alphabet - 1));
  }
}

// Augmented state s in [0, 2L]: even states are blanks, odd state s is
// labels[s/2].
inline int state_symbol(const std::vector<int>& labels, int s) {
  return (s % 2 == 0) ? kCtcBlank : labels[s / 2];
}

struct ForwardBackward {
  Matrix alpha;  // T x S, emission at t included
  Matrix beta;   // T x S, emission at t included
  double log_prob;
};

ForwardBackward run_forward_backward(const Matrix& logp, const std::vector<int>& labels) {
  const int T = static_cast<int>(logp.rows());
  const int S = 2 * static_cast<int>(labels.size()) + 1;

  Matrix alpha = Matrix::Constant(T, S, kNegInf);
  alpha(0, 0) = logp(0, kCtcBlank);
  alpha(0, 1) = logp(0, state_symbol(labels, 1));
  for (int t = 1; t < T; ++t) {
    for (int s = 0; s < S; ++s) {
      double acc = alpha(t - 1, s);
      if (s >= 1) acc = log_sum_exp(acc, alpha(t - 1, s - 1));
      // Skip transition: only between distinct label states.
      if (s >= 2 && s % 2 == 1 && labels[s / 2] != labels[s / 2 - 1])
        acc = log_sum_exp(acc, alpha(t - 1, s - 2));
      alpha(t, s) = acc + logp(t, state_symbol(labels, s));
    }
  }
  const double log_prob = log_sum_exp(alpha(T - 1, S - 1), alpha(T - 1, S - 2));

  Matrix beta = Matrix::Constant(T, S, kNegInf);
  beta(T - 1, S - 1) = logp(T - 1, kCtcBlank);
  beta(T - 1, S - 2) = logp(T - 1, state_symbol(labels, S - 2));
  for (int t = T - 2; t >= 0; --t) {
    for (int s = S - 1; s >= 0; --s) {
      double acc = beta(t + 1, s);
      if (s + 1 < S) acc = log_sum_exp(acc, beta(t + 1, s + 1));
      if (s + 2 < S && s % 2 == 1 && labels[s / 2] != labels[s / 2 + 1])
        acc = log_sum_exp(acc, beta(t + 1, s + 2));
      beta(t, s) = acc + logp(t, state_symbol(labels, s));
    }
  }
  return {std::move(alpha), std::move(beta), log_prob};
}

void check_feasible(int T, const std::vector<int>& labels) {
  const int need = ctc_min_frames(labels);
  if (T < need)
    throw CtcInfeasibleError("ctc: " + std::to_string(T) + " frames cannot align " +
                             std::to_string(labels.size()) + " labels (need >= " +
                             std::to_string(need) + ")");
}

}  // namespace

int ctc_min_frames(const std::vector<int>& labels) {
  int repeats = 0;
  for (size_t i = 1; i < labels.size(); ++i)
    if (labels[i] == labels[i - 1]) ++repeats;
  return static_cast<int>(labels.size()) + repeats;
}

CtcResult ctc_loss(const Matrix& logp, const std::vector<int>& labels) {
  const int T = static_cast<int>(logp.rows());
  const int A = static_cast<int>(logp.cols());
  validate_labels(labels, A);
  if (T < 1) throw DataError("ctc: empty posterior sequence");
  check_feasible(T, labels);

  const auto fb = run_forward_backward(logp, labels);
  if (!std::isfinite(fb.log_prob))
    throw NumericError("ctc: zero total path probability (non-finite posteriors?)");

  const int S = 2 * static_cast<int>(labels.size()) + 1;
  // grad wrt log-posteriors: -gamma(t, a), where gamma aggregates
  // alpha*beta over states emitting a (one emission factor removed since
  // alpha and beta both include it).
  Matrix grad = Matrix::Zero(T, A);
  for (int t = 0; t < T; ++t) {
    std::vector<double> log_q(A, kNegInf);
    for (int s = 0; s < S; ++s) {
      const int a = state_symbol(labels, s);
      const double v = fb.alpha(t, s) + fb.beta(t, s) - logp(t, a);
      log_q[a] = log_sum_exp(log_q[a], v);
    }
    for (int a = 0; a < A; ++a) {
      if (log_q[a] != kNegInf) grad(t, a) = -std::exp(log_q[a] - fb.log_prob);
    }
  }
  return {-fb.log_prob, std::move(grad)};
}

double ctc_log_prob(const Matrix& logp, const std::vector<int>& labels) {
  const int T = static_cast<int>(logp.rows());
  validate_labels(labels, static_cast<int>(logp.cols()));
  if (T < 1) throw DataError("ctc: empty posterior sequence");
  check_feasible(T, labels);

  const int S = 2 * static_cast<int>(labels.size()) + 1;
  std::vector<double> prev(S, kNegInf), cur(S, kNegInf);
  prev[0] = logp(0, kCtcBlank);
  prev[1] = logp(0, state_symbol(labels, 1));
  for (int t = 1; t < T; ++t) {
    for (int s = 0; s < S; ++s) {
      double acc = prev[s];
      if (s >= 1) acc = log_sum_exp(acc, prev[s - 1]);
      if (s >= 2 && s % 2 == 1 && labels[s / 2] != labels[s / 2 - 1])
        acc = log_sum_exp(acc, prev[s - 2]);
      cur[s] = acc + logp(t, state_symbol(labels, s));
    }
    std::swap(prev, cur);
  }
  return log_sum_exp(prev[S - 1], prev[S - 2]);
}

double ctc_brute_force(const Matrix& logp, const std::vector<int>& labels) {
  const int T = static_cast<int>(logp.rows());
  const int A = static_cast<int>(logp.cols());
  validate_labels(labels, A);
  double paths = std::pow(static_cast<double>(A), T);
  if (paths > 1e6) throw DataError("ctc_brute_force: A^T exceeds 10^6");

  std::vector<int> path(T, 0);
  std::vector<int> collapsed;
  double log_total = kNegInf;
  bool any = false;
  while (true) {
    // Collapse: drop adjacent repeats, then blanks.
    collapsed.clear();
    int prev = -1;
    for (int t = 0; t < T; ++t) {
      if (path[t] != prev && path[t] != kCtcBlank) collapsed.push_back(path[t]);
      prev = path[t];
    }
    if (collapsed == labels) {
      double lp = 0.0;
      for (int t = 0; t < T; ++t) lp += logp(t, path[t]);
      log_total = log_sum_exp(log_total, lp);
      any = true;
    }
    // Odometer increment.
    int pos = T - 1;
    while (pos >= 0 && path[pos] == A - 1) path[pos--] = 0;
    if (pos < 0) break;
    ++path[pos];
  }
  if (!any)
    throw CtcInfeasibleError("ctc_brute_force: no path collapses to the label sequence");
  return -log_total;
}

}  // namespace vt
