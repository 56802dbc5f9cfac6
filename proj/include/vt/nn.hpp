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

// Every layer here is a pure function of (input, params): forward passes fill
// an optional caller-owned cache, backward passes read it and accumulate
// parameter gradients into a mirror struct of the same type. Nothing is
// stored in the params, so concurrent forward passes over one parameter set
// are safe.

// ---------------------------------------------------------------------------
// Linear: y = x W + b
// ---------------------------------------------------------------------------

struct LinearParams {
  Matrix w;  // in x out
  Matrix b;  // 1 x out

  static LinearParams init(int in, int out, Rng& rng);
  static LinearParams zeros(int in, int out);
  int in_dim() const { return static_cast<int>(w.rows()); }
  int out_dim() const { return static_cast<int>(w.cols()); }
};

struct LinearCache {
  Matrix x;
};

Matrix linear_forward(const Matrix& x, const LinearParams& p, LinearCache* cache = nullptr);
// Returns dx and accumulates dW/db into `grad`.
Matrix linear_backward(const Matrix& dy, const LinearParams& p, const LinearCache& cache,
                       LinearParams& grad);

// ---------------------------------------------------------------------------
// Layer normalization (per row), y = gain * (x - mu) / sqrt(var + eps) + shift
// ---------------------------------------------------------------------------

struct LayerNormParams {
  Matrix gain;   // 1 x dim
  Matrix shift;  // 1 x dim
  double epsilon = 1e-5;

  static LayerNormParams init(int dim);
  static LayerNormParams zeros(int dim);
};

struct LayerNormCache {
  Matrix x_hat;             // normalized pre-gain values
  Eigen::VectorXd inv_std;  // per row
};

Matrix layer_norm_forward(const Matrix& x, const LayerNormParams& p,
                          LayerNormCache* cache = nullptr);
Matrix layer_norm_backward(const Matrix& dy, const LayerNormParams& p,
                           const LayerNormCache& cache, LayerNormParams& grad);

// ---------------------------------------------------------------------------
// Row-wise softmax / log-softmax
// ---------------------------------------------------------------------------

Matrix softmax_rows(const Matrix& x);
Matrix log_softmax_rows(const Matrix& x);
// d loss / d logits given d loss / d log-probabilities.
Matrix log_softmax_backward(const Matrix& dlogp, const Matrix& logp);
// d loss / d scores given softmax probabilities and d loss / d probabilities.
Matrix softmax_backward(const Matrix& dprobs, const Matrix& probs);

// ---------------------------------------------------------------------------
// Multi-head scaled dot-product attention
// ---------------------------------------------------------------------------

enum class AttnMask { none, causal };

struct AttentionParams {
  LinearParams query;  // d_model x (n_heads * d_head)
  LinearParams key;
  LinearParams value;
  LinearParams out;  // (n_heads * d_head) x d_model
  int n_heads = 0;

  static AttentionParams init(int d_model, int n_heads, int d_head, Rng& rng);
  static AttentionParams zeros(int d_model, int n_heads, int d_head);
  int d_head() const { return static_cast<int>(query.w.cols()) / n_heads; }
};

struct AttentionCache {
  LinearCache qc, kc, vc, oc;
  Matrix q, k, v;             // projected, heads side by side
  std::vector<Matrix> probs;  // per-head softmax weights, Tq x Tk
};

struct AttentionInputGrads {
  Matrix dq_in;
  Matrix dkv_in;
};

// Self-attention is the q_in == kv_in case; callers add the two input grads.
Matrix attention_forward(const Matrix& q_in, const Matrix& kv_in, const AttentionParams& p,
                         AttnMask mask, AttentionCache* cache = nullptr);
AttentionInputGrads attention_backward(const Matrix& dy, const AttentionParams& p,
                                       const AttentionCache& cache, AttentionParams& grad);

// ---------------------------------------------------------------------------
// LSTM (single direction) and BiLSTM layer
// ---------------------------------------------------------------------------

struct LstmParams {
  // Stacked input+recurrent weights, (in + hidden) x 4*hidden, gate order
  // [input, forget, cell, output]; b is 1 x 4*hidden.
  Matrix w;
  Matrix b;
  int hidden = 0;

  static LstmParams init(int in, int hidden, Rng& rng);
  static LstmParams zeros(int in, int hidden);
  int in_dim() const { return static_cast<int>(w.rows()) - hidden; }
};

struct LstmCache {
  Matrix x;                    // T x in
  Matrix gates;                // T x 4h, post-nonlinearity [i f g o]
  Matrix c;                    // T x h, cell states
  Matrix tanh_c;               // T x h
  Matrix h;                    // T x h, outputs in input time order
  bool reverse = false;
};

// Output row t is the hidden state at input time t; `reverse` runs the
// recurrence from the last frame to the first.
Matrix lstm_forward(const Matrix& x, const LstmParams& p, bool reverse,
                    LstmCache* cache = nullptr);
Matrix lstm_backward(const Matrix& dh_out, const LstmParams& p, const LstmCache& cache,
                     LstmParams& grad);

struct BiLstmCache {
  LstmCache fwd, bwd;
};

// Concatenates forward and reverse direction outputs per time step.
Matrix bilstm_forward(const Matrix& x, const LstmParams& fwd, const LstmParams& bwd,
                      BiLstmCache* cache = nullptr);
Matrix bilstm_backward(const Matrix& dy, const LstmParams& fwd, const LstmParams& bwd,
                       const BiLstmCache& cache, LstmParams& grad_fwd, LstmParams& grad_bwd);

// ---------------------------------------------------------------------------
// ReLU
// ---------------------------------------------------------------------------

inline Matrix relu(const Matrix& x) { return x.cwiseMax(0.0); }
inline Matrix relu_backward(const Matrix& dy, const Matrix& pre) {
  return (pre.array() > 0.0).cast<double>() * dy.array();
}

}  // namespace vt
