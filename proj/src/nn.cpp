// Copyright 2026 The vtrescore Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#include "vt/nn.hpp"

#include <cmath>

namespace vt {
namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw DataError(msg);
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

// --------------------------------- Linear ---------------------------------

LinearParams LinearParams::init(int in, int out, Rng& rng) {
  LinearParams p;
  p.w.resize(in, out);
  const double scale = 1.0 / std::sqrt(static_cast<double>(in));
  for (int r = 0; r < in; ++r)
    for (int c = 0; c < out; ++c) p.w(r, c) = scale * rng.normal();
  p.b = Matrix::Zero(1, out);
  return p;
}

LinearParams LinearParams::zeros(int in, int out) {
  return {Matrix::Zero(in, out), Matrix::Zero(1, out)};
}

Matrix linear_forward(const Matrix& x, const LinearParams& p, LinearCache* cache) {
  require(x.cols() == p.w.rows(), "linear: input width " + std::to_string(x.cols()) +
                                      " != " + std::to_string(p.w.rows()));
  if (cache) cache->x = x;
  Matrix y = x * p.w;
  y.rowwise() += p.b.row(0);
  return y;
}

Matrix linear_backward(const Matrix& dy, const LinearParams& p, const LinearCache& cache,
                       LinearParams& grad) {
  grad.w.noalias() += cache.x.transpose() * dy;
  grad.b.row(0) += dy.colwise().sum();
  return dy * p.w.transpose();
}

// ------------------------------- Layer norm -------------------------------

LayerNormParams LayerNormParams::init(int dim) {
  return {Matrix::Ones(1, dim), Matrix::Zero(1, dim), 1e-5};
}

LayerNormParams LayerNormParams::zeros(int dim) {
  return {Matrix::Zero(1, dim), Matrix::Zero(1, dim), 1e-5};
}

Matrix layer_norm_forward(const Matrix& x, const LayerNormParams& p, LayerNormCache* cache) {
  require(x.cols() == p.gain.cols(), "layer_norm: width mismatch");
  const int rows = static_cast<int>(x.rows());
  const int dim = static_cast<int>(x.cols());
  Matrix x_hat(rows, dim);
  Eigen::VectorXd inv_std(rows);
  for (int r = 0; r < rows; ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().sum() / dim;
    const double is = 1.0 / std::sqrt(var + p.epsilon);
    inv_std(r) = is;
    x_hat.row(r) = (x.row(r).array() - mean) * is;
  }
  Matrix y = x_hat.array().rowwise() * p.gain.row(0).array();
  y.rowwise() += p.shift.row(0);
  if (cache) {
    cache->x_hat = std::move(x_hat);
    cache->inv_std = std::move(inv_std);
    return y;
  }
  return y;
}

Matrix layer_norm_backward(const Matrix& dy, const LayerNormParams& p,
                           const LayerNormCache& cache, LayerNormParams& grad) {
  const int rows = static_cast<int>(dy.rows());
  const int dim = static_cast<int>(dy.cols());
  grad.gain.row(0) += (dy.array() * cache.x_hat.array()).colwise().sum().matrix();
  grad.shift.row(0) += dy.colwise().sum();

  Matrix dx(rows, dim);
  for (int r = 0; r < rows; ++r) {
    const auto dxhat = (dy.row(r).array() * p.gain.row(0).array()).matrix();
    const double sum_dxhat = dxhat.sum();
    const double sum_dxhat_xhat = (dxhat.array() * cache.x_hat.row(r).array()).sum();
    dx.row(r) = (cache.inv_std(r) / dim) *
                (dim * dxhat.array() - sum_dxhat - cache.x_hat.row(r).array() * sum_dxhat_xhat);
  }
  return dx;
}

// -------------------------------- Softmax ---------------------------------

Matrix softmax_rows(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (int r = 0; r < x.rows(); ++r) {
    double mx = kNegInf;
    for (int c = 0; c < x.cols(); ++c) mx = std::max(mx, x(r, c));
    double z = 0.0;
    for (int c = 0; c < x.cols(); ++c) {
      const double e = x(r, c) == kNegInf ? 0.0 : std::exp(x(r, c) - mx);
      out(r, c) = e;
      z += e;
    }
    out.row(r) /= z;
  }
  return out;
}

Matrix log_softmax_rows(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (int r = 0; r < x.rows(); ++r) {
    const double mx = x.row(r).maxCoeff();
    double z = 0.0;
    for (int c = 0; c < x.cols(); ++c) z += std::exp(x(r, c) - mx);
    const double log_z = mx + std::log(z);
    out.row(r) = x.row(r).array() - log_z;
  }
  return out;
}

Matrix log_softmax_backward(const Matrix& dlogp, const Matrix& logp) {
  Matrix dx = dlogp;
  for (int r = 0; r < dx.rows(); ++r) {
    const double total = dlogp.row(r).sum();
    dx.row(r) -= (logp.row(r).array().exp() * total).matrix();
  }
  return dx;
}

Matrix softmax_backward(const Matrix& dprobs, const Matrix& probs) {
  Matrix dx(dprobs.rows(), dprobs.cols());
  for (int r = 0; r < dprobs.rows(); ++r) {
    const double dot = (dprobs.row(r).array() * probs.row(r).array()).sum();
    dx.row(r) = probs.row(r).array() * (dprobs.row(r).array() - dot);
  }
  return dx;
}

// ------------------------------- Attention --------------------------------

AttentionParams AttentionParams::init(int d_model, int n_heads, int d_head, Rng& rng) {
  AttentionParams p;
  const int width = n_heads * d_head;
  p.query = LinearParams::init(d_model, width, rng);
  p.key = LinearParams::init(d_model, width, rng);
  p.value = LinearParams::init(d_model, width, rng);
  p.out = LinearParams::init(width, d_model, rng);
  p.n_heads = n_heads;
  return p;
}

AttentionParams AttentionParams::zeros(int d_model, int n_heads, int d_head) {
  AttentionParams p;
  const int width = n_heads * d_head;
  p.query = LinearParams::zeros(d_model, width);
  p.key = LinearParams::zeros(d_model, width);
  p.value = LinearParams::zeros(d_model, width);
  p.out = LinearParams::zeros(width, d_model);
  p.n_heads = n_heads;
  return p;
}

Matrix attention_forward(const Matrix& q_in, const Matrix& kv_in, const AttentionParams& p,
                         AttnMask mask, AttentionCache* cache) {
  require(q_in.cols() == p.query.w.rows() && kv_in.cols() == p.key.w.rows(),
          "attention: input width mismatch");
  require(mask == AttnMask::none || q_in.rows() == kv_in.rows(),
          "attention: causal mask requires square attention");
  const int dh = p.d_head();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const int tq = static_cast<int>(q_in.rows());
  const int tk = static_cast<int>(kv_in.rows());

  AttentionCache local;
  AttentionCache& c = cache ? *cache : local;
  const Matrix q = linear_forward(q_in, p.query, cache ? &c.qc : nullptr);
  const Matrix k = linear_forward(kv_in, p.key, cache ? &c.kc : nullptr);
  const Matrix v = linear_forward(kv_in, p.value, cache ? &c.vc : nullptr);

  Matrix concat(tq, p.n_heads * dh);
  std::vector<Matrix> probs(p.n_heads);
  for (int h = 0; h < p.n_heads; ++h) {
    const auto qh = q.middleCols(h * dh, dh);
    const auto kh = k.middleCols(h * dh, dh);
    const auto vh = v.middleCols(h * dh, dh);
    Matrix scores = scale * (qh * kh.transpose());
    if (mask == AttnMask::causal) {
      for (int i = 0; i < tq; ++i)
        for (int j = i + 1; j < tk; ++j) scores(i, j) = kNegInf;
    }
    probs[h] = softmax_rows(scores);
    concat.middleCols(h * dh, dh).noalias() = probs[h] * vh;
  }
  Matrix y = linear_forward(concat, p.out, cache ? &c.oc : nullptr);
  if (cache) {
    c.q = q;
    c.k = k;
    c.v = v;
    c.probs = std::move(probs);
  }
  return y;
}

AttentionInputGrads attention_backward(const Matrix& dy, const AttentionParams& p,
                                       const AttentionCache& cache, AttentionParams& grad) {
  const int dh = p.d_head();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const Matrix dconcat = linear_backward(dy, p.out, cache.oc, grad.out);

  Matrix dq(cache.q.rows(), cache.q.cols());
  Matrix dk(cache.k.rows(), cache.k.cols());
  Matrix dv(cache.v.rows(), cache.v.cols());
  for (int h = 0; h < p.n_heads; ++h) {
    const auto qh = cache.q.middleCols(h * dh, dh);
    const auto kh = cache.k.middleCols(h * dh, dh);
    const auto vh = cache.v.middleCols(h * dh, dh);
    const auto dch = dconcat.middleCols(h * dh, dh);
    const Matrix& probs = cache.probs[h];

    const Matrix dprobs = dch * vh.transpose();
    dv.middleCols(h * dh, dh).noalias() = probs.transpose() * dch;
    const Matrix dscores = softmax_backward(dprobs, probs);
    dq.middleCols(h * dh, dh).noalias() = scale * (dscores * kh);
    dk.middleCols(h * dh, dh).noalias() = scale * (dscores.transpose() * qh);
  }

  AttentionInputGrads gin;
  gin.dq_in = linear_backward(dq, p.query, cache.qc, grad.query);
  gin.dkv_in = linear_backward(dk, p.key, cache.kc, grad.key);
  gin.dkv_in += linear_backward(dv, p.value, cache.vc, grad.value);
  return gin;
}

// ---------------------------------- LSTM ----------------------------------

LstmParams LstmParams::init(int in, int hidden, Rng& rng) {
  LstmParams p;
  p.hidden = hidden;
  const int rows = in + hidden;
  p.w.resize(rows, 4 * hidden);
  const double scale = 1.0 / std::sqrt(static_cast<double>(rows));
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < 4 * hidden; ++c) p.w(r, c) = scale * rng.normal();
  p.b = Matrix::Zero(1, 4 * hidden);
  // Forget-gate bias starts at 1 so early cell states persist.
  p.b.row(0).segment(hidden, hidden).setOnes();
  return p;
}

LstmParams LstmParams::zeros(int in, int hidden) {
  LstmParams p;
  p.hidden = hidden;
  p.w = Matrix::Zero(in + hidden, 4 * hidden);
  p.b = Matrix::Zero(1, 4 * hidden);
  return p;
}

Matrix lstm_forward(const Matrix& x, const LstmParams& p, bool reverse, LstmCache* cache) {
  const int in = p.in_dim();
  const int hid = p.hidden;
  require(x.cols() == in, "lstm: input width " + std::to_string(x.cols()) + " != " +
                              std::to_string(in));
  const int T = static_cast<int>(x.rows());

  // Input-side contributions for all frames in one product; the recurrent
  // half stays sequential.
  const Matrix x_pre = x * p.w.topRows(in);

  Matrix gates(T, 4 * hid), cs(T, hid), tanh_cs(T, hid), hs(T, hid);
  RowVec h_prev = RowVec::Zero(hid);
  RowVec c_prev = RowVec::Zero(hid);
  for (int step = 0; step < T; ++step) {
    const int t = reverse ? T - 1 - step : step;
    RowVec pre = x_pre.row(t) + h_prev * p.w.bottomRows(hid) + p.b.row(0);
    for (int j = 0; j < hid; ++j) {
      const double i = sigmoid(pre(j));
      const double f = sigmoid(pre(hid + j));
      const double g = std::tanh(pre(2 * hid + j));
      const double o = sigmoid(pre(3 * hid + j));
      const double cv = f * c_prev(j) + i * g;
      const double tc = std::tanh(cv);
      gates(t, j) = i;
      gates(t, hid + j) = f;
      gates(t, 2 * hid + j) = g;
      gates(t, 3 * hid + j) = o;
      cs(t, j) = cv;
      tanh_cs(t, j) = tc;
      hs(t, j) = o * tc;
    }
    c_prev = cs.row(t);
    h_prev = hs.row(t);
  }
  if (cache) {
    cache->x = x;
    cache->gates = std::move(gates);
    cache->c = cs;
    cache->tanh_c = std::move(tanh_cs);
    cache->h = hs;
    cache->reverse = reverse;
  }
  return hs;
}

Matrix lstm_backward(const Matrix& dh_out, const LstmParams& p, const LstmCache& cache,
                     LstmParams& grad) {
  const int in = p.in_dim();
  const int hid = p.hidden;
  const int T = static_cast<int>(dh_out.rows());
  const bool rev = cache.reverse;

  Matrix dx = Matrix::Zero(T, in);
  Matrix dpre_all = Matrix::Zero(T, 4 * hid);
  RowVec dh_rec = RowVec::Zero(hid);
  RowVec dc_rec = RowVec::Zero(hid);

  for (int step = T - 1; step >= 0; --step) {
    const int t = rev ? T - 1 - step : step;
    const int t_prev = rev ? t + 1 : t - 1;  // previous step in processing order
    RowVec dpre(4 * hid);
    for (int j = 0; j < hid; ++j) {
      const double i = cache.gates(t, j);
      const double f = cache.gates(t, hid + j);
      const double g = cache.gates(t, 2 * hid + j);
      const double o = cache.gates(t, 3 * hid + j);
      const double tc = cache.tanh_c(t, j);
      const double dh = dh_out(t, j) + dh_rec(j);
      const double dc = dh * o * (1.0 - tc * tc) + dc_rec(j);
      const double c_before = (step == 0) ? 0.0 : cache.c(t_prev, j);
      dpre(j) = dc * g * i * (1.0 - i);
      dpre(hid + j) = dc * c_before * f * (1.0 - f);
      dpre(2 * hid + j) = dc * i * (1.0 - g * g);
      dpre(3 * hid + j) = dh * tc * o * (1.0 - o);
      dc_rec(j) = dc * f;
    }
    dpre_all.row(t) = dpre;
    dh_rec = dpre * p.w.bottomRows(hid).transpose();
    grad.b.row(0) += dpre;
    if (step > 0) grad.w.bottomRows(hid).noalias() += cache.h.row(t_prev).transpose() * dpre;
  }
  grad.w.topRows(in).noalias() += cache.x.transpose() * dpre_all;
  dx.noalias() = dpre_all * p.w.topRows(in).transpose();
  return dx;
}

Matrix bilstm_forward(const Matrix& x, const LstmParams& fwd, const LstmParams& bwd,
                      BiLstmCache* cache) {
  const Matrix hf = lstm_forward(x, fwd, false, cache ? &cache->fwd : nullptr);
  const Matrix hb = lstm_forward(x, bwd, true, cache ? &cache->bwd : nullptr);
  Matrix out(x.rows(), hf.cols() + hb.cols());
  out.leftCols(hf.cols()) = hf;
  out.rightCols(hb.cols()) = hb;
  return out;
}

Matrix bilstm_backward(const Matrix& dy, const LstmParams& fwd, const LstmParams& bwd,
                       const BiLstmCache& cache, LstmParams& grad_fwd, LstmParams& grad_bwd) {
  const int hid = fwd.hidden;
  Matrix dx = lstm_backward(dy.leftCols(hid), fwd, cache.fwd, grad_fwd);
  dx += lstm_backward(dy.rightCols(bwd.hidden), bwd, cache.bwd, grad_bwd);
  return dx;
}

}  // namespace vt
