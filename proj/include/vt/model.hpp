// Copyright 2026 The vtrescore Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vt/frontend.hpp"
#include "vt/nn.hpp"

namespace vt {

// ---------------------------------------------------------------------------
// Configurations
// ---------------------------------------------------------------------------

struct EncoderConfig {
  int n_layers = 6;
  int d_model = 256;
  int n_heads = 4;
  int d_head = 64;
  int d_ff = 1024;
  int input_dim = 280;
  int n_outputs = 54;  // blank + phones/boundaries

  void validate() const;
};

struct DecoderConfig {
  int n_layers = 6;
  int d_model = 256;
  int n_heads = 4;
  int d_head = 64;
  int d_ff = 1024;
  int vocab = 55;  // non-blank symbols + BOS + EOS

  int bos() const { return vocab - 2; }
  int eos() const { return vocab - 1; }
  // Phone labels 1..A-1 map onto token ids 0..A-2.
  int phone_token(int phone) const { return phone - 1; }
};

struct BiLstmConfig {
  int n_layers = 4;
  int units_per_direction = 256;
  int input_dim = 280;
  int n_outputs = 54;

  int trunk_dim() const { return 2 * units_per_direction; }
  void validate() const;
};

enum class Arch { bilstm, sa_encoder, tf_encoder };

std::string arch_name(Arch arch);
Arch arch_from_name(const std::string& name);

// ---------------------------------------------------------------------------
// Parameter containers
// ---------------------------------------------------------------------------

struct FeedForwardParams {
  LinearParams w1;  // d_model x d_ff
  LinearParams w2;  // d_ff x d_model
};

struct EncoderLayerParams {
  AttentionParams attn;
  LayerNormParams ln1;
  FeedForwardParams ff;
  LayerNormParams ln2;
};

struct EncoderParams {
  LinearParams input_proj;  // input_dim -> d_model
  std::vector<EncoderLayerParams> layers;
  LinearParams output;  // d_model -> n_outputs
};

struct DecoderLayerParams {
  AttentionParams self_attn;  // causal
  LayerNormParams ln1;
  AttentionParams cross_attn;  // queries from decoder, keys/values from trunk
  LayerNormParams ln2;
  FeedForwardParams ff;
  LayerNormParams ln3;
};

struct DecoderParams {
  Matrix embedding;  // vocab x d_model
  std::vector<DecoderLayerParams> layers;
  LinearParams output;  // d_model -> vocab
};

struct BiLstmStackParams {
  std::vector<std::pair<LstmParams, LstmParams>> layers;  // forward, reverse
  LinearParams output;  // 2*units -> n_outputs
};

struct MtlHeadParams {
  LinearParams classifier;  // trunk_dim -> 1
};

struct TrainMeta {
  int epochs = 0;
  int best_epoch = -1;
  double final_train_loss = -1.0;
  double best_val_loss = -1.0;
};

// Parameter store plus wiring for one architecture. The decoder and MTL head
// exist only during training; inference exports drop them.
struct ModelGraph {
  Arch arch = Arch::sa_encoder;
  FrontendConfig frontend;
  EncoderConfig encoder_cfg;
  DecoderConfig decoder_cfg;
  BiLstmConfig bilstm_cfg;

  std::optional<EncoderParams> encoder;
  std::optional<DecoderParams> decoder;
  std::optional<BiLstmStackParams> bilstm;
  std::optional<MtlHeadParams> mtl;

  FeatureNorm feat_norm = FeatureNorm::identity(40);
  uint64_t seed = 0;
  TrainMeta meta;

  int n_outputs() const {
    return arch == Arch::bilstm ? bilstm_cfg.n_outputs : encoder_cfg.n_outputs;
  }
  int trunk_dim() const {
    return arch == Arch::bilstm ? bilstm_cfg.trunk_dim() : encoder_cfg.d_model;
  }
  int input_dim() const {
    return arch == Arch::bilstm ? bilstm_cfg.input_dim : encoder_cfg.input_dim;
  }
  bool uses_positional_encoding() const { return arch != Arch::bilstm; }
};

// Freshly initialized model; tf_encoder gets a decoder, with_mtl adds the
// sequence classifier head.
ModelGraph build_model(Arch arch, const EncoderConfig& enc, const BiLstmConfig& lstm,
                       bool with_mtl, uint64_t seed, const FrontendConfig& frontend = {});
ModelGraph build_default_model(Arch arch, bool with_mtl = false, uint64_t seed = 1);

// Same structure, all parameter tensors zero. Used for gradients and
// optimizer moments.
ModelGraph zeros_like(const ModelGraph& m);

// Copy without decoder or MTL head.
ModelGraph export_inference(const ModelGraph& m);

// ---------------------------------------------------------------------------
// Parameter enumeration
// ---------------------------------------------------------------------------

struct ParamRef {
  std::string name;
  Matrix* value;
  bool weight_matrix;  // candidate for 8-bit quantization
};

void for_each_param(ModelGraph& m, const std::function<void(const ParamRef&)>& fn);
void for_each_param(const ModelGraph& m,
                    const std::function<void(const std::string&, const Matrix&, bool)>& fn);

int64_t count_params(const ModelGraph& m);
std::vector<std::pair<std::string, int64_t>> itemize_params(const ModelGraph& m);

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

struct EncoderLayerCache {
  AttentionCache attn;
  Matrix res1;
  LayerNormCache ln1;
  Matrix n1;
  LinearCache ff1;
  Matrix ff_pre;
  LinearCache ff2;
  Matrix res2;
  LayerNormCache ln2;
};

struct EncoderCache {
  LinearCache input;
  std::vector<EncoderLayerCache> layers;
  Matrix trunk;
  LinearCache out;
  Matrix logp;
};

struct AmOut {
  Matrix logp;   // T' x n_outputs, rows are log-probabilities
  Matrix trunk;  // T' x trunk_dim, shared representation pre output layer
};

AmOut encoder_forward(const Matrix& x, const EncoderConfig& cfg, const EncoderParams& p,
                      EncoderCache* cache = nullptr);
// dlogp may be empty (size 0) when only dtrunk_extra flows back.
Matrix encoder_backward(const Matrix& dlogp, const Matrix* dtrunk_extra,
                        const EncoderConfig& cfg, const EncoderParams& p,
                        const EncoderCache& cache, EncoderParams& grad);

struct DecoderLayerCache {
  AttentionCache self_attn;
  Matrix r1;
  LayerNormCache ln1;
  Matrix n1;
  AttentionCache cross;
  Matrix r2;
  LayerNormCache ln2;
  Matrix n2;
  LinearCache ff1;
  Matrix ff_pre;
  LinearCache ff2;
  Matrix r3;
  LayerNormCache ln3;
};

struct DecoderCache {
  std::vector<int> tokens;
  std::vector<DecoderLayerCache> layers;
  LinearCache out;
  Matrix logp;
};

// Teacher-forced decoding: in_tokens start with BOS; returns per-step
// log-probabilities over the vocabulary (len(in_tokens) x vocab).
Matrix decoder_forward(const Matrix& trunk, const std::vector<int>& in_tokens,
                       const DecoderConfig& cfg, const DecoderParams& p,
                       DecoderCache* cache = nullptr);
// Returns the gradient wrt the encoder trunk (via cross-attention).
Matrix decoder_backward(const Matrix& dlogp, const DecoderConfig& cfg, const DecoderParams& p,
                        const DecoderCache& cache, DecoderParams& grad);

struct BiLstmStackCache {
  std::vector<BiLstmCache> layers;
  Matrix trunk;
  LinearCache out;
  Matrix logp;
};

AmOut bilstm_stack_forward(const Matrix& x, const BiLstmConfig& cfg,
                           const BiLstmStackParams& p, BiLstmStackCache* cache = nullptr);
Matrix bilstm_stack_backward(const Matrix& dlogp, const Matrix* dtrunk_extra,
                             const BiLstmConfig& cfg, const BiLstmStackParams& p,
                             const BiLstmStackCache& cache, BiLstmStackParams& grad);

struct MtlCache {
  Matrix pooled;  // 1 x trunk_dim
  double logit = 0.0;
  int frames = 0;
  bool clipped = false;
};

struct MtlOut {
  double prob;   // strictly inside (0, 1)
  double logit;  // clamped to +/-30 before the sigmoid
};

MtlOut mtl_forward(const Matrix& trunk, const MtlHeadParams& p, MtlCache* cache = nullptr);
Matrix mtl_backward(double dlogit, const MtlHeadParams& p, const MtlCache& cache,
                    MtlHeadParams& grad);

// Arch-dispatching wrappers.
struct AmCache {
  EncoderCache enc;
  BiLstmStackCache lstm;
};

AmOut am_forward(const ModelGraph& m, const Matrix& x, AmCache* cache = nullptr);
void am_backward(const ModelGraph& m, const Matrix& dlogp, const Matrix* dtrunk_extra,
                 const AmCache& cache, ModelGraph& grads);

// Normalization, splicing/subsampling, and positional encoding (attention
// archs only) applied to a mel feature matrix; result feeds am_forward.
Matrix prepare_input(const ModelGraph& m, const Matrix& mel);

}  // namespace vt
