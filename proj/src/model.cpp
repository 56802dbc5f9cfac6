// Copyright 2026 The vtrescore Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#include "vt/model.hpp"

#include <cmath>

#include "vt/pe.hpp"

namespace vt {
namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw DataError(msg);
}

EncoderLayerParams init_encoder_layer(const EncoderConfig& cfg, Rng& rng) {
  EncoderLayerParams l;
  l.attn = AttentionParams::init(cfg.d_model, cfg.n_heads, cfg.d_head, rng);
  l.ln1 = LayerNormParams::init(cfg.d_model);
  l.ff.w1 = LinearParams::init(cfg.d_model, cfg.d_ff, rng);
  l.ff.w2 = LinearParams::init(cfg.d_ff, cfg.d_model, rng);
  l.ln2 = LayerNormParams::init(cfg.d_model);
  return l;
}

DecoderLayerParams init_decoder_layer(const DecoderConfig& cfg, Rng& rng) {
  DecoderLayerParams l;
  l.self_attn = AttentionParams::init(cfg.d_model, cfg.n_heads, cfg.d_head, rng);
  l.ln1 = LayerNormParams::init(cfg.d_model);
  l.cross_attn = AttentionParams::init(cfg.d_model, cfg.n_heads, cfg.d_head, rng);
  l.ln2 = LayerNormParams::init(cfg.d_model);
  l.ff.w1 = LinearParams::init(cfg.d_model, cfg.d_ff, rng);
  l.ff.w2 = LinearParams::init(cfg.d_ff, cfg.d_model, rng);
  l.ln3 = LayerNormParams::init(cfg.d_model);
  return l;
}

// Shared sublayer: y = LN(x + FF(x)), caching intermediates for backward.
Matrix ff_block_forward(const Matrix& x, const FeedForwardParams& ff, const LayerNormParams& ln,
                        LinearCache* c1, Matrix* pre, LinearCache* c2, Matrix* res,
                        LayerNormCache* lnc) {
  Matrix hidden = linear_forward(x, ff.w1, c1);
  if (pre) *pre = hidden;
  Matrix act = relu(hidden);
  Matrix out = linear_forward(act, ff.w2, c2);
  Matrix r = x + out;
  if (res) *res = r;
  return layer_norm_forward(r, ln, lnc);
}

// Backward of the FF sublayer; returns gradient wrt x.
Matrix ff_block_backward(const Matrix& dy, const FeedForwardParams& ff,
                         const LayerNormParams& ln, const LinearCache& c1, const Matrix& pre,
                         const LinearCache& c2, const LayerNormCache& lnc,
                         FeedForwardParams& gff, LayerNormParams& gln) {
  Matrix dres = layer_norm_backward(dy, ln, lnc, gln);
  Matrix dact = linear_backward(dres, ff.w2, c2, gff.w2);
  Matrix dpre = relu_backward(dact, pre);
  Matrix dx = linear_backward(dpre, ff.w1, c1, gff.w1);
  dx += dres;
  return dx;
}

}  // namespace

void EncoderConfig::validate() const {
  require(n_heads * d_head == d_model, "encoder config: n_heads * d_head must equal d_model");
  require(n_layers >= 0 && d_model > 0 && d_ff > 0 && input_dim > 0 && n_outputs > 1,
          "encoder config: dimensions must be positive");
}

void BiLstmConfig::validate() const {
  require(n_layers >= 1 && units_per_direction > 0 && input_dim > 0 && n_outputs > 1,
          "bilstm config: dimensions must be positive");
}

std::string arch_name(Arch arch) {
  switch (arch) {
    case Arch::bilstm: return "bilstm";
    case Arch::sa_encoder: return "sa-encoder";
    case Arch::tf_encoder: return "tf-encoder";
  }
  throw DataError("unknown arch");
}

Arch arch_from_name(const std::string& name) {
  if (name == "bilstm") return Arch::bilstm;
  if (name == "sa-encoder") return Arch::sa_encoder;
  if (name == "tf-encoder") return Arch::tf_encoder;
  throw UsageError("unknown architecture '" + name +
                   "' (expected bilstm, sa-encoder or tf-encoder)");
}

ModelGraph build_model(Arch arch, const EncoderConfig& enc, const BiLstmConfig& lstm,
                       bool with_mtl, uint64_t seed, const FrontendConfig& frontend) {
  ModelGraph m;
  m.arch = arch;
  m.frontend = frontend;
  m.encoder_cfg = enc;
  m.bilstm_cfg = lstm;
  m.decoder_cfg = DecoderConfig{enc.n_layers, enc.d_model, enc.n_heads,
                                enc.d_head,   enc.d_ff,    enc.n_outputs + 1};
  m.seed = seed;
  Rng rng(mix64(seed));

  if (arch == Arch::bilstm) {
    lstm.validate();
    m.feat_norm = FeatureNorm::identity(frontend.n_mels);
    BiLstmStackParams p;
    int in = lstm.input_dim;
    for (int l = 0; l < lstm.n_layers; ++l) {
      p.layers.emplace_back(LstmParams::init(in, lstm.units_per_direction, rng),
                            LstmParams::init(in, lstm.units_per_direction, rng));
      in = lstm.trunk_dim();
    }
    p.output = LinearParams::init(lstm.trunk_dim(), lstm.n_outputs, rng);
    m.bilstm = std::move(p);
  } else {
    enc.validate();
    m.feat_norm = FeatureNorm::identity(frontend.n_mels);
    EncoderParams p;
    p.input_proj = LinearParams::init(enc.input_dim, enc.d_model, rng);
    for (int l = 0; l < enc.n_layers; ++l) p.layers.push_back(init_encoder_layer(enc, rng));
    p.output = LinearParams::init(enc.d_model, enc.n_outputs, rng);
    m.encoder = std::move(p);
    if (arch == Arch::tf_encoder) {
      DecoderParams d;
      d.embedding.resize(m.decoder_cfg.vocab, m.decoder_cfg.d_model);
      for (int r = 0; r < d.embedding.rows(); ++r)
        for (int c = 0; c < d.embedding.cols(); ++c) d.embedding(r, c) = rng.normal();
      for (int l = 0; l < m.decoder_cfg.n_layers; ++l)
        d.layers.push_back(init_decoder_layer(m.decoder_cfg, rng));
      d.output = LinearParams::init(m.decoder_cfg.d_model, m.decoder_cfg.vocab, rng);
      m.decoder = std::move(d);
    }
  }
  if (with_mtl) {
    m.mtl = MtlHeadParams{LinearParams::init(m.trunk_dim(), 1, rng)};
  }
  return m;
}

ModelGraph build_default_model(Arch arch, bool with_mtl, uint64_t seed) {
  return build_model(arch, EncoderConfig{}, BiLstmConfig{}, with_mtl, seed);
}

ModelGraph zeros_like(const ModelGraph& m) {
  ModelGraph z = m;
  for_each_param(z, [](const ParamRef& p) { p.value->setZero(); });
  return z;
}

ModelGraph export_inference(const ModelGraph& m) {
  ModelGraph out = m;
  out.decoder.reset();
  out.mtl.reset();
  return out;
}

namespace {

void visit_linear(const std::string& prefix, LinearParams& p, bool weight_is_matrix,
                  const std::function<void(const ParamRef&)>& fn) {
  fn({prefix + ".w", &p.w, weight_is_matrix});
  fn({prefix + ".b", &p.b, false});
}

void visit_attention(const std::string& prefix, AttentionParams& p,
                     const std::function<void(const ParamRef&)>& fn) {
  visit_linear(prefix + ".query", p.query, true, fn);
  visit_linear(prefix + ".key", p.key, true, fn);
  visit_linear(prefix + ".value", p.value, true, fn);
  visit_linear(prefix + ".out", p.out, true, fn);
}

void visit_layer_norm(const std::string& prefix, LayerNormParams& p,
                      const std::function<void(const ParamRef&)>& fn) {
  fn({prefix + ".gain", &p.gain, false});
  fn({prefix + ".shift", &p.shift, false});
}

}  // namespace

void for_each_param(ModelGraph& m, const std::function<void(const ParamRef&)>& fn) {
  if (m.encoder) {
    auto& e = *m.encoder;
    visit_linear("encoder.input_proj", e.input_proj, true, fn);
    for (size_t l = 0; l < e.layers.size(); ++l) {
      const std::string p = "encoder.layer" + std::to_string(l);
      visit_attention(p + ".attn", e.layers[l].attn, fn);
      visit_layer_norm(p + ".ln1", e.layers[l].ln1, fn);
      visit_linear(p + ".ff.w1", e.layers[l].ff.w1, true, fn);
      visit_linear(p + ".ff.w2", e.layers[l].ff.w2, true, fn);
      visit_layer_norm(p + ".ln2", e.layers[l].ln2, fn);
    }
    visit_linear("encoder.output", e.output, true, fn);
  }
  if (m.decoder) {
    auto& d = *m.decoder;
    fn({"decoder.embedding", &d.embedding, true});
    for (size_t l = 0; l < d.layers.size(); ++l) {
      const std::string p = "decoder.layer" + std::to_string(l);
      visit_attention(p + ".self_attn", d.layers[l].self_attn, fn);
      visit_layer_norm(p + ".ln1", d.layers[l].ln1, fn);
      visit_attention(p + ".cross_attn", d.layers[l].cross_attn, fn);
      visit_layer_norm(p + ".ln2", d.layers[l].ln2, fn);
      visit_linear(p + ".ff.w1", d.layers[l].ff.w1, true, fn);
      visit_linear(p + ".ff.w2", d.layers[l].ff.w2, true, fn);
      visit_layer_norm(p + ".ln3", d.layers[l].ln3, fn);
    }
    visit_linear("decoder.output", d.output, true, fn);
  }
  if (m.bilstm) {
    auto& b = *m.bilstm;
    for (size_t l = 0; l < b.layers.size(); ++l) {
      const std::string p = "bilstm.layer" + std::to_string(l);
      fn({p + ".fwd.w", &b.layers[l].first.w, true});
      fn({p + ".fwd.b", &b.layers[l].first.b, false});
      fn({p + ".bwd.w", &b.layers[l].second.w, true});
      fn({p + ".bwd.b", &b.layers[l].second.b, false});
    }
    visit_linear("bilstm.output", b.output, true, fn);
  }
  if (m.mtl) {
    visit_linear("mtl.classifier", m.mtl->classifier, true, fn);
  }
}

void for_each_param(const ModelGraph& m,
                    const std::function<void(const std::string&, const Matrix&, bool)>& fn) {
  // The mutable visitor only reads through the pointer here.
  for_each_param(const_cast<ModelGraph&>(m), [&](const ParamRef& p) {
    fn(p.name, *p.value, p.weight_matrix);
  });
}

int64_t count_params(const ModelGraph& m) {
  int64_t total = 0;
  for_each_param(m, [&](const std::string&, const Matrix& v, bool) { total += v.size(); });
  return total;
}

std::vector<std::pair<std::string, int64_t>> itemize_params(const ModelGraph& m) {
  std::vector<std::pair<std::string, int64_t>> items;
  for_each_param(m, [&](const std::string& name, const Matrix& v, bool) {
    items.emplace_back(name, v.size());
  });
  return items;
}

// ----------------------------- Encoder ------------------------------------

AmOut encoder_forward(const Matrix& x, const EncoderConfig& cfg, const EncoderParams& p,
                      EncoderCache* cache) {
  cfg.validate();
  require(x.rows() > 0, "encoder: empty input sequence");
  require(static_cast<int>(x.cols()) == cfg.input_dim,
          "encoder: input width " + std::to_string(x.cols()) + " != " +
              std::to_string(cfg.input_dim));
  if (cache) cache->layers.resize(p.layers.size());

  Matrix h = linear_forward(x, p.input_proj, cache ? &cache->input : nullptr);
  for (size_t l = 0; l < p.layers.size(); ++l) {
    const auto& layer = p.layers[l];
    EncoderLayerCache* lc = cache ? &cache->layers[l] : nullptr;
    Matrix attn = attention_forward(h, h, layer.attn, AttnMask::none, lc ? &lc->attn : nullptr);
    Matrix r1 = h + attn;
    if (lc) lc->res1 = r1;
    Matrix n1 = layer_norm_forward(r1, layer.ln1, lc ? &lc->ln1 : nullptr);
    if (lc) lc->n1 = n1;
    h = ff_block_forward(n1, layer.ff, layer.ln2, lc ? &lc->ff1 : nullptr,
                         lc ? &lc->ff_pre : nullptr, lc ? &lc->ff2 : nullptr,
                         lc ? &lc->res2 : nullptr, lc ? &lc->ln2 : nullptr);
  }
  AmOut out;
  out.trunk = h;
  Matrix logits = linear_forward(h, p.output, cache ? &cache->out : nullptr);
  out.logp = log_softmax_rows(logits);
  if (cache) {
    cache->trunk = out.trunk;
    cache->logp = out.logp;
  }
  return out;
}

Matrix encoder_backward(const Matrix& dlogp, const Matrix* dtrunk_extra,
                        const EncoderConfig& cfg, const EncoderParams& p,
                        const EncoderCache& cache, EncoderParams& grad) {
  Matrix dtrunk;
  if (dlogp.size() > 0) {
    const Matrix dlogits = log_softmax_backward(dlogp, cache.logp);
    dtrunk = linear_backward(dlogits, p.output, cache.out, grad.output);
  } else {
    dtrunk = Matrix::Zero(cache.trunk.rows(), cfg.d_model);
  }
  if (dtrunk_extra) dtrunk += *dtrunk_extra;

  Matrix dh = dtrunk;
  for (int l = static_cast<int>(p.layers.size()) - 1; l >= 0; --l) {
    const auto& layer = p.layers[l];
    const auto& lc = cache.layers[l];
    Matrix dn1 = ff_block_backward(dh, layer.ff, layer.ln2, lc.ff1, lc.ff_pre, lc.ff2, lc.ln2,
                                   grad.layers[l].ff, grad.layers[l].ln2);
    Matrix dr1 = layer_norm_backward(dn1, layer.ln1, lc.ln1, grad.layers[l].ln1);
    const auto gin = attention_backward(dr1, layer.attn, lc.attn, grad.layers[l].attn);
    dh = dr1 + gin.dq_in + gin.dkv_in;
  }
  return linear_backward(dh, p.input_proj, cache.input, grad.input_proj);
}

// ----------------------------- Decoder ------------------------------------

Matrix decoder_forward(const Matrix& trunk, const std::vector<int>& in_tokens,
                       const DecoderConfig& cfg, const DecoderParams& p, DecoderCache* cache) {
  require(!in_tokens.empty(), "decoder: empty token sequence");
  require(trunk.rows() > 0, "decoder: empty encoder output");
  for (int t : in_tokens)
    require(t >= 0 && t < cfg.vocab, "decoder: token out of range");
  const int steps = static_cast<int>(in_tokens.size());
  if (cache) {
    cache->tokens = in_tokens;
    cache->layers.resize(p.layers.size());
  }

  Matrix h(steps, cfg.d_model);
  for (int t = 0; t < steps; ++t) h.row(t) = p.embedding.row(in_tokens[t]);
  SinusoidalTable::shared(cfg.d_model).add_to(h);

  for (size_t l = 0; l < p.layers.size(); ++l) {
    const auto& layer = p.layers[l];
    DecoderLayerCache* lc = cache ? &cache->layers[l] : nullptr;
    Matrix sa =
        attention_forward(h, h, layer.self_attn, AttnMask::causal, lc ? &lc->self_attn : nullptr);
    Matrix r1 = h + sa;
    if (lc) lc->r1 = r1;
    Matrix n1 = layer_norm_forward(r1, layer.ln1, lc ? &lc->ln1 : nullptr);
    if (lc) lc->n1 = n1;
    Matrix ca =
        attention_forward(n1, trunk, layer.cross_attn, AttnMask::none, lc ? &lc->cross : nullptr);
    Matrix r2 = n1 + ca;
    if (lc) lc->r2 = r2;
    Matrix n2 = layer_norm_forward(r2, layer.ln2, lc ? &lc->ln2 : nullptr);
    if (lc) lc->n2 = n2;
    h = ff_block_forward(n2, layer.ff, layer.ln3, lc ? &lc->ff1 : nullptr,
                         lc ? &lc->ff_pre : nullptr, lc ? &lc->ff2 : nullptr,
                         lc ? &lc->r3 : nullptr, lc ? &lc->ln3 : nullptr);
  }
  Matrix logits = linear_forward(h, p.output, cache ? &cache->out : nullptr);
  Matrix logp = log_softmax_rows(logits);
  if (cache) cache->logp = logp;
  return logp;
}

Matrix decoder_backward(const Matrix& dlogp, const DecoderConfig& cfg, const DecoderParams& p,
                        const DecoderCache& cache, DecoderParams& grad) {
  const Matrix dlogits = log_softmax_backward(dlogp, cache.logp);
  Matrix dh = linear_backward(dlogits, p.output, cache.out, grad.output);

  Matrix dtrunk;
  for (int l = static_cast<int>(p.layers.size()) - 1; l >= 0; --l) {
    const auto& layer = p.layers[l];
    const auto& lc = cache.layers[l];
    Matrix dn2 = ff_block_backward(dh, layer.ff, layer.ln3, lc.ff1, lc.ff_pre, lc.ff2, lc.ln3,
                                   grad.layers[l].ff, grad.layers[l].ln3);
    Matrix dr2 = layer_norm_backward(dn2, layer.ln2, lc.ln2, grad.layers[l].ln2);
    const auto cross_gin =
        attention_backward(dr2, layer.cross_attn, lc.cross, grad.layers[l].cross_attn);
    if (dtrunk.size() == 0)
      dtrunk = cross_gin.dkv_in;
    else
      dtrunk += cross_gin.dkv_in;
    Matrix dn1 = dr2 + cross_gin.dq_in;
    Matrix dr1 = layer_norm_backward(dn1, layer.ln1, lc.ln1, grad.layers[l].ln1);
    const auto self_gin =
        attention_backward(dr1, layer.self_attn, lc.self_attn, grad.layers[l].self_attn);
    dh = dr1 + self_gin.dq_in + self_gin.dkv_in;
  }
  // Positional encoding is additive; dh passes straight to the embeddings.
  for (size_t t = 0; t < cache.tokens.size(); ++t)
    grad.embedding.row(cache.tokens[t]) += dh.row(static_cast<int>(t));
  return dtrunk;
}

// ----------------------------- BiLSTM stack -------------------------------

AmOut bilstm_stack_forward(const Matrix& x, const BiLstmConfig& cfg, const BiLstmStackParams& p,
                           BiLstmStackCache* cache) {
  cfg.validate();
  require(x.rows() > 0, "bilstm: empty input sequence");
  require(static_cast<int>(x.cols()) == cfg.input_dim, "bilstm: input width mismatch");
  if (cache) cache->layers.resize(p.layers.size());

  Matrix h = x;
  for (size_t l = 0; l < p.layers.size(); ++l) {
    h = bilstm_forward(h, p.layers[l].first, p.layers[l].second,
                       cache ? &cache->layers[l] : nullptr);
  }
  AmOut out;
  out.trunk = h;
  Matrix logits = linear_forward(h, p.output, cache ? &cache->out : nullptr);
  out.logp = log_softmax_rows(logits);
  if (cache) {
    cache->trunk = out.trunk;
    cache->logp = out.logp;
  }
  return out;
}

Matrix bilstm_stack_backward(const Matrix& dlogp, const Matrix* dtrunk_extra,
                             const BiLstmConfig& cfg, const BiLstmStackParams& p,
                             const BiLstmStackCache& cache, BiLstmStackParams& grad) {
  Matrix dh;
  if (dlogp.size() > 0) {
    const Matrix dlogits = log_softmax_backward(dlogp, cache.logp);
    dh = linear_backward(dlogits, p.output, cache.out, grad.output);
  } else {
    dh = Matrix::Zero(cache.trunk.rows(), cfg.trunk_dim());
  }
  if (dtrunk_extra) dh += *dtrunk_extra;
  for (int l = static_cast<int>(p.layers.size()) - 1; l >= 0; --l) {
    dh = bilstm_backward(dh, p.layers[l].first, p.layers[l].second, cache.layers[l],
                         grad.layers[l].first, grad.layers[l].second);
  }
  return dh;
}

// ----------------------------- MTL head -----------------------------------

MtlOut mtl_forward(const Matrix& trunk, const MtlHeadParams& p, MtlCache* cache) {
  require(trunk.rows() > 0, "mtl head: empty sequence");
  Matrix pooled = trunk.colwise().mean();
  LinearCache lin;
  const Matrix z = linear_forward(pooled, p.classifier, &lin);
  double logit = z(0, 0);
  const bool clipped = std::abs(logit) > 30.0;
  // Keeps the sigmoid strictly inside (0, 1) in double precision.
  logit = std::clamp(logit, -30.0, 30.0);
  if (cache) {
    cache->pooled = pooled;
    cache->logit = logit;
    cache->frames = static_cast<int>(trunk.rows());
    cache->clipped = clipped;
  }
  return {1.0 / (1.0 + std::exp(-logit)), logit};
}

Matrix mtl_backward(double dlogit, const MtlHeadParams& p, const MtlCache& cache,
                    MtlHeadParams& grad) {
  if (cache.clipped) dlogit = 0.0;
  Matrix dz(1, 1);
  dz(0, 0) = dlogit;
  LinearCache lin;
  lin.x = cache.pooled;
  const Matrix dpooled = linear_backward(dz, p.classifier, lin, grad.classifier);
  Matrix dtrunk(cache.frames, dpooled.cols());
  dtrunk.rowwise() = dpooled.row(0) / static_cast<double>(cache.frames);
  return dtrunk;
}

// ----------------------------- Dispatch -----------------------------------

AmOut am_forward(const ModelGraph& m, const Matrix& x, AmCache* cache) {
  if (m.arch == Arch::bilstm) {
    require(m.bilstm.has_value(), "model: missing bilstm parameters");
    return bilstm_stack_forward(x, m.bilstm_cfg, *m.bilstm, cache ? &cache->lstm : nullptr);
  }
  require(m.encoder.has_value(), "model: missing encoder parameters");
  return encoder_forward(x, m.encoder_cfg, *m.encoder, cache ? &cache->enc : nullptr);
}

void am_backward(const ModelGraph& m, const Matrix& dlogp, const Matrix* dtrunk_extra,
                 const AmCache& cache, ModelGraph& grads) {
  if (m.arch == Arch::bilstm) {
    bilstm_stack_backward(dlogp, dtrunk_extra, m.bilstm_cfg, *m.bilstm, cache.lstm,
                          *grads.bilstm);
  } else {
    encoder_backward(dlogp, dtrunk_extra, m.encoder_cfg, *m.encoder, cache.enc, *grads.encoder);
  }
}

Matrix prepare_input(const ModelGraph& m, const Matrix& mel) {
  FeatureSequence f{m.feat_norm.apply(mel), static_cast<double>(m.frontend.frames_per_sec),
                    FeatureStage::mel};
  FeatureSequence spliced = splice_subsample(f, m.frontend);
  if (m.uses_positional_encoding()) {
    return add_positional_encoding(spliced).frames;
  }
  return std::move(spliced.frames);
}

}  // namespace vt
