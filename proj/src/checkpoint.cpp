// Copyright 2026 The vtrescore Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#include "vt/checkpoint.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>

namespace vt {
namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'V', 'T', 'C', 'K'};
constexpr uint32_t kVersion = 1;

json frontend_to_json(const FrontendConfig& c) {
  return {{"n_mels", c.n_mels},         {"frames_per_sec", c.frames_per_sec},
          {"splice", c.splice},         {"subsample", c.subsample},
          {"window_ms", c.window_ms},   {"fft_size", c.fft_size},
          {"log_floor", c.log_floor},   {"mel_low_hz", c.mel_low_hz},
          {"mel_high_hz", c.mel_high_hz}};
}

FrontendConfig frontend_from_json(const json& j) {
  FrontendConfig c;
  c.n_mels = j.at("n_mels");
  c.frames_per_sec = j.at("frames_per_sec");
  c.splice = j.at("splice");
  c.subsample = j.at("subsample");
  c.window_ms = j.at("window_ms");
  c.fft_size = j.at("fft_size");
  c.log_floor = j.at("log_floor");
  c.mel_low_hz = j.at("mel_low_hz");
  c.mel_high_hz = j.at("mel_high_hz");
  return c;
}

json encoder_to_json(const EncoderConfig& c) {
  return {{"n_layers", c.n_layers}, {"d_model", c.d_model},     {"n_heads", c.n_heads},
          {"d_head", c.d_head},     {"d_ff", c.d_ff},           {"input_dim", c.input_dim},
          {"n_outputs", c.n_outputs}};
}

EncoderConfig encoder_from_json(const json& j) {
  EncoderConfig c;
  c.n_layers = j.at("n_layers");
  c.d_model = j.at("d_model");
  c.n_heads = j.at("n_heads");
  c.d_head = j.at("d_head");
  c.d_ff = j.at("d_ff");
  c.input_dim = j.at("input_dim");
  c.n_outputs = j.at("n_outputs");
  return c;
}

json bilstm_to_json(const BiLstmConfig& c) {
  return {{"n_layers", c.n_layers},
          {"units_per_direction", c.units_per_direction},
          {"input_dim", c.input_dim},
          {"n_outputs", c.n_outputs}};
}

BiLstmConfig bilstm_from_json(const json& j) {
  BiLstmConfig c;
  c.n_layers = j.at("n_layers");
  c.units_per_direction = j.at("units_per_direction");
  c.input_dim = j.at("input_dim");
  c.n_outputs = j.at("n_outputs");
  return c;
}

const char* dtype_name(TensorDType t) {
  switch (t) {
    case TensorDType::f64: return "f64";
    case TensorDType::f32: return "f32";
    case TensorDType::i8: return "i8";
  }
  throw DataError("unknown tensor dtype");
}

TensorDType dtype_from_name(const std::string& s) {
  if (s == "f64") return TensorDType::f64;
  if (s == "f32") return TensorDType::f32;
  if (s == "i8") return TensorDType::i8;
  throw DataError("checkpoint: unknown tensor dtype '" + s + "'");
}

size_t dtype_bytes(TensorDType t) {
  return t == TensorDType::f64 ? 8 : (t == TensorDType::f32 ? 4 : 1);
}

json header_common(const ModelGraph& m) {
  json h;
  h["version"] = kVersion;
  h["arch"] = arch_name(m.arch);
  h["frontend"] = frontend_to_json(m.frontend);
  h["encoder_cfg"] = encoder_to_json(m.encoder_cfg);
  h["bilstm_cfg"] = bilstm_to_json(m.bilstm_cfg);
  h["decoder_vocab"] = m.decoder_cfg.vocab;
  h["has_decoder"] = m.decoder.has_value();
  h["has_mtl"] = m.mtl.has_value();
  h["seed"] = m.seed;
  h["meta"] = {{"epochs", m.meta.epochs},
               {"best_epoch", m.meta.best_epoch},
               {"final_train_loss", m.meta.final_train_loss},
               {"best_val_loss", m.meta.best_val_loss}};
  std::vector<double> mean(m.feat_norm.mean.data(),
                           m.feat_norm.mean.data() + m.feat_norm.mean.size());
  std::vector<double> var(m.feat_norm.var.data(),
                          m.feat_norm.var.data() + m.feat_norm.var.size());
  h["norm"] = {{"mean", mean}, {"var", var}};
  return h;
}

void write_file(const std::string& path, const json& header,
                const std::vector<char>& payload) {
  const std::string header_str = header.dump();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write checkpoint: " + path);
  f.write(kMagic, 4);
  const uint32_t version = kVersion;
  const uint32_t header_len = static_cast<uint32_t>(header_str.size());
  f.write(reinterpret_cast<const char*>(&version), 4);
  f.write(reinterpret_cast<const char*>(&header_len), 4);
  f.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  f.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!f) throw DataError("short write to checkpoint: " + path);
}

void append_floats(std::vector<char>& payload, const Matrix& v, TensorDType dtype) {
  if (dtype == TensorDType::f64) {
    const size_t bytes = sizeof(double) * v.size();
    const size_t at = payload.size();
    payload.resize(at + bytes);
    std::memcpy(payload.data() + at, v.data(), bytes);
  } else {
    std::vector<float> tmp(v.size());
    for (int i = 0; i < v.size(); ++i) tmp[static_cast<size_t>(i)] = static_cast<float>(v.data()[i]);
    const size_t bytes = sizeof(float) * tmp.size();
    const size_t at = payload.size();
    payload.resize(at + bytes);
    std::memcpy(payload.data() + at, tmp.data(), bytes);
  }
}

// Blank model with the stored structure; parameters are overwritten by the
// tensor payload right after.
ModelGraph materialize(const json& h) {
  const Arch arch = arch_from_name(h.at("arch").get<std::string>());
  const FrontendConfig fe = frontend_from_json(h.at("frontend"));
  const EncoderConfig enc = encoder_from_json(h.at("encoder_cfg"));
  const BiLstmConfig lstm = bilstm_from_json(h.at("bilstm_cfg"));
  ModelGraph m = build_model(arch, enc, lstm, h.at("has_mtl").get<bool>(),
                             h.at("seed").get<uint64_t>(), fe);
  if (!h.at("has_decoder").get<bool>()) m.decoder.reset();
  if (m.decoder_cfg.vocab != h.at("decoder_vocab").get<int>())
    throw DataError("checkpoint: decoder vocabulary mismatch");
  const auto& meta = h.at("meta");
  m.meta.epochs = meta.at("epochs");
  m.meta.best_epoch = meta.at("best_epoch");
  m.meta.final_train_loss = meta.at("final_train_loss");
  m.meta.best_val_loss = meta.at("best_val_loss");
  const auto mean = h.at("norm").at("mean").get<std::vector<double>>();
  const auto var = h.at("norm").at("var").get<std::vector<double>>();
  m.feat_norm.mean = Eigen::Map<const RowVec>(mean.data(), static_cast<int>(mean.size()));
  m.feat_norm.var = Eigen::Map<const RowVec>(var.data(), static_cast<int>(var.size()));
  return m;
}

}  // namespace

void save_checkpoint(const ModelGraph& m, const std::string& path, TensorDType dtype) {
  if (dtype == TensorDType::i8)
    throw UsageError("save_checkpoint: use the QuantizedModel overload for int8");
  json header = header_common(m);
  json dir = json::array();
  std::vector<char> payload;
  for_each_param(m, [&](const std::string& name, const Matrix& v, bool) {
    dir.push_back({{"name", name},
                   {"rows", v.rows()},
                   {"cols", v.cols()},
                   {"dtype", dtype_name(dtype)},
                   {"offset", payload.size()}});
    append_floats(payload, v, dtype);
  });
  header["tensors"] = std::move(dir);
  write_file(path, header, payload);
}

void save_checkpoint(const QuantizedModel& qm, const std::string& path) {
  json header = header_common(qm.graph);
  json dir = json::array();
  std::vector<char> payload;
  for_each_param(qm.graph, [&](const std::string& name, const Matrix& v, bool) {
    const auto it = qm.tensors.find(name);
    if (it != qm.tensors.end()) {
      const QuantizedTensor& qt = it->second;
      dir.push_back({{"name", name},
                     {"rows", qt.rows},
                     {"cols", qt.cols},
                     {"dtype", "i8"},
                     {"offset", payload.size()},
                     {"scale", qt.scale}});
      const size_t at = payload.size();
      payload.resize(at + qt.values.size());
      std::memcpy(payload.data() + at, qt.values.data(), qt.values.size());
    } else {
      dir.push_back({{"name", name},
                     {"rows", v.rows()},
                     {"cols", v.cols()},
                     {"dtype", "f32"},
                     {"offset", payload.size()}});
      append_floats(payload, v, TensorDType::f32);
    }
  });
  header["tensors"] = std::move(dir);
  write_file(path, header, payload);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint: " + path);
  char magic[4];
  uint32_t version = 0, header_len = 0;
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError("bad checkpoint magic '" + std::string(magic, magic + (f ? 4 : 0)) +
                    "' (expected 'VTCK') in " + path);
  f.read(reinterpret_cast<char*>(&version), 4);
  f.read(reinterpret_cast<char*>(&header_len), 4);
  if (!f || version != kVersion)
    throw DataError("unsupported checkpoint version in " + path);
  std::string header_str(header_len, '\0');
  f.read(header_str.data(), header_len);
  if (!f) throw DataError("truncated checkpoint header: " + path);
  json h;
  try {
    h = json::parse(header_str);
  } catch (const json::exception& e) {
    throw DataError("corrupt checkpoint header in " + path + ": " + e.what());
  }

  std::vector<char> payload((std::istreambuf_iterator<char>(f)),
                            std::istreambuf_iterator<char>());

  LoadedCheckpoint out;
  out.model = materialize(h);
  bool any_quantized = false;
  QuantizedModel qm;

  std::map<std::string, Matrix*> by_name;
  for_each_param(out.model, [&](const ParamRef& p) { by_name[p.name] = p.value; });

  size_t seen = 0;
  for (const auto& entry : h.at("tensors")) {
    const std::string name = entry.at("name");
    const int rows = entry.at("rows");
    const int cols = entry.at("cols");
    const TensorDType dtype = dtype_from_name(entry.at("dtype").get<std::string>());
    const size_t offset = entry.at("offset");
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw DataError("checkpoint: unexpected tensor '" + name + "'");
    Matrix& dst = *it->second;
    if (dst.rows() != rows || dst.cols() != cols)
      throw DataError("checkpoint: shape mismatch for '" + name + "' (file " +
                      std::to_string(rows) + "x" + std::to_string(cols) + ", config " +
                      std::to_string(dst.rows()) + "x" + std::to_string(dst.cols()) + ")");
    const size_t count = static_cast<size_t>(rows) * cols;
    const size_t need = offset + count * dtype_bytes(dtype);
    if (need > payload.size()) throw DataError("truncated checkpoint payload: " + path);

    if (dtype == TensorDType::f64) {
      std::memcpy(dst.data(), payload.data() + offset, count * 8);
    } else if (dtype == TensorDType::f32) {
      const float* src = reinterpret_cast<const float*>(payload.data() + offset);
      for (size_t i = 0; i < count; ++i) dst.data()[i] = src[i];
    } else {
      QuantizedTensor qt;
      qt.rows = rows;
      qt.cols = cols;
      qt.scale = entry.at("scale");
      qt.values.resize(count);
      std::memcpy(qt.values.data(), payload.data() + offset, count);
      dst = qt.dequantize();
      qm.tensors.emplace(name, std::move(qt));
      any_quantized = true;
    }
    ++seen;
  }
  if (seen != by_name.size())
    throw DataError("checkpoint: tensor directory incomplete in " + path);
  if (any_quantized) {
    qm.graph = out.model;
    out.quantized = std::move(qm);
  }
  return out;
}

CheckpointLayout checkpoint_layout(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint: " + path);
  char magic[4];
  uint32_t version = 0, header_len = 0;
  f.read(magic, 4);
  f.read(reinterpret_cast<char*>(&version), 4);
  f.read(reinterpret_cast<char*>(&header_len), 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError("bad checkpoint magic in " + path);
  f.seekg(0, std::ios::end);
  CheckpointLayout layout;
  layout.file_bytes = static_cast<int64_t>(f.tellg());
  layout.header_bytes = 12 + header_len;
  layout.payload_bytes = layout.file_bytes - layout.header_bytes;
  return layout;
}

}  // namespace vt
