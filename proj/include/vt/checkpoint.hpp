// Copyright 2026 The vtrescore Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <optional>
#include <string>

#include "vt/model.hpp"
#include "vt/quant.hpp"

namespace vt {

// Checkpoint container "VTCK": magic, u32 version, u32 header length, JSON
// header (configs, tensor directory with name/shape/dtype/offset and
// per-tensor scales for int8, normalization stats, training metadata), then
// raw little-endian tensor payloads in directory order.

enum class TensorDType { f64, f32, i8 };

// f64 checkpoints round-trip parameters bit-exactly; f32 is the compact
// inference export used for size accounting.
void save_checkpoint(const ModelGraph& m, const std::string& path,
                     TensorDType dtype = TensorDType::f64);
void save_checkpoint(const QuantizedModel& qm, const std::string& path);

struct LoadedCheckpoint {
  ModelGraph model;  // dequantized weights when the file was quantized
  std::optional<QuantizedModel> quantized;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

// Sizes of the last written/parsed sections, for format accounting.
struct CheckpointLayout {
  int64_t header_bytes = 0;   // magic + version + length field + JSON
  int64_t payload_bytes = 0;  // raw tensor data
  int64_t file_bytes = 0;
};

CheckpointLayout checkpoint_layout(const std::string& path);

}  // namespace vt
