// Copyright 2026 The vtrescore Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vt/model.hpp"

namespace vt {

// Symmetric per-tensor 8-bit quantization: scale = max|w| / 127, values
// rounded half away from zero and clamped to [-127, 127]. An all-zero tensor
// gets scale 1. Dequantized values differ from the originals by at most
// scale / 2 element-wise.
struct QuantizedTensor {
  std::vector<int8_t> values;  // row-major
  double scale = 1.0;
  int rows = 0;
  int cols = 0;

  static QuantizedTensor quantize(const Matrix& w);
  Matrix dequantize() const;
};

// Weight matrices stored as int8; biases and layer-norm parameters kept in
// floating point. `graph` holds the dequantized weights so the forward pass
// is exactly the float code path.
struct QuantizedModel {
  ModelGraph graph;
  std::map<std::string, QuantizedTensor> tensors;

  int64_t quantized_param_count() const;
  int64_t float_param_count() const;
};

QuantizedModel quantize_model(const ModelGraph& m);

// Serialized payload accounting (tensor bytes only, headers excluded):
// float32 models take 4 bytes per parameter, quantized models one byte per
// quantized parameter plus 4 per float-kept parameter.
int64_t model_bytes(const ModelGraph& m);
int64_t model_bytes(const QuantizedModel& qm);

}  // namespace vt
