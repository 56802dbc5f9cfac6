// Copyright 2026 The vtrescore Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#include "vt/quant.hpp"

#include <cmath>

namespace vt {

QuantizedTensor QuantizedTensor::quantize(const Matrix& w) {
  QuantizedTensor q;
  q.rows = static_cast<int>(w.rows());
  q.cols = static_cast<int>(w.cols());
  q.values.resize(static_cast<size_t>(q.rows) * q.cols);
  const double max_abs = w.size() > 0 ? w.cwiseAbs().maxCoeff() : 0.0;
  q.scale = max_abs > 0.0 ? max_abs / 127.0 : 1.0;
  size_t i = 0;
  for (int r = 0; r < q.rows; ++r) {
    for (int c = 0; c < q.cols; ++c) {
      // std::round rounds halfway cases away from zero.
      const double v = std::round(w(r, c) / q.scale);
      q.values[i++] = static_cast<int8_t>(std::clamp(v, -127.0, 127.0));
    }
  }
  return q;
}

Matrix QuantizedTensor::dequantize() const {
  Matrix w(rows, cols);
  size_t i = 0;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) w(r, c) = values[i++] * scale;
  return w;
}

int64_t QuantizedModel::quantized_param_count() const {
  int64_t n = 0;
  for (const auto& [name, t] : tensors) n += static_cast<int64_t>(t.values.size());
  return n;
}

int64_t QuantizedModel::float_param_count() const {
  return count_params(graph) - quantized_param_count();
}

QuantizedModel quantize_model(const ModelGraph& m) {
  QuantizedModel qm;
  qm.graph = m;
  for_each_param(qm.graph, [&](const ParamRef& p) {
    if (!p.weight_matrix) return;
    QuantizedTensor qt = QuantizedTensor::quantize(*p.value);
    *p.value = qt.dequantize();
    qm.tensors.emplace(p.name, std::move(qt));
  });
  return qm;
}

int64_t model_bytes(const ModelGraph& m) { return 4 * count_params(m); }

int64_t model_bytes(const QuantizedModel& qm) {
  return qm.quantized_param_count() + 4 * qm.float_param_count();
}

}  // namespace vt
