// Copyright 2026 The vtrescore Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#include "vt/pe.hpp"

#include <cmath>

namespace vt {

void SinusoidalTable::ensure(int t_count) {
  if (table_.rows() >= t_count) return;
  int new_rows = std::max<int>(64, static_cast<int>(table_.rows()));
  while (new_rows < t_count) new_rows *= 2;
  Matrix grown(new_rows, dim_);
  for (int t = 0; t < new_rows; ++t) {
    for (int i = 0; 2 * i < dim_; ++i) {
      const double angle = t / std::pow(10000.0, (2.0 * i) / dim_);
      grown(t, 2 * i) = std::sin(angle);
      if (2 * i + 1 < dim_) grown(t, 2 * i + 1) = std::cos(angle);
    }
  }
  table_ = std::move(grown);
}

Matrix SinusoidalTable::rows(int t_count) {
  std::lock_guard<std::mutex> lock(mutex_);
  ensure(t_count);
  return table_.topRows(t_count);
}

void SinusoidalTable::add_to(Matrix& x) {
  if (x.cols() != dim_) throw DataError("positional encoding: width mismatch");
  x += rows(static_cast<int>(x.rows()));
}

SinusoidalTable& SinusoidalTable::shared(int dim) {
  static std::mutex registry_mutex;
  static std::map<int, std::unique_ptr<SinusoidalTable>> registry;
  std::lock_guard<std::mutex> lock(registry_mutex);
  auto& slot = registry[dim];
  if (!slot) slot = std::make_unique<SinusoidalTable>(dim);
  return *slot;
}

}  // namespace vt
