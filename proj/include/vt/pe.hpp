// Copyright 2026 The vtrescore Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <map>
#include <memory>
#include <mutex>

#include "vt/common.hpp"

namespace vt {

// Fixed sinusoidal positional encoding:
//   pe(t)[2i]   = sin(t / 10000^(2i / dim))
//   pe(t)[2i+1] = cos(t / 10000^(2i / dim))
// Rows are precomputed once and the table grows on demand; lookups hand out
// copies so concurrent callers never observe a reallocation.
class SinusoidalTable {
 public:
  explicit SinusoidalTable(int dim) : dim_(dim) {}

  // First `t_count` encoding rows, shape t_count x dim.
  Matrix rows(int t_count);

  // x[t] += pe(t), in place.
  void add_to(Matrix& x);

  int dim() const { return dim_; }

  // Process-wide shared table for a given width.
  static SinusoidalTable& shared(int dim);

 private:
  void ensure(int t_count);

  int dim_;
  Matrix table_;
  std::mutex mutex_;
};

}  // namespace vt
