// Copyright 2026 The vtrescore Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <string>

#include "vt/frontend.hpp"

namespace vt {

// 16-bit PCM mono WAV. Anything else (stereo, float, compressed) is rejected
// with a DataError.
AudioBuffer read_wav(const std::string& path);
void write_wav(const std::string& path, const AudioBuffer& audio);

}  // namespace vt
