// Copyright 2026 The vtrescore Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <cstdint>
#include <string>

namespace vt {

// SHA-1 of a byte string, as 40 lowercase hex characters. Used for content
// hashes in run manifests; not a security boundary.
std::string sha1_hex(const void* data, size_t len);
std::string sha1_hex(const std::string& s);

// Hash of a file's contents; throws DataError if unreadable.
std::string sha1_file(const std::string& path);

}  // namespace vt
