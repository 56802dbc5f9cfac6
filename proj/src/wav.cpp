// Copyright 2026 The vtrescore Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#include "vt/wav.hpp"

#include <cstring>
#include <fstream>

namespace vt {
namespace {

uint32_t read_u32(std::ifstream& f) {
  uint8_t b[4];
  f.read(reinterpret_cast<char*>(b), 4);
  return uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) | (uint32_t(b[3]) << 24);
}

uint16_t read_u16(std::ifstream& f) {
  uint8_t b[2];
  f.read(reinterpret_cast<char*>(b), 2);
  return uint16_t(b[0]) | (uint16_t(b[1]) << 8);
}

void write_u32(std::ofstream& f, uint32_t v) {
  const uint8_t b[4] = {uint8_t(v), uint8_t(v >> 8), uint8_t(v >> 16), uint8_t(v >> 24)};
  f.write(reinterpret_cast<const char*>(b), 4);
}

void write_u16(std::ofstream& f, uint16_t v) {
  const uint8_t b[2] = {uint8_t(v), uint8_t(v >> 8)};
  f.write(reinterpret_cast<const char*>(b), 2);
}

}  // namespace

AudioBuffer read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open wav file: " + path);
  char tag[4];
  f.read(tag, 4);
  if (std::memcmp(tag, "RIFF", 4) != 0) throw DataError("not a RIFF file: " + path);
  read_u32(f);  // riff size
  f.read(tag, 4);
  if (std::memcmp(tag, "WAVE", 4) != 0) throw DataError("not a WAVE file: " + path);

  AudioBuffer out;
  bool have_fmt = false;
  uint16_t channels = 0, bits = 0;
  while (f.read(tag, 4)) {
    const uint32_t size = read_u32(f);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      const uint16_t format = read_u16(f);
      channels = read_u16(f);
      out.sample_rate = static_cast<int>(read_u32(f));
      read_u32(f);  // byte rate
      read_u16(f);  // block align
      bits = read_u16(f);
      if (size > 16) f.seekg(size - 16, std::ios::cur);
      if (format != 1) throw DataError("wav: only PCM supported: " + path);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (!have_fmt) throw DataError("wav: data before fmt chunk: " + path);
      if (channels != 1) throw DataError("wav: mono required: " + path);
      if (bits != 16) throw DataError("wav: 16-bit samples required: " + path);
      const size_t n = size / 2;
      out.samples.resize(n);
      std::vector<int16_t> raw(n);
      f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(size));
      if (!f) throw DataError("wav: truncated data chunk: " + path);
      for (size_t i = 0; i < n; ++i) out.samples[i] = raw[i] / 32768.0;
      return out;
    } else {
      f.seekg(size + (size & 1), std::ios::cur);
    }
  }
  throw DataError("wav: no data chunk: " + path);
}

void write_wav(const std::string& path, const AudioBuffer& audio) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write wav file: " + path);
  const uint32_t n = static_cast<uint32_t>(audio.samples.size());
  const uint32_t data_bytes = n * 2;
  f.write("RIFF", 4);
  write_u32(f, 36 + data_bytes);
  f.write("WAVE", 4);
  f.write("fmt ", 4);
  write_u32(f, 16);
  write_u16(f, 1);  // PCM
  write_u16(f, 1);  // mono
  write_u32(f, static_cast<uint32_t>(audio.sample_rate));
  write_u32(f, static_cast<uint32_t>(audio.sample_rate * 2));
  write_u16(f, 2);
  write_u16(f, 16);
  f.write("data", 4);
  write_u32(f, data_bytes);
  for (uint32_t i = 0; i < n; ++i) {
    const double clamped = std::clamp(audio.samples[i], -1.0, 1.0);
    const int16_t s = static_cast<int16_t>(std::lround(clamped * 32767.0));
    write_u16(f, static_cast<uint16_t>(s));
  }
  if (!f) throw DataError("short write to wav file: " + path);
}

}  // namespace vt
