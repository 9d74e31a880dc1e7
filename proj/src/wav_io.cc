/*
 * Copyright 2026 The parvoc Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "parvoc/wav_io.h"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "parvoc/tensor.h"

namespace parvoc {
namespace {

uint32_t ReadU32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) |
         (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t ReadU16(const uint8_t* p) {
  return static_cast<uint16_t>(p[0]) | (static_cast<uint16_t>(p[1]) << 8);
}

void PutU32(std::string& s, uint32_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
  s.push_back(static_cast<char>((v >> 16) & 0xff));
  s.push_back(static_cast<char>((v >> 24) & 0xff));
}

void PutU16(std::string& s, uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
}

}  // namespace

WavData ReadWav16Mono(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("ReadWav16Mono: cannot open " + path);
  std::vector<uint8_t> raw((std::istreambuf_iterator<char>(f)),
                           std::istreambuf_iterator<char>());
  if (raw.size() < 44 || std::memcmp(raw.data(), "RIFF", 4) != 0 ||
      std::memcmp(raw.data() + 8, "WAVE", 4) != 0) {
    throw Error("ReadWav16Mono: " + path + " is not a RIFF WAVE file");
  }

  bool have_fmt = false;
  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t sample_rate = 0;
  const uint8_t* data = nullptr;
  uint32_t data_len = 0;

  size_t pos = 12;
  while (pos + 8 <= raw.size()) {
    const char* id = reinterpret_cast<const char*>(raw.data() + pos);
    const uint32_t len = ReadU32(raw.data() + pos + 4);
    const size_t body = pos + 8;
    if (body + len > raw.size()) {
      throw Error("ReadWav16Mono: truncated chunk in " + path);
    }
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (len < 16) throw Error("ReadWav16Mono: short fmt chunk in " + path);
      format = ReadU16(raw.data() + body);
      channels = ReadU16(raw.data() + body + 2);
      sample_rate = ReadU32(raw.data() + body + 4);
      bits = ReadU16(raw.data() + body + 14);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data = raw.data() + body;
      data_len = len;
    }
    pos = body + len + (len & 1);  // chunks are word aligned
  }

  if (!have_fmt || data == nullptr) {
    throw Error("ReadWav16Mono: missing fmt or data chunk in " + path);
  }
  if (format != 1) {
    throw Error("ReadWav16Mono: " + path +
                " is not PCM (format tag " + std::to_string(format) + ")");
  }
  if (channels != 1) {
    throw Error("ReadWav16Mono: " + path + " has " + std::to_string(channels) +
                " channels, expected mono");
  }
  if (bits != 16) {
    throw Error("ReadWav16Mono: " + path + " is " + std::to_string(bits) +
                "-bit, expected 16-bit");
  }

  WavData out;
  out.sample_rate = static_cast<int>(sample_rate);
  const uint32_t n = data_len / 2;
  out.samples.resize(n);
  for (uint32_t i = 0; i < n; ++i) {
    const int16_t v =
        static_cast<int16_t>(ReadU16(data + static_cast<size_t>(i) * 2));
    out.samples[i] = static_cast<float>(v) / 32768.0f;
  }
  return out;
}

void WriteWav16Mono(const std::string& path, const std::vector<float>& samples,
                    int sample_rate) {
  if (sample_rate <= 0) throw Error("WriteWav16Mono: bad sample rate");
  std::string buf;
  buf.reserve(44 + samples.size() * 2);
  const uint32_t data_len = static_cast<uint32_t>(samples.size() * 2);
  buf.append("RIFF");
  PutU32(buf, 36 + data_len);
  buf.append("WAVE");
  buf.append("fmt ");
  PutU32(buf, 16);
  PutU16(buf, 1);  // PCM
  PutU16(buf, 1);  // mono
  PutU32(buf, static_cast<uint32_t>(sample_rate));
  PutU32(buf, static_cast<uint32_t>(sample_rate) * 2);  // byte rate
  PutU16(buf, 2);                                       // block align
  PutU16(buf, 16);                                      // bits
  buf.append("data");
  PutU32(buf, data_len);
  for (float s : samples) {
    float c = s;
    if (c > 1.0f) c = 1.0f;
    if (c < -1.0f) c = -1.0f;
    const int v = static_cast<int>(std::lround(c * 32767.0));
    PutU16(buf, static_cast<uint16_t>(static_cast<int16_t>(v)));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("WriteWav16Mono: cannot open " + path + " for writing");
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw Error("WriteWav16Mono: write failed for " + path);
}

}  // namespace parvoc
