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

#include "parvoc/quantize.h"

#include <cmath>

#include "parvoc/tensor.h"

namespace parvoc {
namespace {

constexpr double kMu = 255.0;
const double kLogMuPlus1 = std::log(256.0);

}  // namespace

uint8_t MuLawEncodeSample(float x) {
  const double xs = static_cast<double>(x);
  const double mag = std::log1p(kMu * std::fabs(xs)) / kLogMuPlus1;
  const double y = xs >= 0.0 ? mag : -mag;
  const int c = static_cast<int>(std::floor((y + 1.0) * 0.5 * 256.0));
  if (c < 0) return 0;
  if (c > 255) return 255;
  return static_cast<uint8_t>(c);
}

float MuLawDecodeSample(uint8_t c) {
  const double y = (2.0 * c + 1.0) / 256.0 - 1.0;
  const double mag = (std::pow(256.0, std::fabs(y)) - 1.0) / kMu;
  return static_cast<float>(y >= 0.0 ? mag : -mag);
}

std::vector<uint8_t> MuLawEncode(const std::vector<float>& x) {
  std::vector<uint8_t> out(x.size());
  for (size_t i = 0; i < x.size(); ++i) out[i] = MuLawEncodeSample(x[i]);
  return out;
}

std::vector<float> MuLawDecode(const std::vector<uint8_t>& codes) {
  // 256 distinct values; table once, then gather.
  float table[256];
  for (int c = 0; c < 256; ++c) table[c] = MuLawDecodeSample(static_cast<uint8_t>(c));
  std::vector<float> out(codes.size());
  for (size_t i = 0; i < codes.size(); ++i) out[i] = table[codes[i]];
  return out;
}

int ClassBit(int cls, int plane) {
  if (cls < 0 || cls > 255) throw Error("ClassBit: class out of range");
  if (plane < 1 || plane > 3) throw Error("ClassBit: plane must be 1..3");
  return (cls >> (8 - plane)) & 1;
}

BitPlanes BitPlanesOf(const std::vector<uint8_t>& codes) {
  BitPlanes bp;
  for (int p = 0; p < 3; ++p) bp.planes[p].resize(codes.size());
  for (size_t i = 0; i < codes.size(); ++i) {
    const int c = codes[i];
    bp.planes[0][i] = static_cast<float>((c >> 7) & 1);
    bp.planes[1][i] = static_cast<float>((c >> 6) & 1);
    bp.planes[2][i] = static_cast<float>((c >> 5) & 1);
  }
  return bp;
}

}  // namespace parvoc
