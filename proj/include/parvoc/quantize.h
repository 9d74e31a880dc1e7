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

#ifndef PARVOC_QUANTIZE_H_
#define PARVOC_QUANTIZE_H_

#include <cstdint>
#include <vector>

namespace parvoc {

// Mu-law companding to 256 classes (mu = 255).  A sample of exactly 0.0
// lands in class 128, the first code of the non-negative half.
uint8_t MuLawEncodeSample(float x);

// Midpoint decode: class c maps back to the companded-domain center
// (2c + 1) / 256 - 1 before expansion.
float MuLawDecodeSample(uint8_t c);

std::vector<uint8_t> MuLawEncode(const std::vector<float>& x);
std::vector<float> MuLawDecode(const std::vector<uint8_t>& codes);

// Bit of a class code, most significant first: plane 1 is bit 7 (so plane 1
// is the sign-ish "upper half" flag c > 127), plane 2 bit 6, plane 3 bit 5.
int ClassBit(int cls, int plane);

// The three most significant bit planes of a code sequence, as 0/1 floats
// ready to be used as network targets.  planes[p-1] is plane p.
struct BitPlanes {
  std::vector<float> planes[3];
};
BitPlanes BitPlanesOf(const std::vector<uint8_t>& codes);

}  // namespace parvoc

#endif  // PARVOC_QUANTIZE_H_
