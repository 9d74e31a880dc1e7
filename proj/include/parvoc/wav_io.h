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

#ifndef PARVOC_WAV_IO_H_
#define PARVOC_WAV_IO_H_

#include <string>
#include <vector>

namespace parvoc {

struct WavData {
  std::vector<float> samples;  // in [-1, 1), scaled by 1/32768
  int sample_rate = 0;
};

// Reads a RIFF WAVE file.  Only 16-bit PCM mono is accepted; anything else
// (compressed formats, multi-channel, 8/24/32-bit) is a hard error, as are
// truncated or malformed chunk structures.  Unknown chunks are skipped.
WavData ReadWav16Mono(const std::string& path);

// Writes 16-bit PCM mono.  Samples are clamped to [-1, 1] and scaled by
// 32767 with round-to-nearest.
void WriteWav16Mono(const std::string& path, const std::vector<float>& samples,
                    int sample_rate);

}  // namespace parvoc

#endif  // PARVOC_WAV_IO_H_
