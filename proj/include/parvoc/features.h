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

#ifndef PARVOC_FEATURES_H_
#define PARVOC_FEATURES_H_

#include <string>
#include <vector>

#include "parvoc/tensor.h"

namespace parvoc {

struct StftConfig {
  int fft = 1024;
  int hop = 200;
  int win = 800;
};

// Magnitude spectrogram, frame-major: [frames, fft/2 + 1] with
// frames = ceil(len / hop).  Frames are centered via reflection padding.
Tensor StftMagnitudeFrames(const std::vector<float>& x, const StftConfig& cfg);

// Triangular mel filters, [n_mels, fft/2 + 1].  Mel scale is
// 2595 * log10(1 + f / 700); band edges run from 0 Hz to Nyquist, and each
// triangle peaks at 1.
Tensor MelFilterbank(int sample_rate, int fft, int n_mels);

struct MelSpectrogram {
  Tensor data;  // [frames, n_mels], natural log of floored mel magnitudes
  int sample_rate = 0;
  int hop = 0;
};

// log(max(mel . |STFT|, 1e-5)) with natural log.
MelSpectrogram ComputeMel(const std::vector<float>& x, int sample_rate,
                          const StftConfig& cfg, int n_mels = 80);

// Feature file format: "PVFE" magic, then version, frames, dims,
// sample_rate, hop as little-endian uint32, then frames*dims float32
// row-major (one frame per row).
void SavePvfe(const std::string& path, const MelSpectrogram& mel);
MelSpectrogram LoadPvfe(const std::string& path);

// [frames, bins] -> [bins, frames]; features are stored frame-major but the
// network consumes channel-major sequences.
Tensor TransposeMatrix(const Tensor& m);

}  // namespace parvoc

#endif  // PARVOC_FEATURES_H_
