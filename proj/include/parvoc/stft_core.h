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

#ifndef PARVOC_STFT_CORE_H_
#define PARVOC_STFT_CORE_H_

#include <cmath>
#include <complex>
#include <vector>

#include "parvoc/tensor.h"

namespace parvoc {

// Framing shared by the feature extractor and the spectral loss: frames are
// centered at t * hop via reflection padding of win / 2, windowed with a
// periodic Hann window, and zero-padded at the tail up to the fft size.
struct StftPlan {
  int fft = 0;
  int hop = 0;
  int win = 0;
  int len = 0;
  int pad = 0;
  int frames = 0;
  int bins = 0;
  std::vector<double> window;
};

// Reflection index without edge repetition, folded until in range.
inline int ReflectIndex(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

inline StftPlan MakeStftPlan(int fft, int hop, int win, int len) {
  if (fft < 2 || (fft & (fft - 1)) != 0) {
    throw Error("StftPlan: fft size must be a power of two");
  }
  if (win < 1 || win > fft) {
    throw Error("StftPlan: window must be in [1, fft]");
  }
  if (hop < 1) throw Error("StftPlan: hop must be >= 1");
  if (len < 2) throw Error("StftPlan: signal too short for reflection padding");
  StftPlan p;
  p.fft = fft;
  p.hop = hop;
  p.win = win;
  p.len = len;
  p.pad = win / 2;
  p.frames = (len + hop - 1) / hop;
  p.bins = fft / 2 + 1;
  p.window.resize(win);
  const double kTwoPi = 6.283185307179586476925286766559;
  for (int n = 0; n < win; ++n) {
    p.window[n] = 0.5 - 0.5 * std::cos(kTwoPi * n / win);
  }
  return p;
}

// Loads frame `f` of signal x into a windowed, zero-padded complex buffer.
inline void LoadStftFrame(std::vector<std::complex<double>>& buf,
                          const float* x, const StftPlan& p, int f) {
  buf.assign(p.fft, {0.0, 0.0});
  const int start = f * p.hop;
  for (int n = 0; n < p.win; ++n) {
    const int idx = ReflectIndex(start + n - p.pad, p.len);
    buf[n] = {static_cast<double>(x[idx]) * p.window[n], 0.0};
  }
}

}  // namespace parvoc

#endif  // PARVOC_STFT_CORE_H_
