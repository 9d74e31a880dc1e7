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

#include "parvoc/kernels.h"

#include <algorithm>
#include <cstring>
#include <vector>

namespace parvoc {
namespace kernels {
namespace {

// Register block: kMr output channels by kNr time steps.  kNr floats fit in
// two 256-bit vectors, so the accumulator tile stays in registers under
// -march=native while leaving room for the broadcast weight and input loads.
constexpr int kMr = 4;
constexpr int kNr = 16;

// Cache tile over time.  Every output-channel block sweeps the same input
// rows, so the swept span must stay resident across the whole sweep: at 128
// channels, 2048 steps is 1 MB, which fits mid-level cache.  Without this
// tiling the per-sample cost grows with sequence length once the input
// spills, and generation throughput stops being length-independent.
constexpr int kTimeTile = 2048;
static_assert(kTimeTile % kNr == 0, "tile must be a whole register block");

// Shared scratch (single-threaded library).
std::vector<float>& PadScratch() {
  static std::vector<float> buf;
  return buf;
}
std::vector<float>& WtScratch() {
  static std::vector<float> buf;
  return buf;
}

// Returns x zero-padded by `pad` on both sides of every row, or x itself
// when pad is zero.  Row stride of the result is tn + 2*pad.
const float* PaddedRows(const float* x, int rows, int tn, int pad) {
  if (pad == 0) return x;
  std::vector<float>& buf = PadScratch();
  const size_t stride = static_cast<size_t>(tn) + 2 * pad;
  buf.assign(static_cast<size_t>(rows) * stride, 0.0f);
  for (int r = 0; r < rows; ++r) {
    std::memcpy(buf.data() + r * stride + pad, x + static_cast<size_t>(r) * tn,
                sizeof(float) * tn);
  }
  return buf.data();
}

}  // namespace

void Conv1dForward(float* y, const float* x, const float* w, const float* b,
                   int co, int ci, int kw, int tn, int dil) {
  const int pad = ((kw - 1) / 2) * dil;
  const float* xp = PaddedRows(x, ci, tn, pad);
  const size_t xstride = static_cast<size_t>(tn) + 2 * pad;

  for (int tb = 0; tb < tn; tb += kTimeTile) {
    const int te = std::min(tn, tb + kTimeTile);
    int o = 0;
    for (; o + kMr <= co; o += kMr) {
      const float* w0 = w + static_cast<size_t>(o) * ci * kw;
      const float* w1 = w0 + static_cast<size_t>(ci) * kw;
      const float* w2 = w1 + static_cast<size_t>(ci) * kw;
      const float* w3 = w2 + static_cast<size_t>(ci) * kw;
      float* y0 = y + static_cast<size_t>(o) * tn;
      float* y1 = y0 + tn;
      float* y2 = y1 + tn;
      float* y3 = y2 + tn;
      const float b0 = b ? b[o] : 0.0f;
      const float b1 = b ? b[o + 1] : 0.0f;
      const float b2 = b ? b[o + 2] : 0.0f;
      const float b3 = b ? b[o + 3] : 0.0f;

      int t = tb;
      for (; t + kNr <= te; t += kNr) {
        float a0[kNr], a1[kNr], a2[kNr], a3[kNr];
        for (int j = 0; j < kNr; ++j) {
          a0[j] = b0;
          a1[j] = b1;
          a2[j] = b2;
          a3[j] = b3;
        }
        for (int i = 0; i < ci; ++i) {
          const float* xrow = xp + i * xstride + t;
          for (int k = 0; k < kw; ++k) {
            const float* xs = xrow + k * dil;
            const size_t wo = static_cast<size_t>(i) * kw + k;
            const float f0 = w0[wo];
            const float f1 = w1[wo];
            const float f2 = w2[wo];
            const float f3 = w3[wo];
            for (int j = 0; j < kNr; ++j) {
              const float xv = xs[j];
              a0[j] += f0 * xv;
              a1[j] += f1 * xv;
              a2[j] += f2 * xv;
              a3[j] += f3 * xv;
            }
          }
        }
        for (int j = 0; j < kNr; ++j) {
          y0[t + j] = a0[j];
          y1[t + j] = a1[j];
          y2[t + j] = a2[j];
          y3[t + j] = a3[j];
        }
      }
      // Time remainder (last tile only).
      for (; t < te; ++t) {
        float a0 = b0, a1 = b1, a2 = b2, a3 = b3;
        for (int i = 0; i < ci; ++i) {
          const float* xrow = xp + i * xstride + t;
          const size_t wb = static_cast<size_t>(i) * kw;
          for (int k = 0; k < kw; ++k) {
            const float xv = xrow[k * dil];
            a0 += w0[wb + k] * xv;
            a1 += w1[wb + k] * xv;
            a2 += w2[wb + k] * xv;
            a3 += w3[wb + k] * xv;
          }
        }
        y0[t] = a0;
        y1[t] = a1;
        y2[t] = a2;
        y3[t] = a3;
      }
    }
    // Output-channel remainder.
    for (; o < co; ++o) {
      const float* wrow = w + static_cast<size_t>(o) * ci * kw;
      float* yrow = y + static_cast<size_t>(o) * tn;
      const float bias = b ? b[o] : 0.0f;
      for (int t = tb; t < te; ++t) {
        float acc = bias;
        for (int i = 0; i < ci; ++i) {
          const float* xrow = xp + i * xstride + t;
          const size_t wb = static_cast<size_t>(i) * kw;
          for (int k = 0; k < kw; ++k) acc += wrow[wb + k] * xrow[k * dil];
        }
        yrow[t] = acc;
      }
    }
  }
}

void Conv1dGradInput(float* dx, const float* dy, const float* w, int co,
                     int ci, int kw, int tn, int dil) {
  // dx is a same-padded convolution of dy with the kernel transposed over
  // channels and flipped over taps, so the forward microkernel does the work.
  std::vector<float>& wt = WtScratch();
  wt.resize(static_cast<size_t>(ci) * co * kw);
  for (int i = 0; i < ci; ++i) {
    for (int o = 0; o < co; ++o) {
      for (int k = 0; k < kw; ++k) {
        wt[(static_cast<size_t>(i) * co + o) * kw + k] =
            w[(static_cast<size_t>(o) * ci + i) * kw + (kw - 1 - k)];
      }
    }
  }
  Conv1dForward(dx, dy, wt.data(), nullptr, ci, co, kw, tn, dil);
}

void Conv1dGradParams(float* dw, float* db, const float* dy, const float* x,
                      int co, int ci, int kw, int tn, int dil) {
  const int pad = ((kw - 1) / 2) * dil;
  const float* xp = PaddedRows(x, ci, tn, pad);
  const size_t xstride = static_cast<size_t>(tn) + 2 * pad;

  for (int o = 0; o < co; ++o) {
    const float* dyr = dy + static_cast<size_t>(o) * tn;
    if (db) {
      double acc = 0.0;
      for (int t = 0; t < tn; ++t) acc += dyr[t];
      db[o] += static_cast<float>(acc);
    }
    for (int i = 0; i < ci; ++i) {
      for (int k = 0; k < kw; ++k) {
        // Lane-blocked dot product; lanes are combined and carried in double.
        const float* xs = xp + i * xstride + k * dil;
        double acc = 0.0;
        int t = 0;
        for (; t + kNr <= tn; t += kNr) {
          float lanes[kNr];
          for (int j = 0; j < kNr; ++j) lanes[j] = dyr[t + j] * xs[t + j];
          double block = 0.0;
          for (int j = 0; j < kNr; ++j) block += lanes[j];
          acc += block;
        }
        for (; t < tn; ++t) acc += static_cast<double>(dyr[t]) * xs[t];
        dw[(static_cast<size_t>(o) * ci + i) * kw + k] +=
            static_cast<float>(acc);
      }
    }
  }
}

void ConvT1dForward(float* y, const float* x, const float* w, const float* b,
                    int ci, int co, int kw, int tn, int stride, int pad) {
  const int to = (tn - 1) * stride + kw - 2 * pad;
  for (int o = 0; o < co; ++o) {
    float* yrow = y + static_cast<size_t>(o) * to;
    const float bias = b ? b[o] : 0.0f;
    for (int t = 0; t < to; ++t) yrow[t] = bias;
  }
  for (int i = 0; i < ci; ++i) {
    const float* xrow = x + static_cast<size_t>(i) * tn;
    for (int o = 0; o < co; ++o) {
      const float* wrow = w + (static_cast<size_t>(i) * co + o) * kw;
      float* yrow = y + static_cast<size_t>(o) * to;
      for (int t = 0; t < tn; ++t) {
        const float xv = xrow[t];
        if (xv == 0.0f) continue;
        const int base = t * stride - pad;
        const int k0 = base < 0 ? -base : 0;
        const int k1 = base + kw > to ? to - base : kw;
        float* ys = yrow + base;
        for (int k = k0; k < k1; ++k) ys[k] += wrow[k] * xv;
      }
    }
  }
}

void ConvT1dGradInput(float* dx, const float* dy, const float* w, int ci,
                      int co, int kw, int tn, int stride, int pad) {
  const int to = (tn - 1) * stride + kw - 2 * pad;
  for (int i = 0; i < ci; ++i) {
    float* dxr = dx + static_cast<size_t>(i) * tn;
    for (int t = 0; t < tn; ++t) {
      const int base = t * stride - pad;
      const int k0 = base < 0 ? -base : 0;
      const int k1 = base + kw > to ? to - base : kw;
      double acc = 0.0;
      for (int o = 0; o < co; ++o) {
        const float* wrow = w + (static_cast<size_t>(i) * co + o) * kw;
        const float* dys = dy + static_cast<size_t>(o) * to + base;
        for (int k = k0; k < k1; ++k) acc += static_cast<double>(wrow[k]) * dys[k];
      }
      dxr[t] = static_cast<float>(acc);
    }
  }
}

void ConvT1dGradParams(float* dw, float* db, const float* dy, const float* x,
                       int ci, int co, int kw, int tn, int stride, int pad) {
  const int to = (tn - 1) * stride + kw - 2 * pad;
  if (db) {
    for (int o = 0; o < co; ++o) {
      const float* dyr = dy + static_cast<size_t>(o) * to;
      double acc = 0.0;
      for (int t = 0; t < to; ++t) acc += dyr[t];
      db[o] += static_cast<float>(acc);
    }
  }
  for (int i = 0; i < ci; ++i) {
    const float* xrow = x + static_cast<size_t>(i) * tn;
    for (int o = 0; o < co; ++o) {
      const float* dyr = dy + static_cast<size_t>(o) * to;
      float* dwr = dw + (static_cast<size_t>(i) * co + o) * kw;
      for (int k = 0; k < kw; ++k) {
        double acc = 0.0;
        for (int t = 0; t < tn; ++t) {
          const int pos = t * stride + k - pad;
          if (pos >= 0 && pos < to) {
            acc += static_cast<double>(xrow[t]) * dyr[pos];
          }
        }
        dwr[k] += static_cast<float>(acc);
      }
    }
  }
}

}  // namespace kernels
}  // namespace parvoc
