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

#ifndef PARVOC_KERNELS_H_
#define PARVOC_KERNELS_H_

namespace parvoc {
namespace kernels {

// Dilated 1-D convolution with "same" zero padding.
//   y[o][t] = b[o] + sum_i sum_k w[o][i][k] * xpad[i][t + k*dil]
// where xpad is x padded by ((kw-1)/2)*dil zeros on both sides.  Arrays are
// row-major contiguous: x is [ci][tn], w is [co][ci][kw], y is [co][tn].
// b may be null.  Overwrites y.  Not thread safe (shared scratch buffers);
// the whole pipeline is single threaded by design.
void Conv1dForward(float* y, const float* x, const float* w, const float* b,
                   int co, int ci, int kw, int tn, int dil);

// dx[i][t] for the convolution above, given dy = dL/dy.  Overwrites dx.
void Conv1dGradInput(float* dx, const float* dy, const float* w, int co,
                     int ci, int kw, int tn, int dil);

// Accumulates dL/dw and dL/db into dw / db (callers zero them first, so one
// zeroing can span a batch loop).  db may be null.
void Conv1dGradParams(float* dw, float* db, const float* dy, const float* x,
                      int co, int ci, int kw, int tn, int dil);

// Transposed 1-D convolution (fractional stride upsampling).
//   y[o][t*stride + k - pad] += w[i][o][k] * x[i][t]
// x is [ci][tn], w is [ci][co][kw], y is [co][to] with
// to = (tn-1)*stride + kw - 2*pad.  b may be null.  Overwrites y.
void ConvT1dForward(float* y, const float* x, const float* w, const float* b,
                    int ci, int co, int kw, int tn, int stride, int pad);

void ConvT1dGradInput(float* dx, const float* dy, const float* w, int ci,
                      int co, int kw, int tn, int stride, int pad);

// Accumulates into dw / db.  db may be null.
void ConvT1dGradParams(float* dw, float* db, const float* dy, const float* x,
                       int ci, int co, int kw, int tn, int stride, int pad);

}  // namespace kernels
}  // namespace parvoc

#endif  // PARVOC_KERNELS_H_
