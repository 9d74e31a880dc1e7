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

#ifndef PARVOC_FILTERBANK_H_
#define PARVOC_FILTERBANK_H_

#include <cstdint>
#include <vector>

#include "parvoc/tensor.h"

namespace parvoc {

// Cosine-modulated pseudo-QMF bank.  Band k covers frequencies around
// (k + 0.5) * pi / n_bands, so band 0 is the lowest band.  Filters are kept
// in double; signals cross the bank as floats.
struct PqmfBank {
  int n_bands = 0;
  int taps = 0;
  std::vector<double> prototype;
  std::vector<std::vector<double>> analysis;   // h_k, length taps
  std::vector<std::vector<double>> synthesis;  // g_k, length taps

  // Group delay of the analysis/synthesis cascade in samples.
  int Delay() const { return taps - 1; }
};

// Designs the bank: Kaiser-windowed sinc prototype, cutoff tuned by a
// golden-section search that maximizes round-trip SNR on a fixed noise
// probe, then cosine modulation with alternating +-pi/4 phases.  n_bands = 1
// degenerates to a pure delay (unit impulse prototype).
PqmfBank DesignPqmf(int n_bands, int taps = 127, double kaiser_beta = 9.0);

// Subband-domain signal.  bands is [n_bands, t_sub]; t_sub * n_bands covers
// the source plus a filter-length tail guard added at ingestion so that a
// round trip loses nothing at the edges.  source_len is the original sample
// count before that padding.
struct SubbandStack {
  Tensor bands;
  int64_t source_len = 0;
};

// Filters and decimates.  x may have any length >= 1.
SubbandStack Analyze(const PqmfBank& bank, const std::vector<float>& x);

// Upsamples, filters, sums, and trims the cascade delay, returning exactly
// source_len samples.
std::vector<float> Synthesize(const PqmfBank& bank, const SubbandStack& s);

// Convenience for design and tests: SNR in dB of Synthesize(Analyze(x))
// against x.
double RoundTripSnrDb(const PqmfBank& bank, const std::vector<float>& x);

// Synthesis filters packed for ConvT1d ([n_bands, 1, taps], already scaled
// by n_bands), so synthesis can run inside the differentiable graph:
// ConvT1d(bands, w, {}, stride = n_bands, pad = 0) followed by a time slice
// [Delay(), Delay() + source_len).
Tensor SynthesisFilterTensor(const PqmfBank& bank);

}  // namespace parvoc

#endif  // PARVOC_FILTERBANK_H_
