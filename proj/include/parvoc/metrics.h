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

// Objective evaluation of synthesized speech against a reference: mel
// cepstral distortion over a DTW alignment, F0 RMSE on frames voiced in both
// signals, and the voiced/unvoiced disagreement rate.  The extractors here
// are frozen conventions; absolute numbers are only comparable to other
// numbers from this module.

#ifndef PARVOC_METRICS_H_
#define PARVOC_METRICS_H_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "parvoc/tensor.h"

namespace parvoc {

// Pitch track at the feature hop (200 samples).  Frames are taken only where
// the full analysis window fits, so short signals can yield zero frames.
struct F0Track {
  std::vector<float> f0_hz;      // 0 where unvoiced
  std::vector<uint8_t> voiced;   // 0/1, same length
};

// Normalized-autocorrelation pitch detector, search range 60..400 Hz.
// A frame is voiced when the best normalized peak reaches 0.3 and the frame
// has non-negligible energy.  Silence produces no voiced frames.
F0Track TrackF0(const std::vector<float>& x, int sample_rate);

// Mel cepstra for distortion measurement: DCT-II of the natural-log mel
// spectrogram, coefficients 1..24 (c0 excluded), frame-major [frames, 24].
Tensor MelCepstra(const std::vector<float>& x, int sample_rate);

// Symmetric dynamic time warping over frame-major feature matrices with
// Euclidean local cost.  Returns the aligned (row of a, row of b) pairs in
// path order, start to end.
std::vector<std::pair<int, int>> DtwPath(const Tensor& a, const Tensor& b);

// Mean aligned-pair Euclidean distance scaled by 10*sqrt(2)/ln(10).
double McdFromPath(const Tensor& a, const Tensor& b,
                   const std::vector<std::pair<int, int>>& path);

// Percentage of positions where the flags disagree; lengths must match.
double VuvErrorPercent(const std::vector<uint8_t>& a,
                       const std::vector<uint8_t>& b);

struct UttEval {
  double mcd = 0.0;            // dB-like
  double f0_rmse_hz = 0.0;     // over frames voiced in both, 0 if none
  double vuv_error_pct = 0.0;
  int aligned_frames = 0;
  int voiced_pairs = 0;        // pairs entering the F0 RMSE
};

// Full comparison of one reference/generated pair at a shared sample rate.
// The cepstral DTW path also aligns the pitch tracks (truncated to the
// shorter track when window coverage differs).
UttEval EvaluatePair(const std::vector<float>& ref,
                     const std::vector<float>& gen, int sample_rate);

struct EvalReport {
  std::vector<std::pair<std::string, UttEval>> utterances;

  // Unweighted means over utterances; zero when empty.
  double MeanMcd() const;
  double MeanF0Rmse() const;   // over utterances with voiced pairs
  double MeanVuvError() const;
};

// Human-readable multi-line summary.
std::string FormatReport(const EvalReport& report);

// key=value lines (overall means plus per-utterance entries).
void SaveReport(const EvalReport& report, const std::string& path);

}  // namespace parvoc

#endif  // PARVOC_METRICS_H_
