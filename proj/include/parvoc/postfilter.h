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

// Learned sampling head and its losses.  The post filter turns a 256-way
// posterior over quantized amplitudes into a continuous subband sample, and
// is trained with a waveform detail loss plus a band-limited multi-resolution
// spectral loss while the main network stays frozen.

#ifndef PARVOC_POSTFILTER_H_
#define PARVOC_POSTFILTER_H_

#include <cstdint>
#include <vector>

#include "parvoc/autodiff.h"
#include "parvoc/filterbank.h"
#include "parvoc/model.h"

namespace parvoc {

// Loss combination weights; the training objective is
// detail_weight * detail + spectral_weight * spectral.
inline constexpr float kPfDetailWeight = 100.0f;
inline constexpr float kPfSpectralWeight = 0.1f;

struct StftSet {
  int fft;
  int hop;
  int win;
};

struct StftLossConfig {
  std::vector<StftSet> sets = {{512, 50, 240},
                               {1024, 120, 600},
                               {2048, 240, 1200}};
  // Bins at or below this frequency enter the loss raw; bins above it are
  // collapsed into frequency- and time-pooled summaries.
  double band_limit_hz = 8000.0;
  int sample_rate = 24000;

  void Validate() const;
};

// Post filter forward pass: posterior [., n_classes, T] and ungrouped
// conditioning f [., cond_ch, T] to a subband signal [., 1, T] in (-1, 1).
Val PfApply(Ctx ctx, Binder& bind, const PostFilterP& pf, const Val& posterior,
            const Val& f);

// Differentiable filter-bank reconstruction of a subband stack [n_bands, T]
// (or [B, n_bands, T]).  Output is the full-band signal with the filter
// cascade delay removed; length is min(source_len, available support), or
// everything past the delay when source_len < 0.
Val SynthesizeVal(Ctx ctx, const PqmfBank& bank, const Val& bands,
                  int64_t source_len);

// Mean absolute error between predicted and reference subbands plus the MAE
// of their full-band reconstructions, averaged over the n_bands + 1 terms.
// Both reconstructions run through the same synthesis operator so the
// compared signals align sample for sample.
Val DetailLoss(Ctx ctx, const PqmfBank& bank, const Val& pred_bands,
               const Tensor& ref_bands);

// Band-limited multi-resolution STFT loss: mean over parameter sets of
// [spectral convergence + log-magnitude L1], where high-band bins are
// replaced by pooled summaries.  `ref` is the reference waveform [1, L];
// gradients flow only through `pred`.
Val SpectralLoss(Ctx ctx, const Val& pred, const Tensor& ref,
                 const StftLossConfig& cfg);

// detail_weight * detail + spectral_weight * spectral.
Val PfTotalLoss(Ctx ctx, const Val& detail, const Val& spectral);

}  // namespace parvoc

#endif  // PARVOC_POSTFILTER_H_
