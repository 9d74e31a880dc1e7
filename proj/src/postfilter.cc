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

#include "parvoc/postfilter.h"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace parvoc {
namespace {

Val Constant(Ctx ctx, Tensor t) {
  auto sp = std::make_shared<const Tensor>(std::move(t));
  return ctx.Recording() ? ctx.tape->Leaf(sp, false) : Val{sp, -1};
}

// Magnitude matrix split for the band-limited loss: rows [0, nl) stay raw,
// rows [nl, bins) are collapsed into a frequency-pooled [1, F] summary and a
// time-pooled [nh, 1] summary.
struct PooledMag {
  Val low;   // [nl, F]
  Val row;   // [1, F], mean over the high rows
  Val col;   // [nh, 1], per-row mean over time
  bool has_high = false;
};

PooledMag PoolHighBand(Ctx ctx, const Val& mag, int nl) {
  const Tensor& m = V(mag);
  const int bins = m.shape[0];
  PooledMag out;
  if (nl >= bins) {
    out.low = mag;
    return out;
  }
  out.low = SliceCh(ctx, mag, 0, nl);
  out.row = MeanOverRows(ctx, mag, nl, bins);
  out.col = MeanOverCols(ctx, mag, nl, bins);
  out.has_high = true;
  return out;
}

Val SquaredSum(Ctx ctx, const Val& a, const Val& b) {
  Val d = Sub(ctx, a, b);
  return Sum(ctx, Mul(ctx, d, d));
}

Val SqNorm(Ctx ctx, const Val& a) { return Sum(ctx, Mul(ctx, a, a)); }

Val AbsLogDiffSum(Ctx ctx, const Val& a, const Val& b) {
  constexpr float kFloor = 1e-5f;
  Val d = Sub(ctx, LogFloor(ctx, a, kFloor), LogFloor(ctx, b, kFloor));
  return Sum(ctx, Abs(ctx, d));
}

}  // namespace

void StftLossConfig::Validate() const {
  if (sets.empty()) throw Error("StftLossConfig: needs at least one set");
  for (const StftSet& s : sets) {
    if (s.fft < 2 || (s.fft & (s.fft - 1)) != 0) {
      throw Error("StftLossConfig: fft size must be a power of two");
    }
    if (s.hop < 1 || s.win < 1 || s.win > s.fft) {
      throw Error("StftLossConfig: invalid hop or window");
    }
  }
  if (sample_rate < 1) throw Error("StftLossConfig: bad sample rate");
  if (band_limit_hz <= 0.0) throw Error("StftLossConfig: bad band limit");
}

Val PfApply(Ctx ctx, Binder& bind, const PostFilterP& pf, const Val& posterior,
            const Val& f) {
  const Tensor& p = V(posterior);
  const Tensor& fc = V(f);
  const int tp = p.Rank() == 3 ? p.shape[2] : p.shape[1];
  const int tf = fc.Rank() == 3 ? fc.shape[2] : fc.shape[1];
  if (tp != tf) {
    throw Error("PfApply: posterior has " + std::to_string(tp) +
                " steps, conditioning has " + std::to_string(tf));
  }
  Val x = Conv1d(ctx, posterior, bind(pf.in_proj.w), bind(pf.in_proj.b), 1);
  x = WnForward(ctx, bind, pf.wn, x, f);
  return Tanh(ctx, Conv1d(ctx, x, bind(pf.head.w), bind(pf.head.b), 1));
}

Val SynthesizeVal(Ctx ctx, const PqmfBank& bank, const Val& bands,
                  int64_t source_len) {
  const Tensor& b = V(bands);
  const int n = bank.n_bands;
  const int ch = b.Rank() == 3 ? b.shape[1] : b.shape[0];
  const int t_sub = b.Rank() == 3 ? b.shape[2] : b.shape[1];
  if (ch != n) {
    throw Error("SynthesizeVal: stack has " + std::to_string(ch) +
                " bands, bank expects " + std::to_string(n));
  }
  // The synthesis cascade is a transposed convolution with one column per
  // band; the filter tensor already carries the interpolation gain n.
  Val w = Constant(ctx, SynthesisFilterTensor(bank));
  Val full = ConvT1d(ctx, bands, w, Val{}, n, 0);
  const int full_len = static_cast<int>((static_cast<int64_t>(t_sub) - 1) * n +
                                        bank.taps);
  const int delay = static_cast<int>(bank.Delay());
  int64_t avail = full_len - delay;
  if (avail < 1) throw Error("SynthesizeVal: stack shorter than the delay");
  const int64_t len =
      source_len < 0 ? avail : std::min<int64_t>(source_len, avail);
  return SliceTime(ctx, full, delay, delay + static_cast<int>(len));
}

Val DetailLoss(Ctx ctx, const PqmfBank& bank, const Val& pred_bands,
               const Tensor& ref_bands) {
  const Tensor& p = V(pred_bands);
  CheckSameShape(p, ref_bands, "DetailLoss");
  const int n = bank.n_bands;
  Val ref = Constant(ctx, ref_bands);
  Val full_pred = SynthesizeVal(ctx, bank, pred_bands, -1);
  Val full_ref = SynthesizeVal(ctx, bank, ref, -1);
  Val full_mae = MaeLoss(ctx, full_pred, full_ref);
  // The per-band MAE terms share one time axis, so their sum equals n times
  // the elementwise MAE over the whole stack.
  Val band_mae = Scale(ctx, MaeLoss(ctx, pred_bands, ref), static_cast<float>(n));
  return Scale(ctx, Add(ctx, full_mae, band_mae), 1.0f / (n + 1));
}

Val SpectralLoss(Ctx ctx, const Val& pred, const Tensor& ref,
                 const StftLossConfig& cfg) {
  cfg.Validate();
  const Tensor& p = V(pred);
  CheckSameShape(p, ref, "SpectralLoss");
  if (p.Rank() != 2 || p.shape[0] != 1) {
    throw Error("SpectralLoss: expected [1, L] waveforms, got " +
                ShapeStr(p.shape));
  }

  // The reference side carries no gradient; run it eagerly so its STFT
  // graph never lands on the tape.
  Ctx eager;
  Val ref_sig{std::make_shared<const Tensor>(ref), -1};

  Val total;
  for (const StftSet& s : cfg.sets) {
    Val a = StftMag(ctx, pred, s.fft, s.hop, s.win);
    Val b = StftMag(eager, ref_sig, s.fft, s.hop, s.win);
    const int bins = V(a).shape[0];
    const int frames = V(a).shape[1];
    // Raw rows cover 0..band_limit inclusive; bin b sits at b * sr / fft.
    int nl = static_cast<int>(std::floor(cfg.band_limit_hz * s.fft /
                                         cfg.sample_rate)) +
             1;
    nl = std::min(nl, bins);
    const int nh = bins - nl;
    PooledMag pa = PoolHighBand(ctx, a, nl);
    PooledMag pb = PoolHighBand(eager, b, nl);

    // The pooled summaries stand in for the nh*F raw elements they replace.
    // Weighting the [1, F] row by nh/2 and the [nh, 1] column by F/2 keeps
    // the replaced region's total element count: (nh/2)*F + (F/2)*nh = nh*F.
    const float w_row = 0.5f * nh;
    const float w_col = 0.5f * frames;

    Val num_sq = SquaredSum(ctx, pa.low, pb.low);
    Val den_sq = SqNorm(eager, pb.low);
    Val mag_l1 = AbsLogDiffSum(ctx, pa.low, pb.low);
    if (pa.has_high) {
      num_sq = Add(ctx, num_sq,
                   Scale(ctx, SquaredSum(ctx, pa.row, pb.row), w_row));
      num_sq = Add(ctx, num_sq,
                   Scale(ctx, SquaredSum(ctx, pa.col, pb.col), w_col));
      den_sq = Add(eager, den_sq,
                   Scale(eager, SqNorm(eager, pb.row), w_row));
      den_sq = Add(eager, den_sq,
                   Scale(eager, SqNorm(eager, pb.col), w_col));
      mag_l1 = Add(ctx, mag_l1,
                   Scale(ctx, AbsLogDiffSum(ctx, pa.row, pb.row), w_row));
      mag_l1 = Add(ctx, mag_l1,
                   Scale(ctx, AbsLogDiffSum(ctx, pa.col, pb.col), w_col));
    }

    double den = std::sqrt(static_cast<double>(V(den_sq).data[0]));
    if (den < 1e-8) {
      std::fprintf(stderr,
                   "SpectralLoss: near-silent reference (norm %.3e), "
                   "clamping the convergence denominator\n",
                   den);
      den = 1e-8;
    }
    Val l_sc = Scale(ctx, SqrtScalar(ctx, num_sq),
                     static_cast<float>(1.0 / den));
    // 1/N_mag uses the pre-pooling element count; the weights above make the
    // pooled terms contribute in the same proportion.
    Val l_mag = Scale(ctx, mag_l1,
                      1.0f / (static_cast<float>(bins) * frames));
    Val set_loss = Add(ctx, l_sc, l_mag);
    total = total.Defined() ? Add(ctx, total, set_loss) : set_loss;
  }
  return Scale(ctx, total, 1.0f / static_cast<float>(cfg.sets.size()));
}

Val PfTotalLoss(Ctx ctx, const Val& detail, const Val& spectral) {
  return Add(ctx, Scale(ctx, detail, kPfDetailWeight),
             Scale(ctx, spectral, kPfSpectralWeight));
}

}  // namespace parvoc
