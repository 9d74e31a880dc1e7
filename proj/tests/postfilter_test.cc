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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <memory>
#include <vector>

#include "parvoc/autodiff.h"
#include "parvoc/filterbank.h"
#include "parvoc/model.h"
#include "parvoc/postfilter.h"
#include "parvoc/rng.h"
#include "support/gradcheck.h"

using namespace parvoc;

namespace {

Val Wrap(const Tensor& t) {
  return Val{std::make_shared<const Tensor>(t), -1};
}

Tensor NoiseWav(uint64_t seed, int n, double amp) {
  RandomSource rng(seed);
  Tensor x({1, n});
  for (auto& v : x.data) v = static_cast<float>(amp * rng.Normal());
  return x;
}

}  // namespace

TEST_CASE("spectral loss of a signal against itself is zero") {
  const Tensor x = NoiseWav(1, 4000, 0.5);
  Ctx ctx;
  Val loss = SpectralLoss(ctx, Wrap(x), x, StftLossConfig{});
  CHECK(V(loss).data[0] == 0.0f);
}

TEST_CASE("doubling the signal gives convergence 1 plus log-mag log 2") {
  // |STFT(2x)| is exactly 2 |STFT(x)|, so the convergence ratio is exactly
  // 1 and every log-magnitude difference is exactly log 2, provided no bin
  // is small enough to hit the log floor.
  const Tensor x = NoiseWav(2, 4000, 1.0);
  const StftLossConfig cfg;

  // Precondition: the quietest bin must clear the floor with margin, or the
  // identity would silently degrade into an inequality.
  Ctx eager;
  for (const StftSet& s : cfg.sets) {
    Val m = StftMag(eager, Wrap(x), s.fft, s.hop, s.win);
    float lo = 1e30f;
    for (float v : V(m).data) lo = std::min(lo, v);
    REQUIRE(lo > 1e-4f);
  }

  Tensor x2 = x;
  for (auto& v : x2.data) v *= 2.0f;
  Ctx ctx;
  Val loss = SpectralLoss(ctx, Wrap(x2), x, cfg);
  const double want = 1.0 + std::log(2.0);
  CHECK(std::fabs(V(loss).data[0] - want) < 1e-5);
}

TEST_CASE("a silent reference clamps the convergence denominator") {
  const Tensor x = NoiseWav(3, 2000, 0.3);
  Tensor silent({1, 2000});
  Ctx ctx;
  Val loss = SpectralLoss(ctx, Wrap(x), silent, StftLossConfig{});
  CHECK(std::isfinite(V(loss).data[0]));
  CHECK(V(loss).data[0] > 0.0f);
}

TEST_CASE("detail loss is zero on itself and averages n_bands + 1 terms") {
  const PqmfBank bank = DesignPqmf(8);
  RandomSource rng(4);
  Tensor stack({8, 500});
  for (auto& v : stack.data) v = static_cast<float>(0.3 * rng.Normal());

  Ctx ctx;
  CHECK(V(DetailLoss(ctx, bank, Wrap(stack), stack)).data[0] == 0.0f);

  Tensor other({8, 500});
  for (auto& v : other.data) v = static_cast<float>(0.3 * rng.Normal());
  const float got = V(DetailLoss(ctx, bank, Wrap(other), stack)).data[0];

  // Recombine from the public pieces: (full-band MAE + 8 * stack MAE) / 9.
  Val full_pred = SynthesizeVal(ctx, bank, Wrap(other), -1);
  Val full_ref = SynthesizeVal(ctx, bank, Wrap(stack), -1);
  const float full_mae = V(MaeLoss(ctx, full_pred, full_ref)).data[0];
  const float stack_mae = V(MaeLoss(ctx, Wrap(other), Wrap(stack))).data[0];
  const float want = (full_mae + 8.0f * stack_mae) / 9.0f;
  CHECK(got == doctest::Approx(want).epsilon(1e-5));
  CHECK(got > 0.0f);
}

TEST_CASE("loss combination applies the 100 and 0.1 weights") {
  Tensor d({1}), s({1});
  d.data[0] = 0.01f;
  s.data[0] = 2.0f;
  Ctx ctx;
  Val total = PfTotalLoss(ctx, Wrap(d), Wrap(s));
  CHECK(std::fabs(V(total).data[0] - 1.2) < 1e-6);
}

TEST_CASE("graph synthesis equals the reference synthesis") {
  const PqmfBank bank = DesignPqmf(8);
  RandomSource rng(5);
  std::vector<float> wav(3000);
  for (auto& v : wav) v = static_cast<float>(0.4 * rng.Normal());
  const SubbandStack st = Analyze(bank, wav);
  const std::vector<float> direct = Synthesize(bank, st);

  Ctx ctx;
  Val got = SynthesizeVal(ctx, bank, Wrap(st.bands), st.source_len);
  REQUIRE(V(got).shape ==
          std::vector<int>{1, static_cast<int>(st.source_len)});
  for (size_t i = 0; i < direct.size(); ++i) {
    CHECK(V(got).data[i] == doctest::Approx(direct[i]).epsilon(1e-4));
  }
}

TEST_CASE("graph synthesis keeps batch structure") {
  const PqmfBank bank = DesignPqmf(8);
  RandomSource rng(6);
  Tensor batched({2, 8, 250});
  for (auto& v : batched.data) v = static_cast<float>(0.3 * rng.Normal());
  Ctx ctx;
  Val y = SynthesizeVal(ctx, bank, Wrap(batched), 1800);
  REQUIRE(V(y).shape == std::vector<int>{2, 1, 1800});

  // Each item must equal its own single-item synthesis.
  for (int b = 0; b < 2; ++b) {
    Tensor one({8, 250});
    std::copy_n(batched.Ptr() + static_cast<size_t>(b) * 8 * 250, 8 * 250,
                one.Ptr());
    Val yi = SynthesizeVal(ctx, bank, Wrap(one), 1800);
    for (int t = 0; t < 1800; ++t) {
      CHECK(V(y).data[static_cast<size_t>(b) * 1800 + t] ==
            doctest::Approx(V(yi).data[t]).epsilon(1e-6));
    }
  }
}

TEST_CASE("post filter output is a bounded subband signal") {
  ModelConfig mc;
  mc.cond_ch = 8;
  mc.residual_ch = 16;
  mc.wn_layers = 3;
  RandomSource rng(7);
  const PostFilterP pf = InitPostFilter(mc, rng);
  CHECK(pf.ParamCount() > 0);

  const int t = 120;
  Tensor posterior({mc.n_classes, t});
  for (auto& v : posterior.data) v = static_cast<float>(rng.Uniform());
  Tensor f({mc.cond_ch, t});
  for (auto& v : f.data) v = static_cast<float>(rng.Normal());

  Ctx ctx;
  Binder bind(ctx, false);
  Val y = PfApply(ctx, bind, pf, Wrap(posterior), Wrap(f));
  REQUIRE(V(y).shape == std::vector<int>{1, t});
  for (float v : V(y).data) {
    CHECK(v > -1.0f);
    CHECK(v < 1.0f);
  }
}

TEST_CASE("spectral loss gradient survives a finite-difference probe") {
  using testsupport::CheckDirectional;
  const Tensor ref = NoiseWav(8, 600, 0.5);
  std::vector<Tensor> leaves = {NoiseWav(9, 600, 0.5)};
  RandomSource rng(10);
  testsupport::GraphFn fn = [&](Ctx ctx, const std::vector<Val>& v) {
    return SpectralLoss(ctx, v[0], ref, StftLossConfig{});
  };
  const auto r = CheckDirectional(fn, leaves, 0, 1e-3, rng);
  INFO("analytic=", r.analytic, " numeric=", r.numeric, " rel=", r.rel);
  CHECK(r.Ok(5e-3, 1e-4));
}
