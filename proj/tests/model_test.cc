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
#include <set>
#include <vector>

#include "parvoc/autodiff.h"
#include "parvoc/features.h"
#include "parvoc/filterbank.h"
#include "parvoc/model.h"
#include "parvoc/rng.h"
#include "parvoc/trainer.h"

using namespace parvoc;

namespace {

// Small architecture for fast forward passes; topology identical to the
// full model.
ModelConfig TinyConfig(int group = 1) {
  ModelConfig mc;
  mc.cond_ch = 8;
  mc.residual_ch = 16;
  mc.hidden_ch = 4;
  mc.wn_layers = 3;
  mc.max_dilation = 4;
  mc.group = group;
  return mc;
}

MelSpectrogram FlatMel(int frames, int n_mels = 80, int sample_rate = 24000,
                       int hop = 200) {
  MelSpectrogram mel;
  mel.sample_rate = sample_rate;
  mel.hop = hop;
  mel.data = Tensor({frames, n_mels});
  RandomSource rng(99);
  for (auto& v : mel.data.data) {
    v = static_cast<float>(-11.5 + 3.0 * std::fabs(rng.Normal()));
  }
  return mel;
}

TrainBatch TinyBatch(const ModelConfig& mc, uint64_t seed, int t_seg = 200) {
  const int hop = mc.UpsampleProduct() * mc.n_bands;
  const int f_seg = t_seg * mc.n_bands / hop;
  RandomSource rng(seed);
  TrainBatch b;
  b.bands = Tensor({2, mc.n_bands, t_seg});
  b.mel = Tensor({2, mc.n_mels, f_seg});
  b.noise = Tensor({2, 1, t_seg});
  for (auto& v : b.bands.data) v = static_cast<float>(0.3 * rng.Normal());
  for (auto& v : b.mel.data) v = static_cast<float>(-5.0 + rng.Normal());
  for (auto& v : b.noise.data) v = static_cast<float>(rng.Normal());
  return b;
}

}  // namespace

TEST_CASE("default architecture parameter count sits in the plausible band") {
  RandomSource rng(1);
  const FarBarNetP net = InitFarBarNet(ModelConfig{}, rng);
  const int64_t n = net.ParamCount();
  CHECK(n >= 4'900'000);
  CHECK(n <= 6'700'000);
}

TEST_CASE("parameter count grows strictly with the grouping factor") {
  RandomSource rng(2);
  int64_t prev = 0;
  for (int g : {1, 5, 10}) {
    ModelConfig mc;
    mc.group = g;
    const int64_t n = InitFarBarNet(mc, rng).ParamCount();
    CHECK(n > prev);
    prev = n;
  }
}

TEST_CASE("parameter census equals the visitor's element sum") {
  RandomSource rng(3);
  const FarBarNetP net = InitFarBarNet(TinyConfig(), rng);
  int64_t by_visit = 0;
  std::set<std::string> names;
  net.Visit("net", [&](const std::string& name, const ParamPtr& p) {
    by_visit += static_cast<int64_t>(p->data.size());
    CHECK(names.insert(name).second);  // names must be unique
  });
  CHECK(by_visit == net.ParamCount());
}

TEST_CASE("band visit order: default walks high to low") {
  CHECK(BandVisitOrder(8, FarOrder::kHighToLow) ==
        std::vector<int>{7, 6, 5, 4, 3, 2, 1, 0});
  CHECK(BandVisitOrder(8, FarOrder::kLowToHigh) ==
        std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});
}

TEST_CASE("far step shapes and hidden carry") {
  RandomSource rng(4);
  const ModelConfig mc = TinyConfig();
  const FarBarNetP net = InitFarBarNet(mc, rng);
  const int t = 100;
  Tensor x_prev({1, t}), h_prev({mc.hidden_ch, t}), f({mc.cond_ch, t});
  for (auto& v : x_prev.data) v = static_cast<float>(rng.Normal());
  for (auto& v : f.data) v = static_cast<float>(rng.Normal());

  Ctx ctx;
  Binder bind(ctx, false);
  auto wrap = [](const Tensor& t2) {
    return Val{std::make_shared<const Tensor>(t2), -1};
  };
  BitSource bits = [&](int, const Val& logits) {
    Tensor b(V(logits).shape);
    for (auto& v : b.data) v = rng.Uniform() < 0.5f ? 0.0f : 1.0f;
    return wrap(b);
  };
  const FarStepOut out = FarStep(ctx, bind, net, wrap(x_prev), wrap(h_prev),
                                 wrap(f), 3, bits);
  CHECK(V(out.posterior_logits).shape == std::vector<int>{mc.n_classes, t});
  REQUIRE(out.bit_logits.size() == 3);
  for (const Val& bl : out.bit_logits) {
    CHECK(V(bl).shape == std::vector<int>{1, t});
  }
  CHECK(V(out.h_next).shape == std::vector<int>{mc.hidden_ch, t});
  // The hidden head is tanh-bounded so the carry cannot blow up across
  // the eight-step chain.
  for (float v : V(out.h_next).data) {
    CHECK(v >= -1.0f);
    CHECK(v <= 1.0f);
  }
}

TEST_CASE("bar depth 0 bypasses the bit ladder") {
  RandomSource rng(5);
  const ModelConfig mc = TinyConfig();
  const FarBarNetP net = InitFarBarNet(mc, rng);
  const int t = 40;
  Tensor x_prev({1, t}), h_prev({mc.hidden_ch, t}), f({mc.cond_ch, t});
  for (auto& v : x_prev.data) v = static_cast<float>(rng.Normal());
  Ctx ctx;
  Binder bind(ctx, false);
  auto wrap = [](const Tensor& t2) {
    return Val{std::make_shared<const Tensor>(t2), -1};
  };
  int bit_calls = 0;
  BitSource bits = [&](int, const Val& logits) {
    ++bit_calls;
    return wrap(Tensor(V(logits).shape));
  };
  const FarStepOut out =
      FarStep(ctx, bind, net, wrap(x_prev), wrap(h_prev), wrap(f), 0, bits);
  CHECK(bit_calls == 0);
  CHECK(out.bit_logits.empty());
  CHECK(V(out.posterior_logits).shape == std::vector<int>{mc.n_classes, t});
}

TEST_CASE("sharpened sampling respects saturated logits") {
  RandomSource rng(6);
  GenerationConfig gc;
  const int t = 50;
  Tensor logits({1, t});
  for (int i = 0; i < t; ++i) logits.data[i] = (i % 2 == 0) ? 8.0f : -8.0f;
  const Tensor b1 = SampleBitPlane(logits, gc.sharpen_b1, rng);
  REQUIRE(b1.shape == std::vector<int>{1, t});
  for (int i = 0; i < t; ++i) {
    CHECK(b1.data[i] == ((i % 2 == 0) ? 1.0f : 0.0f));
  }

  Tensor cls({4, t});
  for (int i = 0; i < t; ++i) {
    for (int c = 0; c < 4; ++c) cls.At2(c, i) = (c == i % 4) ? 6.0f : -6.0f;
  }
  const std::vector<int> drawn = SampleClasses(cls, gc.sharpen_class, rng);
  REQUIRE(drawn.size() == static_cast<size_t>(t));
  for (int i = 0; i < t; ++i) CHECK(drawn[i] == i % 4);
}

TEST_CASE("sampling sharpening changes the draw distribution") {
  // A mildly confident logit pair: sharpening by 10 should make draws far
  // more deterministic than sampling the raw sigmoid.
  RandomSource rng(7);
  const int t = 4000;
  Tensor logits({1, t});
  for (auto& v : logits.data) v = 0.3f;  // sigmoid ~ 0.574, sharpened ~ 0.953
  const Tensor sharp = SampleBitPlane(logits, 10.0f, rng);
  const Tensor flat = SampleBitPlane(logits, 1.0f, rng);
  double mean_sharp = 0.0, mean_flat = 0.0;
  for (int i = 0; i < t; ++i) {
    mean_sharp += sharp.data[i];
    mean_flat += flat.data[i];
  }
  mean_sharp /= t;
  mean_flat /= t;
  CHECK(mean_sharp > 0.90);
  CHECK(mean_flat < 0.70);
  CHECK(mean_flat > 0.45);
}

TEST_CASE("generation runs exactly n_bands passes with at most 4 stages") {
  RandomSource rng(8);
  const ModelConfig mc = TinyConfig();
  const FarBarNetP net = InitFarBarNet(mc, rng);
  const PqmfBank bank = DesignPqmf(mc.n_bands);
  const MelSpectrogram mel = FlatMel(12);

  GenerationConfig gc;
  gc.use_postfilter = false;
  gc.seed = 5;
  const GenResult r = Generate(net, nullptr, bank, mel, gc);
  CHECK(r.counters.far_passes == 8);
  CHECK(r.counters.max_stages_per_pass == 4);
  REQUIRE(r.passes.size() == 8);
  // Pass records agree with the configured visit order.
  const auto order = BandVisitOrder(8, gc.far_order);
  for (int i = 0; i < 8; ++i) {
    CHECK(r.passes[i].band == order[i]);
    CHECK(r.passes[i].stages <= 4);
  }
  CHECK(r.wav.size() == static_cast<size_t>(12 * mel.hop));
  for (float v : r.wav) {
    CHECK(v >= -1.0f);
    CHECK(v <= 1.0f);
  }
}

TEST_CASE("generation pass count is independent of utterance length") {
  RandomSource rng(9);
  const ModelConfig mc = TinyConfig();
  const FarBarNetP net = InitFarBarNet(mc, rng);
  const PqmfBank bank = DesignPqmf(mc.n_bands);
  GenerationConfig gc;
  gc.use_postfilter = false;
  gc.seed = 6;
  for (int frames : {8, 40}) {
    const GenResult r = Generate(net, nullptr, bank, FlatMel(frames), gc);
    CHECK(r.counters.far_passes == 8);
    CHECK(r.wav.size() == static_cast<size_t>(frames * 200));
  }
}

TEST_CASE("bar depth trims the stage count") {
  RandomSource rng(10);
  const ModelConfig mc = TinyConfig();
  const FarBarNetP net = InitFarBarNet(mc, rng);
  const PqmfBank bank = DesignPqmf(mc.n_bands);
  const MelSpectrogram mel = FlatMel(10);
  for (const auto& [depth, stages] : {std::pair{3, 4}, {2, 3}, {0, 1}}) {
    GenerationConfig gc;
    gc.bar_depth = depth;
    gc.use_postfilter = false;
    gc.seed = 7;
    const GenResult r = Generate(net, nullptr, bank, mel, gc);
    CHECK(r.counters.max_stages_per_pass == stages);
  }
  GenerationConfig bad;
  bad.bar_depth = 1;
  CHECK_THROWS_AS(bad.Validate(), Error);
}

TEST_CASE("fixed seed reproduces the waveform bit for bit") {
  RandomSource rng(11);
  const ModelConfig mc = TinyConfig();
  const FarBarNetP net = InitFarBarNet(mc, rng);
  const PqmfBank bank = DesignPqmf(mc.n_bands);
  const MelSpectrogram mel = FlatMel(10);
  GenerationConfig gc;
  gc.use_postfilter = false;
  gc.seed = 1234;
  const GenResult a = Generate(net, nullptr, bank, mel, gc);
  const GenResult b = Generate(net, nullptr, bank, mel, gc);
  REQUIRE(a.wav.size() == b.wav.size());
  for (size_t i = 0; i < a.wav.size(); ++i) CHECK(a.wav[i] == b.wav[i]);

  GenerationConfig other = gc;
  other.seed = 1235;
  const GenResult c = Generate(net, nullptr, bank, mel, other);
  int diff = 0;
  for (size_t i = 0; i < a.wav.size(); ++i) diff += (a.wav[i] != c.wav[i]);
  CHECK(diff > 0);
}

TEST_CASE("grouped generation matches shapes and stays deterministic") {
  for (int g : {5, 10}) {
    RandomSource rng(12);
    const ModelConfig mc = TinyConfig(g);
    const FarBarNetP net = InitFarBarNet(mc, rng);
    const PqmfBank bank = DesignPqmf(mc.n_bands);
    const MelSpectrogram mel = FlatMel(20);
    GenerationConfig gc;
    gc.use_postfilter = false;
    gc.group = g;
    gc.seed = 3;
    const GenResult a = Generate(net, nullptr, bank, mel, gc);
    CHECK(a.counters.far_passes == 8);
    CHECK(a.wav.size() == static_cast<size_t>(20 * mel.hop));
    const GenResult b = Generate(net, nullptr, bank, mel, gc);
    for (size_t i = 0; i < a.wav.size(); ++i) CHECK(a.wav[i] == b.wav[i]);
  }
}

TEST_CASE("teacher-forced loss starts near log(n_classes)") {
  RandomSource rng(13);
  const ModelConfig mc = TinyConfig();
  const FarBarNetP net = InitFarBarNet(mc, rng);
  const TrainBatch batch = TinyBatch(mc, 21);
  Ctx ctx;
  Binder bind(ctx, false);
  LossParts parts;
  TeacherForcedLoss(ctx, bind, net, batch, FarOrder::kHighToLow, 3, &parts);
  // Freshly initialized logits are near zero, so the class posterior is
  // near uniform and each bit is near a coin flip.
  CHECK(parts.ce == doctest::Approx(std::log(256.0)).epsilon(0.05));
  CHECK(parts.bce == doctest::Approx(3.0 * std::log(2.0)).epsilon(0.05));
  CHECK(parts.total == doctest::Approx(parts.ce + parts.bce).epsilon(1e-6));
}

TEST_CASE("a few adam steps reduce the teacher-forced loss") {
  RandomSource rng(14);
  const ModelConfig mc = TinyConfig();
  FarBarNetP net = InitFarBarNet(mc, rng);
  const TrainBatch batch = TinyBatch(mc, 22, 150);

  AdamConfig acfg;
  acfg.lr = 1e-3f;
  Adam adam(acfg);
  net.Visit("net", [&](const std::string& name, const ParamPtr& p) {
    adam.Register(name, p);
  });

  double first = 0.0, last = 0.0;
  for (int step = 0; step < 8; ++step) {
    Tape tape;
    Ctx ctx{&tape};
    Binder bind(ctx, true);
    LossParts parts;
    Val loss =
        TeacherForcedLoss(ctx, bind, net, batch, FarOrder::kHighToLow, 3,
                          &parts);
    tape.Backward(loss);
    adam.Step(tape, bind);
    if (step == 0) first = parts.total;
    last = parts.total;
  }
  CHECK(last < first);
}
