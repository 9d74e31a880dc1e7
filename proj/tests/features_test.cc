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
#include <cstdio>
#include <string>
#include <vector>

#include "parvoc/features.h"
#include "parvoc/rng.h"
#include "parvoc/tensor.h"
#include "support/reference.h"

using namespace parvoc;

namespace {

std::string TempPath(const char* name) {
  const char* dir = std::getenv("TMPDIR");
  return std::string(dir != nullptr ? dir : "/tmp") + "/" + name;
}

}  // namespace

TEST_CASE("frame count is ceil(len / hop) for any length") {
  StftConfig cfg;
  cfg.fft = 64;
  cfg.hop = 10;
  cfg.win = 40;
  for (int n : {2, 9, 10, 11, 99, 100, 101, 997}) {
    std::vector<float> x(n, 0.25f);
    const Tensor s = StftMagnitudeFrames(x, cfg);
    const int want = (n + cfg.hop - 1) / cfg.hop;
    CHECK(s.shape[0] == want);
    CHECK(s.shape[1] == cfg.fft / 2 + 1);
  }
  // Reflection padding needs a neighbor to mirror.
  CHECK_THROWS_AS(StftMagnitudeFrames({0.5f}, cfg), Error);
}

TEST_CASE("spectrogram frames match a naive windowed dft") {
  RandomSource rng(31);
  StftConfig cfg;
  cfg.fft = 32;
  cfg.hop = 8;
  cfg.win = 24;
  const int n = 64;
  std::vector<float> x(n);
  for (auto& v : x) v = static_cast<float>(rng.Normal());

  const Tensor s = StftMagnitudeFrames(x, cfg);
  // Rebuild frame 3 by hand: reflect pad by win/2 on each side, window,
  // zero-pad to fft.
  std::vector<double> padded;
  for (int i = cfg.win / 2; i >= 1; --i) padded.push_back(x[i]);
  for (float v : x) padded.push_back(v);
  for (int i = n - 2; i >= n - 1 - cfg.win / 2; --i) padded.push_back(x[i]);
  const int frame = 3;
  std::vector<double> buf(cfg.fft, 0.0);
  for (int i = 0; i < cfg.win; ++i) {
    const double w = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / cfg.win);
    buf[i] = padded[frame * cfg.hop + i] * w;
  }
  const auto ref = testsupport::NaiveDftMagnitude(buf);
  for (int bin = 0; bin <= cfg.fft / 2; ++bin) {
    CHECK(s.At2(frame, bin) ==
          doctest::Approx(ref[bin]).epsilon(1e-4).scale(1.0));
  }
}

TEST_CASE("a pure tone concentrates in its own dft bin") {
  StftConfig cfg;
  cfg.fft = 256;
  cfg.hop = 64;
  cfg.win = 256;
  const int sr = 24000;
  const int bin = 20;  // exactly periodic in the window
  const double f = static_cast<double>(bin) * sr / cfg.fft;
  std::vector<float> x(2048);
  for (size_t i = 0; i < x.size(); ++i) {
    x[i] = static_cast<float>(std::sin(2.0 * M_PI * f * i / sr));
  }
  const Tensor s = StftMagnitudeFrames(x, cfg);
  const int frame = s.shape[0] / 2;
  int argmax = 0;
  for (int b = 0; b <= cfg.fft / 2; ++b) {
    if (s.At2(frame, b) > s.At2(frame, argmax)) argmax = b;
  }
  CHECK(argmax == bin);
}

TEST_CASE("mel filters match an independent triangle construction") {
  const int sr = 24000, fft = 1024, n_mels = 80;
  const Tensor fb = MelFilterbank(sr, fft, n_mels);
  REQUIRE(fb.shape == std::vector<int>{n_mels, fft / 2 + 1});

  // Rebuild the bank from its stated definition: n_mels + 2 points equally
  // spaced on the 2595 log10(1 + f/700) scale from 0 to Nyquist, and a unit
  // triangle per band between consecutive edge pairs.
  auto to_mel = [](double f) { return 2595.0 * std::log10(1.0 + f / 700.0); };
  auto to_hz = [](double m) {
    return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0);
  };
  const double mel_max = to_mel(sr / 2.0);
  std::vector<double> edge(n_mels + 2);
  for (int i = 0; i < n_mels + 2; ++i) {
    edge[i] = to_hz(mel_max * i / (n_mels + 1));
  }
  for (int m = 0; m < n_mels; ++m) {
    for (int b = 0; b <= fft / 2; ++b) {
      const double f = static_cast<double>(b) * sr / fft;
      double want = 0.0;
      if (f > edge[m] && f < edge[m + 1]) {
        want = (f - edge[m]) / (edge[m + 1] - edge[m]);
      } else if (f >= edge[m + 1] && f < edge[m + 2]) {
        want = (edge[m + 2] - f) / (edge[m + 2] - edge[m + 1]);
      }
      CHECK(fb.At2(m, b) == doctest::Approx(want).epsilon(1e-5).scale(1.0));
    }
  }

  // Structure: weights in [0, 1], every band non-empty, centers ordered.
  std::vector<int> centers;
  for (int m = 0; m < n_mels; ++m) {
    int argmax = 0;
    double peak = 0.0;
    for (int b = 0; b <= fft / 2; ++b) {
      CHECK(fb.At2(m, b) >= 0.0f);
      CHECK(fb.At2(m, b) <= 1.0f);
      if (fb.At2(m, b) > peak) {
        peak = fb.At2(m, b);
        argmax = b;
      }
    }
    CHECK(peak > 0.0);
    centers.push_back(argmax);
  }
  for (size_t m = 1; m < centers.size(); ++m) {
    CHECK(centers[m] >= centers[m - 1]);
  }
}

TEST_CASE("log-mel output is floored, finite, and frame-major") {
  std::vector<float> silence(4000, 0.0f);
  const MelSpectrogram mel = ComputeMel(silence, 24000, StftConfig{});
  CHECK(mel.sample_rate == 24000);
  CHECK(mel.hop == 200);
  REQUIRE(mel.data.shape == std::vector<int>{20, 80});
  for (float v : mel.data.data) {
    CHECK(v == doctest::Approx(std::log(1e-5)).epsilon(1e-5));
  }

  // A loud tone must push some band well above the floor.
  std::vector<float> tone(4000);
  for (size_t i = 0; i < tone.size(); ++i) {
    tone[i] = static_cast<float>(0.7 * std::sin(2.0 * M_PI * 880.0 * i / 24000.0));
  }
  const MelSpectrogram loud = ComputeMel(tone, 24000, StftConfig{});
  float peak = -100.0f;
  for (float v : loud.data.data) peak = std::max(peak, v);
  CHECK(peak > 1.0f);
}

TEST_CASE("feature files round trip exactly") {
  RandomSource rng(33);
  MelSpectrogram mel;
  mel.sample_rate = 24000;
  mel.hop = 200;
  mel.data = Tensor({7, 80});
  for (auto& v : mel.data.data) v = static_cast<float>(rng.Normal());

  const std::string path = TempPath("parvoc_features_test.pvfe");
  SavePvfe(path, mel);
  const MelSpectrogram back = LoadPvfe(path);
  CHECK(back.sample_rate == mel.sample_rate);
  CHECK(back.hop == mel.hop);
  REQUIRE(back.data.shape == mel.data.shape);
  for (size_t i = 0; i < mel.data.data.size(); ++i) {
    CHECK(back.data.data[i] == mel.data.data[i]);
  }
  std::remove(path.c_str());

  CHECK_THROWS_AS(LoadPvfe(TempPath("parvoc_no_such_file.pvfe")), Error);
}

TEST_CASE("corrupted feature files are rejected by name of defect") {
  const std::string path = TempPath("parvoc_features_bad.pvfe");
  std::FILE* f = std::fopen(path.c_str(), "wb");
  REQUIRE(f != nullptr);
  std::fputs("NOPE", f);
  std::fclose(f);
  CHECK_THROWS_WITH_AS(LoadPvfe(path), doctest::Contains("not a feature file"),
                       Error);
  std::remove(path.c_str());
}

TEST_CASE("transpose flips axes and is an involution") {
  Tensor m({3, 5});
  for (size_t i = 0; i < m.data.size(); ++i) m.data[i] = static_cast<float>(i);
  const Tensor t = TransposeMatrix(m);
  REQUIRE(t.shape == std::vector<int>{5, 3});
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 5; ++c) {
      CHECK(t.At2(c, r) == m.At2(r, c));
    }
  }
  const Tensor back = TransposeMatrix(t);
  REQUIRE(back.shape == m.shape);
  for (size_t i = 0; i < m.data.size(); ++i) {
    CHECK(back.data[i] == m.data[i]);
  }
}
