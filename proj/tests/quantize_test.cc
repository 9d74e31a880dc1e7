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
#include <cstdint>
#include <vector>

#include "parvoc/quantize.h"
#include "parvoc/rng.h"
#include "support/reference.h"

using namespace parvoc;

TEST_CASE("every class code survives a decode-encode round trip") {
  for (int c = 0; c < 256; ++c) {
    const float mid = MuLawDecodeSample(static_cast<uint8_t>(c));
    CHECK(MuLawEncodeSample(mid) == c);
    // The midpoint decode must agree with an independent derivation.
    CHECK(mid == doctest::Approx(testsupport::NaiveMuLawDecode(c))
                     .epsilon(1e-6));
  }
}

TEST_CASE("encode agrees with the reference formula on dense samples") {
  RandomSource rng(7);
  for (int i = 0; i < 20000; ++i) {
    const float x = static_cast<float>(2.2 * rng.Uniform() - 1.1);
    CHECK(static_cast<int>(MuLawEncodeSample(x)) ==
          testsupport::NaiveMuLawEncode(x));
  }
  // Edge samples where clamping and the sign boundary matter.
  for (float x : {-1.0f, -0.9999999f, -1e-8f, 0.0f, 1e-8f, 0.9999999f, 1.0f,
                  1.5f, -1.5f}) {
    CHECK(static_cast<int>(MuLawEncodeSample(x)) ==
          testsupport::NaiveMuLawEncode(x));
  }
}

TEST_CASE("encode is monotone and symmetric around zero") {
  int prev = -1;
  for (int i = 0; i <= 4000; ++i) {
    const float x = -1.0f + 2.0f * i / 4000.0f;
    const int c = MuLawEncodeSample(x);
    CHECK(c >= prev);
    prev = c;
  }
  CHECK(MuLawEncodeSample(0.0f) == 128);
  CHECK(MuLawEncodeSample(-0.0f) == 128);
  for (float x : {0.01f, 0.13f, 0.5f, 0.99f}) {
    const int hi = MuLawEncodeSample(x);
    const int lo = MuLawEncodeSample(-x);
    CHECK(hi + lo == 255);  // mirrored about the code midpoint
  }
}

TEST_CASE("quantization error shrinks near zero") {
  // Mu-law spends its codes on small amplitudes; the step size around 0
  // must be far finer than around full scale.
  const float step_small =
      MuLawDecodeSample(129) - MuLawDecodeSample(128);
  const float step_large =
      MuLawDecodeSample(255) - MuLawDecodeSample(254);
  CHECK(step_small > 0.0f);
  CHECK(step_large > 30.0f * step_small);

  // Round-trip error stays under half the local step width: the companded
  // step is 2/256, so in sample units it is (2/256)(1 + 255|x|)ln(256)/255.
  RandomSource rng(8);
  for (int i = 0; i < 2000; ++i) {
    const float x = static_cast<float>(0.9 * (2.0 * rng.Uniform() - 1.0));
    const float back = MuLawDecodeSample(MuLawEncodeSample(x));
    const double half_step = 0.5 * (2.0 / 256.0) * (1.0 + 255.0 * std::fabs(x)) *
                             std::log(256.0) / 255.0;
    CHECK(std::fabs(back - x) <= 1.01 * half_step);
  }
}

TEST_CASE("bit planes expose the top bits, most significant first") {
  for (int c = 0; c < 256; ++c) {
    CHECK(ClassBit(c, 1) == ((c >> 7) & 1));
    CHECK(ClassBit(c, 2) == ((c >> 6) & 1));
    CHECK(ClassBit(c, 3) == ((c >> 5) & 1));
    CHECK(ClassBit(c, 1) == (c > 127 ? 1 : 0));
  }

  std::vector<uint8_t> codes = {0, 31, 32, 127, 128, 159, 224, 255};
  const BitPlanes bp = BitPlanesOf(codes);
  for (int p = 0; p < 3; ++p) {
    REQUIRE(bp.planes[p].size() == codes.size());
    for (size_t i = 0; i < codes.size(); ++i) {
      CHECK(bp.planes[p][i] == static_cast<float>(ClassBit(codes[i], p + 1)));
    }
  }
}

TEST_CASE("vector encode and decode match the sample versions") {
  RandomSource rng(9);
  std::vector<float> x(257);
  for (auto& v : x) v = static_cast<float>(2.0 * rng.Uniform() - 1.0);
  const auto codes = MuLawEncode(x);
  REQUIRE(codes.size() == x.size());
  const auto back = MuLawDecode(codes);
  REQUIRE(back.size() == x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    CHECK(codes[i] == MuLawEncodeSample(x[i]));
    CHECK(back[i] == MuLawDecodeSample(codes[i]));
  }
}
