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

#include "toy_corpus.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>

#include "parvoc/rng.h"
#include "parvoc/wav_io.h"

namespace parvoc {
namespace testsupport {

std::vector<float> MakeToyUtterance(uint64_t seed, double seconds,
                                    int sample_rate) {
  RandomSource rng(seed);
  const int n = static_cast<int>(seconds * sample_rate);
  std::vector<float> x(n);

  // Per-utterance character: base pitch, glide span, vibrato rate.
  const double f_lo = 100.0 + 60.0 * rng.Uniform();
  const double f_hi = f_lo * (1.3 + 0.5 * rng.Uniform());
  const double vib_hz = 4.0 + 2.0 * rng.Uniform();
  const double vib_depth = 0.02;
  const int harmonics = 40;
  const double harmonic_cap = 0.46 * sample_rate;

  // Voiced/unvoiced alternation, roughly syllabic: voiced stretches with a
  // fricative-ish noise burst between them.  Boundaries land on a 20 ms grid
  // and each segment gets a 10 ms raised-cosine edge so there are no clicks.
  const int grid = sample_rate / 50;
  std::vector<uint8_t> voiced_at(n, 1);
  {
    int pos = 0;
    bool voiced = true;
    while (pos < n) {
      const double dur = voiced ? 0.18 + 0.22 * rng.Uniform()
                                : 0.06 + 0.08 * rng.Uniform();
      int seg = static_cast<int>(dur * sample_rate);
      seg = std::max(grid, (seg / grid) * grid);
      for (int i = pos; i < std::min(n, pos + seg); ++i) {
        voiced_at[i] = voiced ? 1 : 0;
      }
      pos += seg;
      voiced = !voiced;
    }
  }
  auto segment_gain = [&](int i) {
    // Distance to the nearest boundary in samples, capped at the fade span.
    const int fade = sample_rate / 100;
    int d = fade;
    for (int k = 1; k <= fade; ++k) {
      if (i - k < 0 || voiced_at[i - k] != voiced_at[i] ||
          i + k >= n || voiced_at[i + k] != voiced_at[i]) {
        d = k;
        break;
      }
    }
    return 0.5 * (1.0 - std::cos(M_PI * d / fade));
  };

  double phase = 0.0;
  double vib_phase = 0.0;
  double breath = 0.0;
  double fric = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = static_cast<double>(i) / n;
    const double f0 =
        (f_lo + (f_hi - f_lo) * u) * (1.0 + vib_depth * std::sin(vib_phase));
    phase += 2.0 * M_PI * f0 / sample_rate;
    vib_phase += 2.0 * M_PI * vib_hz / sample_rate;

    // First-differenced white noise: a cheap high-tilted source standing in
    // for aspiration and frication, so the upper bands carry real content
    // the way speech does.
    const double w = rng.Normal();
    const double hiss = w - breath;
    breath = w;

    // Syllable-ish loudness: 3 Hz raised cosine, never fully silent.
    const double env =
        0.25 + 0.75 * 0.5 * (1.0 - std::cos(2.0 * M_PI * 3.0 * u * seconds));
    const double gain = segment_gain(i);

    double s;
    if (voiced_at[i] != 0) {
      // Harmonic stack with 1/h tilt up to just below Nyquist, plus a touch
      // of breathiness tied to the same envelope.
      double v = 0.0;
      for (int h = 1; h <= harmonics; ++h) {
        if (f0 * h > harmonic_cap) break;
        v += std::sin(phase * h) / h;
      }
      s = env * gain * (0.30 * v + 0.012 * hiss);
    } else {
      // Fricative burst: smoothed noise amplitude so the burst has its own
      // attack and decay.
      fric += 0.002 * (1.0 - fric);
      s = gain * 0.11 * fric * hiss;
    }
    if (voiced_at[i] != 0) fric = 0.0;
    x[i] = static_cast<float>(s + 0.002 * rng.Normal());
  }
  return x;
}

std::vector<std::string> WriteToyCorpus(const std::string& dir, int n,
                                        double seconds, int sample_rate,
                                        uint64_t seed_base) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> paths;
  for (int i = 0; i < n; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "utt_%03d.wav", i);
    const std::string path = (std::filesystem::path(dir) / name).string();
    WriteWav16Mono(path, MakeToyUtterance(seed_base + i, seconds, sample_rate),
                   sample_rate);
    paths.push_back(path);
  }
  return paths;
}

}  // namespace testsupport
}  // namespace parvoc
