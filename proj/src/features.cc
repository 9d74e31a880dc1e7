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

#include "parvoc/features.h"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "parvoc/fft.h"
#include "parvoc/stft_core.h"

namespace parvoc {
namespace {

constexpr uint32_t kPvfeVersion = 1;
constexpr char kPvfeMagic[4] = {'P', 'V', 'F', 'E'};
constexpr float kMelFloor = 1e-5f;

double HzToMel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
double MelToHz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

void PutU32(std::ofstream& f, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  f.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t GetU32(std::ifstream& f, const std::string& path) {
  unsigned char b[4];
  f.read(reinterpret_cast<char*>(b), 4);
  if (!f) throw Error("LoadPvfe: truncated header in " + path);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) |
         (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

Tensor StftMagnitudeFrames(const std::vector<float>& x, const StftConfig& cfg) {
  const StftPlan plan =
      MakeStftPlan(cfg.fft, cfg.hop, cfg.win, static_cast<int>(x.size()));
  Tensor out({plan.frames, plan.bins});
  std::vector<std::complex<double>> buf;
  for (int f = 0; f < plan.frames; ++f) {
    LoadStftFrame(buf, x.data(), plan, f);
    Fft(buf);
    float* row = out.Ptr() + static_cast<size_t>(f) * plan.bins;
    for (int b = 0; b < plan.bins; ++b) {
      row[b] = static_cast<float>(std::abs(buf[b]));
    }
  }
  return out;
}

Tensor MelFilterbank(int sample_rate, int fft, int n_mels) {
  if (sample_rate < 1 || n_mels < 1) {
    throw Error("MelFilterbank: bad sample rate or band count");
  }
  const int bins = fft / 2 + 1;
  const double mel_max = HzToMel(sample_rate / 2.0);
  std::vector<double> edges(n_mels + 2);
  for (int i = 0; i < n_mels + 2; ++i) {
    edges[i] = MelToHz(mel_max * i / (n_mels + 1));
  }
  Tensor w({n_mels, bins});
  const double hz_per_bin = static_cast<double>(sample_rate) / fft;
  for (int m = 0; m < n_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    float* row = w.Ptr() + static_cast<size_t>(m) * bins;
    for (int b = 0; b < bins; ++b) {
      const double f = b * hz_per_bin;
      double v = 0.0;
      if (f > lo && f < mid) {
        v = (f - lo) / (mid - lo);
      } else if (f >= mid && f < hi) {
        v = (hi - f) / (hi - mid);
      }
      row[b] = static_cast<float>(v);
    }
  }
  return w;
}

MelSpectrogram ComputeMel(const std::vector<float>& x, int sample_rate,
                          const StftConfig& cfg, int n_mels) {
  const Tensor mag = StftMagnitudeFrames(x, cfg);
  const Tensor fb = MelFilterbank(sample_rate, cfg.fft, n_mels);
  const int frames = mag.shape[0];
  const int bins = mag.shape[1];
  MelSpectrogram out;
  out.sample_rate = sample_rate;
  out.hop = cfg.hop;
  out.data = Tensor({frames, n_mels});
  for (int f = 0; f < frames; ++f) {
    const float* mrow = mag.Ptr() + static_cast<size_t>(f) * bins;
    float* orow = out.data.Ptr() + static_cast<size_t>(f) * n_mels;
    for (int m = 0; m < n_mels; ++m) {
      const float* frow = fb.Ptr() + static_cast<size_t>(m) * bins;
      double acc = 0.0;
      for (int b = 0; b < bins; ++b) acc += static_cast<double>(frow[b]) * mrow[b];
      orow[m] = std::log(std::max(static_cast<float>(acc), kMelFloor));
    }
  }
  return out;
}

void SavePvfe(const std::string& path, const MelSpectrogram& mel) {
  if (mel.data.Rank() != 2) throw Error("SavePvfe: feature matrix must be rank 2");
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("SavePvfe: cannot open " + path + " for writing");
  f.write(kPvfeMagic, 4);
  PutU32(f, kPvfeVersion);
  PutU32(f, static_cast<uint32_t>(mel.data.shape[0]));
  PutU32(f, static_cast<uint32_t>(mel.data.shape[1]));
  PutU32(f, static_cast<uint32_t>(mel.sample_rate));
  PutU32(f, static_cast<uint32_t>(mel.hop));
  f.write(reinterpret_cast<const char*>(mel.data.Ptr()),
          static_cast<std::streamsize>(mel.data.Numel() * sizeof(float)));
  if (!f) throw Error("SavePvfe: write failed for " + path);
}

MelSpectrogram LoadPvfe(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("LoadPvfe: cannot open " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kPvfeMagic, 4) != 0) {
    throw Error("LoadPvfe: " + path + " is not a feature file");
  }
  const uint32_t version = GetU32(f, path);
  if (version != kPvfeVersion) {
    throw Error("LoadPvfe: unsupported version " + std::to_string(version) +
                " in " + path);
  }
  const uint32_t frames = GetU32(f, path);
  const uint32_t dims = GetU32(f, path);
  MelSpectrogram mel;
  mel.sample_rate = static_cast<int>(GetU32(f, path));
  mel.hop = static_cast<int>(GetU32(f, path));
  if (frames == 0 || dims == 0 || frames > (1u << 26) || dims > (1u << 16)) {
    throw Error("LoadPvfe: implausible dimensions in " + path);
  }
  mel.data = Tensor({static_cast<int>(frames), static_cast<int>(dims)});
  f.read(reinterpret_cast<char*>(mel.data.Ptr()),
         static_cast<std::streamsize>(mel.data.Numel() * sizeof(float)));
  if (!f) throw Error("LoadPvfe: truncated feature data in " + path);
  return mel;
}

Tensor TransposeMatrix(const Tensor& m) {
  if (m.Rank() != 2) throw Error("TransposeMatrix: expected rank 2");
  Tensor out({m.shape[1], m.shape[0]});
  for (int r = 0; r < m.shape[0]; ++r) {
    for (int c = 0; c < m.shape[1]; ++c) {
      out.At2(c, r) = m.At2(r, c);
    }
  }
  return out;
}

}  // namespace parvoc
