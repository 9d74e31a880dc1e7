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

#include "parvoc/metrics.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "parvoc/features.h"

namespace parvoc {
namespace {

constexpr int kHop = 200;
constexpr int kF0Win = 1024;
constexpr double kF0Low = 60.0;
constexpr double kF0High = 400.0;
constexpr double kVoicingPeak = 0.3;
constexpr int kCepstralOrder = 24;  // coefficients 1..24, c0 excluded

double FrameDistance(const Tensor& a, const Tensor& b, int i, int j) {
  const int d = a.shape[1];
  const float* ra = a.Ptr() + static_cast<size_t>(i) * d;
  const float* rb = b.Ptr() + static_cast<size_t>(j) * d;
  double acc = 0.0;
  for (int k = 0; k < d; ++k) {
    const double diff = static_cast<double>(ra[k]) - rb[k];
    acc += diff * diff;
  }
  return std::sqrt(acc);
}

}  // namespace

F0Track TrackF0(const std::vector<float>& x, int sample_rate) {
  if (sample_rate < 16000) {
    throw Error("TrackF0: sample rate must be at least 16 kHz");
  }
  const int lag_min = static_cast<int>(std::ceil(sample_rate / kF0High));
  const int lag_max = static_cast<int>(std::floor(sample_rate / kF0Low));
  // One extra lag on each side for peak tests and parabolic refinement.
  const int reach = kF0Win + lag_max + 1;
  F0Track out;
  if (static_cast<int64_t>(x.size()) < reach) return out;
  const int frames =
      static_cast<int>((x.size() - reach) / kHop) + 1;
  out.f0_hz.assign(frames, 0.0f);
  out.voiced.assign(frames, 0);

  // Relative energy gate: quiet frames cannot be voiced no matter how
  // periodic their residual noise looks.
  std::vector<double> rms(frames);
  double peak_rms = 0.0;
  for (int f = 0; f < frames; ++f) {
    const float* s = x.data() + static_cast<size_t>(f) * kHop;
    double e = 0.0;
    for (int t = 0; t < kF0Win; ++t) e += static_cast<double>(s[t]) * s[t];
    rms[f] = std::sqrt(e / kF0Win);
    peak_rms = std::max(peak_rms, rms[f]);
  }
  const double gate = std::max(1e-5, 0.05 * peak_rms);

  std::vector<double> r(lag_max + 2, 0.0);
  for (int f = 0; f < frames; ++f) {
    if (rms[f] < gate) continue;
    const float* s = x.data() + static_cast<size_t>(f) * kHop;
    double e0 = 0.0;
    for (int t = 0; t < kF0Win; ++t) e0 += static_cast<double>(s[t]) * s[t];
    for (int lag = lag_min - 1; lag <= lag_max + 1; ++lag) {
      double xy = 0.0, ee = 0.0;
      for (int t = 0; t < kF0Win; ++t) {
        xy += static_cast<double>(s[t]) * s[t + lag];
        ee += static_cast<double>(s[t + lag]) * s[t + lag];
      }
      const double den = std::sqrt(e0 * ee);
      r[lag] = den > 0.0 ? xy / den : 0.0;
    }

    double best = 0.0;
    for (int lag = lag_min; lag <= lag_max; ++lag) {
      if (r[lag] > r[lag - 1] && r[lag] >= r[lag + 1]) {
        best = std::max(best, r[lag]);
      }
    }
    if (best < kVoicingPeak) continue;
    // Among local peaks close to the best, take the shortest lag; this
    // rejects the octave-down peaks a periodic signal always produces.
    int pick = 0;
    for (int lag = lag_min; lag <= lag_max; ++lag) {
      if (r[lag] > r[lag - 1] && r[lag] >= r[lag + 1] &&
          r[lag] >= 0.98 * best) {
        pick = lag;
        break;
      }
    }
    if (pick == 0) continue;
    const double denom = r[pick - 1] - 2.0 * r[pick] + r[pick + 1];
    double delta = 0.0;
    if (std::abs(denom) > 1e-12) {
      delta = 0.5 * (r[pick - 1] - r[pick + 1]) / denom;
      delta = std::clamp(delta, -0.5, 0.5);
    }
    out.voiced[f] = 1;
    out.f0_hz[f] = static_cast<float>(sample_rate / (pick + delta));
  }
  return out;
}

Tensor MelCepstra(const std::vector<float>& x, int sample_rate) {
  if (x.empty()) throw Error("MelCepstra: empty signal");
  MelSpectrogram mel = ComputeMel(x, sample_rate, StftConfig{});
  const int frames = mel.data.shape[0];
  const int m = mel.data.shape[1];
  // Plain (unnormalized) DCT-II; any fixed scaling is internally consistent
  // and c0 is dropped so level changes cancel.
  std::vector<double> table(static_cast<size_t>(kCepstralOrder) * m);
  for (int k = 1; k <= kCepstralOrder; ++k) {
    for (int n = 0; n < m; ++n) {
      table[static_cast<size_t>(k - 1) * m + n] =
          std::cos(M_PI * k * (n + 0.5) / m);
    }
  }
  Tensor out({frames, kCepstralOrder});
  for (int f = 0; f < frames; ++f) {
    const float* row = mel.data.Ptr() + static_cast<size_t>(f) * m;
    for (int k = 0; k < kCepstralOrder; ++k) {
      const double* ck = table.data() + static_cast<size_t>(k) * m;
      double acc = 0.0;
      for (int n = 0; n < m; ++n) acc += ck[n] * row[n];
      out.At2(f, k) = static_cast<float>(acc);
    }
  }
  return out;
}

std::vector<std::pair<int, int>> DtwPath(const Tensor& a, const Tensor& b) {
  if (a.Rank() != 2 || b.Rank() != 2 || a.shape[1] != b.shape[1]) {
    throw Error("DtwPath: feature matrices must be [frames, dims] with "
                "matching dims");
  }
  const int na = a.shape[0], nb = b.shape[0];
  if (na < 1 || nb < 1) throw Error("DtwPath: empty feature matrix");
  if (static_cast<int64_t>(na) * nb > 200'000'000) {
    throw Error("DtwPath: alignment grid too large");
  }

  // Rolling accumulated-cost rows plus a full move matrix for backtracking.
  // Moves: 0 diagonal, 1 from above (i-1, j), 2 from the left (i, j-1).
  std::vector<double> prev(nb), cur(nb);
  std::vector<uint8_t> move(static_cast<size_t>(na) * nb);
  for (int j = 0; j < nb; ++j) {
    prev[j] = FrameDistance(a, b, 0, j) + (j > 0 ? prev[j - 1] : 0.0);
    move[j] = j > 0 ? 2 : 0;
  }
  for (int i = 1; i < na; ++i) {
    cur[0] = prev[0] + FrameDistance(a, b, i, 0);
    move[static_cast<size_t>(i) * nb] = 1;
    for (int j = 1; j < nb; ++j) {
      const double diag = prev[j - 1];
      const double up = prev[j];
      const double left = cur[j - 1];
      double best = diag;
      uint8_t mv = 0;
      if (up < best) { best = up; mv = 1; }
      if (left < best) { best = left; mv = 2; }
      cur[j] = best + FrameDistance(a, b, i, j);
      move[static_cast<size_t>(i) * nb + j] = mv;
    }
    std::swap(prev, cur);
  }

  std::vector<std::pair<int, int>> path;
  int i = na - 1, j = nb - 1;
  path.emplace_back(i, j);
  while (i > 0 || j > 0) {
    switch (move[static_cast<size_t>(i) * nb + j]) {
      case 0: --i; --j; break;
      case 1: --i; break;
      default: --j; break;
    }
    path.emplace_back(i, j);
  }
  std::reverse(path.begin(), path.end());
  return path;
}

double McdFromPath(const Tensor& a, const Tensor& b,
                   const std::vector<std::pair<int, int>>& path) {
  if (path.empty()) throw Error("McdFromPath: empty path");
  double acc = 0.0;
  for (const auto& [i, j] : path) acc += FrameDistance(a, b, i, j);
  const double kScale = 10.0 * std::sqrt(2.0) / std::log(10.0);
  return kScale * acc / path.size();
}

double VuvErrorPercent(const std::vector<uint8_t>& a,
                       const std::vector<uint8_t>& b) {
  if (a.size() != b.size()) {
    throw Error("VuvErrorPercent: flag sequences differ in length (" +
                std::to_string(a.size()) + " vs " + std::to_string(b.size()) +
                "); align them first");
  }
  if (a.empty()) return 0.0;
  int64_t bad = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    if ((a[i] != 0) != (b[i] != 0)) ++bad;
  }
  return 100.0 * bad / a.size();
}

UttEval EvaluatePair(const std::vector<float>& ref,
                     const std::vector<float>& gen, int sample_rate) {
  Tensor ca = MelCepstra(ref, sample_rate);
  Tensor cb = MelCepstra(gen, sample_rate);
  const std::vector<std::pair<int, int>> path = DtwPath(ca, cb);

  UttEval ev;
  ev.mcd = McdFromPath(ca, cb, path);
  ev.aligned_frames = static_cast<int>(path.size());

  // The pitch tracker needs full window coverage, so its track can be a few
  // frames shorter than the cepstral one; pairs beyond it are skipped.
  const F0Track fa = TrackF0(ref, sample_rate);
  const F0Track fb = TrackF0(gen, sample_rate);
  int64_t considered = 0, mismatched = 0;
  double sq = 0.0;
  for (const auto& [i, j] : path) {
    if (i >= static_cast<int>(fa.voiced.size()) ||
        j >= static_cast<int>(fb.voiced.size())) {
      continue;
    }
    ++considered;
    const bool va = fa.voiced[i] != 0;
    const bool vb = fb.voiced[j] != 0;
    if (va != vb) ++mismatched;
    if (va && vb) {
      const double d = static_cast<double>(fa.f0_hz[i]) - fb.f0_hz[j];
      sq += d * d;
      ++ev.voiced_pairs;
    }
  }
  ev.vuv_error_pct = considered > 0 ? 100.0 * mismatched / considered : 0.0;
  ev.f0_rmse_hz = ev.voiced_pairs > 0 ? std::sqrt(sq / ev.voiced_pairs) : 0.0;
  return ev;
}

double EvalReport::MeanMcd() const {
  if (utterances.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& [name, ev] : utterances) acc += ev.mcd;
  return acc / utterances.size();
}

double EvalReport::MeanF0Rmse() const {
  double acc = 0.0;
  int n = 0;
  for (const auto& [name, ev] : utterances) {
    if (ev.voiced_pairs > 0) {
      acc += ev.f0_rmse_hz;
      ++n;
    }
  }
  return n > 0 ? acc / n : 0.0;
}

double EvalReport::MeanVuvError() const {
  if (utterances.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& [name, ev] : utterances) acc += ev.vuv_error_pct;
  return acc / utterances.size();
}

std::string FormatReport(const EvalReport& report) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof(line), "utterances       %zu\n",
                report.utterances.size());
  os << line;
  std::snprintf(line, sizeof(line), "mean MCD         %.4f\n",
                report.MeanMcd());
  os << line;
  std::snprintf(line, sizeof(line), "mean F0 RMSE Hz  %.4f\n",
                report.MeanF0Rmse());
  os << line;
  std::snprintf(line, sizeof(line), "mean V/UV err %%  %.4f\n",
                report.MeanVuvError());
  os << line;
  for (const auto& [name, ev] : report.utterances) {
    std::snprintf(line, sizeof(line),
                  "  %-24s mcd %.4f  f0_rmse %.4f  vuv %.4f  frames %d\n",
                  name.c_str(), ev.mcd, ev.f0_rmse_hz, ev.vuv_error_pct,
                  ev.aligned_frames);
    os << line;
  }
  return os.str();
}

void SaveReport(const EvalReport& report, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error("SaveReport: cannot open " + path);
  f << "utterances=" << report.utterances.size() << "\n";
  char buf[128];
  std::snprintf(buf, sizeof(buf), "mean_mcd=%.6f\n", report.MeanMcd());
  f << buf;
  std::snprintf(buf, sizeof(buf), "mean_f0_rmse_hz=%.6f\n",
                report.MeanF0Rmse());
  f << buf;
  std::snprintf(buf, sizeof(buf), "mean_vuv_error_pct=%.6f\n",
                report.MeanVuvError());
  f << buf;
  for (const auto& [name, ev] : report.utterances) {
    std::snprintf(buf, sizeof(buf), "utt.%s.mcd=%.6f\n", name.c_str(), ev.mcd);
    f << buf;
    std::snprintf(buf, sizeof(buf), "utt.%s.f0_rmse_hz=%.6f\n", name.c_str(),
                  ev.f0_rmse_hz);
    f << buf;
    std::snprintf(buf, sizeof(buf), "utt.%s.vuv_error_pct=%.6f\n",
                  name.c_str(), ev.vuv_error_pct);
    f << buf;
  }
  if (!f.good()) throw Error("SaveReport: write failed for " + path);
}

}  // namespace parvoc
