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

#include "parvoc/filterbank.h"

#include <algorithm>
#include <cmath>

#include "parvoc/rng.h"

namespace parvoc {
namespace {

constexpr double kPi = 3.14159265358979323846264338327950288;

double BesselI0(double x) {
  // Power series; converges fast for the beta range used here.
  const double half = x * 0.5;
  double term = 1.0, sum = 1.0;
  for (int k = 1; k < 64; ++k) {
    term *= (half / k) * (half / k);
    sum += term;
    if (term < sum * 1e-17) break;
  }
  return sum;
}

// Kaiser-windowed sinc lowpass, unit DC gain before gain correction.
std::vector<double> WindowedSinc(int taps, double cutoff, double beta) {
  const double mid = 0.5 * (taps - 1);
  const double norm = 1.0 / BesselI0(beta);
  std::vector<double> p(taps);
  for (int n = 0; n < taps; ++n) {
    const double t = n - mid;
    const double sinc =
        t == 0.0 ? cutoff / kPi : std::sin(cutoff * t) / (kPi * t);
    const double r = t / mid;
    const double w = BesselI0(beta * std::sqrt(std::max(0.0, 1.0 - r * r))) * norm;
    p[n] = sinc * w;
  }
  return p;
}

void Modulate(PqmfBank& bank) {
  const int n = bank.n_bands;
  const int taps = bank.taps;
  const double mid = 0.5 * (taps - 1);
  bank.analysis.assign(n, std::vector<double>(taps));
  bank.synthesis.assign(n, std::vector<double>(taps));
  if (n == 1) {
    // Degenerate single-band bank: a pure delay on each side.
    std::vector<double> unit(taps, 0.0);
    unit[(taps - 1) / 2] = 1.0;
    bank.analysis[0] = unit;
    bank.synthesis[0] = unit;
    return;
  }
  for (int k = 0; k < n; ++k) {
    const double phase = (k % 2 == 0 ? 1.0 : -1.0) * kPi / 4.0;
    for (int i = 0; i < taps; ++i) {
      const double arg = (kPi / n) * (k + 0.5) * (i - mid);
      bank.analysis[k][i] = bank.prototype[i] * std::cos(arg + phase);
      bank.synthesis[k][i] = bank.prototype[i] * std::cos(arg - phase);
    }
  }
}

std::vector<float> NoiseProbe(int len) {
  RandomSource rng(20231225);
  std::vector<float> x(len);
  for (auto& v : x) v = static_cast<float>(rng.Normal() * 0.25);
  return x;
}

// Least-squares round-trip gain on a probe; scaling the prototype by
// sqrt(gain) makes the cascade unit gain since both sides carry it.
double RoundTripGain(const PqmfBank& bank, const std::vector<float>& x) {
  SubbandStack s = Analyze(bank, x);
  std::vector<float> y = Synthesize(bank, s);
  double xy = 0.0, yy = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    xy += static_cast<double>(x[i]) * y[i];
    yy += static_cast<double>(y[i]) * y[i];
  }
  if (yy <= 0.0) return 1.0;
  return xy / yy;
}

PqmfBank BuildAt(int n_bands, int taps, double beta, double cutoff,
                 const std::vector<float>& probe) {
  PqmfBank bank;
  bank.n_bands = n_bands;
  bank.taps = taps;
  bank.prototype = WindowedSinc(taps, cutoff, beta);
  Modulate(bank);
  const double gain = RoundTripGain(bank, probe);
  const double scale = std::sqrt(std::max(gain, 1e-12));
  for (auto& v : bank.prototype) v *= scale;
  Modulate(bank);
  return bank;
}

}  // namespace

PqmfBank DesignPqmf(int n_bands, int taps, double kaiser_beta) {
  if (n_bands < 1) throw Error("DesignPqmf: need at least one band");
  if (taps < 3 || taps % 2 == 0) {
    throw Error("DesignPqmf: taps must be odd and >= 3");
  }
  if (n_bands == 1) {
    PqmfBank bank;
    bank.n_bands = 1;
    bank.taps = taps;
    bank.prototype.assign(taps, 0.0);
    bank.prototype[(taps - 1) / 2] = 1.0;
    Modulate(bank);
    return bank;
  }

  const std::vector<float> probe = NoiseProbe(4096);
  // Cutoff as a fraction of the band spacing pi/N.  Round-trip SNR is
  // unimodal in this range: too narrow leaves spectral notches between
  // bands, too wide leaks aliasing that the phase structure cannot cancel.
  double lo = 0.35, hi = 0.95;
  const double kGolden = 0.6180339887498949;
  double a = hi - kGolden * (hi - lo);
  double b = lo + kGolden * (hi - lo);
  auto snr_at = [&](double r) {
    PqmfBank bank = BuildAt(n_bands, taps, kaiser_beta, r * kPi / n_bands, probe);
    return RoundTripSnrDb(bank, probe);
  };
  double fa = snr_at(a), fb = snr_at(b);
  for (int it = 0; it < 40; ++it) {
    if (fa < fb) {
      lo = a;
      a = b;
      fa = fb;
      b = lo + kGolden * (hi - lo);
      fb = snr_at(b);
    } else {
      hi = b;
      b = a;
      fb = fa;
      a = hi - kGolden * (hi - lo);
      fa = snr_at(a);
    }
  }
  const double best = 0.5 * (lo + hi);
  return BuildAt(n_bands, taps, kaiser_beta, best * kPi / n_bands, probe);
}

SubbandStack Analyze(const PqmfBank& bank, const std::vector<float>& x) {
  if (bank.n_bands < 1 || bank.taps < 1) {
    throw Error("Analyze: bank is not designed");
  }
  if (x.empty()) throw Error("Analyze: empty signal");
  const int n = bank.n_bands;
  const int taps = bank.taps;
  const int64_t len = static_cast<int64_t>(x.size());
  // Tail guard: keep every decimated position influenced by the source, so
  // synthesis can reproduce the final samples.
  const int64_t t_sub = (len + taps - 1 + n - 1) / n;

  SubbandStack out;
  out.source_len = len;
  out.bands = Tensor({n, static_cast<int>(t_sub)});
  for (int k = 0; k < n; ++k) {
    const std::vector<double>& h = bank.analysis[k];
    float* row = out.bands.Ptr() + static_cast<size_t>(k) * t_sub;
    for (int64_t t = 0; t < t_sub; ++t) {
      const int64_t m = t * n;
      const int64_t n0 = std::max<int64_t>(0, m - len + 1);
      const int64_t n1 = std::min<int64_t>(taps - 1, m);
      double acc = 0.0;
      for (int64_t i = n0; i <= n1; ++i) acc += h[i] * x[m - i];
      row[t] = static_cast<float>(acc);
    }
  }
  return out;
}

std::vector<float> Synthesize(const PqmfBank& bank, const SubbandStack& s) {
  const int n = bank.n_bands;
  const int taps = bank.taps;
  if (s.bands.Rank() != 2 || s.bands.shape[0] != n) {
    throw Error("Synthesize: band axis mismatch, got " +
                ShapeStr(s.bands.shape) + " for a " + std::to_string(n) +
                "-band bank");
  }
  const int64_t t_sub = s.bands.shape[1];
  if (s.source_len < 0 || t_sub < 1) {
    throw Error("Synthesize: empty subband stack");
  }
  const int64_t full = (t_sub - 1) * n + taps;
  std::vector<double> acc(full, 0.0);
  for (int k = 0; k < n; ++k) {
    const std::vector<double>& g = bank.synthesis[k];
    const float* row = s.bands.Ptr() + static_cast<size_t>(k) * t_sub;
    for (int64_t t = 0; t < t_sub; ++t) {
      const double v = static_cast<double>(row[t]) * n;
      if (v == 0.0) continue;
      double* dst = acc.data() + t * n;
      for (int i = 0; i < taps; ++i) dst[i] += g[i] * v;
    }
  }
  const int64_t delay = bank.Delay();
  std::vector<float> out(static_cast<size_t>(s.source_len), 0.0f);
  for (int64_t t = 0; t < s.source_len; ++t) {
    const int64_t idx = t + delay;
    out[t] = idx < full ? static_cast<float>(acc[idx]) : 0.0f;
  }
  return out;
}

double RoundTripSnrDb(const PqmfBank& bank, const std::vector<float>& x) {
  SubbandStack s = Analyze(bank, x);
  std::vector<float> y = Synthesize(bank, s);
  double sig = 0.0, err = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    sig += static_cast<double>(x[i]) * x[i];
    const double d = static_cast<double>(x[i]) - y[i];
    err += d * d;
  }
  if (err <= 0.0) return 300.0;  // numerically perfect
  if (sig <= 0.0) return 0.0;
  return 10.0 * std::log10(sig / err);
}

Tensor SynthesisFilterTensor(const PqmfBank& bank) {
  Tensor w({bank.n_bands, 1, bank.taps});
  for (int k = 0; k < bank.n_bands; ++k) {
    for (int i = 0; i < bank.taps; ++i) {
      w.data[static_cast<size_t>(k) * bank.taps + i] =
          static_cast<float>(bank.synthesis[k][i] * bank.n_bands);
    }
  }
  return w;
}

}  // namespace parvoc
