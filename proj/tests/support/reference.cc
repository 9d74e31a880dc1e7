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

#include "reference.h"

#include <cmath>
#include <cstddef>

namespace parvoc {
namespace testsupport {

std::vector<double> NaiveConv1d(const std::vector<double>& x,
                                const std::vector<double>& w,
                                const std::vector<double>& b, int co, int ci,
                                int kw, int tn, int dil) {
  const int pad = ((kw - 1) / 2) * dil;
  std::vector<double> y(static_cast<size_t>(co) * tn, 0.0);
  for (int o = 0; o < co; ++o) {
    for (int t = 0; t < tn; ++t) {
      double acc = b.empty() ? 0.0 : b[o];
      for (int i = 0; i < ci; ++i) {
        for (int k = 0; k < kw; ++k) {
          const int src = t - pad + k * dil;
          if (src < 0 || src >= tn) continue;
          acc += w[(static_cast<size_t>(o) * ci + i) * kw + k] *
                 x[static_cast<size_t>(i) * tn + src];
        }
      }
      y[static_cast<size_t>(o) * tn + t] = acc;
    }
  }
  return y;
}

std::vector<double> NaiveConvT1d(const std::vector<double>& x,
                                 const std::vector<double>& w,
                                 const std::vector<double>& b, int ci, int co,
                                 int kw, int tn, int stride, int pad) {
  const int to = (tn - 1) * stride + kw - 2 * pad;
  std::vector<double> y(static_cast<size_t>(co) * to, 0.0);
  for (int o = 0; o < co; ++o) {
    for (int t = 0; t < to; ++t) y[static_cast<size_t>(o) * to + t] =
        b.empty() ? 0.0 : b[o];
  }
  for (int i = 0; i < ci; ++i) {
    for (int t = 0; t < tn; ++t) {
      for (int o = 0; o < co; ++o) {
        for (int k = 0; k < kw; ++k) {
          const int dst = t * stride + k - pad;
          if (dst < 0 || dst >= to) continue;
          y[static_cast<size_t>(o) * to + dst] +=
              w[(static_cast<size_t>(i) * co + o) * kw + k] *
              x[static_cast<size_t>(i) * tn + t];
        }
      }
    }
  }
  return y;
}

std::vector<double> NaiveDftMagnitude(const std::vector<double>& frame) {
  const size_t n = frame.size();
  std::vector<double> mag(n / 2 + 1);
  for (size_t bin = 0; bin <= n / 2; ++bin) {
    double re = 0.0, im = 0.0;
    for (size_t t = 0; t < n; ++t) {
      const double a = -2.0 * M_PI * static_cast<double>(bin) *
                       static_cast<double>(t) / static_cast<double>(n);
      re += frame[t] * std::cos(a);
      im += frame[t] * std::sin(a);
    }
    mag[bin] = std::hypot(re, im);
  }
  return mag;
}

int NaiveMuLawEncode(double x) {
  const double mag = std::log(1.0 + 255.0 * std::fabs(x)) / std::log(256.0);
  const double y = x >= 0.0 ? mag : -mag;
  int c = static_cast<int>(std::floor((y + 1.0) / 2.0 * 256.0));
  if (c < 0) c = 0;
  if (c > 255) c = 255;
  return c;
}

double NaiveMuLawDecode(int cls) {
  const double y = (2.0 * cls + 1.0) / 256.0 - 1.0;
  const double mag = (std::pow(256.0, std::fabs(y)) - 1.0) / 255.0;
  return y >= 0.0 ? mag : -mag;
}

}  // namespace testsupport
}  // namespace parvoc
