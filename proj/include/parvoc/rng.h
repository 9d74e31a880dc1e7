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

#ifndef PARVOC_RNG_H_
#define PARVOC_RNG_H_

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "parvoc/tensor.h"

namespace parvoc {

// Random source with hand-rolled distribution transforms.  std::mt19937 has a
// portable, fully specified output sequence; the standard distribution
// adapters do not, so every transform here is written out explicitly to keep
// sampled audio bit-identical across compilers.
class RandomSource {
 public:
  explicit RandomSource(uint64_t seed = 0) : engine_(static_cast<uint32_t>(seed)) {}

  // Uniform in [0, 1) with 32 bits of resolution.
  double Uniform() {
    return engine_() * (1.0 / 4294967296.0);
  }

  double UniformRange(double lo, double hi) {
    return lo + (hi - lo) * Uniform();
  }

  // Standard normal via Box-Muller.  The spare value is cached, so draws come
  // in deterministic pairs.
  double Normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = Uniform();
    } while (u1 <= 0.0);
    double u2 = Uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  bool Bernoulli(double p) { return Uniform() < p; }

  // Index in [0, n) drawn from unnormalized non-negative weights.
  int Categorical(const float* w, int n) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) total += w[i];
    if (!(total > 0.0)) return 0;
    double u = Uniform() * total;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      acc += w[i];
      if (u < acc) return i;
    }
    return n - 1;
  }

  // Index in [0, n).  Floor of a scaled uniform has a bias of at most
  // n / 2^32, negligible for the corpus and offset sizes used here.
  int UniformInt(int n) {
    if (n <= 0) throw Error("RandomSource: UniformInt needs n > 0");
    int i = static_cast<int>(Uniform() * n);
    return i < n ? i : n - 1;
  }

  Tensor NormalTensor(std::vector<int> shape, double stddev = 1.0) {
    Tensor t(std::move(shape));
    for (auto& v : t.data) v = static_cast<float>(Normal() * stddev);
    return t;
  }

  // Serializes the full engine plus Box-Muller carry as a single text line.
  std::string StateString() const {
    std::ostringstream os;
    os << engine_ << " " << (has_spare_ ? 1 : 0) << " " << spare_;
    return os.str();
  }
  void RestoreState(const std::string& s) {
    std::istringstream is(s);
    is >> engine_;
    int flag = 0;
    is >> flag >> spare_;
    if (is.fail()) throw Error("RandomSource: bad state string");
    has_spare_ = (flag != 0);
  }

 private:
  std::mt19937 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace parvoc

#endif  // PARVOC_RNG_H_
