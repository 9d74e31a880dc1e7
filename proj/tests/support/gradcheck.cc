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

#include "gradcheck.h"

#include <cmath>
#include <memory>

namespace parvoc {
namespace testsupport {

bool FdCheck::Ok(double rtol, double atol) const {
  const double diff = std::fabs(analytic - numeric);
  return diff <= atol + rtol * std::max(std::fabs(analytic),
                                        std::fabs(numeric));
}

FdCheck CheckDirectional(const GraphFn& build,
                         const std::vector<Tensor>& leaves, size_t which,
                         double h, RandomSource& rng) {
  if (which >= leaves.size()) throw Error("CheckDirectional: bad leaf index");
  const size_t n = leaves[which].data.size();

  std::vector<double> dir(n);
  double norm = 0.0;
  for (double& d : dir) {
    d = rng.Normal();
    norm += d * d;
  }
  norm = std::sqrt(norm);
  if (norm == 0.0) throw Error("CheckDirectional: zero direction");
  for (double& d : dir) d /= norm;

  FdCheck out;
  {
    Tape tape;
    Ctx ctx{&tape};
    std::vector<Val> vals;
    vals.reserve(leaves.size());
    for (size_t i = 0; i < leaves.size(); ++i) {
      vals.push_back(tape.Leaf(leaves[i], i == which));
    }
    Val loss = build(ctx, vals);
    if (V(loss).data.size() != 1) {
      throw Error("CheckDirectional: loss must be scalar");
    }
    tape.Backward(loss);
    const Tensor* g = tape.Grad(vals[which].node);
    if (g != nullptr) {
      for (size_t k = 0; k < n; ++k) {
        out.analytic += static_cast<double>(g->data[k]) * dir[k];
      }
    }
  }

  auto eval = [&](double sign) {
    std::vector<Val> vals;
    vals.reserve(leaves.size());
    for (size_t i = 0; i < leaves.size(); ++i) {
      if (i == which) {
        Tensor t = leaves[i];
        for (size_t k = 0; k < n; ++k) {
          t.data[k] += static_cast<float>(sign * h * dir[k]);
        }
        vals.push_back(Val{std::make_shared<const Tensor>(std::move(t)), -1});
      } else {
        vals.push_back(
            Val{std::make_shared<const Tensor>(leaves[i]), -1});
      }
    }
    Ctx eager;
    return static_cast<double>(V(build(eager, vals)).data[0]);
  };
  out.numeric = (eval(1.0) - eval(-1.0)) / (2.0 * h);

  const double denom =
      std::max({std::fabs(out.analytic), std::fabs(out.numeric), 1e-4});
  out.rel = std::fabs(out.analytic - out.numeric) / denom;
  return out;
}

Tensor AwayFromZero(const std::vector<int>& shape, double margin,
                    RandomSource& rng) {
  Tensor t(shape);
  for (auto& v : t.data) {
    double x = rng.Normal();
    x += (x >= 0.0 ? margin : -margin);
    v = static_cast<float>(x);
  }
  return t;
}

}  // namespace testsupport
}  // namespace parvoc
