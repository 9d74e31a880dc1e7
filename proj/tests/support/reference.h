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

// Slow, obviously-correct double-precision references for the numeric
// kernels.  Everything here is written from the defining formulas with no
// blocking, padding buffers, or FFTs, so a disagreement points at the
// production code.

#ifndef PARVOC_TESTS_SUPPORT_REFERENCE_H_
#define PARVOC_TESTS_SUPPORT_REFERENCE_H_

#include <vector>

namespace parvoc {
namespace testsupport {

// Same-padded dilated convolution.  x is [ci][tn] row-major, w is
// [co][ci][kw], b has co entries or is empty; result is [co][tn].
std::vector<double> NaiveConv1d(const std::vector<double>& x,
                                const std::vector<double>& w,
                                const std::vector<double>& b, int co, int ci,
                                int kw, int tn, int dil);

// Transposed convolution.  x is [ci][tn], w is [ci][co][kw]; result is
// [co][(tn-1)*stride + kw - 2*pad].
std::vector<double> NaiveConvT1d(const std::vector<double>& x,
                                 const std::vector<double>& w,
                                 const std::vector<double>& b, int ci, int co,
                                 int kw, int tn, int stride, int pad);

// Magnitude of the real DFT of one frame: bins 0 .. n/2 inclusive.
std::vector<double> NaiveDftMagnitude(const std::vector<double>& frame);

// Mu-law companding from the defining formula, mu = 255: encode maps
// [-1, 1] to a class in [0, 255], decode returns the class centroid.
int NaiveMuLawEncode(double x);
double NaiveMuLawDecode(int cls);

}  // namespace testsupport
}  // namespace parvoc

#endif  // PARVOC_TESTS_SUPPORT_REFERENCE_H_
