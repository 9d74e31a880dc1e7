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

#ifndef PARVOC_AUTODIFF_H_
#define PARVOC_AUTODIFF_H_

#include <functional>
#include <memory>
#include <vector>

#include "parvoc/tensor.h"

namespace parvoc {

class Tape;

// Handle to a tensor flowing through the network.  `t` keeps the value alive;
// `node` indexes the tape entry when recording, and is -1 in eager mode.
struct Val {
  std::shared_ptr<const Tensor> t;
  int node = -1;

  bool Defined() const { return t != nullptr; }
};

inline const Tensor& V(const Val& v) {
  if (!v.t) throw Error("Val: undefined value");
  return *v.t;
}

// Execution context threaded through every operator.  A null tape runs the
// operator eagerly and keeps no history, so inference allocates nothing
// beyond the live activations; a non-null tape records each node for reverse
// mode.  Model code is written once against Ctx and works in both modes.
struct Ctx {
  Tape* tape = nullptr;

  bool Recording() const { return tape != nullptr; }
};

// Reverse-mode tape.  Nodes are recorded in execution order; Backward walks
// them once in reverse, releasing each node's value, gradient, and captured
// inputs as soon as they have been consumed.
class Tape {
 public:
  using BackFn = std::function<void(Tape&, const Tensor&)>;

  // Registers an externally owned tensor.  Gradients are accumulated for it
  // only when requires_grad is set; they survive Backward and are read with
  // Grad().
  Val Leaf(std::shared_ptr<const Tensor> t, bool requires_grad);
  Val Leaf(Tensor t, bool requires_grad) {
    return Leaf(std::make_shared<const Tensor>(std::move(t)), requires_grad);
  }

  // Records an operator result.  `fn` receives the output gradient and calls
  // AccumGrad on the inputs it cares about; it is dropped (with its captures)
  // right after being invoked.  Inputs with node -1 are treated as constants.
  Val Record(std::shared_ptr<const Tensor> value,
             const std::vector<int>& inputs, BackFn fn);

  // True when gradients must be produced for this node.
  bool Requires(int node) const {
    return node >= 0 && nodes_[node].requires_grad;
  }

  void AccumGrad(int node, Tensor&& g);

  // Runs reverse mode from a scalar loss.  Callable once per tape; a second
  // call without Reset reports an error because the intermediate state has
  // already been freed.
  void Backward(const Val& loss);

  // Gradient accumulated for a leaf, or null when none reached it.
  const Tensor* Grad(int node) const;

  void Reset();

  size_t NodeCount() const { return nodes_.size(); }

 private:
  struct Node {
    std::shared_ptr<const Tensor> value;
    BackFn back;
    bool requires_grad = false;
    bool is_leaf = false;
  };

  std::vector<Node> nodes_;
  std::vector<std::unique_ptr<Tensor>> grads_;
  bool used_ = false;
};

// --- Operators -------------------------------------------------------------
//
// All operators accept rank-2 [C, T] or rank-3 [B, C, T] activations unless
// stated otherwise and validate shapes, reporting the offending axis.

// Dilated convolution, "same" padding.  w is [Co, Ci, K]; pass Val{} as b for
// no bias.
Val Conv1d(Ctx ctx, const Val& x, const Val& w, const Val& b, int dilation);

// Transposed convolution; w is [Ci, Co, K].  Output length is
// (T-1)*stride + K - 2*pad.
Val ConvT1d(Ctx ctx, const Val& x, const Val& w, const Val& b, int stride,
            int pad);

Val Add(Ctx ctx, const Val& a, const Val& b);
Val Sub(Ctx ctx, const Val& a, const Val& b);
Val Mul(Ctx ctx, const Val& a, const Val& b);
Val Scale(Ctx ctx, const Val& x, float c);

Val Relu(Ctx ctx, const Val& x);
Val Sigmoid(Ctx ctx, const Val& x);
Val Tanh(Ctx ctx, const Val& x);
Val Mish(Ctx ctx, const Val& x);
Val Abs(Ctx ctx, const Val& x);
// Elementwise ln(max(x, floor)); zero gradient where the floor engages.
Val LogFloor(Ctx ctx, const Val& x, float floor);

// tanh(a) * sigmoid(b), the gated activation unit.
Val Gated(Ctx ctx, const Val& a, const Val& b);

Val ConcatCh(Ctx ctx, const std::vector<Val>& parts);
Val SliceCh(Ctx ctx, const Val& x, int c0, int c1);
Val SliceTime(Ctx ctx, const Val& x, int t0, int t1);
// One batch element of a [B, C, T] activation as rank-2 [C, T].
Val SliceBatch(Ctx ctx, const Val& x, int b);

// Space-to-channel regrouping: [C, T] -> [C*g, T/g] with
// out[c*g + j, t] = in[c, t*g + j].  Ungroup is the exact inverse.
Val Group(Ctx ctx, const Val& x, int g);
Val Ungroup(Ctx ctx, const Val& x, int g);

// Softmax over the channel axis, one distribution per (batch, time) column.
Val SoftmaxCh(Ctx ctx, const Val& x);

// Scalar losses (shape [1]).  Means are taken over every element / column.
Val CrossEntropyLogits(Ctx ctx, const Val& logits,
                       const std::vector<int>& classes);
Val BceLogits(Ctx ctx, const Val& logits, const Val& targets);
Val MaeLoss(Ctx ctx, const Val& a, const Val& b);
Val Mean(Ctx ctx, const Val& x);
Val Sum(Ctx ctx, const Val& x);

// Scalar-to-scalar helpers for assembling composite losses.
Val SqrtScalar(Ctx ctx, const Val& x);
Val DivScalar(Ctx ctx, const Val& num, const Val& den);
Val MaxScalar(Ctx ctx, const Val& x, float c);

// Column/row pooling on rank-2 inputs, used by the band-limited
// spectral loss.  MeanOverRows averages rows [r0, r1) into [1, T];
// MeanOverCols averages all columns of rows [r0, r1) into [r1-r0, 1].
Val MeanOverRows(Ctx ctx, const Val& x, int r0, int r1);
Val MeanOverCols(Ctx ctx, const Val& x, int r0, int r1);

// Magnitude spectrogram of a [1, L] signal: output [fft/2 + 1, frames] with
// frames = ceil(L / hop), reflection padding, periodic Hann window of length
// `win` zero-padded to `fft`.
Val StftMag(Ctx ctx, const Val& x, int fft, int hop, int win);

}  // namespace parvoc

#endif  // PARVOC_AUTODIFF_H_
