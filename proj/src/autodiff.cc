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

#include "parvoc/autodiff.h"

namespace parvoc {

Val Tape::Leaf(std::shared_ptr<const Tensor> t, bool requires_grad) {
  if (!t) throw Error("Tape: null leaf tensor");
  Node n;
  n.value = t;
  n.requires_grad = requires_grad;
  n.is_leaf = true;
  nodes_.push_back(std::move(n));
  grads_.emplace_back(nullptr);
  return Val{std::move(t), static_cast<int>(nodes_.size()) - 1};
}

Val Tape::Record(std::shared_ptr<const Tensor> value,
                 const std::vector<int>& inputs, BackFn fn) {
  if (used_) {
    throw Error("Tape: recording after Backward; Reset the tape first");
  }
  bool needs = false;
  for (int id : inputs) {
    if (id >= 0 && nodes_[id].requires_grad) {
      needs = true;
      break;
    }
  }
  Node n;
  n.value = value;
  n.requires_grad = needs;
  if (needs) n.back = std::move(fn);
  nodes_.push_back(std::move(n));
  grads_.emplace_back(nullptr);
  return Val{std::move(value), static_cast<int>(nodes_.size()) - 1};
}

void Tape::AccumGrad(int node, Tensor&& g) {
  if (node < 0) return;
  if (!nodes_[node].requires_grad) return;
  auto& slot = grads_[node];
  if (!slot) {
    slot = std::make_unique<Tensor>(std::move(g));
    return;
  }
  CheckSameShape(*slot, g, "Tape::AccumGrad");
  float* a = slot->Ptr();
  const float* b = g.Ptr();
  const int64_t n = g.Numel();
  for (int64_t i = 0; i < n; ++i) a[i] += b[i];
}

void Tape::Backward(const Val& loss) {
  if (used_) {
    throw Error(
        "Tape: Backward called twice; intermediate values were already "
        "freed.  Reset the tape and rebuild the graph first");
  }
  used_ = true;
  if (loss.node < 0 || loss.node >= static_cast<int>(nodes_.size())) {
    throw Error("Tape: loss value was not recorded on this tape");
  }
  if (V(loss).Numel() != 1) {
    throw Error("Tape: Backward needs a scalar loss, got shape " +
                ShapeStr(V(loss).shape));
  }
  grads_[loss.node] = std::make_unique<Tensor>(Tensor::Scalar(1.0f));

  for (int i = loss.node; i >= 0; --i) {
    Node& n = nodes_[i];
    if (grads_[i] && n.back) {
      n.back(*this, *grads_[i]);
    }
    if (!n.is_leaf) {
      // Free as soon as consumed: the gradient buffer, the recorded value,
      // and the captured input references inside the back closure.
      grads_[i].reset();
      n.back = nullptr;
      n.value.reset();
    }
  }
}

const Tensor* Tape::Grad(int node) const {
  if (node < 0 || node >= static_cast<int>(nodes_.size())) return nullptr;
  return grads_[node].get();
}

void Tape::Reset() {
  nodes_.clear();
  grads_.clear();
  used_ = false;
}

}  // namespace parvoc
