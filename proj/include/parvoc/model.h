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

#ifndef PARVOC_MODEL_H_
#define PARVOC_MODEL_H_

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "parvoc/autodiff.h"
#include "parvoc/features.h"
#include "parvoc/filterbank.h"
#include "parvoc/rng.h"
#include "parvoc/tensor.h"

namespace parvoc {

using ParamPtr = std::shared_ptr<Tensor>;
using ParamVisitor = std::function<void(const std::string&, const ParamPtr&)>;

// Architecture hyperparameters.  The defaults are the full-size model; tests
// and toy training shrink channel counts but never change the topology.
struct ModelConfig {
  int sample_rate = 24000;
  int n_bands = 8;
  int n_mels = 80;
  int cond_ch = 32;      // upsampled feature channels
  int residual_ch = 128; // width of both WaveNet stacks and the bit blocks
  int hidden_ch = 16;    // carried hidden state channels
  int wn_layers = 15;    // per stack
  int max_dilation = 32; // dilation cycle 1,2,...,max,1,2,...
  int kernel = 5;        // dilated conv kernel
  int bit_kernel = 5;    // bit block kernel
  int n_bit_blocks = 3;
  int n_classes = 256;
  std::vector<int> upsample = {5, 5};  // feature-rate to subband-rate factors
  int group = 1;                       // grouping factor g

  int UpsampleProduct() const {
    int p = 1;
    for (int r : upsample) p *= r;
    return p;
  }
  void Validate() const;
};

enum class FarOrder {
  kHighToLow,  // default: highest-frequency subband first
  kLowToHigh,  // inverted-order ablation
};

struct GenerationConfig {
  FarOrder far_order = FarOrder::kHighToLow;
  int bar_depth = 3;  // 3, 2, or 0 bit stages before the class posterior
  bool use_postfilter = true;
  int group = 1;  // must match the checkpoint's architecture
  float sharpen_b1 = 10.0f;
  float sharpen_b2 = 10.0f;
  float sharpen_b3 = 5.0f;
  float sharpen_class = 10.0f;
  uint64_t seed = 0;

  void Validate() const;
};

// --- Parameter containers --------------------------------------------------

struct ConvP {
  ParamPtr w;  // [Co, Ci, K] for Conv1d, [Ci, Co, K] for ConvT1d
  ParamPtr b;
};

struct WnLayerP {
  ConvP dil;   // kernel-K dilated conv, R -> 2R
  ConvP cond;  // 1x1 conditioning projector -> 2R
  ConvP res;   // 1x1 R -> R
  ConvP skip;  // 1x1 R -> R
  int dilation = 1;
};

struct WnP {
  std::vector<WnLayerP> layers;
  ConvP out;  // 1x1 on relu(skip sum)
};

struct UpsamplerP {
  std::vector<ConvP> stages;  // transposed convs, stride r, kernel 2r-1
  std::vector<int> rates;
};

struct FarBarNetP {
  ModelConfig cfg;
  ConvP input_proj;            // 1x1 over grouped concat(x_prev, h_prev)
  WnP wn_a;
  WnP wn_b;
  std::vector<ConvP> bits;     // three kernel-5 bit blocks
  ConvP post1, post2;          // 1x1 + Mish, twice
  ConvP post_head;             // 1x1 -> n_classes * g
  ConvP hidden_head;           // 1x1 -> hidden_ch * g, tanh for a bounded carry
  UpsamplerP upsampler;

  void Visit(const std::string& prefix, const ParamVisitor& fn) const;
  int64_t ParamCount() const;
};

struct PostFilterP {
  ConvP in_proj;  // 1x1, n_classes -> pf width
  WnP wn;         // 5 layers, 64 channels
  ConvP head;     // 1x1 -> 1, tanh range

  void Visit(const std::string& prefix, const ParamVisitor& fn) const;
  int64_t ParamCount() const;
};

FarBarNetP InitFarBarNet(const ModelConfig& cfg, RandomSource& rng);
PostFilterP InitPostFilter(const ModelConfig& cfg, RandomSource& rng);

// Binds parameters to tape leaves, once per parameter per tape, so gradient
// accumulation lands in a single slot no matter how many times a weight is
// used in the graph.  In eager mode it simply wraps the pointer.
class Binder {
 public:
  explicit Binder(Ctx ctx, bool trainable = true)
      : ctx_(ctx), trainable_(trainable) {}

  Val operator()(const ParamPtr& p);

  // Node id of a bound parameter (for gradient lookup), or -1.
  int NodeOf(const ParamPtr& p) const;

  Ctx ctx() const { return ctx_; }

 private:
  Ctx ctx_;
  bool trainable_;
  std::unordered_map<const Tensor*, Val> cache_;
};

// --- Forward passes --------------------------------------------------------

// WaveNet stack over [., R, T'] with grouped conditioning of matching T'.
Val WnForward(Ctx ctx, Binder& bind, const WnP& wn, Val x, Val cond);

// Feature upsampler: [., n_mels, frames] -> [., cond_ch, frames * product].
Val UpsampleFeatures(Ctx ctx, Binder& bind, const UpsamplerP& up, Val mel);

// Supplies the bits concatenated between bit blocks: ground truth during
// training, sampled during generation.  Receives the plane index (1-based)
// and that plane's logits at subband rate, returns bits at subband rate.
using BitSource = std::function<Val(int plane, const Val& logits)>;

struct FarStepOut {
  Val posterior_logits;    // [., n_classes, T]
  std::vector<Val> bit_logits;  // bar_depth entries of [., 1, T]
  Val h_next;              // [., hidden_ch, T]
};

// One FAR iteration: x_prev and h_prev at subband rate, conditioning f at
// subband rate; grouping happens inside.  bar_depth selects how many bit
// blocks run (0 bypasses the ladder entirely).
FarStepOut FarStep(Ctx ctx, Binder& bind, const FarBarNetP& net, Val x_prev,
                   Val h_prev, Val f, int bar_depth, const BitSource& bits);

// --- Sampling --------------------------------------------------------------

struct SampledOutputs {
  std::vector<Tensor> bits;  // bar_depth rows of [1, T], values 0/1
  std::vector<int> classes;  // length T
};

// Sharpened sampling of all outputs given logits (bit planes then classes,
// one Bernoulli/Categorical draw per time step in order).
SampledOutputs SampleOutputs(const std::vector<Tensor>& bit_logits,
                             const Tensor& posterior_logits,
                             const GenerationConfig& cfg, RandomSource& rng);

// Single-plane and class-path helpers shared with the generation loop so the
// sampling distributions cannot drift between the two call sites.
Tensor SampleBitPlane(const Tensor& logits, float sharpen, RandomSource& rng);
std::vector<int> SampleClasses(const Tensor& posterior_logits, float sharpen,
                               RandomSource& rng);

// --- Generation ------------------------------------------------------------

struct GenCounters {
  int far_passes = 0;
  int max_stages_per_pass = 0;
};

// Measured per-pass record: which filter-bank channel was produced and how
// many prediction stages (bit draws plus the class or post-filter stage)
// actually ran.  Counted at the sampling sites, not inferred from config.
struct PassRecord {
  int band = 0;
  int stages = 0;
};

struct GenResult {
  std::vector<float> wav;
  std::vector<PassRecord> passes;  // one entry per FAR pass, in visit order
  GenCounters counters;
};

// Full synthesis: upsample features once, run the fixed-count band loop with
// noise input and hidden-state carry, fill a subband stack, and reconstruct
// through the filter bank.  Output is clamped to [-1, 1] and trimmed to
// frames * hop samples.  pf may be null (or use_postfilter false) for the
// sampled-class path.
GenResult Generate(const FarBarNetP& net, const PostFilterP* pf,
                   const PqmfBank& bank, const MelSpectrogram& mel,
                   const GenerationConfig& cfg);

// --- Teacher-forced training loss ------------------------------------------

struct TrainBatch {
  Tensor bands;  // [B, n_bands, T] ground-truth subbands
  Tensor mel;    // [B, n_mels, frames] channel-major conditioning
  Tensor noise;  // [B, 1, T] the x^0 input
};

struct LossParts {
  double total = 0.0;
  double ce = 0.0;   // mean posterior cross-entropy across steps
  double bce = 0.0;  // mean summed bit losses across steps
};

// Mean over the n_bands FAR steps of [sum of active-plane BCEs + class CE],
// every step conditioned on the ground-truth previous subband.
Val TeacherForcedLoss(Ctx ctx, Binder& bind, const FarBarNetP& net,
                      const TrainBatch& batch, FarOrder order, int bar_depth,
                      LossParts* parts);

// Band visit order as filter-bank channel indices (channel n_bands-1 is the
// highest frequency band).
std::vector<int> BandVisitOrder(int n_bands, FarOrder order);

}  // namespace parvoc

#endif  // PARVOC_MODEL_H_
