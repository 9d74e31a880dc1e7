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

#include "parvoc/model.h"

#include <array>
#include <cmath>

#include "parvoc/quantize.h"

namespace parvoc {
namespace {

// Grouping with factor 1 is the identity; skip the copy.
Val GroupIf(Ctx ctx, const Val& x, int g) {
  return g == 1 ? x : Group(ctx, x, g);
}
Val UngroupIf(Ctx ctx, const Val& x, int g) {
  return g == 1 ? x : Ungroup(ctx, x, g);
}

ParamPtr NewParam(std::vector<int> shape, RandomSource& rng, double fan_in) {
  const double stddev = 1.0 / std::sqrt(std::max(1.0, fan_in));
  auto t = std::make_shared<Tensor>(std::move(shape));
  for (auto& v : t->data) v = static_cast<float>(rng.Normal() * stddev);
  return t;
}

ParamPtr NewZeros(std::vector<int> shape) {
  return std::make_shared<Tensor>(std::move(shape));
}

// Forward conv parameter [co, ci, k], fan-in initialized, zero bias.
ConvP NewConv(int co, int ci, int k, RandomSource& rng) {
  ConvP p;
  p.w = NewParam({co, ci, k}, rng, static_cast<double>(ci) * k);
  p.b = NewZeros({co});
  return p;
}

// Transposed conv parameter [ci, co, k].
ConvP NewConvT(int ci, int co, int k, RandomSource& rng) {
  ConvP p;
  p.w = NewParam({ci, co, k}, rng, static_cast<double>(ci) * k);
  p.b = NewZeros({co});
  return p;
}

WnP NewWn(int layers, int residual, int cond_in, int kernel, int max_dilation,
          RandomSource& rng) {
  WnP wn;
  int dil = 1;
  for (int i = 0; i < layers; ++i) {
    WnLayerP l;
    l.dilation = dil;
    l.dil = NewConv(2 * residual, residual, kernel, rng);
    l.cond = NewConv(2 * residual, cond_in, 1, rng);
    l.res = NewConv(residual, residual, 1, rng);
    l.skip = NewConv(residual, residual, 1, rng);
    wn.layers.push_back(std::move(l));
    dil *= 2;
    if (dil > max_dilation) dil = 1;
  }
  wn.out = NewConv(residual, residual, 1, rng);
  return wn;
}

void VisitConv(const std::string& name, const ConvP& p,
               const ParamVisitor& fn) {
  fn(name + ".w", p.w);
  fn(name + ".b", p.b);
}

void VisitWn(const std::string& name, const WnP& wn, const ParamVisitor& fn) {
  for (size_t i = 0; i < wn.layers.size(); ++i) {
    const std::string l =
        name + ".l" + (i < 10 ? "0" : "") + std::to_string(i);
    VisitConv(l + ".dil", wn.layers[i].dil, fn);
    VisitConv(l + ".cond", wn.layers[i].cond, fn);
    VisitConv(l + ".res", wn.layers[i].res, fn);
    VisitConv(l + ".skip", wn.layers[i].skip, fn);
  }
  VisitConv(name + ".out", wn.out, fn);
}

int64_t CountVisited(const std::function<void(const ParamVisitor&)>& visit) {
  int64_t n = 0;
  visit([&n](const std::string&, const ParamPtr& p) { n += p->Numel(); });
  return n;
}

}  // namespace

void ModelConfig::Validate() const {
  if (n_bands < 1) throw Error("ModelConfig: n_bands must be >= 1");
  if (residual_ch < 1 || hidden_ch < 1 || cond_ch < 1) {
    throw Error("ModelConfig: channel counts must be positive");
  }
  if (group < 1) throw Error("ModelConfig: group must be >= 1");
  if (residual_ch <= group) {
    throw Error("ModelConfig: residual channels must exceed group size "
                "(bit blocks reserve the first g channels)");
  }
  if (n_bit_blocks != 3) {
    throw Error("ModelConfig: architecture owns exactly 3 bit blocks");
  }
  // Frame-rate identity: one feature frame must cover exactly
  // n_bands * product(upsample) waveform samples, the feature hop.
  if (UpsampleProduct() * n_bands != 200) {
    // hop is pinned by the feature module; this guards config drift.
    throw Error("ModelConfig: upsample product * n_bands must equal the "
                "feature hop of 200 samples");
  }
}

void GenerationConfig::Validate() const {
  if (bar_depth != 0 && bar_depth != 2 && bar_depth != 3) {
    throw Error("GenerationConfig: bar_depth must be 0, 2, or 3");
  }
  if (group != 1 && group != 5 && group != 10) {
    throw Error("GenerationConfig: group must be 1, 5, or 10");
  }
}

FarBarNetP InitFarBarNet(const ModelConfig& cfg, RandomSource& rng) {
  cfg.Validate();
  FarBarNetP net;
  net.cfg = cfg;
  const int g = cfg.group;
  const int r = cfg.residual_ch;
  net.input_proj = NewConv(r, (1 + cfg.hidden_ch) * g, 1, rng);
  net.wn_a = NewWn(cfg.wn_layers, r, cfg.cond_ch * g, cfg.kernel,
                   cfg.max_dilation, rng);
  net.wn_b = NewWn(cfg.wn_layers, r, cfg.cond_ch * g, cfg.kernel,
                   cfg.max_dilation, rng);
  for (int i = 0; i < cfg.n_bit_blocks; ++i) {
    net.bits.push_back(NewConv(r, r, cfg.bit_kernel, rng));
  }
  net.post1 = NewConv(r, r, 1, rng);
  net.post2 = NewConv(r, r, 1, rng);
  net.post_head = NewConv(cfg.n_classes * g, r, 1, rng);
  net.hidden_head = NewConv(cfg.hidden_ch * g, r, 1, rng);
  net.upsampler.rates = cfg.upsample;
  int ch = cfg.n_mels;
  for (int s : cfg.upsample) {
    net.upsampler.stages.push_back(NewConvT(ch, cfg.cond_ch, 2 * s - 1, rng));
    ch = cfg.cond_ch;
  }
  return net;
}

PostFilterP InitPostFilter(const ModelConfig& cfg, RandomSource& rng) {
  PostFilterP pf;
  const int w = 64;
  pf.in_proj = NewConv(w, cfg.n_classes, 1, rng);
  pf.wn = NewWn(5, w, cfg.cond_ch, cfg.kernel, cfg.max_dilation, rng);
  pf.head = NewConv(1, w, 1, rng);
  return pf;
}

void FarBarNetP::Visit(const std::string& prefix,
                       const ParamVisitor& fn) const {
  VisitConv(prefix + "input_proj", input_proj, fn);
  VisitWn(prefix + "wn_a", wn_a, fn);
  for (size_t i = 0; i < bits.size(); ++i) {
    VisitConv(prefix + "bit" + std::to_string(i + 1), bits[i], fn);
  }
  VisitWn(prefix + "wn_b", wn_b, fn);
  VisitConv(prefix + "post1", post1, fn);
  VisitConv(prefix + "post2", post2, fn);
  VisitConv(prefix + "post_head", post_head, fn);
  VisitConv(prefix + "hidden_head", hidden_head, fn);
  for (size_t i = 0; i < upsampler.stages.size(); ++i) {
    VisitConv(prefix + "up" + std::to_string(i), upsampler.stages[i], fn);
  }
}

int64_t FarBarNetP::ParamCount() const {
  return CountVisited(
      [this](const ParamVisitor& fn) { Visit("", fn); });
}

void PostFilterP::Visit(const std::string& prefix,
                        const ParamVisitor& fn) const {
  VisitConv(prefix + "in_proj", in_proj, fn);
  VisitWn(prefix + "wn", wn, fn);
  VisitConv(prefix + "head", head, fn);
}

int64_t PostFilterP::ParamCount() const {
  return CountVisited(
      [this](const ParamVisitor& fn) { Visit("", fn); });
}

Val Binder::operator()(const ParamPtr& p) {
  if (!p) throw Error("Binder: null parameter");
  auto it = cache_.find(p.get());
  if (it != cache_.end()) return it->second;
  Val v;
  if (ctx_.Recording()) {
    v = ctx_.tape->Leaf(std::shared_ptr<const Tensor>(p), trainable_);
  } else {
    v = Val{std::shared_ptr<const Tensor>(p), -1};
  }
  cache_.emplace(p.get(), v);
  return v;
}

int Binder::NodeOf(const ParamPtr& p) const {
  auto it = cache_.find(p.get());
  return it == cache_.end() ? -1 : it->second.node;
}

Val WnForward(Ctx ctx, Binder& bind, const WnP& wn, Val x, Val cond) {
  const int r = V(x).Rank() == 3 ? V(x).shape[1] : V(x).shape[0];
  Val skip_sum;
  for (const WnLayerP& l : wn.layers) {
    Val z = Conv1d(ctx, x, bind(l.dil.w), bind(l.dil.b), l.dilation);
    Val zc = Conv1d(ctx, cond, bind(l.cond.w), bind(l.cond.b), 1);
    Val s = Add(ctx, z, zc);
    Val gate = Gated(ctx, SliceCh(ctx, s, 0, r), SliceCh(ctx, s, r, 2 * r));
    x = Add(ctx, Conv1d(ctx, gate, bind(l.res.w), bind(l.res.b), 1), x);
    Val sk = Conv1d(ctx, gate, bind(l.skip.w), bind(l.skip.b), 1);
    skip_sum = skip_sum.Defined() ? Add(ctx, skip_sum, sk) : sk;
  }
  if (!skip_sum.Defined()) {
    throw Error("WnForward: stack has no layers");
  }
  return Conv1d(ctx, Relu(ctx, skip_sum), bind(wn.out.w), bind(wn.out.b), 1);
}

Val UpsampleFeatures(Ctx ctx, Binder& bind, const UpsamplerP& up, Val mel) {
  Val x = mel;
  for (size_t i = 0; i < up.stages.size(); ++i) {
    const int s = up.rates[i];
    // Kernel 2s-1 with pad (s-1)/2 makes the output length exactly s*T.
    x = ConvT1d(ctx, x, bind(up.stages[i].w), bind(up.stages[i].b), s,
                (s - 1) / 2);
  }
  return x;
}

FarStepOut FarStep(Ctx ctx, Binder& bind, const FarBarNetP& net, Val x_prev,
                   Val h_prev, Val f, int bar_depth, const BitSource& bits) {
  const ModelConfig& cfg = net.cfg;
  const int g = cfg.group;
  const int r = cfg.residual_ch;
  const Tensor& xp = V(x_prev);
  const bool batched = xp.Rank() == 3;
  const int t_sub = batched ? xp.shape[2] : xp.shape[1];
  const int t_h = batched ? V(h_prev).shape[2] : V(h_prev).shape[1];
  const int t_f = batched ? V(f).shape[2] : V(f).shape[1];
  if (t_h != t_sub || t_f != t_sub) {
    throw Error("FarStep: time axis mismatch, x_prev " + std::to_string(t_sub) +
                ", h_prev " + std::to_string(t_h) + ", f " +
                std::to_string(t_f));
  }
  if (bar_depth != 0 && bar_depth != 2 && bar_depth != 3) {
    throw Error("FarStep: bar_depth must be 0, 2, or 3");
  }

  Val xh = ConcatCh(ctx, {x_prev, h_prev});
  Val cur = Conv1d(ctx, GroupIf(ctx, xh, g), bind(net.input_proj.w),
                   bind(net.input_proj.b), 1);
  Val fg = GroupIf(ctx, f, g);
  cur = WnForward(ctx, bind, net.wn_a, cur, fg);

  FarStepOut out;
  for (int k = 0; k < bar_depth; ++k) {
    Val z = Conv1d(ctx, cur, bind(net.bits[k].w), bind(net.bits[k].b), 1);
    // The first g channels carry this plane's bit logits, one per
    // interleaved phase; the rest continue the feature path.
    Val logits = UngroupIf(ctx, SliceCh(ctx, z, 0, g), g);
    out.bit_logits.push_back(logits);
    Val bit_vals = bits(k + 1, logits);
    Val rest = Mish(ctx, SliceCh(ctx, z, g, r));
    cur = ConcatCh(ctx, {GroupIf(ctx, bit_vals, g), rest});
  }

  cur = WnForward(ctx, bind, net.wn_b, cur, fg);
  Val p = Mish(ctx, Conv1d(ctx, cur, bind(net.post1.w), bind(net.post1.b), 1));
  p = Mish(ctx, Conv1d(ctx, p, bind(net.post2.w), bind(net.post2.b), 1));
  out.posterior_logits = UngroupIf(
      ctx, Conv1d(ctx, p, bind(net.post_head.w), bind(net.post_head.b), 1), g);
  out.h_next = UngroupIf(
      ctx,
      Tanh(ctx, Conv1d(ctx, cur, bind(net.hidden_head.w),
                       bind(net.hidden_head.b), 1)),
      g);
  return out;
}

Tensor SampleBitPlane(const Tensor& logits, float sharpen, RandomSource& rng) {
  Tensor bits(logits.shape);
  for (int64_t i = 0; i < logits.Numel(); ++i) {
    const double p =
        1.0 / (1.0 + std::exp(-static_cast<double>(sharpen) * logits.data[i]));
    bits.data[i] = rng.Bernoulli(p) ? 1.0f : 0.0f;
  }
  return bits;
}

std::vector<int> SampleClasses(const Tensor& posterior_logits, float sharpen,
                               RandomSource& rng) {
  if (posterior_logits.Rank() != 2) {
    throw Error("SampleClasses: expected [n_classes, T] logits");
  }
  const int nc = posterior_logits.shape[0];
  const int t_sub = posterior_logits.shape[1];
  std::vector<int> classes(t_sub);
  std::vector<float> probs(nc);
  for (int t = 0; t < t_sub; ++t) {
    double mx = -1e300;
    for (int c = 0; c < nc; ++c) {
      mx = std::max(mx, static_cast<double>(sharpen) *
                            posterior_logits.At2(c, t));
    }
    double sum = 0.0;
    for (int c = 0; c < nc; ++c) {
      const double e = std::exp(
          static_cast<double>(sharpen) * posterior_logits.At2(c, t) - mx);
      probs[c] = static_cast<float>(e);
      sum += e;
    }
    (void)sum;  // Categorical normalizes internally
    classes[t] = rng.Categorical(probs.data(), nc);
  }
  return classes;
}

SampledOutputs SampleOutputs(const std::vector<Tensor>& bit_logits,
                             const Tensor& posterior_logits,
                             const GenerationConfig& cfg, RandomSource& rng) {
  cfg.Validate();
  const float sharpen[3] = {cfg.sharpen_b1, cfg.sharpen_b2, cfg.sharpen_b3};
  SampledOutputs out;
  for (size_t k = 0; k < bit_logits.size(); ++k) {
    out.bits.push_back(SampleBitPlane(bit_logits[k], sharpen[k], rng));
  }
  out.classes = SampleClasses(posterior_logits, cfg.sharpen_class, rng);
  return out;
}

std::vector<int> BandVisitOrder(int n_bands, FarOrder order) {
  std::vector<int> v(n_bands);
  for (int i = 0; i < n_bands; ++i) {
    v[i] = order == FarOrder::kHighToLow ? n_bands - 1 - i : i;
  }
  return v;
}

// Declared in postfilter.h but used by Generate; forward declaration keeps
// the modules decoupled at the header level.
Val PfApply(Ctx ctx, Binder& bind, const PostFilterP& pf, const Val& posterior,
            const Val& f);

GenResult Generate(const FarBarNetP& net, const PostFilterP* pf,
                   const PqmfBank& bank, const MelSpectrogram& mel,
                   const GenerationConfig& cfg) {
  cfg.Validate();
  const ModelConfig& mc = net.cfg;
  if (cfg.group != mc.group) {
    throw Error("Generate: requested group " + std::to_string(cfg.group) +
                " does not match the checkpoint architecture (group " +
                std::to_string(mc.group) + ")");
  }
  if (bank.n_bands != mc.n_bands) {
    throw Error("Generate: filter bank has " + std::to_string(bank.n_bands) +
                " bands, model expects " + std::to_string(mc.n_bands));
  }
  if (mel.data.Rank() != 2 || mel.data.shape[0] < 1) {
    throw Error("Generate: empty feature matrix");
  }
  if (mel.data.shape[1] != mc.n_mels) {
    throw Error("Generate: feature dimension " +
                std::to_string(mel.data.shape[1]) + ", model expects " +
                std::to_string(mc.n_mels));
  }
  const bool use_pf = cfg.use_postfilter && pf != nullptr;

  const int frames_orig = mel.data.shape[0];
  const int up = mc.UpsampleProduct();
  // Grouping needs the subband length divisible by g; pad by repeating the
  // final frame (output is trimmed to the original length).
  int frames = frames_orig;
  while ((static_cast<int64_t>(frames) * up) % mc.group != 0) ++frames;
  Tensor melcm({mc.n_mels, frames});
  for (int f = 0; f < frames; ++f) {
    const int src = f < frames_orig ? f : frames_orig - 1;
    for (int m = 0; m < mc.n_mels; ++m) {
      melcm.At2(m, f) = mel.data.At2(src, m);
    }
  }
  const int t_sub = frames * up;
  const int64_t out_len =
      static_cast<int64_t>(frames_orig) * up * mc.n_bands;

  RandomSource rng(cfg.seed);
  Ctx ctx;  // eager
  Binder bind(ctx);
  Val f_cond = UpsampleFeatures(ctx, bind, net.upsampler,
                                Val{std::make_shared<const Tensor>(melcm), -1});
  if (V(f_cond).shape[1] != t_sub) {
    throw Error("Generate: upsampled conditioning length " +
                std::to_string(V(f_cond).shape[1]) + ", expected " +
                std::to_string(t_sub));
  }

  Tensor noise({1, t_sub});
  for (auto& v : noise.data) v = static_cast<float>(rng.Normal());
  Val x_prev{std::make_shared<const Tensor>(std::move(noise)), -1};
  Val h{std::make_shared<const Tensor>(Tensor({mc.hidden_ch, t_sub})), -1};

  GenResult res;
  Tensor stack_bands({mc.n_bands, t_sub});
  const std::vector<int> order = BandVisitOrder(mc.n_bands, cfg.far_order);
  for (int band : order) {
    int stages = 0;
    BitSource sampler = [&](int plane, const Val& logits) {
      const float sharpen[3] = {cfg.sharpen_b1, cfg.sharpen_b2,
                                cfg.sharpen_b3};
      ++stages;
      Tensor b = SampleBitPlane(V(logits), sharpen[plane - 1], rng);
      return Val{std::make_shared<const Tensor>(std::move(b)), -1};
    };
    FarStepOut step =
        FarStep(ctx, bind, net, x_prev, h, f_cond, cfg.bar_depth, sampler);
    ++res.counters.far_passes;
    h = step.h_next;

    Tensor band_sig({1, t_sub});
    if (use_pf) {
      Val posterior = SoftmaxCh(ctx, step.posterior_logits);
      Val pf_out = PfApply(ctx, bind, *pf, posterior, f_cond);
      band_sig = V(pf_out);
      ++stages;
    } else {
      const std::vector<int> classes =
          SampleClasses(V(step.posterior_logits), cfg.sharpen_class, rng);
      for (int t = 0; t < t_sub; ++t) {
        band_sig.data[t] =
            MuLawDecodeSample(static_cast<uint8_t>(classes[t]));
      }
      ++stages;
    }
    res.passes.push_back({band, stages});
    res.counters.max_stages_per_pass =
        std::max(res.counters.max_stages_per_pass, stages);

    float* row = stack_bands.Ptr() + static_cast<size_t>(band) * t_sub;
    for (int t = 0; t < t_sub; ++t) row[t] = band_sig.data[t];
    x_prev = Val{std::make_shared<const Tensor>(std::move(band_sig)), -1};
  }

  SubbandStack stack;
  stack.bands = std::move(stack_bands);
  stack.source_len = out_len;
  res.wav = Synthesize(bank, stack);
  for (auto& v : res.wav) {
    if (v > 1.0f) v = 1.0f;
    if (v < -1.0f) v = -1.0f;
  }
  return res;
}

Val TeacherForcedLoss(Ctx ctx, Binder& bind, const FarBarNetP& net,
                      const TrainBatch& batch, FarOrder order, int bar_depth,
                      LossParts* parts) {
  const ModelConfig& mc = net.cfg;
  if (batch.bands.Rank() != 3 || batch.bands.shape[1] != mc.n_bands) {
    throw Error("TeacherForcedLoss: bands must be [B, n_bands, T], got " +
                ShapeStr(batch.bands.shape));
  }
  const int bsz = batch.bands.shape[0];
  const int t_sub = batch.bands.shape[2];
  if (batch.noise.Rank() != 3 || batch.noise.shape[0] != bsz ||
      batch.noise.shape[2] != t_sub) {
    throw Error("TeacherForcedLoss: noise must be [B, 1, T] matching bands");
  }
  if (batch.mel.Rank() != 3 || batch.mel.shape[1] != mc.n_mels) {
    throw Error("TeacherForcedLoss: mel must be [B, n_mels, frames], got " +
                ShapeStr(batch.mel.shape));
  }

  auto leaf = [&](Tensor t) {
    auto sp = std::make_shared<const Tensor>(std::move(t));
    return ctx.Recording() ? ctx.tape->Leaf(sp, false) : Val{sp, -1};
  };

  Val f_cond =
      UpsampleFeatures(ctx, bind, net.upsampler, leaf(batch.mel));
  const int t_f = V(f_cond).shape[2];
  if (t_f != t_sub) {
    throw Error("TeacherForcedLoss: conditioning length " +
                std::to_string(t_f) + " does not match subband length " +
                std::to_string(t_sub) +
                " (segment must be frames * upsample product)");
  }

  // Per-band ground truth as separate constant tensors.
  std::vector<Tensor> band_sig(mc.n_bands,
                               Tensor({bsz, 1, t_sub}));
  std::vector<std::vector<int>> band_cls(mc.n_bands);
  std::vector<std::array<Tensor, 3>> band_bits;
  band_bits.resize(mc.n_bands);
  for (int k = 0; k < mc.n_bands; ++k) {
    band_cls[k].resize(static_cast<size_t>(bsz) * t_sub);
    for (int p = 0; p < 3; ++p) band_bits[k][p] = Tensor({bsz, 1, t_sub});
    for (int b = 0; b < bsz; ++b) {
      for (int t = 0; t < t_sub; ++t) {
        const float v = batch.bands.At3(b, k, t);
        band_sig[k].data[static_cast<size_t>(b) * t_sub + t] = v;
        const uint8_t cls = MuLawEncodeSample(v);
        band_cls[k][static_cast<size_t>(b) * t_sub + t] = cls;
        for (int p = 0; p < 3; ++p) {
          band_bits[k][p].data[static_cast<size_t>(b) * t_sub + t] =
              static_cast<float>(ClassBit(cls, p + 1));
        }
      }
    }
  }

  Val h = leaf(Tensor({bsz, mc.hidden_ch, t_sub}));
  Val total;
  double ce_sum = 0.0, bce_sum = 0.0;
  const std::vector<int> visit = BandVisitOrder(mc.n_bands, order);
  for (size_t i = 0; i < visit.size(); ++i) {
    const int band = visit[i];
    Val x_prev =
        i == 0 ? leaf(batch.noise) : leaf(band_sig[visit[i - 1]]);
    std::array<Val, 3> bit_targets;
    for (int p = 0; p < bar_depth; ++p) {
      bit_targets[p] = leaf(band_bits[band][p]);
    }
    BitSource gt = [&](int plane, const Val&) {
      return bit_targets[plane - 1];
    };
    FarStepOut step = FarStep(ctx, bind, net, x_prev, h, f_cond, bar_depth, gt);
    h = step.h_next;

    Val step_loss =
        CrossEntropyLogits(ctx, step.posterior_logits, band_cls[band]);
    ce_sum += V(step_loss).data[0];
    for (int p = 0; p < bar_depth; ++p) {
      Val bce = BceLogits(ctx, step.bit_logits[p], bit_targets[p]);
      bce_sum += V(bce).data[0];
      step_loss = Add(ctx, step_loss, bce);
    }
    total = total.Defined() ? Add(ctx, total, step_loss) : step_loss;
  }
  Val loss = Scale(ctx, total, 1.0f / mc.n_bands);
  if (parts != nullptr) {
    parts->total = V(loss).data[0];
    parts->ce = ce_sum / mc.n_bands;
    parts->bce = bce_sum / mc.n_bands;
  }
  return loss;
}

}  // namespace parvoc
