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

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>

#include "parvoc/autodiff.h"
#include "parvoc/fft.h"
#include "parvoc/kernels.h"
#include "parvoc/stft_core.h"

namespace parvoc {
namespace {

// Activation layout: rank 2 is [C, T], rank 3 is [B, C, T].
struct ActShape {
  int b;
  int c;
  int t;
  bool batched;
};

ActShape ParseAct(const Tensor& x, const char* where) {
  if (x.Rank() == 2) return {1, x.shape[0], x.shape[1], false};
  if (x.Rank() == 3) return {x.shape[0], x.shape[1], x.shape[2], true};
  throw Error(std::string(where) + ": expected rank 2 or 3 activation, got " +
              ShapeStr(x.shape));
}

Val Emit(Ctx ctx, Tensor&& y, const std::vector<int>& inputs,
         const std::function<Tape::BackFn()>& make_back) {
  auto out = std::make_shared<const Tensor>(std::move(y));
  if (!ctx.Recording()) return Val{out, -1};
  return ctx.tape->Record(out, inputs, make_back());
}

// Unary elementwise operator: fwd(x) and dfdx(x, y) applied pointwise.
template <typename Fwd, typename Dfdx>
Val UnaryOp(Ctx ctx, const Val& x, const char* name, Fwd fwd, Dfdx dfdx) {
  const Tensor& X = V(x);
  Tensor y(X.shape);
  const int64_t n = X.Numel();
  for (int64_t i = 0; i < n; ++i) y.data[i] = fwd(X.data[i]);
  auto out = std::make_shared<const Tensor>(std::move(y));
  if (!ctx.Recording()) return Val{out, -1};
  auto xt = x.t;
  auto yt = out;
  const int xn = x.node;
  return ctx.tape->Record(
      out, {xn}, [xt, yt, xn, dfdx](Tape& tp, const Tensor& gy) {
        Tensor gx(xt->shape);
        const int64_t m = gx.Numel();
        for (int64_t i = 0; i < m; ++i) {
          gx.data[i] = gy.data[i] * dfdx(xt->data[i], yt->data[i]);
        }
        tp.AccumGrad(xn, std::move(gx));
      });
}

double SoftplusD(double v) {
  if (v > 20.0) return v;
  if (v < -20.0) return std::exp(v);
  return std::log1p(std::exp(v));
}

}  // namespace

// --- Convolution -----------------------------------------------------------

Val Conv1d(Ctx ctx, const Val& x, const Val& w, const Val& b, int dilation) {
  const Tensor& X = V(x);
  const Tensor& W = V(w);
  if (W.Rank() != 3) {
    throw Error("Conv1d: weight must be [Co, Ci, K], got " +
                ShapeStr(W.shape));
  }
  if (dilation < 1) throw Error("Conv1d: dilation must be >= 1");
  const int co = W.shape[0], ci = W.shape[1], kw = W.shape[2];
  const ActShape a = ParseAct(X, "Conv1d");
  if (a.c != ci) {
    throw Error("Conv1d: channel axis mismatch, input has " +
                std::to_string(a.c) + " channels, weight expects " +
                std::to_string(ci));
  }
  const float* bias = nullptr;
  if (b.Defined()) {
    const Tensor& B = V(b);
    if (B.Rank() != 1 || B.shape[0] != co) {
      throw Error("Conv1d: bias must be [" + std::to_string(co) + "], got " +
                  ShapeStr(B.shape));
    }
    bias = B.Ptr();
  }

  Tensor y(a.batched ? std::vector<int>{a.b, co, a.t}
                     : std::vector<int>{co, a.t});
  for (int bb = 0; bb < a.b; ++bb) {
    kernels::Conv1dForward(y.Ptr() + static_cast<size_t>(bb) * co * a.t,
                           X.Ptr() + static_cast<size_t>(bb) * ci * a.t,
                           W.Ptr(), bias, co, ci, kw, a.t, dilation);
  }

  auto out = std::make_shared<const Tensor>(std::move(y));
  if (!ctx.Recording()) return Val{out, -1};
  auto xt = x.t;
  auto wt = w.t;
  const int xn = x.node, wn = w.node, bn = b.Defined() ? b.node : -1;
  return ctx.tape->Record(
      out, {xn, wn, bn},
      [xt, wt, xn, wn, bn, a, co, ci, kw, dilation](Tape& tp,
                                                    const Tensor& gy) {
        if (tp.Requires(xn)) {
          Tensor gx(xt->shape);
          for (int bb = 0; bb < a.b; ++bb) {
            kernels::Conv1dGradInput(
                gx.Ptr() + static_cast<size_t>(bb) * ci * a.t,
                gy.Ptr() + static_cast<size_t>(bb) * co * a.t, wt->Ptr(), co,
                ci, kw, a.t, dilation);
          }
          tp.AccumGrad(xn, std::move(gx));
        }
        const bool wreq = tp.Requires(wn), breq = tp.Requires(bn);
        if (wreq || breq) {
          Tensor gw(wt->shape);
          Tensor gb({co});
          for (int bb = 0; bb < a.b; ++bb) {
            kernels::Conv1dGradParams(
                gw.Ptr(), breq ? gb.Ptr() : nullptr,
                gy.Ptr() + static_cast<size_t>(bb) * co * a.t,
                xt->Ptr() + static_cast<size_t>(bb) * ci * a.t, co, ci, kw,
                a.t, dilation);
          }
          if (wreq) tp.AccumGrad(wn, std::move(gw));
          if (breq) tp.AccumGrad(bn, std::move(gb));
        }
      });
}

Val ConvT1d(Ctx ctx, const Val& x, const Val& w, const Val& b, int stride,
            int pad) {
  const Tensor& X = V(x);
  const Tensor& W = V(w);
  if (W.Rank() != 3) {
    throw Error("ConvT1d: weight must be [Ci, Co, K], got " +
                ShapeStr(W.shape));
  }
  if (stride < 1) throw Error("ConvT1d: stride must be >= 1");
  const int ci = W.shape[0], co = W.shape[1], kw = W.shape[2];
  const ActShape a = ParseAct(X, "ConvT1d");
  if (a.c != ci) {
    throw Error("ConvT1d: channel axis mismatch, input has " +
                std::to_string(a.c) + " channels, weight expects " +
                std::to_string(ci));
  }
  const int to = (a.t - 1) * stride + kw - 2 * pad;
  if (to < 1) throw Error("ConvT1d: output time axis would be empty");
  const float* bias = nullptr;
  if (b.Defined()) {
    const Tensor& B = V(b);
    if (B.Rank() != 1 || B.shape[0] != co) {
      throw Error("ConvT1d: bias must be [" + std::to_string(co) + "], got " +
                  ShapeStr(B.shape));
    }
    bias = B.Ptr();
  }

  Tensor y(a.batched ? std::vector<int>{a.b, co, to}
                     : std::vector<int>{co, to});
  for (int bb = 0; bb < a.b; ++bb) {
    kernels::ConvT1dForward(y.Ptr() + static_cast<size_t>(bb) * co * to,
                            X.Ptr() + static_cast<size_t>(bb) * ci * a.t,
                            W.Ptr(), bias, ci, co, kw, a.t, stride, pad);
  }

  auto out = std::make_shared<const Tensor>(std::move(y));
  if (!ctx.Recording()) return Val{out, -1};
  auto xt = x.t;
  auto wt = w.t;
  const int xn = x.node, wn = w.node, bn = b.Defined() ? b.node : -1;
  return ctx.tape->Record(
      out, {xn, wn, bn},
      [xt, wt, xn, wn, bn, a, co, ci, kw, stride, pad,
       to](Tape& tp, const Tensor& gy) {
        if (tp.Requires(xn)) {
          Tensor gx(xt->shape);
          for (int bb = 0; bb < a.b; ++bb) {
            kernels::ConvT1dGradInput(
                gx.Ptr() + static_cast<size_t>(bb) * ci * a.t,
                gy.Ptr() + static_cast<size_t>(bb) * co * to, wt->Ptr(), ci,
                co, kw, a.t, stride, pad);
          }
          tp.AccumGrad(xn, std::move(gx));
        }
        const bool wreq = tp.Requires(wn), breq = tp.Requires(bn);
        if (wreq || breq) {
          Tensor gw(wt->shape);
          Tensor gb({co});
          for (int bb = 0; bb < a.b; ++bb) {
            kernels::ConvT1dGradParams(
                gw.Ptr(), breq ? gb.Ptr() : nullptr,
                gy.Ptr() + static_cast<size_t>(bb) * co * to,
                xt->Ptr() + static_cast<size_t>(bb) * ci * a.t, ci, co, kw,
                a.t, stride, pad);
          }
          if (wreq) tp.AccumGrad(wn, std::move(gw));
          if (breq) tp.AccumGrad(bn, std::move(gb));
        }
      });
}

// --- Elementwise -----------------------------------------------------------

Val Add(Ctx ctx, const Val& a, const Val& b) {
  const Tensor& A = V(a);
  const Tensor& B = V(b);
  CheckSameShape(A, B, "Add");
  Tensor y(A.shape);
  const int64_t n = y.Numel();
  for (int64_t i = 0; i < n; ++i) y.data[i] = A.data[i] + B.data[i];
  return Emit(ctx, std::move(y), {a.node, b.node}, [&] {
    const int an = a.node, bn = b.node;
    return [an, bn](Tape& tp, const Tensor& gy) {
      if (tp.Requires(an)) tp.AccumGrad(an, Tensor(gy));
      if (tp.Requires(bn)) tp.AccumGrad(bn, Tensor(gy));
    };
  });
}

Val Sub(Ctx ctx, const Val& a, const Val& b) {
  const Tensor& A = V(a);
  const Tensor& B = V(b);
  CheckSameShape(A, B, "Sub");
  Tensor y(A.shape);
  const int64_t n = y.Numel();
  for (int64_t i = 0; i < n; ++i) y.data[i] = A.data[i] - B.data[i];
  return Emit(ctx, std::move(y), {a.node, b.node}, [&] {
    const int an = a.node, bn = b.node;
    return [an, bn](Tape& tp, const Tensor& gy) {
      if (tp.Requires(an)) tp.AccumGrad(an, Tensor(gy));
      if (tp.Requires(bn)) {
        Tensor gb(gy.shape);
        const int64_t m = gb.Numel();
        for (int64_t i = 0; i < m; ++i) gb.data[i] = -gy.data[i];
        tp.AccumGrad(bn, std::move(gb));
      }
    };
  });
}

Val Mul(Ctx ctx, const Val& a, const Val& b) {
  const Tensor& A = V(a);
  const Tensor& B = V(b);
  CheckSameShape(A, B, "Mul");
  Tensor y(A.shape);
  const int64_t n = y.Numel();
  for (int64_t i = 0; i < n; ++i) y.data[i] = A.data[i] * B.data[i];
  return Emit(ctx, std::move(y), {a.node, b.node}, [&] {
    auto at = a.t;
    auto bt = b.t;
    const int an = a.node, bn = b.node;
    return [at, bt, an, bn](Tape& tp, const Tensor& gy) {
      const int64_t m = gy.Numel();
      if (tp.Requires(an)) {
        Tensor ga(at->shape);
        for (int64_t i = 0; i < m; ++i) ga.data[i] = gy.data[i] * bt->data[i];
        tp.AccumGrad(an, std::move(ga));
      }
      if (tp.Requires(bn)) {
        Tensor gb(bt->shape);
        for (int64_t i = 0; i < m; ++i) gb.data[i] = gy.data[i] * at->data[i];
        tp.AccumGrad(bn, std::move(gb));
      }
    };
  });
}

Val Scale(Ctx ctx, const Val& x, float c) {
  return UnaryOp(
      ctx, x, "Scale", [c](float v) { return v * c; },
      [c](float, float) { return c; });
}

Val Relu(Ctx ctx, const Val& x) {
  return UnaryOp(
      ctx, x, "Relu", [](float v) { return v > 0.0f ? v : 0.0f; },
      [](float v, float) { return v > 0.0f ? 1.0f : 0.0f; });
}

Val Sigmoid(Ctx ctx, const Val& x) {
  return UnaryOp(
      ctx, x, "Sigmoid",
      [](float v) { return static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(v)))); },
      [](float, float y) { return y * (1.0f - y); });
}

Val Tanh(Ctx ctx, const Val& x) {
  return UnaryOp(
      ctx, x, "Tanh", [](float v) { return std::tanh(v); },
      [](float, float y) { return 1.0f - y * y; });
}

Val Mish(Ctx ctx, const Val& x) {
  return UnaryOp(
      ctx, x, "Mish",
      [](float v) {
        return static_cast<float>(v * std::tanh(SoftplusD(v)));
      },
      [](float v, float) {
        const double sp = SoftplusD(v);
        const double tsp = std::tanh(sp);
        const double sig = 1.0 / (1.0 + std::exp(-static_cast<double>(v)));
        return static_cast<float>(tsp + v * (1.0 - tsp * tsp) * sig);
      });
}

Val Abs(Ctx ctx, const Val& x) {
  return UnaryOp(
      ctx, x, "Abs", [](float v) { return std::fabs(v); },
      [](float v, float) { return v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f); });
}

Val LogFloor(Ctx ctx, const Val& x, float floor) {
  if (!(floor > 0.0f)) throw Error("LogFloor: floor must be positive");
  return UnaryOp(
      ctx, x, "LogFloor",
      [floor](float v) { return std::log(v > floor ? v : floor); },
      [floor](float v, float) { return v > floor ? 1.0f / v : 0.0f; });
}

Val Gated(Ctx ctx, const Val& a, const Val& b) {
  const Tensor& A = V(a);
  const Tensor& B = V(b);
  CheckSameShape(A, B, "Gated");
  Tensor y(A.shape);
  const int64_t n = y.Numel();
  for (int64_t i = 0; i < n; ++i) {
    const double s = 1.0 / (1.0 + std::exp(-static_cast<double>(B.data[i])));
    y.data[i] = static_cast<float>(std::tanh(A.data[i]) * s);
  }
  return Emit(ctx, std::move(y), {a.node, b.node}, [&] {
    auto at = a.t;
    auto bt = b.t;
    const int an = a.node, bn = b.node;
    return [at, bt, an, bn](Tape& tp, const Tensor& gy) {
      const int64_t m = gy.Numel();
      Tensor ga(at->shape), gb(bt->shape);
      for (int64_t i = 0; i < m; ++i) {
        const double ta = std::tanh(at->data[i]);
        const double sb =
            1.0 / (1.0 + std::exp(-static_cast<double>(bt->data[i])));
        ga.data[i] = static_cast<float>(gy.data[i] * (1.0 - ta * ta) * sb);
        gb.data[i] = static_cast<float>(gy.data[i] * ta * sb * (1.0 - sb));
      }
      if (tp.Requires(an)) tp.AccumGrad(an, std::move(ga));
      if (tp.Requires(bn)) tp.AccumGrad(bn, std::move(gb));
    };
  });
}

// --- Shape movement --------------------------------------------------------

Val ConcatCh(Ctx ctx, const std::vector<Val>& parts) {
  if (parts.empty()) throw Error("ConcatCh: empty input list");
  const ActShape first = ParseAct(V(parts[0]), "ConcatCh");
  int ctotal = 0;
  for (const Val& p : parts) {
    const ActShape s = ParseAct(V(p), "ConcatCh");
    if (s.b != first.b || s.t != first.t || s.batched != first.batched) {
      throw Error("ConcatCh: batch/time axes must match, got " +
                  ShapeStr(V(p).shape) + " vs " + ShapeStr(V(parts[0]).shape));
    }
    ctotal += s.c;
  }
  Tensor y(first.batched ? std::vector<int>{first.b, ctotal, first.t}
                         : std::vector<int>{ctotal, first.t});
  int coff = 0;
  for (const Val& p : parts) {
    const Tensor& P = V(p);
    const int pc = first.batched ? P.shape[1] : P.shape[0];
    for (int bb = 0; bb < first.b; ++bb) {
      std::memcpy(
          y.Ptr() + (static_cast<size_t>(bb) * ctotal + coff) * first.t,
          P.Ptr() + static_cast<size_t>(bb) * pc * first.t,
          sizeof(float) * static_cast<size_t>(pc) * first.t);
    }
    coff += pc;
  }
  std::vector<int> in_nodes;
  std::vector<int> in_ch;
  for (const Val& p : parts) {
    in_nodes.push_back(p.node);
    in_ch.push_back(first.batched ? V(p).shape[1] : V(p).shape[0]);
  }
  std::vector<std::vector<int>> in_shapes;
  for (const Val& p : parts) in_shapes.push_back(V(p).shape);
  return Emit(ctx, std::move(y), in_nodes, [&] {
    const ActShape fs = first;
    const int ct = ctotal;
    return [in_nodes, in_ch, in_shapes, fs, ct](Tape& tp, const Tensor& gy) {
      int off = 0;
      for (size_t i = 0; i < in_nodes.size(); ++i) {
        const int pc = in_ch[i];
        if (tp.Requires(in_nodes[i])) {
          Tensor gp(in_shapes[i]);
          for (int bb = 0; bb < fs.b; ++bb) {
            std::memcpy(gp.Ptr() + static_cast<size_t>(bb) * pc * fs.t,
                        gy.Ptr() + (static_cast<size_t>(bb) * ct + off) * fs.t,
                        sizeof(float) * static_cast<size_t>(pc) * fs.t);
          }
          tp.AccumGrad(in_nodes[i], std::move(gp));
        }
        off += pc;
      }
    };
  });
}

Val SliceCh(Ctx ctx, const Val& x, int c0, int c1) {
  const Tensor& X = V(x);
  const ActShape a = ParseAct(X, "SliceCh");
  if (c0 < 0 || c1 > a.c || c0 >= c1) {
    throw Error("SliceCh: channel range [" + std::to_string(c0) + ", " +
                std::to_string(c1) + ") out of bounds for axis of size " +
                std::to_string(a.c));
  }
  const int nc = c1 - c0;
  Tensor y(a.batched ? std::vector<int>{a.b, nc, a.t}
                     : std::vector<int>{nc, a.t});
  for (int bb = 0; bb < a.b; ++bb) {
    std::memcpy(y.Ptr() + static_cast<size_t>(bb) * nc * a.t,
                X.Ptr() + (static_cast<size_t>(bb) * a.c + c0) * a.t,
                sizeof(float) * static_cast<size_t>(nc) * a.t);
  }
  return Emit(ctx, std::move(y), {x.node}, [&] {
    const int xn = x.node;
    const auto xshape = X.shape;
    return [xn, xshape, a, c0, nc](Tape& tp, const Tensor& gy) {
      Tensor gx(xshape);
      for (int bb = 0; bb < a.b; ++bb) {
        std::memcpy(gx.Ptr() + (static_cast<size_t>(bb) * a.c + c0) * a.t,
                    gy.Ptr() + static_cast<size_t>(bb) * nc * a.t,
                    sizeof(float) * static_cast<size_t>(nc) * a.t);
      }
      tp.AccumGrad(xn, std::move(gx));
    };
  });
}

Val SliceTime(Ctx ctx, const Val& x, int t0, int t1) {
  const Tensor& X = V(x);
  const ActShape a = ParseAct(X, "SliceTime");
  if (t0 < 0 || t1 > a.t || t0 >= t1) {
    throw Error("SliceTime: time range [" + std::to_string(t0) + ", " +
                std::to_string(t1) + ") out of bounds for axis of size " +
                std::to_string(a.t));
  }
  const int nt = t1 - t0;
  Tensor y(a.batched ? std::vector<int>{a.b, a.c, nt}
                     : std::vector<int>{a.c, nt});
  for (int bb = 0; bb < a.b; ++bb) {
    for (int c = 0; c < a.c; ++c) {
      std::memcpy(y.Ptr() + (static_cast<size_t>(bb) * a.c + c) * nt,
                  X.Ptr() + (static_cast<size_t>(bb) * a.c + c) * a.t + t0,
                  sizeof(float) * nt);
    }
  }
  return Emit(ctx, std::move(y), {x.node}, [&] {
    const int xn = x.node;
    const auto xshape = X.shape;
    return [xn, xshape, a, t0, nt](Tape& tp, const Tensor& gy) {
      Tensor gx(xshape);
      for (int bb = 0; bb < a.b; ++bb) {
        for (int c = 0; c < a.c; ++c) {
          std::memcpy(gx.Ptr() + (static_cast<size_t>(bb) * a.c + c) * a.t + t0,
                      gy.Ptr() + (static_cast<size_t>(bb) * a.c + c) * nt,
                      sizeof(float) * nt);
        }
      }
      tp.AccumGrad(xn, std::move(gx));
    };
  });
}

Val SliceBatch(Ctx ctx, const Val& x, int b) {
  const Tensor& X = V(x);
  if (X.Rank() != 3) {
    throw Error("SliceBatch: expected [B, C, T], got " + ShapeStr(X.shape));
  }
  const int bn = X.shape[0], c = X.shape[1], t = X.shape[2];
  if (b < 0 || b >= bn) {
    throw Error("SliceBatch: index " + std::to_string(b) +
                " out of bounds for batch of " + std::to_string(bn));
  }
  const size_t item = static_cast<size_t>(c) * t;
  Tensor y({c, t});
  std::memcpy(y.Ptr(), X.Ptr() + static_cast<size_t>(b) * item,
              sizeof(float) * item);
  return Emit(ctx, std::move(y), {x.node}, [&] {
    const int xn = x.node;
    const auto xshape = X.shape;
    return [xn, xshape, b, item](Tape& tp, const Tensor& gy) {
      Tensor gx(xshape);
      std::memcpy(gx.Ptr() + static_cast<size_t>(b) * item, gy.Ptr(),
                  sizeof(float) * item);
      tp.AccumGrad(xn, std::move(gx));
    };
  });
}

namespace {

// out[c*g + j, tau] = in[c, tau*g + j]
void GroupRows(float* dst, const float* src, int c, int t, int g) {
  const int tg = t / g;
  for (int cc = 0; cc < c; ++cc) {
    const float* srow = src + static_cast<size_t>(cc) * t;
    for (int j = 0; j < g; ++j) {
      float* drow = dst + (static_cast<size_t>(cc) * g + j) * tg;
      for (int tau = 0; tau < tg; ++tau) drow[tau] = srow[tau * g + j];
    }
  }
}

void UngroupRows(float* dst, const float* src, int cg, int tg, int g) {
  const int c = cg / g;
  for (int cc = 0; cc < c; ++cc) {
    float* drow = dst + static_cast<size_t>(cc) * tg * g;
    for (int j = 0; j < g; ++j) {
      const float* srow = src + (static_cast<size_t>(cc) * g + j) * tg;
      for (int tau = 0; tau < tg; ++tau) drow[tau * g + j] = srow[tau];
    }
  }
}

}  // namespace

Val Group(Ctx ctx, const Val& x, int g) {
  const Tensor& X = V(x);
  const ActShape a = ParseAct(X, "Group");
  if (g < 1) throw Error("Group: factor must be >= 1");
  if (a.t % g != 0) {
    throw Error("Group: time axis " + std::to_string(a.t) +
                " not divisible by factor " + std::to_string(g));
  }
  const int tg = a.t / g;
  Tensor y(a.batched ? std::vector<int>{a.b, a.c * g, tg}
                     : std::vector<int>{a.c * g, tg});
  for (int bb = 0; bb < a.b; ++bb) {
    GroupRows(y.Ptr() + static_cast<size_t>(bb) * a.c * a.t,
              X.Ptr() + static_cast<size_t>(bb) * a.c * a.t, a.c, a.t, g);
  }
  return Emit(ctx, std::move(y), {x.node}, [&] {
    const int xn = x.node;
    const auto xshape = X.shape;
    return [xn, xshape, a, g, tg](Tape& tp, const Tensor& gy) {
      Tensor gx(xshape);
      for (int bb = 0; bb < a.b; ++bb) {
        UngroupRows(gx.Ptr() + static_cast<size_t>(bb) * a.c * a.t,
                    gy.Ptr() + static_cast<size_t>(bb) * a.c * a.t, a.c * g,
                    tg, g);
      }
      tp.AccumGrad(xn, std::move(gx));
    };
  });
}

Val Ungroup(Ctx ctx, const Val& x, int g) {
  const Tensor& X = V(x);
  const ActShape a = ParseAct(X, "Ungroup");
  if (g < 1) throw Error("Ungroup: factor must be >= 1");
  if (a.c % g != 0) {
    throw Error("Ungroup: channel axis " + std::to_string(a.c) +
                " not divisible by factor " + std::to_string(g));
  }
  Tensor y(a.batched ? std::vector<int>{a.b, a.c / g, a.t * g}
                     : std::vector<int>{a.c / g, a.t * g});
  for (int bb = 0; bb < a.b; ++bb) {
    UngroupRows(y.Ptr() + static_cast<size_t>(bb) * a.c * a.t,
                X.Ptr() + static_cast<size_t>(bb) * a.c * a.t, a.c, a.t, g);
  }
  return Emit(ctx, std::move(y), {x.node}, [&] {
    const int xn = x.node;
    const auto xshape = X.shape;
    return [xn, xshape, a, g](Tape& tp, const Tensor& gy) {
      Tensor gx(xshape);
      for (int bb = 0; bb < a.b; ++bb) {
        GroupRows(gx.Ptr() + static_cast<size_t>(bb) * a.c * a.t,
                  gy.Ptr() + static_cast<size_t>(bb) * a.c * a.t, a.c / g,
                  a.t * g, g);
      }
      tp.AccumGrad(xn, std::move(gx));
    };
  });
}

// --- Softmax and losses ----------------------------------------------------

Val SoftmaxCh(Ctx ctx, const Val& x) {
  const Tensor& X = V(x);
  const ActShape a = ParseAct(X, "SoftmaxCh");
  Tensor y(X.shape);
  for (int bb = 0; bb < a.b; ++bb) {
    for (int t = 0; t < a.t; ++t) {
      const size_t base = static_cast<size_t>(bb) * a.c * a.t + t;
      double mx = -1e300;
      for (int c = 0; c < a.c; ++c) {
        mx = std::max(mx, static_cast<double>(X.data[base + static_cast<size_t>(c) * a.t]));
      }
      double sum = 0.0;
      for (int c = 0; c < a.c; ++c) {
        const double e =
            std::exp(static_cast<double>(X.data[base + static_cast<size_t>(c) * a.t]) - mx);
        y.data[base + static_cast<size_t>(c) * a.t] = static_cast<float>(e);
        sum += e;
      }
      const double inv = 1.0 / sum;
      for (int c = 0; c < a.c; ++c) {
        y.data[base + static_cast<size_t>(c) * a.t] =
            static_cast<float>(y.data[base + static_cast<size_t>(c) * a.t] * inv);
      }
    }
  }
  auto out = std::make_shared<const Tensor>(std::move(y));
  if (!ctx.Recording()) return Val{out, -1};
  auto yt = out;
  const int xn = x.node;
  return ctx.tape->Record(out, {xn}, [yt, xn, a](Tape& tp, const Tensor& gy) {
    Tensor gx(yt->shape);
    for (int bb = 0; bb < a.b; ++bb) {
      for (int t = 0; t < a.t; ++t) {
        const size_t base = static_cast<size_t>(bb) * a.c * a.t + t;
        double dot = 0.0;
        for (int c = 0; c < a.c; ++c) {
          const size_t i = base + static_cast<size_t>(c) * a.t;
          dot += static_cast<double>(gy.data[i]) * yt->data[i];
        }
        for (int c = 0; c < a.c; ++c) {
          const size_t i = base + static_cast<size_t>(c) * a.t;
          gx.data[i] = static_cast<float>(
              yt->data[i] * (static_cast<double>(gy.data[i]) - dot));
        }
      }
    }
    tp.AccumGrad(xn, std::move(gx));
  });
}

Val CrossEntropyLogits(Ctx ctx, const Val& logits,
                       const std::vector<int>& classes) {
  const Tensor& Z = V(logits);
  const ActShape a = ParseAct(Z, "CrossEntropyLogits");
  const int64_t ncols = static_cast<int64_t>(a.b) * a.t;
  if (static_cast<int64_t>(classes.size()) != ncols) {
    throw Error("CrossEntropyLogits: expected " + std::to_string(ncols) +
                " class labels (batch*time), got " +
                std::to_string(classes.size()));
  }
  double total = 0.0;
  for (int bb = 0; bb < a.b; ++bb) {
    for (int t = 0; t < a.t; ++t) {
      const int cls = classes[static_cast<size_t>(bb) * a.t + t];
      if (cls < 0 || cls >= a.c) {
        throw Error("CrossEntropyLogits: class " + std::to_string(cls) +
                    " out of range for channel axis of size " +
                    std::to_string(a.c));
      }
      const size_t base = static_cast<size_t>(bb) * a.c * a.t + t;
      double mx = -1e300;
      for (int c = 0; c < a.c; ++c) {
        mx = std::max(mx, static_cast<double>(Z.data[base + static_cast<size_t>(c) * a.t]));
      }
      double sum = 0.0;
      for (int c = 0; c < a.c; ++c) {
        sum += std::exp(static_cast<double>(Z.data[base + static_cast<size_t>(c) * a.t]) - mx);
      }
      total += mx + std::log(sum) -
               static_cast<double>(Z.data[base + static_cast<size_t>(cls) * a.t]);
    }
  }
  Tensor y = Tensor::Scalar(static_cast<float>(total / ncols));
  auto out = std::make_shared<const Tensor>(std::move(y));
  if (!ctx.Recording()) return Val{out, -1};
  auto zt = logits.t;
  const int zn = logits.node;
  return ctx.tape->Record(
      out, {zn}, [zt, zn, a, classes, ncols](Tape& tp, const Tensor& gy) {
        const double scale = static_cast<double>(gy.data[0]) / ncols;
        Tensor gz(zt->shape);
        for (int bb = 0; bb < a.b; ++bb) {
          for (int t = 0; t < a.t; ++t) {
            const int cls = classes[static_cast<size_t>(bb) * a.t + t];
            const size_t base = static_cast<size_t>(bb) * a.c * a.t + t;
            double mx = -1e300;
            for (int c = 0; c < a.c; ++c) {
              mx = std::max(mx, static_cast<double>(
                                    zt->data[base + static_cast<size_t>(c) * a.t]));
            }
            double sum = 0.0;
            for (int c = 0; c < a.c; ++c) {
              sum += std::exp(
                  static_cast<double>(zt->data[base + static_cast<size_t>(c) * a.t]) - mx);
            }
            const double inv = 1.0 / sum;
            for (int c = 0; c < a.c; ++c) {
              const size_t i = base + static_cast<size_t>(c) * a.t;
              const double p =
                  std::exp(static_cast<double>(zt->data[i]) - mx) * inv;
              gz.data[i] = static_cast<float>(
                  scale * (p - (c == cls ? 1.0 : 0.0)));
            }
          }
        }
        tp.AccumGrad(zn, std::move(gz));
      });
}

Val BceLogits(Ctx ctx, const Val& logits, const Val& targets) {
  const Tensor& Z = V(logits);
  const Tensor& Y = V(targets);
  CheckSameShape(Z, Y, "BceLogits");
  const int64_t n = Z.Numel();
  if (n == 0) throw Error("BceLogits: empty input");
  double total = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double z = Z.data[i];
    const double y = Y.data[i];
    total += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::fabs(z)));
  }
  Tensor out = Tensor::Scalar(static_cast<float>(total / n));
  auto op = std::make_shared<const Tensor>(std::move(out));
  if (!ctx.Recording()) return Val{op, -1};
  auto zt = logits.t;
  auto yt = targets.t;
  const int zn = logits.node;
  return ctx.tape->Record(op, {zn, targets.node},
                          [zt, yt, zn, n](Tape& tp, const Tensor& gy) {
                            const double scale =
                                static_cast<double>(gy.data[0]) / n;
                            Tensor gz(zt->shape);
                            for (int64_t i = 0; i < n; ++i) {
                              const double sig =
                                  1.0 / (1.0 + std::exp(-static_cast<double>(
                                                   zt->data[i])));
                              gz.data[i] = static_cast<float>(
                                  scale * (sig - yt->data[i]));
                            }
                            tp.AccumGrad(zn, std::move(gz));
                          });
}

Val MaeLoss(Ctx ctx, const Val& a, const Val& b) {
  const Tensor& A = V(a);
  const Tensor& B = V(b);
  CheckSameShape(A, B, "MaeLoss");
  const int64_t n = A.Numel();
  if (n == 0) throw Error("MaeLoss: empty input");
  double total = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    total += std::fabs(static_cast<double>(A.data[i]) - B.data[i]);
  }
  Tensor out = Tensor::Scalar(static_cast<float>(total / n));
  auto op = std::make_shared<const Tensor>(std::move(out));
  if (!ctx.Recording()) return Val{op, -1};
  auto at = a.t;
  auto bt = b.t;
  const int an = a.node, bn = b.node;
  return ctx.tape->Record(
      op, {an, bn}, [at, bt, an, bn, n](Tape& tp, const Tensor& gy) {
        const double scale = static_cast<double>(gy.data[0]) / n;
        const bool areq = tp.Requires(an), breq = tp.Requires(bn);
        Tensor ga(at->shape), gb(bt->shape);
        for (int64_t i = 0; i < n; ++i) {
          const double d = static_cast<double>(at->data[i]) - bt->data[i];
          const float s =
              static_cast<float>(scale * (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)));
          if (areq) ga.data[i] = s;
          if (breq) gb.data[i] = -s;
        }
        if (areq) tp.AccumGrad(an, std::move(ga));
        if (breq) tp.AccumGrad(bn, std::move(gb));
      });
}

Val Mean(Ctx ctx, const Val& x) {
  const Tensor& X = V(x);
  const int64_t n = X.Numel();
  if (n == 0) throw Error("Mean: empty input");
  double total = 0.0;
  for (int64_t i = 0; i < n; ++i) total += X.data[i];
  Tensor out = Tensor::Scalar(static_cast<float>(total / n));
  auto op = std::make_shared<const Tensor>(std::move(out));
  if (!ctx.Recording()) return Val{op, -1};
  const int xn = x.node;
  const auto xshape = X.shape;
  return ctx.tape->Record(op, {xn},
                          [xn, xshape, n](Tape& tp, const Tensor& gy) {
                            Tensor gx = Tensor::Full(xshape, gy.data[0] / n);
                            tp.AccumGrad(xn, std::move(gx));
                          });
}

Val Sum(Ctx ctx, const Val& x) {
  const Tensor& X = V(x);
  const int64_t n = X.Numel();
  double total = 0.0;
  for (int64_t i = 0; i < n; ++i) total += X.data[i];
  Tensor out = Tensor::Scalar(static_cast<float>(total));
  auto op = std::make_shared<const Tensor>(std::move(out));
  if (!ctx.Recording()) return Val{op, -1};
  const int xn = x.node;
  const auto xshape = X.shape;
  return ctx.tape->Record(op, {xn}, [xn, xshape](Tape& tp, const Tensor& gy) {
    Tensor gx = Tensor::Full(xshape, gy.data[0]);
    tp.AccumGrad(xn, std::move(gx));
  });
}

// --- Scalar helpers --------------------------------------------------------

namespace {
void CheckScalar(const Tensor& t, const char* where) {
  if (t.Numel() != 1) {
    throw Error(std::string(where) + ": expected scalar, got " +
                ShapeStr(t.shape));
  }
}
}  // namespace

Val SqrtScalar(Ctx ctx, const Val& x) {
  const Tensor& X = V(x);
  CheckScalar(X, "SqrtScalar");
  if (X.data[0] < 0.0f) throw Error("SqrtScalar: negative input");
  Tensor out = Tensor::Scalar(std::sqrt(X.data[0]));
  auto op = std::make_shared<const Tensor>(std::move(out));
  if (!ctx.Recording()) return Val{op, -1};
  auto yt = op;
  const int xn = x.node;
  return ctx.tape->Record(op, {xn}, [yt, xn](Tape& tp, const Tensor& gy) {
    const float y = yt->data[0];
    tp.AccumGrad(xn, Tensor::Scalar(gy.data[0] * 0.5f /
                                    (y > 1e-20f ? y : 1e-20f)));
  });
}

Val DivScalar(Ctx ctx, const Val& num, const Val& den) {
  const Tensor& A = V(num);
  const Tensor& B = V(den);
  CheckScalar(A, "DivScalar");
  CheckScalar(B, "DivScalar");
  if (B.data[0] == 0.0f) throw Error("DivScalar: division by zero");
  Tensor out = Tensor::Scalar(A.data[0] / B.data[0]);
  auto op = std::make_shared<const Tensor>(std::move(out));
  if (!ctx.Recording()) return Val{op, -1};
  auto at = num.t;
  auto bt = den.t;
  const int an = num.node, bn = den.node;
  return ctx.tape->Record(
      op, {an, bn}, [at, bt, an, bn](Tape& tp, const Tensor& gy) {
        const double g = gy.data[0];
        const double b = bt->data[0];
        if (tp.Requires(an)) {
          tp.AccumGrad(an, Tensor::Scalar(static_cast<float>(g / b)));
        }
        if (tp.Requires(bn)) {
          tp.AccumGrad(bn, Tensor::Scalar(static_cast<float>(
                               -g * at->data[0] / (b * b))));
        }
      });
}

Val MaxScalar(Ctx ctx, const Val& x, float c) {
  const Tensor& X = V(x);
  CheckScalar(X, "MaxScalar");
  Tensor out = Tensor::Scalar(X.data[0] > c ? X.data[0] : c);
  auto op = std::make_shared<const Tensor>(std::move(out));
  if (!ctx.Recording()) return Val{op, -1};
  auto xt = x.t;
  const int xn = x.node;
  return ctx.tape->Record(op, {xn}, [xt, xn, c](Tape& tp, const Tensor& gy) {
    const float pass = xt->data[0] >= c ? 1.0f : 0.0f;
    tp.AccumGrad(xn, Tensor::Scalar(gy.data[0] * pass));
  });
}

// --- Pooling ---------------------------------------------------------------

Val MeanOverRows(Ctx ctx, const Val& x, int r0, int r1) {
  const Tensor& X = V(x);
  if (X.Rank() != 2) {
    throw Error("MeanOverRows: expected rank 2, got " + ShapeStr(X.shape));
  }
  const int rows = X.shape[0], cols = X.shape[1];
  if (r0 < 0 || r1 > rows || r0 >= r1) {
    throw Error("MeanOverRows: row range [" + std::to_string(r0) + ", " +
                std::to_string(r1) + ") out of bounds for axis of size " +
                std::to_string(rows));
  }
  Tensor y({1, cols});
  const double inv = 1.0 / (r1 - r0);
  for (int t = 0; t < cols; ++t) {
    double acc = 0.0;
    for (int r = r0; r < r1; ++r) acc += X.At2(r, t);
    y.data[t] = static_cast<float>(acc * inv);
  }
  return Emit(ctx, std::move(y), {x.node}, [&] {
    const int xn = x.node;
    const auto xshape = X.shape;
    return [xn, xshape, r0, r1, cols](Tape& tp, const Tensor& gy) {
      Tensor gx(xshape);
      const float inv = 1.0f / (r1 - r0);
      for (int r = r0; r < r1; ++r) {
        for (int t = 0; t < cols; ++t) gx.At2(r, t) = gy.data[t] * inv;
      }
      tp.AccumGrad(xn, std::move(gx));
    };
  });
}

Val MeanOverCols(Ctx ctx, const Val& x, int r0, int r1) {
  const Tensor& X = V(x);
  if (X.Rank() != 2) {
    throw Error("MeanOverCols: expected rank 2, got " + ShapeStr(X.shape));
  }
  const int rows = X.shape[0], cols = X.shape[1];
  if (r0 < 0 || r1 > rows || r0 >= r1) {
    throw Error("MeanOverCols: row range [" + std::to_string(r0) + ", " +
                std::to_string(r1) + ") out of bounds for axis of size " +
                std::to_string(rows));
  }
  Tensor y({r1 - r0, 1});
  const double inv = 1.0 / cols;
  for (int r = r0; r < r1; ++r) {
    double acc = 0.0;
    for (int t = 0; t < cols; ++t) acc += X.At2(r, t);
    y.data[r - r0] = static_cast<float>(acc * inv);
  }
  return Emit(ctx, std::move(y), {x.node}, [&] {
    const int xn = x.node;
    const auto xshape = X.shape;
    return [xn, xshape, r0, r1, cols](Tape& tp, const Tensor& gy) {
      Tensor gx(xshape);
      const float inv = 1.0f / cols;
      for (int r = r0; r < r1; ++r) {
        for (int t = 0; t < cols; ++t) gx.At2(r, t) = gy.data[r - r0] * inv;
      }
      tp.AccumGrad(xn, std::move(gx));
    };
  });
}

// --- STFT magnitude --------------------------------------------------------

Val StftMag(Ctx ctx, const Val& x, int fft, int hop, int win) {
  const Tensor& X = V(x);
  if (X.Rank() != 2 || X.shape[0] != 1) {
    throw Error("StftMag: expected [1, L] signal, got " + ShapeStr(X.shape));
  }
  const StftPlan plan = MakeStftPlan(fft, hop, win, X.shape[1]);
  Tensor y({plan.bins, plan.frames});
  std::vector<std::complex<double>> buf;
  for (int f = 0; f < plan.frames; ++f) {
    LoadStftFrame(buf, X.Ptr(), plan, f);
    Fft(buf);
    for (int b = 0; b < plan.bins; ++b) {
      y.At2(b, f) = static_cast<float>(std::abs(buf[b]));
    }
  }
  auto out = std::make_shared<const Tensor>(std::move(y));
  if (!ctx.Recording()) return Val{out, -1};
  auto xt = x.t;
  const int xn = x.node;
  return ctx.tape->Record(
      out, {xn}, [xt, xn, plan](Tape& tp, const Tensor& gy) {
        std::vector<double> gsig(plan.len, 0.0);
        std::vector<std::complex<double>> buf, grad;
        for (int f = 0; f < plan.frames; ++f) {
          const int start = f * plan.hop;
          LoadStftFrame(buf, xt->Ptr(), plan, f);
          Fft(buf);
          // d|X_b|/dx_n = Re(X_b e^{i 2 pi b n / N}) / |X_b|; summing over the
          // read bins is a half-spectrum inverse transform of gy * X / |X|.
          grad.assign(plan.fft, {0.0, 0.0});
          for (int b = 0; b < plan.bins; ++b) {
            const double mag = std::abs(buf[b]);
            const double g = gy.At2(b, f);
            if (mag > 1e-30) grad[b] = buf[b] * (g / mag);
          }
          Fft(grad, /*inverse=*/true);
          for (int n = 0; n < plan.win; ++n) {
            const double gw = grad[n].real() * plan.fft * plan.window[n];
            const int idx = ReflectIndex(start + n - plan.pad, plan.len);
            gsig[idx] += gw;
          }
        }
        Tensor gx({1, plan.len});
        for (int i = 0; i < plan.len; ++i) {
          gx.data[i] = static_cast<float>(gsig[i]);
        }
        tp.AccumGrad(xn, std::move(gx));
      });
}

}  // namespace parvoc
