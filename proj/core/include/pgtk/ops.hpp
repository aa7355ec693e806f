// Copyright 2026 The pagetracker Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Tensor-level kernels for the ops the tape exposes.  Forward and backward
// live side by side so the adjoint of every kernel is reviewable next to
// the primal.  All kernels are deterministic: fixed loop order, no atomics.

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>

#include "pgtk/gemm.hpp"
#include "pgtk/tensor.hpp"

namespace pgtk {
namespace ops {

struct ConvGeom {
  int ci, h, w;       // input
  int co, f;          // kernel
  int pad, stride;
  int ho, wo;         // output
};

template <typename T>
ConvGeom conv2d_geom(const Tensor<T>& x, const Tensor<T>& k, int pad, int stride) {
  if (x.rank() != 3) fail<ContractViolation>("conv2d: input must be [C,H,W], got ", x.shape_str());
  if (k.rank() != 4) fail<ContractViolation>("conv2d: kernel must be [Co,Ci,f,f], got ", k.shape_str());
  if (k.dim(2) != k.dim(3)) fail<ContractViolation>("conv2d: kernel must be square");
  if (k.dim(1) != x.dim(0))
    fail<ContractViolation>("conv2d: kernel expects ", k.dim(1), " input channels, input has ", x.dim(0));
  if (pad < 0 || stride < 1) fail<ContractViolation>("conv2d: bad pad/stride");
  ConvGeom g;
  g.ci = x.dim(0); g.h = x.dim(1); g.w = x.dim(2);
  g.co = k.dim(0); g.f = k.dim(2);
  g.pad = pad; g.stride = stride;
  const int eh = g.h + 2 * pad - g.f;
  const int ew = g.w + 2 * pad - g.f;
  if (eh < 0 || ew < 0)
    fail<ContractViolation>("conv2d: kernel ", g.f, " larger than padded input ", x.shape_str());
  g.ho = eh / stride + 1;
  g.wo = ew / stride + 1;
  return g;
}

// col is [Ci*f*f, Ho*Wo]; out-of-bounds taps are zero.
template <typename T>
void im2col(const T* x, const ConvGeom& g, T* col) {
  const int64_t plane = int64_t(g.h) * g.w;
  const int64_t ocols = int64_t(g.ho) * g.wo;
  for (int ci = 0; ci < g.ci; ++ci) {
    for (int kh = 0; kh < g.f; ++kh) {
      for (int kw = 0; kw < g.f; ++kw) {
        T* row = col + (int64_t(ci) * g.f * g.f + kh * g.f + kw) * ocols;
        for (int oh = 0; oh < g.ho; ++oh) {
          const int ih = oh * g.stride + kh - g.pad;
          T* dst = row + int64_t(oh) * g.wo;
          if (ih < 0 || ih >= g.h) {
            std::memset(dst, 0, sizeof(T) * size_t(g.wo));
            continue;
          }
          const T* src = x + int64_t(ci) * plane + int64_t(ih) * g.w;
          for (int ow = 0; ow < g.wo; ++ow) {
            const int iw = ow * g.stride + kw - g.pad;
            dst[ow] = (iw >= 0 && iw < g.w) ? src[iw] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeom& g, T* gx) {
  const int64_t plane = int64_t(g.h) * g.w;
  const int64_t ocols = int64_t(g.ho) * g.wo;
  for (int ci = 0; ci < g.ci; ++ci) {
    for (int kh = 0; kh < g.f; ++kh) {
      for (int kw = 0; kw < g.f; ++kw) {
        const T* row = col + (int64_t(ci) * g.f * g.f + kh * g.f + kw) * ocols;
        for (int oh = 0; oh < g.ho; ++oh) {
          const int ih = oh * g.stride + kh - g.pad;
          if (ih < 0 || ih >= g.h) continue;
          T* dst = gx + int64_t(ci) * plane + int64_t(ih) * g.w;
          const T* src = row + int64_t(oh) * g.wo;
          for (int ow = 0; ow < g.wo; ++ow) {
            const int iw = ow * g.stride + kw - g.pad;
            if (iw >= 0 && iw < g.w) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

// Direct 3x3 stride-1 convolution: one saxpy over each output row per
// (co, ci, tap).  Avoids the im2col round trip through memory, which is
// what bounds wide, shallow feature maps.  Column ranges are trimmed so
// out-of-bounds taps contribute exactly zero, matching zero padding.
// accumulate=false overwrites y, true adds into it.
template <typename T>
void conv3x3_direct_fwd(const T* x, const ConvGeom& g, const T* k, T* y,
                        bool accumulate = false) {
  const int64_t iplane = int64_t(g.h) * g.w;
  const int64_t oplane = int64_t(g.ho) * g.wo;
  for (int co = 0; co < g.co; ++co) {
    T* yp = y + co * oplane;
    for (int oh = 0; oh < g.ho; ++oh) {
      T* yrow = yp + int64_t(oh) * g.wo;
      if (!accumulate)
        for (int ow = 0; ow < g.wo; ++ow) yrow[ow] = T(0);
      for (int ci = 0; ci < g.ci; ++ci) {
        const T* xp = x + ci * iplane;
        const T* kp = k + (int64_t(co) * g.ci + ci) * 9;
        for (int kh = 0; kh < 3; ++kh) {
          const int ih = oh + kh - g.pad;
          if (ih < 0 || ih >= g.h) continue;
          const T* xrow = xp + int64_t(ih) * g.w;
          for (int kw = 0; kw < 3; ++kw) {
            const int shift = kw - g.pad;
            const int lo = shift < 0 ? -shift : 0;
            const int hi = g.w - shift < g.wo ? g.w - shift : g.wo;
            const T wv = kp[kh * 3 + kw];
            const T* xs = xrow + shift;
            for (int ow = lo; ow < hi; ++ow) yrow[ow] += wv * xs[ow];
          }
        }
      }
    }
  }
}

// dx is itself a 3x3 convolution of gy with the kernel flipped spatially
// and transposed over channels, so it reuses the forward loop.  Only valid
// for the shapes use_direct3x3 admits (stride 1, ho == h, wo == w).
template <typename T>
void conv3x3_direct_bwd_dx(const T* k, const ConvGeom& g, const T* gy, T* gx) {
  std::vector<T> flipped(size_t(g.ci) * g.co * 9);
  for (int co = 0; co < g.co; ++co)
    for (int ci = 0; ci < g.ci; ++ci)
      for (int t = 0; t < 9; ++t)
        flipped[(size_t(ci) * g.co + co) * 9 + (8 - t)] =
            k[(size_t(co) * g.ci + ci) * 9 + t];
  ConvGeom gt = g;
  gt.ci = g.co;
  gt.co = g.ci;
  gt.h = g.ho;
  gt.w = g.wo;
  gt.ho = g.h;
  gt.wo = g.w;
  gt.pad = 2 - g.pad;  // stride 1: transposed 3x3 correlation pads f-1-p
  conv3x3_direct_fwd(gy, gt, flipped.data(), gx, /*accumulate=*/true);
}

// dk via per-lane partial sums.  The lane accumulators vectorize without
// reassociating a single scalar chain, and every reduction runs in a fixed
// order, so results are reproducible run to run.  All three kw taps share
// one pass over each row pair to keep the traffic down; the few columns
// where a tap falls outside the input go through scalar edge accumulators.
template <typename T>
void conv3x3_direct_bwd_dk(const T* x, const ConvGeom& g, const T* gy, T* gk) {
  constexpr int L = 16;
  const int64_t iplane = int64_t(g.h) * g.w;
  const int64_t oplane = int64_t(g.ho) * g.wo;
  int lo_t[3], hi_t[3];
  int lo_c = 0, hi_c = g.wo;
  for (int kw = 0; kw < 3; ++kw) {
    const int shift = kw - g.pad;
    lo_t[kw] = shift < 0 ? -shift : 0;
    hi_t[kw] = g.w - shift < g.wo ? g.w - shift : g.wo;
    if (lo_t[kw] > lo_c) lo_c = lo_t[kw];
    if (hi_t[kw] < hi_c) hi_c = hi_t[kw];
  }
  if (hi_c < lo_c) hi_c = lo_c;
  for (int co = 0; co < g.co; ++co) {
    const T* gyp = gy + co * oplane;
    for (int ci = 0; ci < g.ci; ++ci) {
      const T* xp = x + ci * iplane;
      T* kp = gk + (int64_t(co) * g.ci + ci) * 9;
      for (int kh = 0; kh < 3; ++kh) {
        T l0[L] = {}, l1[L] = {}, l2[L] = {};
        T tail0 = 0, tail1 = 0, tail2 = 0;
        T edge[3] = {};
        for (int oh = 0; oh < g.ho; ++oh) {
          const int ih = oh + kh - g.pad;
          if (ih < 0 || ih >= g.h) continue;
          const T* __restrict__ gr = gyp + int64_t(oh) * g.wo;
          const T* __restrict__ xr = xp + int64_t(ih) * g.w;
          const int p = g.pad;  // tap kw reads xr[ow + kw - p]
          int ow = lo_c;
          for (; ow + L <= hi_c; ow += L)
            for (int l = 0; l < L; ++l) {
              const T gv = gr[ow + l];
              l0[l] += gv * xr[ow + l - p];
              l1[l] += gv * xr[ow + l + 1 - p];
              l2[l] += gv * xr[ow + l + 2 - p];
            }
          for (; ow < hi_c; ++ow) {
            const T gv = gr[ow];
            tail0 += gv * xr[ow - p];
            tail1 += gv * xr[ow + 1 - p];
            tail2 += gv * xr[ow + 2 - p];
          }
          for (int kw = 0; kw < 3; ++kw) {
            for (int e = lo_t[kw]; e < lo_c; ++e) edge[kw] += gr[e] * xr[e + kw - p];
            for (int e = hi_c; e < hi_t[kw]; ++e) edge[kw] += gr[e] * xr[e + kw - p];
          }
        }
        T a0 = tail0 + edge[0], a1 = tail1 + edge[1], a2 = tail2 + edge[2];
        for (int l = 0; l < L; ++l) {
          a0 += l0[l];
          a1 += l1[l];
          a2 += l2[l];
        }
        kp[kh * 3 + 0] += a0;
        kp[kh * 3 + 1] += a1;
        kp[kh * 3 + 2] += a2;
      }
    }
  }
}

// The direct path wins when feature maps are wide and shallow; im2col+GEMM
// wins once channel counts grow.  Cutoff picked from microbenchmarks.
inline bool use_direct3x3(const ConvGeom& g) {
  return g.f == 3 && g.stride == 1 && g.pad <= 2 &&
         int64_t(g.ho) * g.wo >= 1024 && g.co <= 32 && g.ci <= 32;
}

// bias may be null.  Returns [Co,Ho,Wo].
template <typename T>
Tensor<T> conv2d_fwd(const Tensor<T>& x, const Tensor<T>& k, const Tensor<T>* bias,
                     int pad, int stride) {
  const ConvGeom g = conv2d_geom(x, k, pad, stride);
  if (bias && (bias->rank() != 1 || bias->dim(0) != g.co))
    fail<ContractViolation>("conv2d: bias must be [Co]");
  Tensor<T> y({g.co, g.ho, g.wo});
  const int64_t ocols = int64_t(g.ho) * g.wo;
  if (g.f == 1 && g.pad == 0 && g.stride == 1) {
    detail::gemm<T>(false, false, g.co, ocols, g.ci, k.data(), x.data(), y.data(), false);
  } else if (use_direct3x3(g)) {
    conv3x3_direct_fwd(x.data(), g, k.data(), y.data());
  } else {
    Tensor<T> col({g.ci * g.f * g.f, int(ocols)});
    im2col(x.data(), g, col.data());
    detail::gemm<T>(false, false, g.co, ocols, int64_t(g.ci) * g.f * g.f,
                    k.data(), col.data(), y.data(), false);
  }
  if (bias) {
    for (int co = 0; co < g.co; ++co) {
      T* row = y.data() + int64_t(co) * ocols;
      const T b = (*bias)[co];
      for (int64_t i = 0; i < ocols; ++i) row[i] += b;
    }
  }
  return y;
}

// Any of gx/gk/gb may be null; non-null ones are accumulated into.
template <typename T>
void conv2d_bwd(const Tensor<T>& x, const Tensor<T>& k, const Tensor<T>& gy,
                int pad, int stride, Tensor<T>* gx, Tensor<T>* gk, Tensor<T>* gb) {
  const ConvGeom g = conv2d_geom(x, k, pad, stride);
  const int64_t ocols = int64_t(g.ho) * g.wo;
  if (gy.rank() != 3 || gy.dim(0) != g.co || gy.dim(1) != g.ho || gy.dim(2) != g.wo)
    fail<ContractViolation>("conv2d_bwd: output grad shape mismatch");
  if (gb) {
    for (int co = 0; co < g.co; ++co) {
      const T* row = gy.data() + int64_t(co) * ocols;
      T acc = 0;
      for (int64_t i = 0; i < ocols; ++i) acc += row[i];
      (*gb)[co] += acc;
    }
  }
  const bool one_by_one = (g.f == 1 && g.pad == 0 && g.stride == 1);
  if (one_by_one) {
    if (gk) detail::gemm<T>(false, true, g.co, g.ci, ocols, gy.data(), x.data(), gk->data(), true);
    if (gx) detail::gemm<T>(true, false, g.ci, ocols, g.co, k.data(), gy.data(), gx->data(), true);
    return;
  }
  if (use_direct3x3(g)) {
    if (gk) conv3x3_direct_bwd_dk(x.data(), g, gy.data(), gk->data());
    if (gx) conv3x3_direct_bwd_dx(k.data(), g, gy.data(), gx->data());
    return;
  }
  const int64_t krows = int64_t(g.ci) * g.f * g.f;
  if (gk) {
    Tensor<T> col({int(krows), int(ocols)});
    im2col(x.data(), g, col.data());
    detail::gemm<T>(false, true, g.co, krows, ocols, gy.data(), col.data(), gk->data(), true);
  }
  if (gx) {
    Tensor<T> gcol({int(krows), int(ocols)});
    detail::gemm<T>(true, false, krows, ocols, g.co, k.data(), gy.data(), gcol.data(), false);
    col2im_add(gcol.data(), g, gx->data());
  }
}

// y[M] = W[M,N] x[N] (+ b[M]).
template <typename T>
Tensor<T> dense_fwd(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias) {
  if (x.rank() != 1) fail<ContractViolation>("dense: input must be rank 1, got ", x.shape_str());
  if (w.rank() != 2) fail<ContractViolation>("dense: weight must be [M,N]");
  if (w.dim(1) != x.dim(0))
    fail<ContractViolation>("dense: weight expects ", w.dim(1), " inputs, got ", x.dim(0));
  const int m = w.dim(0);
  if (bias && (bias->rank() != 1 || bias->dim(0) != m))
    fail<ContractViolation>("dense: bias must be [M]");
  Tensor<T> y({m});
  detail::gemm<T>(false, false, m, 1, w.dim(1), w.data(), x.data(), y.data(), false);
  if (bias)
    for (int i = 0; i < m; ++i) y[i] += (*bias)[i];
  return y;
}

template <typename T>
void dense_bwd(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& gy,
               Tensor<T>* gx, Tensor<T>* gw, Tensor<T>* gb) {
  const int m = w.dim(0), n = w.dim(1);
  if (gx) detail::gemm<T>(true, false, n, 1, m, w.data(), gy.data(), gx->data(), true);
  if (gw) detail::gemm<T>(false, false, m, n, 1, gy.data(), x.data(), gw->data(), true);
  if (gb)
    for (int i = 0; i < m; ++i) (*gb)[i] += gy[i];
}

struct NormStatsOut {
  double mean, inv_std;
};

// Branch-free exp for the float activation paths. Classic range reduction
// (x = n ln2 + r) with a degree-6 polynomial on r; about 2 ulp, which is
// plenty for activations, and it vectorizes where libm's expf cannot.
// The double overloads stay on libm so gradient checks see exact values.
inline float exp_fast(float x) {
  x = std::min(88.0f, std::max(-87.0f, x));
  const float z = x * 1.44269504f;
  const float n = std::floor(z + 0.5f);
  float r = x - n * 0.693359375f;
  r -= n * -2.12194440e-4f;
  float p = 1.9875691500e-4f;
  p = p * r + 1.3981999507e-3f;
  p = p * r + 8.3334519073e-3f;
  p = p * r + 4.1665795894e-2f;
  p = p * r + 1.6666665459e-1f;
  p = p * r + 5.0000001201e-1f;
  p = p * r * r + r + 1.0f;
  const float s = std::bit_cast<float>((int32_t(n) + 127) << 23);
  return p * s;
}
inline double exp_fast(double x) { return std::exp(x); }

inline float expm1_fast(float x) { return exp_fast(x) - 1.0f; }
inline double expm1_fast(double x) { return std::expm1(x); }

// Fixed-width lane reduction: element math stays in T so the loops
// vectorize, lanes collapse in a fixed order into double.
inline constexpr int kLnLanes = 16;

template <typename T>
double reduce_lanes(const T* lanes) {
  double acc = 0;
  for (int l = 0; l < kLnLanes; ++l) acc += double(lanes[l]);
  return acc;
}

// Statistics over every element; gain/bias indexed by the leading dim.
template <typename T>
NormStatsOut layer_norm_stats(const Tensor<T>& x, double eps) {
  const int64_t n = x.numel();
  const T* xs = x.data();
  T ls[kLnLanes] = {};
  for (int64_t i = 0; i < n; ++i) ls[i & (kLnLanes - 1)] += xs[i];
  const double mean = reduce_lanes(ls) / double(n);
  const T m = T(mean);
  T lq[kLnLanes] = {};
  for (int64_t i = 0; i < n; ++i) {
    const T d = xs[i] - m;
    lq[i & (kLnLanes - 1)] += d * d;
  }
  const double var = reduce_lanes(lq) / double(n);
  return {mean, 1.0 / std::sqrt(var + eps)};
}

template <typename T>
Tensor<T> layer_norm_fwd(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                         double eps) {
  const int c = x.dim(0);
  if (gain.rank() != 1 || gain.dim(0) != c || bias.rank() != 1 || bias.dim(0) != c)
    fail<ContractViolation>("layer_norm: gain/bias must match leading dim ", c);
  const int64_t inner = x.numel() / c;
  const NormStatsOut st = layer_norm_stats(x, eps);
  Tensor<T> y(x.shape());
  for (int ci = 0; ci < c; ++ci) {
    // y = g*(x - m)*is + b folds to a single affine per channel.
    const T a = gain[ci] * T(st.inv_std);
    const T b = bias[ci] - a * T(st.mean);
    const T* xs = x.data() + int64_t(ci) * inner;
    T* ys = y.data() + int64_t(ci) * inner;
    for (int64_t i = 0; i < inner; ++i) ys[i] = a * xs[i] + b;
  }
  return y;
}

template <typename T>
void layer_norm_bwd(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& gy,
                    double eps, Tensor<T>* gx, Tensor<T>* ggain, Tensor<T>* gbias) {
  const int c = x.dim(0);
  const int64_t n = x.numel();
  const int64_t inner = n / c;
  const NormStatsOut st = layer_norm_stats(x, eps);
  const T m = T(st.mean), is = T(st.inv_std);
  // dxh = gy * gain; dx = s * (dxh - mean(dxh) - xh * mean(dxh * xh)),
  // means taken over every element since the statistics were.
  T l1[kLnLanes] = {}, l2[kLnLanes] = {};
  for (int ci = 0; ci < c; ++ci) {
    const T g = gain[ci];
    const T* xs = x.data() + int64_t(ci) * inner;
    const T* gys = gy.data() + int64_t(ci) * inner;
    for (int64_t i = 0; i < inner; ++i) {
      const T xh = (xs[i] - m) * is;
      const T dxh = gys[i] * g;
      l1[i & (kLnLanes - 1)] += dxh;
      l2[i & (kLnLanes - 1)] += dxh * xh;
    }
  }
  const T m1 = T(reduce_lanes(l1) / double(n));
  const T m2 = T(reduce_lanes(l2) / double(n));
  for (int ci = 0; ci < c; ++ci) {
    const T g = gain[ci];
    const T* xs = x.data() + int64_t(ci) * inner;
    const T* gys = gy.data() + int64_t(ci) * inner;
    T* gxs = gx ? gx->data() + int64_t(ci) * inner : nullptr;
    T lg[kLnLanes] = {}, lb[kLnLanes] = {};
    if (gxs) {
      // gx += is*(g*gy - m1 - xh*m2) = p*gy - r*x - q with the channel
      // constants folded out of the loop.
      const T p = is * g;
      const T r = is * is * m2;
      const T q = is * m1 - r * m;
      for (int64_t i = 0; i < inner; ++i) {
        const T dy = gys[i];
        lg[i & (kLnLanes - 1)] += dy * ((xs[i] - m) * is);
        lb[i & (kLnLanes - 1)] += dy;
        gxs[i] += p * dy - r * xs[i] - q;
      }
    } else {
      for (int64_t i = 0; i < inner; ++i) {
        const T dy = gys[i];
        lg[i & (kLnLanes - 1)] += dy * ((xs[i] - m) * is);
        lb[i & (kLnLanes - 1)] += dy;
      }
    }
    if (ggain) (*ggain)[ci] += T(reduce_lanes(lg));
    if (gbias) (*gbias)[ci] += T(reduce_lanes(lb));
  }
}

// 2x2 max pooling, stride 2, floor semantics: trailing row/col dropped.
template <typename T>
Tensor<T> max_pool2_fwd(const Tensor<T>& x) {
  if (x.rank() != 3) fail<ContractViolation>("max_pool2: input must be [C,H,W]");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (h < 2 || w < 2) fail<ContractViolation>("max_pool2: spatial dims must be >= 2");
  const int ho = h / 2, wo = w / 2;
  Tensor<T> y({c, ho, wo});
  for (int ci = 0; ci < c; ++ci)
    for (int oh = 0; oh < ho; ++oh)
      for (int ow = 0; ow < wo; ++ow) {
        const T a = x.at(ci, 2 * oh, 2 * ow), b = x.at(ci, 2 * oh, 2 * ow + 1);
        const T d = x.at(ci, 2 * oh + 1, 2 * ow), e = x.at(ci, 2 * oh + 1, 2 * ow + 1);
        T m = a;
        if (b > m) m = b;
        if (d > m) m = d;
        if (e > m) m = e;
        y.at(ci, oh, ow) = m;
      }
  return y;
}

// Ties route the gradient to the first maximum in row-major window order.
template <typename T>
void max_pool2_bwd(const Tensor<T>& x, const Tensor<T>& gy, Tensor<T>* gx) {
  const int c = x.dim(0), ho = gy.dim(1), wo = gy.dim(2);
  for (int ci = 0; ci < c; ++ci)
    for (int oh = 0; oh < ho; ++oh)
      for (int ow = 0; ow < wo; ++ow) {
        int bi = 2 * oh, bj = 2 * ow;
        T best = x.at(ci, bi, bj);
        for (int kh = 0; kh < 2; ++kh)
          for (int kw = 0; kw < 2; ++kw) {
            const T v = x.at(ci, 2 * oh + kh, 2 * ow + kw);
            if (v > best) {
              best = v;
              bi = 2 * oh + kh;
              bj = 2 * ow + kw;
            }
          }
        gx->at(ci, bi, bj) += gy.at(ci, oh, ow);
      }
}

struct LerpTap {
  int i0, i1;
  double a;  // weight on i1
};

// Half-pixel-aligned source coordinate for 2x upsampling, clamped at edges.
inline LerpTap upsample2_tap(int out_index, int in_size) {
  double u = 0.5 * out_index - 0.25;
  if (u < 0) u = 0;
  const double max_u = double(in_size - 1);
  if (u > max_u) u = max_u;
  LerpTap t;
  t.i0 = int(u);
  if (t.i0 > in_size - 1) t.i0 = in_size - 1;
  t.i1 = t.i0 + 1 < in_size ? t.i0 + 1 : in_size - 1;
  t.a = u - double(t.i0);
  return t;
}

template <typename T>
Tensor<T> upsample2_fwd(const Tensor<T>& x) {
  if (x.rank() != 3) fail<ContractViolation>("bilinear_upsample2: input must be [C,H,W]");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  Tensor<T> y({c, 2 * h, 2 * w});
  std::vector<LerpTap> rows(size_t(2 * h)), cols(size_t(2 * w));
  for (int i = 0; i < 2 * h; ++i) rows[size_t(i)] = upsample2_tap(i, h);
  for (int j = 0; j < 2 * w; ++j) cols[size_t(j)] = upsample2_tap(j, w);
  for (int ci = 0; ci < c; ++ci)
    for (int i = 0; i < 2 * h; ++i) {
      const LerpTap& r = rows[size_t(i)];
      for (int j = 0; j < 2 * w; ++j) {
        const LerpTap& s = cols[size_t(j)];
        const double v00 = double(x.at(ci, r.i0, s.i0));
        const double v01 = double(x.at(ci, r.i0, s.i1));
        const double v10 = double(x.at(ci, r.i1, s.i0));
        const double v11 = double(x.at(ci, r.i1, s.i1));
        const double top = v00 + (v01 - v00) * s.a;
        const double bot = v10 + (v11 - v10) * s.a;
        y.at(ci, i, j) = T(top + (bot - top) * r.a);
      }
    }
  return y;
}

template <typename T>
void upsample2_bwd(const Tensor<T>& x, const Tensor<T>& gy, Tensor<T>* gx) {
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  std::vector<LerpTap> rows(size_t(2 * h)), cols(size_t(2 * w));
  for (int i = 0; i < 2 * h; ++i) rows[size_t(i)] = upsample2_tap(i, h);
  for (int j = 0; j < 2 * w; ++j) cols[size_t(j)] = upsample2_tap(j, w);
  for (int ci = 0; ci < c; ++ci)
    for (int i = 0; i < 2 * h; ++i) {
      const LerpTap& r = rows[size_t(i)];
      for (int j = 0; j < 2 * w; ++j) {
        const LerpTap& s = cols[size_t(j)];
        const double g = double(gy.at(ci, i, j));
        gx->at(ci, r.i0, s.i0) += T(g * (1 - r.a) * (1 - s.a));
        gx->at(ci, r.i0, s.i1) += T(g * (1 - r.a) * s.a);
        gx->at(ci, r.i1, s.i0) += T(g * r.a * (1 - s.a));
        gx->at(ci, r.i1, s.i1) += T(g * r.a * s.a);
      }
    }
}

}  // namespace ops
}  // namespace pgtk
