// Copyright (c) the wmkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "wm/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

namespace wm::kernels {

namespace {

constexpr int kLanes = 16;

// Reductions accumulate into fixed lanes so they vectorize without
// -ffast-math and stay bitwise reproducible for any thread count.
inline double dot_row(const float* a, const float* b, int n) {
  float lanes[kLanes] = {};
  int x = 0;
  for (; x + kLanes <= n; x += kLanes)
    for (int j = 0; j < kLanes; ++j) lanes[j] += a[x + j] * b[x + j];
  float tail = 0.0f;
  for (; x < n; ++x) tail += a[x] * b[x];
  double s = tail;
  for (int j = 0; j < kLanes; ++j) s += lanes[j];
  return s;
}

inline int reflect_index(int i, int n) {
  if (i < 0) i = -i;
  if (i >= n) i = 2 * n - 2 - i;
  return i;
}

inline int clamp_index(int i, int n) {
  return i < 0 ? 0 : (i >= n ? n - 1 : i);
}

// One output row for a block of B consecutive output channels. Accumulation
// runs in local tiles so the vectorizer needs no aliasing checks.
template <int B>
inline void conv3x3_row_block(const float* pad, int cin, int h, int w,
                              const float* weight, const float* bias,
                              float* out, int y, int co) {
  constexpr int kTile = 128;
  const int pw = w + 2;
  float acc[B][kTile];
  for (int x0 = 0; x0 < w; x0 += kTile) {
    const int tile = std::min(kTile, w - x0);
    for (int b = 0; b < B; ++b)
      for (int x = 0; x < tile; ++x) acc[b][x] = 0.0f;
    for (int ci = 0; ci < cin; ++ci) {
      const float* r0 =
          pad + (static_cast<std::size_t>(ci) * (h + 2) + y) * pw + x0;
      const float* r1 = r0 + pw;
      const float* r2 = r1 + pw;
      float wv[B][9];
      for (int b = 0; b < B; ++b) {
        const float* wp =
            weight + (static_cast<std::size_t>(co + b) * cin + ci) * 9;
        for (int k = 0; k < 9; ++k) wv[b][k] = wp[k];
      }
      for (int x = 0; x < tile; ++x) {
        const float i0 = r0[x], i1 = r0[x + 1], i2 = r0[x + 2];
        const float i3 = r1[x], i4 = r1[x + 1], i5 = r1[x + 2];
        const float i6 = r2[x], i7 = r2[x + 1], i8 = r2[x + 2];
        for (int b = 0; b < B; ++b)
          acc[b][x] += wv[b][0] * i0 + wv[b][1] * i1 + wv[b][2] * i2 +
                       wv[b][3] * i3 + wv[b][4] * i4 + wv[b][5] * i5 +
                       wv[b][6] * i6 + wv[b][7] * i7 + wv[b][8] * i8;
      }
    }
    for (int b = 0; b < B; ++b) {
      float* orow = out + (static_cast<std::size_t>(co + b) * h + y) * w + x0;
      const float bv = bias[co + b];
      for (int x = 0; x < tile; ++x) orow[x] = acc[b][x] + bv;
    }
  }
}

}  // namespace

int thread_count() { return omp_get_max_threads(); }

void reflect_pad1(const float* in, int c, int h, int w, float* pad) {
  const int ph = h + 2, pw = w + 2;
#pragma omp parallel for schedule(static)
  for (int ci = 0; ci < c; ++ci) {
    const float* src = in + static_cast<std::size_t>(ci) * h * w;
    float* dst = pad + static_cast<std::size_t>(ci) * ph * pw;
    for (int yp = 0; yp < ph; ++yp) {
      const float* row = src + static_cast<std::size_t>(reflect_index(yp - 1, h)) * w;
      float* drow = dst + static_cast<std::size_t>(yp) * pw;
      drow[0] = row[reflect_index(-1, w)];
      std::memcpy(drow + 1, row, sizeof(float) * w);
      drow[w + 1] = row[reflect_index(w, w)];
    }
  }
}

void reflect_pad1_adjoint(const float* gpad, int c, int h, int w, float* gin) {
  const int ph = h + 2, pw = w + 2;
#pragma omp parallel for schedule(static)
  for (int ci = 0; ci < c; ++ci) {
    const float* src = gpad + static_cast<std::size_t>(ci) * ph * pw;
    float* dst = gin + static_cast<std::size_t>(ci) * h * w;
    std::fill(dst, dst + static_cast<std::size_t>(h) * w, 0.0f);
    for (int yp = 0; yp < ph; ++yp) {
      const float* srow = src + static_cast<std::size_t>(yp) * pw;
      float* drow = dst + static_cast<std::size_t>(reflect_index(yp - 1, h)) * w;
      drow[reflect_index(-1, w)] += srow[0];
      for (int x = 0; x < w; ++x) drow[x] += srow[x + 1];
      drow[reflect_index(w, w)] += srow[w + 1];
    }
  }
}

void conv3x3_forward(const float* pad, int cin, int h, int w,
                     const float* weight, const float* bias, int cout,
                     float* out) {
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    int co = 0;
    for (; co + 4 <= cout; co += 4)
      conv3x3_row_block<4>(pad, cin, h, w, weight, bias, out, y, co);
    for (; co < cout; ++co)
      conv3x3_row_block<1>(pad, cin, h, w, weight, bias, out, y, co);
  }
}

void conv3x3_backward_input(const float* gout, int cout, int h, int w,
                            const float* weight, int cin, float* gpad) {
  constexpr int kTile = 128;
  const int ph = h + 2, pw = w + 2;
#pragma omp parallel for schedule(static)
  for (int yp = 0; yp < ph; ++yp) {
    for (int ci = 0; ci < cin; ++ci) {
      float* grow = gpad + (static_cast<std::size_t>(ci) * ph + yp) * pw;
      std::fill(grow, grow + pw, 0.0f);
      // Per-tap local accumulators; the shifted combine happens on store so
      // every inner loop is dependency-free and vectorizes cleanly.
      float acc0[kTile], acc1[kTile], acc2[kTile];
      for (int x0 = 0; x0 < w; x0 += kTile) {
        const int tile = std::min(kTile, w - x0);
        for (int x = 0; x < tile; ++x) acc0[x] = acc1[x] = acc2[x] = 0.0f;
        for (int ky = 0; ky < 3; ++ky) {
          const int y = yp - ky;
          if (y < 0 || y >= h) continue;
          int co = 0;
          for (; co + 4 <= cout; co += 4) {
            const float* g0 =
                gout + (static_cast<std::size_t>(co + 0) * h + y) * w + x0;
            const float* g1 =
                gout + (static_cast<std::size_t>(co + 1) * h + y) * w + x0;
            const float* g2 =
                gout + (static_cast<std::size_t>(co + 2) * h + y) * w + x0;
            const float* g3 =
                gout + (static_cast<std::size_t>(co + 3) * h + y) * w + x0;
            const std::size_t stride = static_cast<std::size_t>(cin) * 9;
            const std::size_t wi =
                (static_cast<std::size_t>(co) * cin + ci) * 9 + ky * 3;
            float wv[3][4];
            for (int kx = 0; kx < 3; ++kx) {
              wv[kx][0] = weight[wi + kx];
              wv[kx][1] = weight[wi + stride + kx];
              wv[kx][2] = weight[wi + 2 * stride + kx];
              wv[kx][3] = weight[wi + 3 * stride + kx];
            }
            for (int x = 0; x < tile; ++x) {
              const float v0 = g0[x], v1 = g1[x], v2 = g2[x], v3 = g3[x];
              acc0[x] += wv[0][0] * v0 + wv[0][1] * v1 + wv[0][2] * v2 + wv[0][3] * v3;
              acc1[x] += wv[1][0] * v0 + wv[1][1] * v1 + wv[1][2] * v2 + wv[1][3] * v3;
              acc2[x] += wv[2][0] * v0 + wv[2][1] * v1 + wv[2][2] * v2 + wv[2][3] * v3;
            }
          }
          for (; co < cout; ++co) {
            const float* g0 =
                gout + (static_cast<std::size_t>(co) * h + y) * w + x0;
            const float* wb =
                weight + (static_cast<std::size_t>(co) * cin + ci) * 9 + ky * 3;
            for (int x = 0; x < tile; ++x) {
              const float v = g0[x];
              acc0[x] += wb[0] * v;
              acc1[x] += wb[1] * v;
              acc2[x] += wb[2] * v;
            }
          }
        }
        for (int x = 0; x < tile; ++x) grow[x0 + x] += acc0[x];
        for (int x = 0; x < tile; ++x) grow[x0 + x + 1] += acc1[x];
        for (int x = 0; x < tile; ++x) grow[x0 + x + 2] += acc2[x];
      }
    }
  }
}

void conv3x3_backward_weights(const float* pad, int cin, int h, int w,
                              const float* gout, int cout, float* gweight,
                              float* gbias) {
  const int pw = w + 2;
#pragma omp parallel for schedule(static)
  for (int co = 0; co < cout; ++co) {
    const float* gbase = gout + static_cast<std::size_t>(co) * h * w;
    double bsum = 0.0;
    for (int y = 0; y < h; ++y) {
      float lanes[kLanes] = {};
      const float* gr = gbase + static_cast<std::size_t>(y) * w;
      int x = 0;
      for (; x + kLanes <= w; x += kLanes)
        for (int j = 0; j < kLanes; ++j) lanes[j] += gr[x + j];
      float tail = 0.0f;
      for (; x < w; ++x) tail += gr[x];
      double s = tail;
      for (int j = 0; j < kLanes; ++j) s += lanes[j];
      bsum += s;
    }
    gbias[co] += static_cast<float>(bsum);
    for (int ci = 0; ci < cin; ++ci) {
      const float* pbase = pad + static_cast<std::size_t>(ci) * (h + 2) * pw;
      // All nine taps accumulate in one sweep; the lane arrays stay local so
      // the loop vectorizes without aliasing checks.
      float lanes[9][kLanes] = {};
      float tails[9] = {};
      for (int y = 0; y < h; ++y) {
        const float* gr = gbase + static_cast<std::size_t>(y) * w;
        const float* p0 = pbase + static_cast<std::size_t>(y) * pw;
        const float* p1 = p0 + pw;
        const float* p2 = p1 + pw;
        int x = 0;
        for (; x + kLanes <= w; x += kLanes)
          for (int j = 0; j < kLanes; ++j) {
            const float g = gr[x + j];
            lanes[0][j] += g * p0[x + j];
            lanes[1][j] += g * p0[x + j + 1];
            lanes[2][j] += g * p0[x + j + 2];
            lanes[3][j] += g * p1[x + j];
            lanes[4][j] += g * p1[x + j + 1];
            lanes[5][j] += g * p1[x + j + 2];
            lanes[6][j] += g * p2[x + j];
            lanes[7][j] += g * p2[x + j + 1];
            lanes[8][j] += g * p2[x + j + 2];
          }
        for (; x < w; ++x) {
          const float g = gr[x];
          tails[0] += g * p0[x];
          tails[1] += g * p0[x + 1];
          tails[2] += g * p0[x + 2];
          tails[3] += g * p1[x];
          tails[4] += g * p1[x + 1];
          tails[5] += g * p1[x + 2];
          tails[6] += g * p2[x];
          tails[7] += g * p2[x + 1];
          tails[8] += g * p2[x + 2];
        }
      }
      float* gw = gweight + (static_cast<std::size_t>(co) * cin + ci) * 9;
      for (int t = 0; t < 9; ++t) {
        double s = tails[t];
        for (int j = 0; j < kLanes; ++j) s += lanes[t][j];
        gw[t] += static_cast<float>(s);
      }
    }
  }
}

void conv1x1_forward(const float* in, int cin, std::size_t hw,
                     const float* weight, const float* bias, int cout,
                     float* out) {
  const int nchunk = std::min<int>(thread_count() * 4, 64);
  const std::size_t chunk = (hw + nchunk - 1) / nchunk;
#pragma omp parallel for schedule(static)
  for (int k = 0; k < nchunk; ++k) {
    const std::size_t lo = std::min(hw, k * chunk);
    const std::size_t hi = std::min(hw, lo + chunk);
    if (lo >= hi) continue;
    for (int co = 0; co < cout; ++co) {
      float* orow = out + co * hw;
      std::fill(orow + lo, orow + hi, bias[co]);
      for (int ci = 0; ci < cin; ++ci) {
        const float wv = weight[static_cast<std::size_t>(co) * cin + ci];
        const float* irow = in + ci * hw;
        for (std::size_t p = lo; p < hi; ++p) orow[p] += wv * irow[p];
      }
    }
  }
}

void conv1x1_backward_input(const float* gout, int cout, std::size_t hw,
                            const float* weight, int cin, float* gin) {
  const int nchunk = std::min<int>(thread_count() * 4, 64);
  const std::size_t chunk = (hw + nchunk - 1) / nchunk;
#pragma omp parallel for schedule(static)
  for (int k = 0; k < nchunk; ++k) {
    const std::size_t lo = std::min(hw, k * chunk);
    const std::size_t hi = std::min(hw, lo + chunk);
    if (lo >= hi) continue;
    for (int ci = 0; ci < cin; ++ci) {
      float* grow = gin + ci * hw;
      std::fill(grow + lo, grow + hi, 0.0f);
      for (int co = 0; co < cout; ++co) {
        const float wv = weight[static_cast<std::size_t>(co) * cin + ci];
        const float* orow = gout + co * hw;
        for (std::size_t p = lo; p < hi; ++p) grow[p] += wv * orow[p];
      }
    }
  }
}

void conv1x1_backward_weights(const float* in, int cin, std::size_t hw,
                              const float* gout, int cout, float* gweight,
                              float* gbias) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int co = 0; co < cout; ++co)
    for (int ci = 0; ci < cin; ++ci)
      gweight[static_cast<std::size_t>(co) * cin + ci] +=
          static_cast<float>(dot_row(gout + co * hw, in + ci * hw, static_cast<int>(hw)));
#pragma omp parallel for schedule(static)
  for (int co = 0; co < cout; ++co) {
    const float* g = gout + co * hw;
    double s = 0.0;
    for (std::size_t p = 0; p < hw; ++p) s += g[p];
    gbias[co] += static_cast<float>(s);
  }
}

void bn_batch_stats(const float* x, int n, int c, std::size_t hw, float* mean,
                    float* var) {
  const std::size_t img = static_cast<std::size_t>(c) * hw;
#pragma omp parallel for schedule(static)
  for (int ci = 0; ci < c; ++ci) {
    double lanes[8] = {}, lanes2[8] = {};
    for (int in = 0; in < n; ++in) {
      const float* p = x + in * img + ci * hw;
      std::size_t i = 0;
      for (; i + 8 <= hw; i += 8)
        for (int j = 0; j < 8; ++j) {
          const double v = p[i + j];
          lanes[j] += v;
          lanes2[j] += v * v;
        }
      for (; i < hw; ++i) {
        const double v = p[i];
        lanes[0] += v;
        lanes2[0] += v * v;
      }
    }
    double s = 0.0, s2 = 0.0;
    for (int j = 0; j < 8; ++j) {
      s += lanes[j];
      s2 += lanes2[j];
    }
    const double cnt = static_cast<double>(n) * hw;
    const double m = s / cnt;
    mean[ci] = static_cast<float>(m);
    var[ci] = static_cast<float>(std::max(0.0, s2 / cnt - m * m));
  }
}

void bn_forward(const float* x, int n, int c, std::size_t hw,
                const float* mean, const float* var, const float* gamma,
                const float* beta, float eps, float* y) {
  const std::size_t img = static_cast<std::size_t>(c) * hw;
#pragma omp parallel for collapse(2) schedule(static)
  for (int in = 0; in < n; ++in)
    for (int ci = 0; ci < c; ++ci) {
      const float scale = gamma[ci] / std::sqrt(var[ci] + eps);
      const float shift = beta[ci] - mean[ci] * scale;
      const float* px = x + in * img + ci * hw;
      float* py = y + in * img + ci * hw;
      for (std::size_t i = 0; i < hw; ++i) py[i] = px[i] * scale + shift;
    }
}

void bn_backward(const float* x, const float* gy, int n, int c, std::size_t hw,
                 const float* mean, const float* var, const float* gamma,
                 float eps, float* gx, float* ggamma, float* gbeta) {
  const std::size_t img = static_cast<std::size_t>(c) * hw;
#pragma omp parallel for schedule(static)
  for (int ci = 0; ci < c; ++ci) {
    const double m = mean[ci];
    const double invstd = 1.0 / std::sqrt(static_cast<double>(var[ci]) + eps);
    double sg = 0.0, sgx = 0.0;
    for (int in = 0; in < n; ++in) {
      const float* px = x + in * img + ci * hw;
      const float* pg = gy + in * img + ci * hw;
      double l0 = 0.0, l1 = 0.0;
      for (std::size_t i = 0; i < hw; ++i) {
        const double xh = (px[i] - m) * invstd;
        l0 += pg[i];
        l1 += pg[i] * xh;
      }
      sg += l0;
      sgx += l1;
    }
    const double cnt = static_cast<double>(n) * hw;
    const double k1 = sg / cnt;
    const double k2 = sgx / cnt;
    const float gscale = static_cast<float>(gamma[ci] * invstd);
    for (int in = 0; in < n; ++in) {
      const float* px = x + in * img + ci * hw;
      const float* pg = gy + in * img + ci * hw;
      float* pd = gx + in * img + ci * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const float xh = static_cast<float>((px[i] - m) * invstd);
        pd[i] = gscale * (pg[i] - static_cast<float>(k1) - xh * static_cast<float>(k2));
      }
    }
    ggamma[ci] += static_cast<float>(sgx);
    gbeta[ci] += static_cast<float>(sg);
  }
}

void relu_forward(float* x, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
    x[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_forward_mask(float* x, std::uint8_t* mask, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    const bool on = x[i] > 0.0f;
    mask[i] = on ? 1 : 0;
    x[i] = on ? x[i] : 0.0f;
  }
}

void relu_mask_backward(const std::uint8_t* mask, const float* gy, float* gx,
                        std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
    gx[i] = mask[i] ? gy[i] : 0.0f;
}

void relu_backward(const float* y, const float* gy, float* gx, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
    gx[i] = y[i] > 0.0f ? gy[i] : 0.0f;
}

void sigmoid_forward(float* x, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
    x[i] = 1.0f / (1.0f + std::exp(-x[i]));
}

void sigmoid_backward(const float* y, const float* gy, float* gx,
                      std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
    gx[i] = gy[i] * y[i] * (1.0f - y[i]);
}

void avgpool_forward(const float* in, int c, int h, int w, int b, float* out) {
  const int oh = h / b, ow = w / b;
  const float inv = 1.0f / (static_cast<float>(b) * b);
#pragma omp parallel for schedule(static)
  for (int ci = 0; ci < c; ++ci) {
    const float* src = in + static_cast<std::size_t>(ci) * h * w;
    float* dst = out + static_cast<std::size_t>(ci) * oh * ow;
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        float s = 0.0f;
        for (int dy = 0; dy < b; ++dy) {
          const float* row = src + (static_cast<std::size_t>(oy) * b + dy) * w + ox * b;
          for (int dx = 0; dx < b; ++dx) s += row[dx];
        }
        dst[static_cast<std::size_t>(oy) * ow + ox] = s * inv;
      }
  }
}

void avgpool_backward(const float* gout, int c, int h, int w, int b,
                      float* gin) {
  const int oh = h / b, ow = w / b;
  const float inv = 1.0f / (static_cast<float>(b) * b);
#pragma omp parallel for schedule(static)
  for (int ci = 0; ci < c; ++ci) {
    const float* src = gout + static_cast<std::size_t>(ci) * oh * ow;
    float* dst = gin + static_cast<std::size_t>(ci) * h * w;
    std::fill(dst, dst + static_cast<std::size_t>(h) * w, 0.0f);
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        const float g = src[static_cast<std::size_t>(oy) * ow + ox] * inv;
        for (int dy = 0; dy < b; ++dy) {
          float* row = dst + (static_cast<std::size_t>(oy) * b + dy) * w + ox * b;
          for (int dx = 0; dx < b; ++dx) row[dx] += g;
        }
      }
  }
}

void sep_blur(const float* in, int h, int w, const float* kernel, int radius,
              float* tmp, float* out) {
  const int taps = 2 * radius + 1;
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    const float* row = in + static_cast<std::size_t>(y) * w;
    float* trow = tmp + static_cast<std::size_t>(y) * w;
    for (int x = 0; x < w; ++x) {
      float s = 0.0f;
      for (int t = 0; t < taps; ++t)
        s += kernel[t] * row[clamp_index(x + t - radius, w)];
      trow[x] = s;
    }
  }
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    float* orow = out + static_cast<std::size_t>(y) * w;
    for (int t = 0; t < taps; ++t) {
      const float* trow = tmp + static_cast<std::size_t>(clamp_index(y + t - radius, h)) * w;
      const float kv = kernel[t];
      if (t == 0)
        for (int x = 0; x < w; ++x) orow[x] = kv * trow[x];
      else
        for (int x = 0; x < w; ++x) orow[x] += kv * trow[x];
    }
  }
}

void sep_blur_adjoint(const float* gout, int h, int w, const float* kernel,
                      int radius, float* tmp, float* gin) {
  const int taps = 2 * radius + 1;
  // Adjoint of the vertical pass: tmp gets the scattered row contributions.
#pragma omp parallel for schedule(static)
  for (int j = 0; j < h; ++j) {
    float* trow = tmp + static_cast<std::size_t>(j) * w;
    std::fill(trow, trow + w, 0.0f);
    for (int t = 0; t < taps; ++t) {
      const float kv = kernel[t];
      if (j > 0 && j < h - 1) {
        const int y = j + radius - t;
        if (y < 0 || y >= h) continue;
        const float* grow = gout + static_cast<std::size_t>(y) * w;
        for (int x = 0; x < w; ++x) trow[x] += kv * grow[x];
      } else {
        // Border rows absorb every source row the clamp mapped onto them.
        for (int y = 0; y < h; ++y) {
          if (clamp_index(y + t - radius, h) != j) continue;
          const float* grow = gout + static_cast<std::size_t>(y) * w;
          for (int x = 0; x < w; ++x) trow[x] += kv * grow[x];
        }
      }
    }
  }
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    const float* trow = tmp + static_cast<std::size_t>(y) * w;
    float* grow = gin + static_cast<std::size_t>(y) * w;
    std::fill(grow, grow + w, 0.0f);
    for (int x = 0; x < w; ++x) {
      const float g = trow[x];
      for (int t = 0; t < taps; ++t)
        grow[clamp_index(x + t - radius, w)] += kernel[t] * g;
    }
  }
}

void rotate_bilinear(const float* in, int h, int w, double radians,
                     float* out) {
  const double cx = 0.5 * (w - 1), cy = 0.5 * (h - 1);
  const double c = std::cos(radians), s = std::sin(radians);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    float* orow = out + static_cast<std::size_t>(y) * w;
    const double dy = y - cy;
    for (int x = 0; x < w; ++x) {
      const double dx = x - cx;
      double sx = c * dx + s * dy + cx;
      double sy = -s * dx + c * dy + cy;
      sx = std::min(std::max(sx, 0.0), static_cast<double>(w - 1));
      sy = std::min(std::max(sy, 0.0), static_cast<double>(h - 1));
      const int x0 = static_cast<int>(sx), y0 = static_cast<int>(sy);
      const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
      const float fx = static_cast<float>(sx - x0), fy = static_cast<float>(sy - y0);
      const float* r0 = in + static_cast<std::size_t>(y0) * w;
      const float* r1 = in + static_cast<std::size_t>(y1) * w;
      const float top = r0[x0] + fx * (r0[x1] - r0[x0]);
      const float bot = r1[x0] + fx * (r1[x1] - r1[x0]);
      orow[x] = top + fy * (bot - top);
    }
  }
}

void rotate_bilinear_adjoint(const float* gout, int h, int w, double radians,
                             float* gin) {
  const double cx = 0.5 * (w - 1), cy = 0.5 * (h - 1);
  const double c = std::cos(radians), s = std::sin(radians);
  std::fill(gin, gin + static_cast<std::size_t>(h) * w, 0.0f);
  for (int y = 0; y < h; ++y) {
    const double dy = y - cy;
    const float* grow = gout + static_cast<std::size_t>(y) * w;
    for (int x = 0; x < w; ++x) {
      const double dx = x - cx;
      double sx = c * dx + s * dy + cx;
      double sy = -s * dx + c * dy + cy;
      sx = std::min(std::max(sx, 0.0), static_cast<double>(w - 1));
      sy = std::min(std::max(sy, 0.0), static_cast<double>(h - 1));
      const int x0 = static_cast<int>(sx), y0 = static_cast<int>(sy);
      const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
      const float fx = static_cast<float>(sx - x0), fy = static_cast<float>(sy - y0);
      const float g = grow[x];
      gin[static_cast<std::size_t>(y0) * w + x0] += (1 - fx) * (1 - fy) * g;
      gin[static_cast<std::size_t>(y0) * w + x1] += fx * (1 - fy) * g;
      gin[static_cast<std::size_t>(y1) * w + x0] += (1 - fx) * fy * g;
      gin[static_cast<std::size_t>(y1) * w + x1] += fx * fy * g;
    }
  }
}

namespace {

struct DctBasis {
  float d[8][8];
  DctBasis() {
    const double pi = 3.14159265358979323846;
    for (int k = 0; k < 8; ++k) {
      const double sk = k == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
      for (int n = 0; n < 8; ++n)
        d[k][n] = static_cast<float>(sk * std::cos(pi * (2 * n + 1) * k / 16.0));
    }
  }
};
const DctBasis kDct;

}  // namespace

void dct8x8_plane(const float* in, int h, int w, float* out) {
  const int bh = h / 8, bw = w / 8;
#pragma omp parallel for schedule(static)
  for (int by = 0; by < bh; ++by) {
    float tmp[8][8];
    for (int bx = 0; bx < bw; ++bx) {
      const float* src = in + static_cast<std::size_t>(by) * 8 * w + bx * 8;
      float* dst = out + static_cast<std::size_t>(by) * 8 * w + bx * 8;
      for (int k = 0; k < 8; ++k)
        for (int n = 0; n < 8; ++n) {
          float s = 0.0f;
          for (int m = 0; m < 8; ++m)
            s += kDct.d[k][m] * src[static_cast<std::size_t>(m) * w + n];
          tmp[k][n] = s;
        }
      for (int k = 0; k < 8; ++k)
        for (int l = 0; l < 8; ++l) {
          float s = 0.0f;
          for (int n = 0; n < 8; ++n) s += tmp[k][n] * kDct.d[l][n];
          dst[static_cast<std::size_t>(k) * w + l] = s;
        }
    }
  }
}

void idct8x8_plane(const float* in, int h, int w, float* out) {
  const int bh = h / 8, bw = w / 8;
#pragma omp parallel for schedule(static)
  for (int by = 0; by < bh; ++by) {
    float tmp[8][8];
    for (int bx = 0; bx < bw; ++bx) {
      const float* src = in + static_cast<std::size_t>(by) * 8 * w + bx * 8;
      float* dst = out + static_cast<std::size_t>(by) * 8 * w + bx * 8;
      for (int m = 0; m < 8; ++m)
        for (int n = 0; n < 8; ++n) {
          float s = 0.0f;
          for (int k = 0; k < 8; ++k)
            s += kDct.d[k][m] * src[static_cast<std::size_t>(k) * w + n];
          tmp[m][n] = s;
        }
      for (int m = 0; m < 8; ++m)
        for (int p = 0; p < 8; ++p) {
          float s = 0.0f;
          for (int n = 0; n < 8; ++n) s += tmp[m][n] * kDct.d[n][p];
          dst[static_cast<std::size_t>(m) * w + p] = s;
        }
    }
  }
}

namespace ref {

void conv3x3_forward(const float* pad, int cin, int h, int w,
                     const float* weight, const float* bias, int cout,
                     float* out) {
  const int pw = w + 2;
  for (int co = 0; co < cout; ++co)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        float s = bias[co];
        for (int ci = 0; ci < cin; ++ci)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx)
              s += weight[((static_cast<std::size_t>(co) * cin + ci) * 3 + ky) * 3 + kx] *
                   pad[(static_cast<std::size_t>(ci) * (h + 2) + y + ky) * pw + x + kx];
        out[(static_cast<std::size_t>(co) * h + y) * w + x] = s;
      }
}

void conv3x3_backward_input(const float* gout, int cout, int h, int w,
                            const float* weight, int cin, float* gpad) {
  const int ph = h + 2, pw = w + 2;
  std::fill(gpad, gpad + static_cast<std::size_t>(cin) * ph * pw, 0.0f);
  for (int co = 0; co < cout; ++co)
    for (int ci = 0; ci < cin; ++ci)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const float g = gout[(static_cast<std::size_t>(co) * h + y) * w + x];
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx)
              gpad[(static_cast<std::size_t>(ci) * ph + y + ky) * pw + x + kx] +=
                  g * weight[((static_cast<std::size_t>(co) * cin + ci) * 3 + ky) * 3 + kx];
        }
}

void conv3x3_backward_weights(const float* pad, int cin, int h, int w,
                              const float* gout, int cout, float* gweight,
                              float* gbias) {
  const int pw = w + 2;
  for (int co = 0; co < cout; ++co) {
    double bs = 0.0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        bs += gout[(static_cast<std::size_t>(co) * h + y) * w + x];
    gbias[co] += static_cast<float>(bs);
    for (int ci = 0; ci < cin; ++ci)
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          double s = 0.0;
          for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
              s += gout[(static_cast<std::size_t>(co) * h + y) * w + x] *
                   pad[(static_cast<std::size_t>(ci) * (h + 2) + y + ky) * pw + x + kx];
          gweight[((static_cast<std::size_t>(co) * cin + ci) * 3 + ky) * 3 + kx] +=
              static_cast<float>(s);
        }
  }
}

void conv1x1_forward(const float* in, int cin, std::size_t hw,
                     const float* weight, const float* bias, int cout,
                     float* out) {
  for (int co = 0; co < cout; ++co)
    for (std::size_t p = 0; p < hw; ++p) {
      float s = bias[co];
      for (int ci = 0; ci < cin; ++ci)
        s += weight[static_cast<std::size_t>(co) * cin + ci] * in[ci * hw + p];
      out[co * hw + p] = s;
    }
}

void bn_batch_stats(const float* x, int n, int c, std::size_t hw, float* mean,
                    float* var) {
  const std::size_t img = static_cast<std::size_t>(c) * hw;
  for (int ci = 0; ci < c; ++ci) {
    double s = 0.0, s2 = 0.0;
    for (int in = 0; in < n; ++in)
      for (std::size_t i = 0; i < hw; ++i) {
        const double v = x[in * img + ci * hw + i];
        s += v;
        s2 += v * v;
      }
    const double cnt = static_cast<double>(n) * hw;
    mean[ci] = static_cast<float>(s / cnt);
    var[ci] = static_cast<float>(std::max(0.0, s2 / cnt - (s / cnt) * (s / cnt)));
  }
}

void avgpool_forward(const float* in, int c, int h, int w, int b, float* out) {
  const int oh = h / b, ow = w / b;
  for (int ci = 0; ci < c; ++ci)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        double s = 0.0;
        for (int dy = 0; dy < b; ++dy)
          for (int dx = 0; dx < b; ++dx)
            s += in[(static_cast<std::size_t>(ci) * h + oy * b + dy) * w + ox * b + dx];
        out[(static_cast<std::size_t>(ci) * oh + oy) * ow + ox] =
            static_cast<float>(s / (static_cast<double>(b) * b));
      }
}

void sep_blur(const float* in, int h, int w, const float* kernel, int radius,
              float* out) {
  const int taps = 2 * radius + 1;
  std::vector<float> tmp(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float s = 0.0f;
      for (int t = 0; t < taps; ++t)
        s += kernel[t] * in[static_cast<std::size_t>(y) * w + clamp_index(x + t - radius, w)];
      tmp[static_cast<std::size_t>(y) * w + x] = s;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float s = 0.0f;
      for (int t = 0; t < taps; ++t)
        s += kernel[t] * tmp[static_cast<std::size_t>(clamp_index(y + t - radius, h)) * w + x];
      out[static_cast<std::size_t>(y) * w + x] = s;
    }
}

void dct8x8_plane(const float* in, int h, int w, float* out) {
  const double pi = 3.14159265358979323846;
  for (int by = 0; by < h / 8; ++by)
    for (int bx = 0; bx < w / 8; ++bx)
      for (int u = 0; u < 8; ++u)
        for (int v = 0; v < 8; ++v) {
          const double su = u == 0 ? std::sqrt(1.0 / 8.0) : 0.5;
          const double sv = v == 0 ? std::sqrt(1.0 / 8.0) : 0.5;
          double s = 0.0;
          for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x)
              s += in[(static_cast<std::size_t>(by) * 8 + y) * w + bx * 8 + x] *
                   std::cos(pi * (2 * y + 1) * u / 16.0) *
                   std::cos(pi * (2 * x + 1) * v / 16.0);
          out[(static_cast<std::size_t>(by) * 8 + u) * w + bx * 8 + v] =
              static_cast<float>(su * sv * s);
        }
}

void idct8x8_plane(const float* in, int h, int w, float* out) {
  const double pi = 3.14159265358979323846;
  for (int by = 0; by < h / 8; ++by)
    for (int bx = 0; bx < w / 8; ++bx)
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
          double s = 0.0;
          for (int u = 0; u < 8; ++u)
            for (int v = 0; v < 8; ++v) {
              const double su = u == 0 ? std::sqrt(1.0 / 8.0) : 0.5;
              const double sv = v == 0 ? std::sqrt(1.0 / 8.0) : 0.5;
              s += su * sv * in[(static_cast<std::size_t>(by) * 8 + u) * w + bx * 8 + v] *
                   std::cos(pi * (2 * y + 1) * u / 16.0) *
                   std::cos(pi * (2 * x + 1) * v / 16.0);
            }
          out[(static_cast<std::size_t>(by) * 8 + y) * w + bx * 8 + x] =
              static_cast<float>(s);
        }
}

}  // namespace ref

}  // namespace wm::kernels
