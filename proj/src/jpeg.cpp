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

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "wm/attacks.hpp"
#include "wm/kernels.hpp"

namespace wm::attacks {

namespace {

// Annex K base tables (luma / chroma), row major.
constexpr int kBaseLuma[64] = {
    16, 11, 10, 16, 24,  40,  51,  61,   //
    12, 12, 14, 19, 26,  58,  60,  55,   //
    14, 13, 16, 24, 40,  57,  69,  56,   //
    14, 17, 22, 29, 51,  87,  80,  62,   //
    18, 22, 37, 56, 68,  109, 103, 77,   //
    24, 35, 55, 64, 81,  104, 113, 92,   //
    49, 64, 78, 87, 103, 121, 120, 101,  //
    72, 92, 95, 98, 112, 100, 103, 99};
constexpr int kBaseChroma[64] = {
    17, 18, 24, 47, 99, 99, 99, 99,  //
    18, 21, 26, 66, 99, 99, 99, 99,  //
    24, 26, 56, 99, 99, 99, 99, 99,  //
    47, 66, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99};

// Replicate-pad a plane to dimensions (ph, pw).
void pad_replicate(const float* src, int h, int w, int ph, int pw,
                   float* dst) {
  for (int y = 0; y < ph; ++y) {
    const float* row = src + static_cast<std::size_t>(std::min(y, h - 1)) * w;
    float* drow = dst + static_cast<std::size_t>(y) * pw;
    std::copy(row, row + w, drow);
    for (int x = w; x < pw; ++x) drow[x] = row[w - 1];
  }
}

// Adjoint of pad_replicate: fold the padded region back onto the edges.
void pad_replicate_adjoint(const float* gpad, int h, int w, int ph, int pw,
                           float* gsrc) {
  for (std::size_t i = 0; i < static_cast<std::size_t>(h) * w; ++i) gsrc[i] = 0.0f;
  for (int y = 0; y < ph; ++y) {
    const float* grow = gpad + static_cast<std::size_t>(y) * pw;
    float* drow = gsrc + static_cast<std::size_t>(std::min(y, h - 1)) * w;
    for (int x = 0; x < pw; ++x) drow[std::min(x, w - 1)] += grow[x];
  }
}

void down2(const float* src, int h, int w, float* dst) {
  const int oh = h / 2, ow = w / 2;
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x)
      dst[static_cast<std::size_t>(y) * ow + x] =
          0.25f * (src[static_cast<std::size_t>(2 * y) * w + 2 * x] +
                   src[static_cast<std::size_t>(2 * y) * w + 2 * x + 1] +
                   src[static_cast<std::size_t>(2 * y + 1) * w + 2 * x] +
                   src[static_cast<std::size_t>(2 * y + 1) * w + 2 * x + 1]);
}

void down2_adjoint(const float* gdst, int h, int w, float* gsrc) {
  const int oh = h / 2, ow = w / 2;
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      const float g = 0.25f * gdst[static_cast<std::size_t>(y) * ow + x];
      gsrc[static_cast<std::size_t>(2 * y) * w + 2 * x] = g;
      gsrc[static_cast<std::size_t>(2 * y) * w + 2 * x + 1] = g;
      gsrc[static_cast<std::size_t>(2 * y + 1) * w + 2 * x] = g;
      gsrc[static_cast<std::size_t>(2 * y + 1) * w + 2 * x + 1] = g;
    }
}

void up2_nearest(const float* src, int oh, int ow, float* dst) {
  const int h = oh * 2, w = ow * 2;
  for (int y = 0; y < h; ++y) {
    const float* srow = src + static_cast<std::size_t>(y / 2) * ow;
    float* drow = dst + static_cast<std::size_t>(y) * w;
    for (int x = 0; x < w; ++x) drow[x] = srow[x / 2];
  }
}

void up2_nearest_adjoint(const float* gdst, int oh, int ow, float* gsrc) {
  const int h = oh * 2, w = ow * 2;
  for (std::size_t i = 0; i < static_cast<std::size_t>(oh) * ow; ++i) gsrc[i] = 0.0f;
  for (int y = 0; y < h; ++y) {
    const float* grow = gdst + static_cast<std::size_t>(y) * w;
    float* srow = gsrc + static_cast<std::size_t>(y / 2) * ow;
    for (int x = 0; x < w; ++x) srow[x / 2] += grow[x];
  }
}

// DCT-domain quantization of one plane, already level-shifted to [-128,127].
void quantize_plane(float* plane, int h, int w, const int table[64],
                    Rounding rounding) {
  std::vector<float> freq(static_cast<std::size_t>(h) * w);
  kernels::dct8x8_plane(plane, h, w, freq.data());
  for (int by = 0; by < h / 8; ++by)
    for (int bx = 0; bx < w / 8; ++bx)
      for (int u = 0; u < 8; ++u)
        for (int v = 0; v < 8; ++v) {
          float& f = freq[(static_cast<std::size_t>(by) * 8 + u) * w + bx * 8 + v];
          const float q = static_cast<float>(table[u * 8 + v]);
          float z = f / q;
          if (rounding != Rounding::off) z = std::nearbyint(z);
          f = z * q;
        }
  kernels::idct8x8_plane(freq.data(), h, w, plane);
}

inline int round_up(int v, int m) { return (v + m - 1) / m * m; }

}  // namespace

void jpeg_quant_tables(int quality, int luma[64], int chroma[64]) {
  if (quality < 1 || quality > 100)
    throw std::invalid_argument("jpeg: q must be in [1,100]");
  const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  for (int i = 0; i < 64; ++i) {
    luma[i] = std::clamp((kBaseLuma[i] * scale + 50) / 100, 1, 255);
    chroma[i] = std::clamp((kBaseChroma[i] * scale + 50) / 100, 1, 255);
  }
}

Tensor jpeg_approx(const Tensor& in, int quality, Rounding rounding) {
  if (in.c != 3)
    throw std::invalid_argument("jpeg_approx: expected a 3-channel image");
  int luma[64], chroma[64];
  jpeg_quant_tables(quality, luma, chroma);
  // 4:2:0 needs whole 16x16 macroblocks; replicate-pad and crop back.
  const int ph = round_up(in.h, 16), pw = round_up(in.w, 16);

  Tensor out = Tensor::like(in);
  std::vector<float> full(static_cast<std::size_t>(ph) * pw);
  std::vector<float> half(static_cast<std::size_t>(ph / 2) * (pw / 2));
  for (int n = 0; n < in.n; ++n) {
    for (int c = 0; c < 3; ++c) {
      pad_replicate(in.plane(n, c), in.h, in.w, ph, pw, full.data());
      float* plane = full.data();
      int qh = ph, qw = pw;
      if (c != 0) {
        down2(full.data(), ph, pw, half.data());
        plane = half.data();
        qh = ph / 2;
        qw = pw / 2;
      }
      for (std::size_t i = 0; i < static_cast<std::size_t>(qh) * qw; ++i)
        plane[i] = plane[i] * 255.0f - 128.0f;
      quantize_plane(plane, qh, qw, c == 0 ? luma : chroma, rounding);
      for (std::size_t i = 0; i < static_cast<std::size_t>(qh) * qw; ++i)
        plane[i] = (plane[i] + 128.0f) / 255.0f;
      if (c != 0) up2_nearest(half.data(), qh, qw, full.data());
      float* dst = out.plane(n, c);
      for (int y = 0; y < in.h; ++y)
        std::copy(full.data() + static_cast<std::size_t>(y) * pw,
                  full.data() + static_cast<std::size_t>(y) * pw + in.w,
                  dst + static_cast<std::size_t>(y) * in.w);
    }
  }
  return out;
}

Tensor jpeg_backward(const Tensor& grad_out, int quality) {
  // Under the straight-through surrogate the DCT-domain stages are exactly
  // self-inverse adjoints (orthonormal DCT, cancelling scale factors), so the
  // luma path is the identity and only the chroma resampling plus the
  // replicate padding need explicit adjoints.
  (void)quality;
  const int ph = round_up(grad_out.h, 16), pw = round_up(grad_out.w, 16);
  Tensor gin = grad_out;
  std::vector<float> full(static_cast<std::size_t>(ph) * pw);
  std::vector<float> half(static_cast<std::size_t>(ph / 2) * (pw / 2));
  for (int n = 0; n < grad_out.n; ++n) {
    for (int c = 1; c < 3; ++c) {
      // adjoint of the final crop: zero-extend into the padded canvas
      std::fill(full.begin(), full.end(), 0.0f);
      const float* src = grad_out.plane(n, c);
      for (int y = 0; y < grad_out.h; ++y)
        std::copy(src + static_cast<std::size_t>(y) * grad_out.w,
                  src + static_cast<std::size_t>(y + 1) * grad_out.w,
                  full.data() + static_cast<std::size_t>(y) * pw);
      up2_nearest_adjoint(full.data(), ph / 2, pw / 2, half.data());
      down2_adjoint(half.data(), ph, pw, full.data());
      pad_replicate_adjoint(full.data(), grad_out.h, grad_out.w, ph, pw,
                            gin.plane(n, c));
    }
  }
  return gin;
}

}  // namespace wm::attacks
