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

#ifndef WM_KERNELS_HPP_
#define WM_KERNELS_HPP_

#include <cstddef>
#include <cstdint>

namespace wm::kernels {

// Data-parallel compute primitives behind the networks and attack layers.
// Every kernel parallelizes over independent output slices only (rows or
// channels), so results are bitwise identical for any OpenMP thread count.
// wm::kernels::ref holds plain serial implementations of the hot kernels;
// the unit tests compare the two and tools/bench times them.

// ---- padding -------------------------------------------------------------

// Reflection padding by one pixel: (c,h,w) -> (c,h+2,w+2). h,w >= 2.
void reflect_pad1(const float* in, int c, int h, int w, float* pad);
// Adjoint of reflect_pad1: folds a padded gradient back onto (c,h,w).
void reflect_pad1_adjoint(const float* gpad, int c, int h, int w, float* gin);

// ---- convolutions ---------------------------------------------------------

// 3x3 convolution over a reflection-padded input (cin,h+2,w+2).
// weight layout (cout,cin,3,3), bias (cout). out (cout,h,w).
void conv3x3_forward(const float* pad, int cin, int h, int w,
                     const float* weight, const float* bias, int cout,
                     float* out);
// Gradient w.r.t. the padded input; gpad is overwritten.
void conv3x3_backward_input(const float* gout, int cout, int h, int w,
                            const float* weight, int cin, float* gpad);
// Accumulates weight/bias gradients (callers zero them per step).
void conv3x3_backward_weights(const float* pad, int cin, int h, int w,
                              const float* gout, int cout, float* gweight,
                              float* gbias);

// 1x1 convolution over hw flattened pixels.
void conv1x1_forward(const float* in, int cin, std::size_t hw,
                     const float* weight, const float* bias, int cout,
                     float* out);
void conv1x1_backward_input(const float* gout, int cout, std::size_t hw,
                            const float* weight, int cin, float* gin);
void conv1x1_backward_weights(const float* in, int cin, std::size_t hw,
                              const float* gout, int cout, float* gweight,
                              float* gbias);

// ---- batch normalization ---------------------------------------------------
// x is (n,c,hw); statistics are per channel over n*hw samples.

void bn_batch_stats(const float* x, int n, int c, std::size_t hw, float* mean,
                    float* var);
void bn_forward(const float* x, int n, int c, std::size_t hw,
                const float* mean, const float* var, const float* gamma,
                const float* beta, float eps, float* y);
void bn_backward(const float* x, const float* gy, int n, int c, std::size_t hw,
                 const float* mean, const float* var, const float* gamma,
                 float eps, float* gx, float* ggamma, float* gbeta);

// ---- activations ------------------------------------------------------------

void relu_forward(float* x, std::size_t n);
// In-place relu that also records the active mask.
void relu_forward_mask(float* x, std::uint8_t* mask, std::size_t n);
void relu_mask_backward(const std::uint8_t* mask, const float* gy, float* gx,
                        std::size_t n);
// y is the relu output; gx may alias gy.
void relu_backward(const float* y, const float* gy, float* gx, std::size_t n);
void sigmoid_forward(float* x, std::size_t n);
void sigmoid_backward(const float* y, const float* gy, float* gx,
                      std::size_t n);

// ---- pooling ----------------------------------------------------------------

// Average pooling with kernel == stride == b; trailing pixels that do not
// fill a complete window are ignored (out is (c, h/b, w/b)).
void avgpool_forward(const float* in, int c, int h, int w, int b, float* out);
void avgpool_backward(const float* gout, int c, int h, int w, int b,
                      float* gin);

// ---- image resampling --------------------------------------------------------

// Separable blur with replicate border. kernel has 2*radius+1 taps.
// tmp must hold h*w floats.
void sep_blur(const float* in, int h, int w, const float* kernel, int radius,
              float* tmp, float* out);
void sep_blur_adjoint(const float* gout, int h, int w, const float* kernel,
                      int radius, float* tmp, float* gin);

// Bilinear rotation about the image center, replicate border, same canvas.
void rotate_bilinear(const float* in, int h, int w, double radians,
                     float* out);
void rotate_bilinear_adjoint(const float* gout, int h, int w, double radians,
                             float* gin);

// ---- 8x8 DCT ------------------------------------------------------------------

// Orthonormal 2D DCT-II applied blockwise; h,w divisible by 8.
void dct8x8_plane(const float* in, int h, int w, float* out);
void idct8x8_plane(const float* in, int h, int w, float* out);

int thread_count();

// Serial reference implementations. Straight loops, no OpenMP; kept small and
// obviously correct for the equivalence tests and the benchmark baseline.
namespace ref {

void conv3x3_forward(const float* pad, int cin, int h, int w,
                     const float* weight, const float* bias, int cout,
                     float* out);
void conv3x3_backward_input(const float* gout, int cout, int h, int w,
                            const float* weight, int cin, float* gpad);
void conv3x3_backward_weights(const float* pad, int cin, int h, int w,
                              const float* gout, int cout, float* gweight,
                              float* gbias);
void conv1x1_forward(const float* in, int cin, std::size_t hw,
                     const float* weight, const float* bias, int cout,
                     float* out);
void bn_batch_stats(const float* x, int n, int c, std::size_t hw, float* mean,
                    float* var);
void avgpool_forward(const float* in, int c, int h, int w, int b, float* out);
void sep_blur(const float* in, int h, int w, const float* kernel, int radius,
              float* out);
void dct8x8_plane(const float* in, int h, int w, float* out);
void idct8x8_plane(const float* in, int h, int w, float* out);

}  // namespace ref

}  // namespace wm::kernels

#endif  // WM_KERNELS_HPP_
