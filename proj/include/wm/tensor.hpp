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

#ifndef WM_TENSOR_HPP_
#define WM_TENSOR_HPP_

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace wm {

// Allocator that skips value-initialization; activation buffers are large
// and always fully overwritten by the kernel that fills them.
template <typename T>
struct NoInitAllocator : std::allocator<T> {
  template <typename U>
  struct rebind {
    using other = NoInitAllocator<U>;
  };
  template <typename U>
  void construct(U* p) noexcept {
    ::new (static_cast<void*>(p)) U;
  }
  template <typename U, typename... Args>
  void construct(U* p, Args&&... args) {
    ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }
};

using FloatBuffer = std::vector<float, NoInitAllocator<float>>;

// Dense NCHW float tensor. Images are tensors with n == 1 and c == 3 whose
// channel order is Y, Cr, Cb with values in [0,1].
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  FloatBuffer v;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_) : n(n_), c(c_), h(h_), w(w_) {
    v.resize(static_cast<std::size_t>(n_) * c_ * h_ * w_);
    std::fill(v.begin(), v.end(), 0.0f);
  }

  static Tensor like(const Tensor& t) { return Tensor(t.n, t.c, t.h, t.w); }

  // Allocation without the zero fill, for buffers every element of which is
  // written before being read.
  static Tensor uninit(int n, int c, int h, int w) {
    Tensor t;
    t.n = n;
    t.c = c;
    t.h = h;
    t.w = w;
    t.v.resize(static_cast<std::size_t>(n) * c * h * w);
    return t;
  }
  static Tensor uninit_like(const Tensor& t) {
    return uninit(t.n, t.c, t.h, t.w);
  }

  std::size_t size() const { return v.size(); }
  std::size_t plane_size() const {
    return static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }

  float* data() { return v.data(); }
  const float* data() const { return v.data(); }

  float* plane(int in, int ic) {
    return v.data() + (static_cast<std::size_t>(in) * c + ic) * plane_size();
  }
  const float* plane(int in, int ic) const {
    return v.data() + (static_cast<std::size_t>(in) * c + ic) * plane_size();
  }

  float& at(int in, int ic, int iy, int ix) {
    return plane(in, ic)[static_cast<std::size_t>(iy) * w + ix];
  }
  float at(int in, int ic, int iy, int ix) const {
    return plane(in, ic)[static_cast<std::size_t>(iy) * w + ix];
  }

  bool same_shape(const Tensor& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }

  void fill(float x) { std::fill(v.begin(), v.end(), x); }

  std::string shape_str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }

  // Copy of image `in` as an n == 1 tensor.
  Tensor slice(int in) const {
    Tensor out = uninit(1, c, h, w);
    const std::size_t len = static_cast<std::size_t>(c) * plane_size();
    std::copy(v.begin() + in * len, v.begin() + (in + 1) * len, out.v.begin());
    return out;
  }
  void set_slice(int in, const Tensor& img) {
    if (img.n != 1 || img.c != c || img.h != h || img.w != w)
      throw std::invalid_argument("set_slice: shape mismatch " +
                                  img.shape_str() + " into " + shape_str());
    const std::size_t len = static_cast<std::size_t>(c) * plane_size();
    std::copy(img.v.begin(), img.v.end(), v.begin() + in * len);
  }
};

using ImageTensor = Tensor;

inline void require_same_shape(const Tensor& a, const Tensor& b,
                               const char* who) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(who) + ": shape mismatch " +
                                a.shape_str() + " vs " + b.shape_str());
}

inline void clamp01(Tensor& t) {
  for (float& x : t.v) x = x < 0.0f ? 0.0f : (x > 1.0f ? 1.0f : x);
}

}  // namespace wm

#endif  // WM_TENSOR_HPP_
