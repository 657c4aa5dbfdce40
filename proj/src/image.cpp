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

#include "wm/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <stdexcept>

#include "wm/rng.hpp"

namespace wm::img {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline std::uint8_t to_byte(float x) {
  const float v = x * 255.0f + 0.5f;
  return static_cast<std::uint8_t>(v < 0.0f ? 0.0f : (v > 255.0f ? 255.0f : v));
}

}  // namespace

Tensor load_png_rgb(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw std::runtime_error("cannot open image '" + path + "'");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                           nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info) throw std::runtime_error("libpng init failed");
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("failed to decode '" + path + "'");
  }
  png_init_io(png, f.get());
  png_read_info(png, info);

  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);

  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  std::vector<std::uint8_t> raw(static_cast<std::size_t>(h) * w * 3);
  std::vector<png_bytep> rows(static_cast<std::size_t>(h));
  for (int y = 0; y < h; ++y)
    rows[static_cast<std::size_t>(y)] = raw.data() + static_cast<std::size_t>(y) * w * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Tensor out(1, 3, h, w);
  for (int c = 0; c < 3; ++c) {
    float* plane = out.plane(0, c);
    for (std::size_t p = 0; p < static_cast<std::size_t>(h) * w; ++p)
      plane[p] = raw[p * 3 + c] / 255.0f;
  }
  return out;
}

void save_png_rgb(const std::string& path, const Tensor& rgb,
                  const std::string& meta) {
  if (rgb.n != 1 || rgb.c != 3)
    throw std::invalid_argument("save_png_rgb: want a single RGB image, got " +
                                rgb.shape_str());
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw std::runtime_error("cannot write image '" + path + "'");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info) throw std::runtime_error("libpng init failed");
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("failed to encode '" + path + "'");
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(rgb.w),
               static_cast<png_uint_32>(rgb.h), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_text text;
  if (!meta.empty()) {
    text.compression = PNG_TEXT_COMPRESSION_NONE;
    text.key = const_cast<char*>("wmkit");
    text.text = const_cast<char*>(meta.c_str());
    text.text_length = meta.size();
    png_set_text(png, info, &text, 1);
  }
  png_write_info(png, info);

  std::vector<std::uint8_t> row(static_cast<std::size_t>(rgb.w) * 3);
  for (int y = 0; y < rgb.h; ++y) {
    for (int x = 0; x < rgb.w; ++x)
      for (int c = 0; c < 3; ++c)
        row[static_cast<std::size_t>(x) * 3 + c] = to_byte(rgb.at(0, c, y, x));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

std::string read_png_meta(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw std::runtime_error("cannot open image '" + path + "'");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                           nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info) throw std::runtime_error("libpng init failed");
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("failed to decode '" + path + "'");
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  png_textp texts = nullptr;
  int count = 0;
  std::string meta;
  if (png_get_text(png, info, &texts, &count) > 0)
    for (int i = 0; i < count; ++i)
      if (std::string(texts[i].key) == "wmkit") meta = texts[i].text;
  png_destroy_read_struct(&png, &info, nullptr);
  return meta;
}

// BT.601 full-range matrix, the JPEG convention.
Tensor rgb_to_ycrcb(const Tensor& rgb) {
  Tensor out = Tensor::like(rgb);
  for (int in = 0; in < rgb.n; ++in) {
    const float* r = rgb.plane(in, 0);
    const float* g = rgb.plane(in, 1);
    const float* b = rgb.plane(in, 2);
    float* y = out.plane(in, 0);
    float* cr = out.plane(in, 1);
    float* cb = out.plane(in, 2);
    for (std::size_t p = 0; p < rgb.plane_size(); ++p) {
      y[p] = 0.299f * r[p] + 0.587f * g[p] + 0.114f * b[p];
      cr[p] = 0.5f * r[p] - 0.418688f * g[p] - 0.081312f * b[p] + 0.5f;
      cb[p] = -0.168736f * r[p] - 0.331264f * g[p] + 0.5f * b[p] + 0.5f;
    }
  }
  return out;
}

Tensor ycrcb_to_rgb(const Tensor& ycrcb) {
  Tensor out = Tensor::like(ycrcb);
  for (int in = 0; in < ycrcb.n; ++in) {
    const float* y = ycrcb.plane(in, 0);
    const float* cr = ycrcb.plane(in, 1);
    const float* cb = ycrcb.plane(in, 2);
    float* r = out.plane(in, 0);
    float* g = out.plane(in, 1);
    float* b = out.plane(in, 2);
    for (std::size_t p = 0; p < ycrcb.plane_size(); ++p) {
      const float vcr = cr[p] - 0.5f, vcb = cb[p] - 0.5f;
      r[p] = y[p] + 1.402f * vcr;
      g[p] = y[p] - 0.714136f * vcr - 0.344136f * vcb;
      b[p] = y[p] + 1.772f * vcb;
    }
  }
  clamp01(out);
  return out;
}

Tensor resize_linear(const Tensor& in, int out_h, int out_w) {
  Tensor out(in.n, in.c, out_h, out_w);
  const double sy = static_cast<double>(in.h) / out_h;
  const double sx = static_cast<double>(in.w) / out_w;
  for (int n = 0; n < in.n; ++n)
    for (int c = 0; c < in.c; ++c) {
      const float* src = in.plane(n, c);
      float* dst = out.plane(n, c);
      for (int y = 0; y < out_h; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        fy = std::min(std::max(fy, 0.0), static_cast<double>(in.h - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, in.h - 1);
        const float wy = static_cast<float>(fy - y0);
        for (int x = 0; x < out_w; ++x) {
          double fx = (x + 0.5) * sx - 0.5;
          fx = std::min(std::max(fx, 0.0), static_cast<double>(in.w - 1));
          const int x0 = static_cast<int>(fx);
          const int x1 = std::min(x0 + 1, in.w - 1);
          const float wx = static_cast<float>(fx - x0);
          const float top = src[static_cast<std::size_t>(y0) * in.w + x0] * (1 - wx) +
                            src[static_cast<std::size_t>(y0) * in.w + x1] * wx;
          const float bot = src[static_cast<std::size_t>(y1) * in.w + x0] * (1 - wx) +
                            src[static_cast<std::size_t>(y1) * in.w + x1] * wx;
          dst[static_cast<std::size_t>(y) * out_w + x] = top * (1 - wy) + bot * wy;
        }
      }
    }
  return out;
}

Tensor synthesize_rgb(int h, int w, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x696d616765ULL));
  Tensor out(1, 3, h, w);
  const double tau = 6.283185307179586;

  // Smooth background: a few random low-frequency waves per channel,
  // correlated across channels to mimic lighting.
  double base[3];
  for (double& b : base) b = 0.25 + 0.5 * rng.next_double();
  for (int c = 0; c < 3; ++c) {
    float* plane = out.plane(0, c);
    const int waves = 2 + static_cast<int>(rng.next_below(3));
    std::vector<double> amp(static_cast<std::size_t>(waves)), fx(amp.size()),
        fy(amp.size()), ph(amp.size());
    for (int k = 0; k < waves; ++k) {
      amp[static_cast<std::size_t>(k)] = 0.05 + 0.12 * rng.next_double();
      fx[static_cast<std::size_t>(k)] = (rng.next_double() - 0.5) * 4.0;
      fy[static_cast<std::size_t>(k)] = (rng.next_double() - 0.5) * 4.0;
      ph[static_cast<std::size_t>(k)] = tau * rng.next_double();
    }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double v = base[c];
        for (int k = 0; k < waves; ++k)
          v += amp[static_cast<std::size_t>(k)] *
               std::sin(tau * (fx[static_cast<std::size_t>(k)] * x / w +
                               fy[static_cast<std::size_t>(k)] * y / h) +
                        ph[static_cast<std::size_t>(k)]);
        plane[static_cast<std::size_t>(y) * w + x] = static_cast<float>(v);
      }
  }

  // Soft ellipses with random colors, painted back to front.
  const int shapes = 4 + static_cast<int>(rng.next_below(5));
  for (int s = 0; s < shapes; ++s) {
    const double cx = rng.next_double() * w, cy = rng.next_double() * h;
    const double rx = (0.05 + 0.2 * rng.next_double()) * w;
    const double ry = (0.05 + 0.2 * rng.next_double()) * h;
    const double ang = tau * rng.next_double();
    const double ca = std::cos(ang), sa = std::sin(ang);
    const double soft = 2.0 + 10.0 * rng.next_double();
    float color[3];
    for (float& v : color) v = static_cast<float>(rng.next_double());
    const int x_lo = std::max(0, static_cast<int>(cx - rx - ry)),
              x_hi = std::min(w, static_cast<int>(cx + rx + ry) + 1);
    const int y_lo = std::max(0, static_cast<int>(cy - rx - ry)),
              y_hi = std::min(h, static_cast<int>(cy + rx + ry) + 1);
    for (int y = y_lo; y < y_hi; ++y)
      for (int x = x_lo; x < x_hi; ++x) {
        const double dx = x - cx, dy = y - cy;
        const double u = (ca * dx + sa * dy) / rx;
        const double v2 = (-sa * dx + ca * dy) / ry;
        const double d = u * u + v2 * v2;
        const double a = 1.0 / (1.0 + std::exp(soft * (d - 1.0)));
        if (a < 1e-3) continue;
        for (int c = 0; c < 3; ++c) {
          float& px = out.at(0, c, y, x);
          px = static_cast<float>(px * (1.0 - a) + color[c] * a);
        }
      }
  }

  // Light grain so the corpus is not band-limited.
  const double grain = 0.008 + 0.015 * rng.next_double();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const float g = static_cast<float>(grain * rng.normal());
      for (int c = 0; c < 3; ++c) out.at(0, c, y, x) += g;
    }
  clamp01(out);
  return out;
}

std::vector<Tensor> load_dataset(const std::string& spec, int size,
                                 std::uint64_t seed, int limit) {
  std::vector<Tensor> out;
  if (spec.rfind("synthetic:", 0) == 0) {
    int count = std::stoi(spec.substr(10));
    if (limit >= 0) count = std::min(count, limit);
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i)
      out.push_back(rgb_to_ycrcb(
          synthesize_rgb(size, size, mix_seed(seed, 0x64617461ULL, i))));
    return out;
  }
  namespace fs = std::filesystem;
  std::vector<std::string> paths;
  for (const auto& entry : fs::directory_iterator(spec))
    if (entry.is_regular_file() && entry.path().extension() == ".png")
      paths.push_back(entry.path().string());
  std::sort(paths.begin(), paths.end());
  if (paths.empty())
    throw std::runtime_error("dataset '" + spec + "' holds no .png files");
  if (limit >= 0 && static_cast<int>(paths.size()) > limit)
    paths.resize(static_cast<std::size_t>(limit));
  out.reserve(paths.size());
  for (const auto& p : paths) {
    Tensor rgb = load_png_rgb(p);
    if (rgb.h != size || rgb.w != size) rgb = resize_linear(rgb, size, size);
    out.push_back(rgb_to_ycrcb(rgb));
  }
  return out;
}

}  // namespace wm::img
