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

#include "wm/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

#include "wm/kernels.hpp"
#include "wm/rng.hpp"

namespace wm::attacks {

namespace {

const std::map<std::string, Kind> kKindNames = {
    {"none", Kind::none},         {"crop", Kind::crop},
    {"cropout", Kind::cropout},   {"dropout", Kind::dropout},
    {"rotate", Kind::rotate},     {"gaussian", Kind::gaussian},
    {"subsample420", Kind::subsample420}, {"resize", Kind::resize},
    {"jpeg", Kind::jpeg}};

std::string kind_name(Kind k) {
  for (const auto& [name, kind] : kKindNames)
    if (kind == k) return name;
  return "?";
}

std::string format_num(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

// Per-pixel Bernoulli mask shared by all channels; 1 selects the cover.
std::vector<std::uint8_t> dropout_mask(int h, int w, double p,
                                       std::uint64_t mask_seed) {
  Rng rng(mask_seed);
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(h) * w);
  for (auto& m : mask) m = rng.bernoulli(p) ? 1 : 0;
  return mask;
}

std::vector<float> gaussian_kernel(double sigma, int* radius_out) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<float> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int t = -radius; t <= radius; ++t) {
    const double v = std::exp(-0.5 * t * t / (sigma * sigma));
    k[static_cast<std::size_t>(t + radius)] = static_cast<float>(v);
    sum += v;
  }
  for (auto& v : k) v = static_cast<float>(v / sum);
  *radius_out = radius;
  return k;
}

inline int resize_dim(int in, double scale) {
  return std::max(1, static_cast<int>(std::floor(in * scale + 0.5)));
}

}  // namespace

AttackSpec AttackSpec::parse(const std::string& text) {
  AttackSpec spec;
  const auto colon = text.find(':');
  const std::string name = text.substr(0, colon);
  const auto it = kKindNames.find(name);
  if (it == kKindNames.end())
    throw std::invalid_argument("unknown attack '" + name + "'");
  spec.kind = it->second;
  const auto allowed = [&](const std::string& key) {
    switch (spec.kind) {
      case Kind::crop:
      case Kind::cropout:
      case Kind::dropout: return key == "p";
      case Kind::rotate: return key == "alpha";
      case Kind::gaussian: return key == "sigma";
      case Kind::resize: return key == "s" || key == "m";
      case Kind::jpeg: return key == "q";
      default: return false;
    }
  };
  if (colon != std::string::npos) {
    std::stringstream args(text.substr(colon + 1));
    std::string part;
    while (std::getline(args, part, ',')) {
      const auto eq = part.find('=');
      if (eq == std::string::npos)
        throw std::invalid_argument("bad attack parameter '" + part + "'");
      const std::string key = part.substr(0, eq);
      const std::string val = part.substr(eq + 1);
      if (!allowed(key))
        throw std::invalid_argument("attack '" + name +
                                    "' does not take parameter '" + key + "'");
      if (key == "p") spec.p = std::stod(val);
      else if (key == "alpha") spec.alpha = std::stod(val);
      else if (key == "sigma") spec.sigma = std::stod(val);
      else if (key == "s") spec.scale = std::stod(val);
      else if (key == "q") spec.quality = std::stoi(val);
      else if (key == "m") {
        if (val == "N") spec.mode = ResizeMode::nearest;
        else if (val == "L") spec.mode = ResizeMode::linear;
        else throw std::invalid_argument("resize mode must be N or L, got '" + val + "'");
      }
    }
  }
  spec.validate();
  return spec;
}

std::string AttackSpec::to_string() const {
  switch (kind) {
    case Kind::none: return "none";
    case Kind::crop: return "crop:p=" + format_num(p);
    case Kind::cropout: return "cropout:p=" + format_num(p);
    case Kind::dropout: return "dropout:p=" + format_num(p);
    case Kind::rotate: return "rotate:alpha=" + format_num(alpha);
    case Kind::gaussian: return "gaussian:sigma=" + format_num(sigma);
    case Kind::subsample420: return "subsample420";
    case Kind::resize:
      return "resize:s=" + format_num(scale) +
             (mode == ResizeMode::nearest ? ",m=N" : ",m=L");
    case Kind::jpeg: return "jpeg:q=" + std::to_string(quality);
  }
  return "?";
}

void AttackSpec::validate() const {
  switch (kind) {
    case Kind::crop:
    case Kind::cropout:
    case Kind::dropout:
      if (p <= 0.0 || p > 1.0)
        throw std::invalid_argument(kind_name(kind) + ": p must be in (0,1], got " +
                                    format_num(p));
      break;
    case Kind::gaussian:
      if (sigma <= 0.0)
        throw std::invalid_argument("gaussian: sigma must be positive");
      break;
    case Kind::resize:
      if (scale <= 0.0 || scale > 1.0)
        throw std::invalid_argument("resize: s must be in (0,1]");
      break;
    case Kind::jpeg:
      if (quality < 1 || quality > 100)
        throw std::invalid_argument("jpeg: q must be in [1,100]");
      break;
    default:
      break;
  }
}

Realization sample_realization(const AttackSpec& spec, int h, int w,
                               std::uint64_t seed) {
  spec.validate();
  Realization r;
  r.kind = spec.kind;
  r.in_h = h;
  r.in_w = w;
  Rng rng(mix_seed(seed, 0x61747461636bULL));
  switch (spec.kind) {
    case Kind::crop:
    case Kind::cropout: {
      const int side = static_cast<int>(std::floor(std::sqrt(spec.p) * std::min(h, w)));
      if (side < 1)
        throw std::invalid_argument("crop window would be empty for p=" +
                                    format_num(spec.p));
      r.window.side = side;
      r.window.x0 = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(w - side + 1)));
      r.window.y0 = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(h - side + 1)));
      break;
    }
    case Kind::dropout:
      r.p = spec.p;
      r.mask_seed = mix_seed(seed, 0x6d61736bULL);
      break;
    case Kind::rotate:
      r.angle_deg = spec.alpha;
      break;
    case Kind::gaussian:
      r.sigma = spec.sigma;
      break;
    case Kind::resize:
      r.scale = spec.scale;
      r.mode = spec.mode;
      break;
    case Kind::jpeg:
      r.quality = spec.quality;
      break;
    default:
      break;
  }
  return r;
}

Tensor crop(const Tensor& in, const msgcodec::CropWindow& win) {
  if (win.side < 1 || win.x0 < 0 || win.y0 < 0 || win.x0 + win.side > in.w ||
      win.y0 + win.side > in.h)
    throw std::invalid_argument("crop: window outside image");
  Tensor out(in.n, in.c, win.side, win.side);
  for (int n = 0; n < in.n; ++n)
    for (int c = 0; c < in.c; ++c) {
      const float* src = in.plane(n, c);
      float* dst = out.plane(n, c);
      for (int y = 0; y < win.side; ++y)
        std::copy(src + (static_cast<std::size_t>(win.y0 + y)) * in.w + win.x0,
                  src + (static_cast<std::size_t>(win.y0 + y)) * in.w + win.x0 + win.side,
                  dst + static_cast<std::size_t>(y) * win.side);
    }
  return out;
}

Tensor cropout(const Tensor& encoded, const Tensor& cover,
               const msgcodec::CropWindow& win) {
  require_same_shape(encoded, cover, "cropout");
  Tensor out = cover;
  for (int n = 0; n < out.n; ++n)
    for (int c = 0; c < out.c; ++c) {
      const float* src = encoded.plane(n, c);
      float* dst = out.plane(n, c);
      for (int y = win.y0; y < win.y0 + win.side; ++y)
        std::copy(src + static_cast<std::size_t>(y) * out.w + win.x0,
                  src + static_cast<std::size_t>(y) * out.w + win.x0 + win.side,
                  dst + static_cast<std::size_t>(y) * out.w + win.x0);
    }
  return out;
}

Tensor dropout(const Tensor& encoded, const Tensor& cover, double p,
               std::uint64_t mask_seed) {
  require_same_shape(encoded, cover, "dropout");
  const auto mask = dropout_mask(encoded.h, encoded.w, p, mask_seed);
  Tensor out = Tensor::like(encoded);
  for (int n = 0; n < out.n; ++n)
    for (int c = 0; c < out.c; ++c) {
      const float* en = encoded.plane(n, c);
      const float* co = cover.plane(n, c);
      float* dst = out.plane(n, c);
      for (std::size_t i = 0; i < out.plane_size(); ++i)
        dst[i] = mask[i] ? co[i] : en[i];
    }
  return out;
}

Tensor rotate(const Tensor& in, double degrees) {
  const double rad = degrees * 3.14159265358979323846 / 180.0;
  Tensor out = Tensor::like(in);
  for (int n = 0; n < in.n; ++n)
    for (int c = 0; c < in.c; ++c)
      kernels::rotate_bilinear(in.plane(n, c), in.h, in.w, rad, out.plane(n, c));
  return out;
}

Tensor gaussian(const Tensor& in, double sigma) {
  int radius = 0;
  const auto kernel = gaussian_kernel(sigma, &radius);
  Tensor out = Tensor::like(in);
  std::vector<float> tmp(in.plane_size());
  for (int n = 0; n < in.n; ++n)
    for (int c = 0; c < in.c; ++c)
      kernels::sep_blur(in.plane(n, c), in.h, in.w, kernel.data(), radius,
                        tmp.data(), out.plane(n, c));
  return out;
}

Tensor resize(const Tensor& in, double scale, ResizeMode mode) {
  const int oh = resize_dim(in.h, scale), ow = resize_dim(in.w, scale);
  Tensor out(in.n, in.c, oh, ow);
  const double ry = static_cast<double>(in.h) / oh;
  const double rx = static_cast<double>(in.w) / ow;
  for (int n = 0; n < in.n; ++n)
    for (int c = 0; c < in.c; ++c) {
      const float* src = in.plane(n, c);
      float* dst = out.plane(n, c);
      for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
          float v;
          if (mode == ResizeMode::nearest) {
            const int sy = std::min(in.h - 1, static_cast<int>((y + 0.5) * ry));
            const int sx = std::min(in.w - 1, static_cast<int>((x + 0.5) * rx));
            v = src[static_cast<std::size_t>(sy) * in.w + sx];
          } else {
            double fy = (y + 0.5) * ry - 0.5;
            double fx = (x + 0.5) * rx - 0.5;
            fy = std::min(std::max(fy, 0.0), static_cast<double>(in.h - 1));
            fx = std::min(std::max(fx, 0.0), static_cast<double>(in.w - 1));
            const int y0 = static_cast<int>(fy), x0 = static_cast<int>(fx);
            const int y1 = std::min(y0 + 1, in.h - 1), x1 = std::min(x0 + 1, in.w - 1);
            const float wy = static_cast<float>(fy - y0), wx = static_cast<float>(fx - x0);
            const float top = src[static_cast<std::size_t>(y0) * in.w + x0] * (1 - wx) +
                              src[static_cast<std::size_t>(y0) * in.w + x1] * wx;
            const float bot = src[static_cast<std::size_t>(y1) * in.w + x0] * (1 - wx) +
                              src[static_cast<std::size_t>(y1) * in.w + x1] * wx;
            v = top * (1 - wy) + bot * wy;
          }
          dst[static_cast<std::size_t>(y) * ow + x] = v;
        }
    }
  return out;
}

namespace {

// 2x2 box average of one plane; odd sizes replicate the last row/column.
void chroma_down(const float* src, int h, int w, float* dst) {
  const int oh = (h + 1) / 2, ow = (w + 1) / 2;
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      const int y0 = 2 * y, x0 = 2 * x;
      const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
      dst[static_cast<std::size_t>(y) * ow + x] =
          0.25f * (src[static_cast<std::size_t>(y0) * w + x0] +
                   src[static_cast<std::size_t>(y0) * w + x1] +
                   src[static_cast<std::size_t>(y1) * w + x0] +
                   src[static_cast<std::size_t>(y1) * w + x1]);
    }
}

void chroma_up_nearest(const float* src, int oh, int ow, int h, int w,
                       float* dst) {
  for (int y = 0; y < h; ++y) {
    const float* srow = src + static_cast<std::size_t>(std::min(y / 2, oh - 1)) * ow;
    float* drow = dst + static_cast<std::size_t>(y) * w;
    for (int x = 0; x < w; ++x) drow[x] = srow[std::min(x / 2, ow - 1)];
  }
}

}  // namespace

Tensor subsample420(const Tensor& in) {
  if (in.c != 3)
    throw std::invalid_argument("subsample420: expected a 3-channel image");
  Tensor out = in;
  const int oh = (in.h + 1) / 2, ow = (in.w + 1) / 2;
  std::vector<float> half(static_cast<std::size_t>(oh) * ow);
  for (int n = 0; n < in.n; ++n)
    for (int c = 1; c < 3; ++c) {  // Cr, Cb; Y untouched
      chroma_down(in.plane(n, c), in.h, in.w, half.data());
      chroma_up_nearest(half.data(), oh, ow, in.h, in.w, out.plane(n, c));
    }
  return out;
}

Tensor apply_realization(const Tensor& in, const Realization& r) {
  switch (r.kind) {
    case Kind::none: return in;
    case Kind::crop: return crop(in, r.window);
    case Kind::rotate: return rotate(in, r.angle_deg);
    case Kind::gaussian: return gaussian(in, r.sigma);
    case Kind::resize: return resize(in, r.scale, r.mode);
    case Kind::subsample420: return subsample420(in);
    case Kind::jpeg: return jpeg_approx(in, r.quality);
    case Kind::cropout:
    case Kind::dropout:
      throw std::invalid_argument(
          "apply_realization: " + kind_name(r.kind) + " needs the cover image");
  }
  return in;
}

msgcodec::SpreadGrid calibrate_grid(const msgcodec::SpreadGrid& grid,
                                    const Realization& r, int block) {
  switch (r.kind) {
    case Kind::crop: return msgcodec::calibrate_crop(grid, r.window, block);
    case Kind::cropout: return msgcodec::calibrate_cropout(grid, r.window, block);
    case Kind::resize: {
      const int oh = resize_dim(r.in_h, r.scale), ow = resize_dim(r.in_w, r.scale);
      return msgcodec::calibrate_resize(grid, std::max(1, ow / block),
                                        std::max(1, oh / block));
    }
    default: return grid;
  }
}

AttackResult apply_attack(const Tensor& encoded, const Tensor& cover,
                          const msgcodec::SpreadGrid& grid,
                          const AttackSpec& spec, std::uint64_t seed) {
  require_same_shape(encoded, cover, "apply_attack");
  const Realization r = sample_realization(spec, encoded.h, encoded.w, seed);
  AttackResult res;
  res.meta = r;
  if (spec.kind == Kind::none) {
    res.encoded = encoded;
    res.cover = cover;
    res.grid = grid;
    return res;
  }
  switch (spec.kind) {
    case Kind::cropout:
      res.encoded = cropout(encoded, cover, r.window);
      res.cover = cover;  // replacing cover by cover is the identity
      break;
    case Kind::dropout:
      res.encoded = dropout(encoded, cover, r.p, r.mask_seed);
      res.cover = cover;
      break;
    default:
      res.encoded = apply_realization(encoded, r);
      res.cover = apply_realization(cover, r);
      break;
  }
  clamp01(res.encoded);
  clamp01(res.cover);
  res.grid = calibrate_grid(grid, r, grid.gw > 0 ? encoded.w / grid.gw : 1);
  return res;
}

AttackResult prenoise(const Tensor& encoded, const Tensor& cover,
                      const msgcodec::SpreadGrid& grid, double p,
                      std::uint64_t seed) {
  AttackSpec spec;
  spec.kind = Kind::dropout;
  spec.p = p;
  return apply_attack(encoded, cover, grid, spec, seed);
}

Tensor attack_backward(const Tensor& grad_out, const Realization& r) {
  switch (r.kind) {
    case Kind::none:
      return grad_out;
    case Kind::crop: {
      Tensor gin(grad_out.n, grad_out.c, r.in_h, r.in_w);
      for (int n = 0; n < grad_out.n; ++n)
        for (int c = 0; c < grad_out.c; ++c) {
          const float* src = grad_out.plane(n, c);
          float* dst = gin.plane(n, c);
          for (int y = 0; y < grad_out.h; ++y)
            std::copy(src + static_cast<std::size_t>(y) * grad_out.w,
                      src + static_cast<std::size_t>(y + 1) * grad_out.w,
                      dst + static_cast<std::size_t>(r.window.y0 + y) * r.in_w + r.window.x0);
        }
      return gin;
    }
    case Kind::cropout: {
      Tensor gin = Tensor::like(grad_out);
      for (int n = 0; n < grad_out.n; ++n)
        for (int c = 0; c < grad_out.c; ++c) {
          const float* src = grad_out.plane(n, c);
          float* dst = gin.plane(n, c);
          for (int y = r.window.y0; y < r.window.y0 + r.window.side; ++y)
            std::copy(src + static_cast<std::size_t>(y) * grad_out.w + r.window.x0,
                      src + static_cast<std::size_t>(y) * grad_out.w + r.window.x0 + r.window.side,
                      dst + static_cast<std::size_t>(y) * grad_out.w + r.window.x0);
        }
      return gin;
    }
    case Kind::dropout: {
      const auto mask = dropout_mask(grad_out.h, grad_out.w, r.p, r.mask_seed);
      Tensor gin = Tensor::like(grad_out);
      for (int n = 0; n < grad_out.n; ++n)
        for (int c = 0; c < grad_out.c; ++c) {
          const float* src = grad_out.plane(n, c);
          float* dst = gin.plane(n, c);
          for (std::size_t i = 0; i < grad_out.plane_size(); ++i)
            dst[i] = mask[i] ? 0.0f : src[i];
        }
      return gin;
    }
    case Kind::rotate: {
      const double rad = r.angle_deg * 3.14159265358979323846 / 180.0;
      Tensor gin = Tensor::like(grad_out);
      for (int n = 0; n < grad_out.n; ++n)
        for (int c = 0; c < grad_out.c; ++c)
          kernels::rotate_bilinear_adjoint(grad_out.plane(n, c), grad_out.h,
                                           grad_out.w, rad, gin.plane(n, c));
      return gin;
    }
    case Kind::gaussian: {
      int radius = 0;
      const auto kernel = gaussian_kernel(r.sigma, &radius);
      Tensor gin = Tensor::like(grad_out);
      std::vector<float> tmp(grad_out.plane_size());
      for (int n = 0; n < grad_out.n; ++n)
        for (int c = 0; c < grad_out.c; ++c)
          kernels::sep_blur_adjoint(grad_out.plane(n, c), grad_out.h,
                                    grad_out.w, kernel.data(), radius,
                                    tmp.data(), gin.plane(n, c));
      return gin;
    }
    case Kind::resize: {
      Tensor gin(grad_out.n, grad_out.c, r.in_h, r.in_w);
      const double ry = static_cast<double>(r.in_h) / grad_out.h;
      const double rx = static_cast<double>(r.in_w) / grad_out.w;
      for (int n = 0; n < grad_out.n; ++n)
        for (int c = 0; c < grad_out.c; ++c) {
          const float* src = grad_out.plane(n, c);
          float* dst = gin.plane(n, c);
          for (int y = 0; y < grad_out.h; ++y)
            for (int x = 0; x < grad_out.w; ++x) {
              const float g = src[static_cast<std::size_t>(y) * grad_out.w + x];
              if (r.mode == ResizeMode::nearest) {
                const int sy = std::min(r.in_h - 1, static_cast<int>((y + 0.5) * ry));
                const int sx = std::min(r.in_w - 1, static_cast<int>((x + 0.5) * rx));
                dst[static_cast<std::size_t>(sy) * r.in_w + sx] += g;
              } else {
                double fy = (y + 0.5) * ry - 0.5;
                double fx = (x + 0.5) * rx - 0.5;
                fy = std::min(std::max(fy, 0.0), static_cast<double>(r.in_h - 1));
                fx = std::min(std::max(fx, 0.0), static_cast<double>(r.in_w - 1));
                const int y0 = static_cast<int>(fy), x0 = static_cast<int>(fx);
                const int y1 = std::min(y0 + 1, r.in_h - 1), x1 = std::min(x0 + 1, r.in_w - 1);
                const float wy = static_cast<float>(fy - y0), wx = static_cast<float>(fx - x0);
                dst[static_cast<std::size_t>(y0) * r.in_w + x0] += (1 - wx) * (1 - wy) * g;
                dst[static_cast<std::size_t>(y0) * r.in_w + x1] += wx * (1 - wy) * g;
                dst[static_cast<std::size_t>(y1) * r.in_w + x0] += (1 - wx) * wy * g;
                dst[static_cast<std::size_t>(y1) * r.in_w + x1] += wx * wy * g;
              }
            }
        }
      return gin;
    }
    case Kind::subsample420: {
      Tensor gin = grad_out;  // Y passes through
      const int oh = (grad_out.h + 1) / 2, ow = (grad_out.w + 1) / 2;
      std::vector<float> half(static_cast<std::size_t>(oh) * ow);
      for (int n = 0; n < grad_out.n; ++n)
        for (int c = 1; c < 3; ++c) {
          const float* src = grad_out.plane(n, c);
          // adjoint of nearest upsample: sum the replicated pixels
          std::fill(half.begin(), half.end(), 0.0f);
          for (int y = 0; y < grad_out.h; ++y)
            for (int x = 0; x < grad_out.w; ++x)
              half[static_cast<std::size_t>(std::min(y / 2, oh - 1)) * ow +
                   std::min(x / 2, ow - 1)] +=
                  src[static_cast<std::size_t>(y) * grad_out.w + x];
          // adjoint of the 2x2 box average: spread a quarter to each source
          float* dst = gin.plane(n, c);
          std::fill(dst, dst + gin.plane_size(), 0.0f);
          for (int y = 0; y < oh; ++y)
            for (int x = 0; x < ow; ++x) {
              const float g = 0.25f * half[static_cast<std::size_t>(y) * ow + x];
              const int y0 = 2 * y, x0 = 2 * x;
              const int y1 = std::min(y0 + 1, grad_out.h - 1),
                        x1 = std::min(x0 + 1, grad_out.w - 1);
              dst[static_cast<std::size_t>(y0) * grad_out.w + x0] += g;
              dst[static_cast<std::size_t>(y0) * grad_out.w + x1] += g;
              dst[static_cast<std::size_t>(y1) * grad_out.w + x0] += g;
              dst[static_cast<std::size_t>(y1) * grad_out.w + x1] += g;
            }
        }
      return gin;
    }
    case Kind::jpeg:
      return jpeg_backward(grad_out, r.quality);
  }
  return grad_out;
}

}  // namespace wm::attacks
