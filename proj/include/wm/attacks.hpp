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

#ifndef WM_ATTACKS_HPP_
#define WM_ATTACKS_HPP_

#include <cstdint>
#include <string>

#include "wm/msgcodec.hpp"
#include "wm/tensor.hpp"

namespace wm::attacks {

enum class Kind {
  none,
  crop,
  cropout,
  dropout,
  rotate,
  gaussian,
  subsample420,
  resize,
  jpeg,
};

enum class ResizeMode { nearest, linear };

// One distortion and its parameters. The compact string form mirrors the
// usual benchmark row labels: "none", "crop:p=0.3", "cropout:p=0.3",
// "dropout:p=0.5", "rotate:alpha=5", "gaussian:sigma=2", "subsample420",
// "resize:s=0.5,m=N" (m=N nearest, m=L linear), "jpeg:q=50".
struct AttackSpec {
  Kind kind = Kind::none;
  double p = 0.3;        // crop/cropout area ratio, dropout replace prob
  double alpha = 5.0;    // rotation degrees
  double sigma = 2.0;    // blur std-dev in pixels
  double scale = 0.5;    // resize factor
  ResizeMode mode = ResizeMode::nearest;
  int quality = 50;      // JPEG quality

  static AttackSpec parse(const std::string& text);
  std::string to_string() const;
  void validate() const;
};

// The sampled realization of an attack: both images of a pair receive
// exactly this transformation. Element of AttackResult::meta for oracles.
struct Realization {
  Kind kind = Kind::none;
  msgcodec::CropWindow window;   // crop/cropout
  double angle_deg = 0.0;        // rotate
  double sigma = 0.0;            // gaussian
  double scale = 1.0;            // resize
  ResizeMode mode = ResizeMode::nearest;
  int quality = 50;              // jpeg
  double p = 0.0;                // dropout replace probability
  std::uint64_t mask_seed = 0;   // dropout mask stream
  int in_h = 0, in_w = 0;
};

Realization sample_realization(const AttackSpec& spec, int h, int w,
                               std::uint64_t seed);

struct AttackResult {
  Tensor encoded;
  Tensor cover;
  msgcodec::SpreadGrid grid;
  Realization meta;
};

// Applies one attack to the (encoded, cover) pair with a shared realization
// and calibrates the grid for spatial attacks (crop/cropout drop cells,
// resize rescales the grid; everything else passes the grid through).
AttackResult apply_attack(const Tensor& encoded, const Tensor& cover,
                          const msgcodec::SpreadGrid& grid,
                          const AttackSpec& spec, std::uint64_t seed);

// The prenoiser: always a dropout, used ahead of the main noiser.
AttackResult prenoise(const Tensor& encoded, const Tensor& cover,
                      const msgcodec::SpreadGrid& grid, double p,
                      std::uint64_t seed);

// Deterministic single-image transforms (the pieces behind apply_attack).
Tensor crop(const Tensor& in, const msgcodec::CropWindow& win);
Tensor cropout(const Tensor& encoded, const Tensor& cover,
               const msgcodec::CropWindow& win);
Tensor dropout(const Tensor& encoded, const Tensor& cover, double p,
               std::uint64_t mask_seed);
Tensor rotate(const Tensor& in, double degrees);
Tensor gaussian(const Tensor& in, double sigma);
Tensor resize(const Tensor& in, double scale, ResizeMode mode);
Tensor subsample420(const Tensor& in);

enum class Rounding {
  surrogate,  // forward rounds, backward passes gradients through
  hard,       // same forward path; named for tests that pin the semantics
  off,        // skip quantization rounding (linear pipeline, used by tests)
};

// Differentiable JPEG: 4:2:0 subsampling, blockwise DCT, quality-scaled
// quantization with a straight-through rounding surrogate, inverse DCT.
Tensor jpeg_approx(const Tensor& in, int quality,
                   Rounding rounding = Rounding::surrogate);

// Scaled luma/chroma quantization tables for a quality setting (row-major
// 8x8, luma first).
void jpeg_quant_tables(int quality, int luma[64], int chroma[64]);

// Exact adjoint of the jpeg_approx linear pipeline with the rounding
// surrogate treated as identity.
Tensor jpeg_backward(const Tensor& grad_out, int quality);

// Applies the same realization to a single image (used for covers and by the
// CLI attack command).
Tensor apply_realization(const Tensor& in, const Realization& r);

// Pullback of `apply_realization` at `in` for the gradient that arrived at
// the attacked image; exact adjoint for every attack, with rounding treated
// as identity (straight-through) for jpeg.
Tensor attack_backward(const Tensor& grad_out, const Realization& r);

// Grid calibration for one realization (crop/cropout/resize; identity else).
msgcodec::SpreadGrid calibrate_grid(const msgcodec::SpreadGrid& grid,
                                    const Realization& r, int block);

}  // namespace wm::attacks

#endif  // WM_ATTACKS_HPP_
