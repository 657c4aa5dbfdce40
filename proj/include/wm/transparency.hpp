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

#ifndef WM_TRANSPARENCY_HPP_
#define WM_TRANSPARENCY_HPP_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "wm/attacks.hpp"
#include "wm/msgcodec.hpp"
#include "wm/networks.hpp"
#include "wm/tensor.hpp"

namespace wm::transparency {

// Per-entry Bernoulli(p) selection between the encoded image (mask 1) and
// the cover (mask 0); the mask is sampled independently for every (w,h,c)
// entry. p = 1 returns the encoded image untouched.
Tensor bernoulli_blend(const Tensor& encoded, const Tensor& cover, double p,
                       std::uint64_t seed);

// The realized mask, exposed for the mask-statistics checks.
std::vector<std::uint8_t> blend_mask(int h, int w, int c, double p,
                                     std::uint64_t seed);

inline constexpr double kPsnrCap = 99.0;  // reported for identical inputs

// 10*log10(1/MSE) with peak 1, per channel in tensor order (Y, Cr, Cb).
std::array<double, 3> psnr_per_channel(const Tensor& a, const Tensor& b);
// Aggregate over all channels.
double psnr(const Tensor& a, const Tensor& b);

struct SweepRow {
  double p = 0.0;
  double psnr_y = 0.0, psnr_cb = 0.0, psnr_cr = 0.0;
  std::vector<double> bit_accuracy;  // one entry per attack
};

struct SweepTable {
  std::vector<std::string> attack_labels;
  std::vector<SweepRow> rows;
  std::string to_csv(const std::string& config_json) const;
};

// For each blend strength p: blend every encoded test image toward its
// cover, run each attack, decode, and report mean PSNR / bit accuracy.
SweepTable transparency_sweep(nn::ModelBundle& models,
                              const std::vector<Tensor>& covers,
                              const std::vector<double>& p_values,
                              const std::vector<attacks::AttackSpec>& specs,
                              const msgcodec::SpreadParams& codec,
                              std::uint64_t seed);

}  // namespace wm::transparency

#endif  // WM_TRANSPARENCY_HPP_
