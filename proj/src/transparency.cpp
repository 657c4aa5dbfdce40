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

#include "wm/transparency.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "wm/identification.hpp"
#include "wm/training.hpp"

namespace wm::transparency {

std::vector<std::uint8_t> blend_mask(int h, int w, int c, double p,
                                     std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x626c656e64ULL));
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(h) * w * c);
  for (auto& m : mask) m = rng.bernoulli(p) ? 1 : 0;
  return mask;
}

Tensor bernoulli_blend(const Tensor& encoded, const Tensor& cover, double p,
                       std::uint64_t seed) {
  require_same_shape(encoded, cover, "bernoulli_blend");
  if (p < 0.0 || p > 1.0)
    throw std::invalid_argument("bernoulli_blend: p must be in [0,1]");
  if (p == 0.0) return cover;
  if (p == 1.0) return encoded;
  const auto mask = blend_mask(encoded.h, encoded.w, encoded.c, p, seed);
  Tensor out = Tensor::like(encoded);
  // mask index runs over (c,h,w) per image, matching the planar layout
  const std::size_t img = static_cast<std::size_t>(encoded.c) * encoded.plane_size();
  for (int n = 0; n < encoded.n; ++n) {
    const float* en = encoded.data() + n * img;
    const float* co = cover.data() + n * img;
    float* dst = out.data() + n * img;
    for (std::size_t i = 0; i < img; ++i) dst[i] = mask[i] ? en[i] : co[i];
  }
  return out;
}

std::array<double, 3> psnr_per_channel(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "psnr");
  std::array<double, 3> out{};
  for (int c = 0; c < a.c; ++c) {
    double mse = 0.0;
    for (int n = 0; n < a.n; ++n) {
      const float* pa = a.plane(n, c);
      const float* pb = b.plane(n, c);
      for (std::size_t i = 0; i < a.plane_size(); ++i) {
        const double d = static_cast<double>(pa[i]) - pb[i];
        mse += d * d;
      }
    }
    mse /= static_cast<double>(a.n) * a.plane_size();
    out[static_cast<std::size_t>(c)] =
        mse <= 0.0 ? kPsnrCap : std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
  }
  return out;
}

double psnr(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "psnr");
  double mse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a.v[i]) - b.v[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.size());
  return mse <= 0.0 ? kPsnrCap : std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

SweepTable transparency_sweep(nn::ModelBundle& models,
                              const std::vector<Tensor>& covers,
                              const std::vector<double>& p_values,
                              const std::vector<attacks::AttackSpec>& specs,
                              const msgcodec::SpreadParams& codec,
                              std::uint64_t seed) {
  if (covers.empty())
    throw std::invalid_argument("transparency_sweep: no images");
  SweepTable table;
  for (const auto& s : specs) table.attack_labels.push_back(s.to_string());

  // Embeddings are fixed across p so the sweep isolates the blend strength.
  std::vector<Tensor> encoded;
  std::vector<msgcodec::BitMessage> messages;
  std::vector<msgcodec::SpreadParams> params;
  std::vector<msgcodec::SpreadGrid> grids;
  encoded.reserve(covers.size());
  for (std::size_t i = 0; i < covers.size(); ++i) {
    Rng mrng(mix_seed(seed, 0x73777065ULL, i));
    messages.push_back(msgcodec::BitMessage::random(codec.msg_len, mrng));
    msgcodec::SpreadParams pr = codec;
    pr.seed = mix_seed(seed, 0x73776c79ULL, i);
    params.push_back(pr);
    auto prop = msgcodec::propagate(messages.back(), pr);
    grids.push_back(std::move(prop.grid));
    Tensor adapted = models.adapter.forward(prop.ext, false);
    Tensor en = models.encoder.forward(covers[i], adapted, false);
    clamp01(en);
    encoded.push_back(std::move(en));
  }

  for (const double p : p_values) {
    SweepRow row;
    row.p = p;
    row.bit_accuracy.assign(specs.size(), 0.0);
    double psnr_sum[3] = {0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < covers.size(); ++i) {
      const Tensor blended = bernoulli_blend(
          encoded[i], covers[i], p, mix_seed(seed, 0x6d61736bULL, i));
      const auto triple = psnr_per_channel(blended, covers[i]);
      for (int c = 0; c < 3; ++c) psnr_sum[c] += triple[static_cast<std::size_t>(c)];
      for (std::size_t k = 0; k < specs.size(); ++k) {
        const auto res = attacks::apply_attack(
            blended, covers[i], grids[i], specs[k],
            mix_seed(seed, 0x7377746bULL, i, k));
        const Tensor soft = models.decoder.forward(res.encoded, false);
        auto grid = msgcodec::grid_from_tensor(soft);
        grid.valid = res.grid.valid;
        const auto translated = msgcodec::translate(grid, params[i]);
        row.bit_accuracy[k] +=
            identification::bit_accuracy(messages[i], translated.message);
      }
    }
    const double inv = 1.0 / static_cast<double>(covers.size());
    row.psnr_y = psnr_sum[0] * inv;
    row.psnr_cr = psnr_sum[1] * inv;
    row.psnr_cb = psnr_sum[2] * inv;
    for (auto& a : row.bit_accuracy) a *= inv;
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string SweepTable::to_csv(const std::string& config_json) const {
  std::ostringstream os;
  if (!config_json.empty()) os << "# config: " << config_json << "\n";
  os << "p,psnr_Y,psnr_Cb,psnr_Cr";
  for (const auto& label : attack_labels) {
    std::string l = label;
    for (auto& ch : l)
      if (ch == ',') ch = ';';
    os << ",acc_" << l;
  }
  os << "\n";
  os.setf(std::ios::fixed);
  os.precision(6);
  for (const auto& row : rows) {
    os << row.p << "," << row.psnr_y << "," << row.psnr_cb << "," << row.psnr_cr;
    for (const double a : row.bit_accuracy) os << "," << a;
    os << "\n";
  }
  return os.str();
}

}  // namespace wm::transparency
