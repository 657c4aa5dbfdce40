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

// Independent reference implementations used as test oracles. Everything in
// here is written as plainly as possible (full sorts, scalar loops, direct
// formulas) and stays decoupled from the library code paths it checks.

#ifndef WM_TESTS_SUPPORT_ORACLES_HPP_
#define WM_TESTS_SUPPORT_ORACLES_HPP_

#include <algorithm>
#include <cmath>
#include <vector>

#include "wm/msgcodec.hpp"
#include "wm/tensor.hpp"
#include "wm/training.hpp"

namespace oracles {

// Exhaustive translator: scores every valid cell for every slice with a full
// stable sort, averages the n best payloads, thresholds at 0.5 (ties to 0).
inline wm::msgcodec::BitMessage reference_translate(
    const wm::msgcodec::SpreadGrid& grid,
    const wm::msgcodec::SpreadParams& params) {
  const int count = params.tuple_count();
  const int ib = params.index_bits();
  const int k = params.slice_len;
  wm::msgcodec::BitMessage out(params.msg_len);
  std::vector<std::size_t> cells;
  for (std::size_t cell = 0; cell < grid.cells(); ++cell)
    if (grid.valid[cell]) cells.push_back(cell);
  const int take = std::min<int>(params.votes, static_cast<int>(cells.size()));
  for (int i = 0; i < count; ++i) {
    std::vector<std::pair<double, std::size_t>> scored;
    for (const std::size_t cell : cells) {
      double d = 0.0;
      for (int j = 0; j < ib; ++j) {
        const int bit = (i >> (ib - 1 - j)) & 1;
        d += std::abs(static_cast<double>(grid.v[cell * grid.ch + j]) - bit);
      }
      scored.emplace_back(d, cell);
    }
    std::sort(scored.begin(), scored.end());
    for (int j = 0; j < k; ++j) {
      double vote = 0.0;
      for (int v = 0; v < take; ++v)
        vote += grid.v[scored[static_cast<std::size_t>(v)].second * grid.ch + ib + j];
      vote /= take;
      out.bits[static_cast<std::size_t>(i * k + j)] = vote > 0.5 ? 1 : 0;
    }
  }
  return out;
}

// Scalar-loop loss references.

inline double mse_reference(const wm::Tensor& a, const wm::Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a.v[i]) - b.v[i];
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

inline double meanvar_reference(const wm::msgcodec::SpreadGrid& truth,
                                const wm::msgcodec::SpreadGrid& decoded,
                                double lambda_mean, double lambda_var) {
  double total = 0.0;
  int valid = 0;
  for (int y = 0; y < truth.gh; ++y)
    for (int x = 0; x < truth.gw; ++x) {
      if (!truth.cell_valid(y, x)) continue;
      ++valid;
      std::vector<double> e;
      for (int c = 0; c < truth.ch; ++c)
        e.push_back(std::abs(static_cast<double>(truth.at(y, x, c)) -
                             decoded.at(y, x, c)));
      double mean = 0.0;
      for (const double v : e) mean += v;
      mean /= static_cast<double>(e.size());
      double var = 0.0;
      for (const double v : e) var += (v - mean) * (v - mean);
      var /= static_cast<double>(e.size());
      total += lambda_mean * mean + lambda_var * var;
    }
  return valid > 0 ? total / valid : 0.0;
}

inline double adversarial_reference(const std::vector<float>& scores) {
  double s = 0.0;
  for (const float v : scores) {
    const double c = std::min(1.0 - 1e-6, std::max(1e-6, static_cast<double>(v)));
    s += std::log(c);
  }
  return s / static_cast<double>(scores.size());
}

inline double discriminator_reference(const std::vector<float>& cover,
                                      const std::vector<float>& encoded) {
  double s = 0.0;
  for (std::size_t i = 0; i < cover.size(); ++i) {
    const double c = std::min(1.0 - 1e-6, std::max(1e-6, static_cast<double>(cover[i])));
    const double e = std::min(1.0 - 1e-6, std::max(1e-6, static_cast<double>(encoded[i])));
    s += std::log(c) + std::log(1.0 - e);
  }
  return s / static_cast<double>(cover.size());
}

// Central finite difference of a scalar functional at one coordinate.
template <typename F, typename Buffer>
double central_difference(F&& f, Buffer& x, std::size_t i, float h) {
  const float saved = x[i];
  x[i] = saved + h;
  const double fp = f();
  x[i] = saved - h;
  const double fm = f();
  x[i] = saved;
  return (fp - fm) / (2.0 * static_cast<double>(h));
}

}  // namespace oracles

#endif  // WM_TESTS_SUPPORT_ORACLES_HPP_
