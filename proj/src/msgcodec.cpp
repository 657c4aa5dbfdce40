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

#include "wm/msgcodec.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace wm::msgcodec {

void BitMessage::validate() const {
  if (bits.empty()) throw std::invalid_argument("message: empty");
  for (const std::uint8_t b : bits)
    if (b > 1) throw std::invalid_argument("message: bits must be 0 or 1");
}

BitMessage BitMessage::random(int length, Rng& rng) {
  BitMessage m(length);
  for (auto& b : m.bits) b = static_cast<std::uint8_t>(rng.next_u64() & 1u);
  return m;
}

BitMessage BitMessage::from_hex(const std::string& hex, int length) {
  if (length % 4 != 0)
    throw std::invalid_argument("message: hex I/O needs a multiple of 4 bits");
  if (static_cast<int>(hex.size()) * 4 != length)
    throw std::invalid_argument("message: expected " +
                                std::to_string(length / 4) +
                                " hex characters, got '" + hex + "'");
  BitMessage m(length);
  for (int i = 0; i < static_cast<int>(hex.size()); ++i) {
    const char c = hex[static_cast<std::size_t>(i)];
    int nib;
    if (c >= '0' && c <= '9') nib = c - '0';
    else if (c >= 'a' && c <= 'f') nib = c - 'a' + 10;
    else if (c >= 'A' && c <= 'F') nib = c - 'A' + 10;
    else throw std::invalid_argument(std::string("message: bad hex digit '") + c + "'");
    for (int j = 0; j < 4; ++j)
      m.bits[static_cast<std::size_t>(i * 4 + j)] =
          static_cast<std::uint8_t>((nib >> (3 - j)) & 1);
  }
  return m;
}

std::string BitMessage::to_hex() const {
  if (length() % 4 != 0)
    throw std::invalid_argument("message: hex I/O needs a multiple of 4 bits");
  std::string out;
  for (int i = 0; i < length(); i += 4) {
    int nib = 0;
    for (int j = 0; j < 4; ++j)
      nib = (nib << 1) | bits[static_cast<std::size_t>(i + j)];
    out += "0123456789abcdef"[nib];
  }
  return out;
}

int SpreadParams::index_bits() const {
  const int t = tuple_count();
  int bits = 0;
  while ((1 << bits) < t) ++bits;
  return bits;
}

void SpreadParams::validate() const {
  if (msg_len <= 0 || slice_len <= 0 || block <= 0 || votes < 1 ||
      width <= 0 || height <= 0)
    throw std::invalid_argument("spread params: all sizes must be positive");
  if (msg_len % slice_len != 0)
    throw std::invalid_argument("spread params: slice size k must divide L");
  if (width % block != 0 || height % block != 0)
    throw std::invalid_argument(
        "spread params: block size b must divide both W and H");
}

int SpreadGrid::valid_count() const {
  int n = 0;
  for (const std::uint8_t f : valid) n += f;
  return n;
}

TupleSequence make_tuples(const BitMessage& m, const SpreadParams& params) {
  params.validate();
  m.validate();
  if (m.length() != params.msg_len)
    throw std::invalid_argument("make_tuples: message length " +
                                std::to_string(m.length()) +
                                " does not match configured L=" +
                                std::to_string(params.msg_len));
  const int count = params.tuple_count();
  const int ib = params.index_bits();
  const int k = params.slice_len;
  TupleSequence seq;
  seq.tuples.resize(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    auto& t = seq.tuples[static_cast<std::size_t>(i)];
    t.index = i;
    t.index_bits.resize(static_cast<std::size_t>(ib));
    for (int j = 0; j < ib; ++j)
      t.index_bits[static_cast<std::size_t>(j)] =
          static_cast<std::uint8_t>((i >> (ib - 1 - j)) & 1);
    t.slice_bits.assign(m.bits.begin() + i * k, m.bits.begin() + (i + 1) * k);
  }
  return seq;
}

Propagated propagate(const BitMessage& m, const SpreadParams& params) {
  const TupleSequence seq = make_tuples(m, params);
  const int count = params.tuple_count();
  const int gw = params.grid_w(), gh = params.grid_h();
  if (gw * gh < count)
    throw std::invalid_argument(
        "propagate: grid of " + std::to_string(gw * gh) +
        " cells cannot host " + std::to_string(count) + " tuples");

  SpreadGrid grid(gw, gh, params.tuple_bits());
  Rng rng(mix_seed(params.seed, 0x7370726561646572ULL));
  const std::vector<int> head = rng.permutation(count);
  for (std::size_t cell = 0; cell < grid.cells(); ++cell) {
    const int idx = cell < head.size()
                        ? head[cell]
                        : static_cast<int>(rng.next_below(count));
    grid.layout[cell] = idx;
    const auto& t = seq.tuples[static_cast<std::size_t>(idx)];
    float* dst = grid.v.data() + cell * grid.ch;
    int c = 0;
    for (const std::uint8_t b : t.index_bits) dst[c++] = b;
    for (const std::uint8_t b : t.slice_bits) dst[c++] = b;
  }
  return {grid, extend(grid, params.block)};
}

ExtendedGrid extend(const SpreadGrid& grid, int block) {
  Tensor ext(1, grid.ch, grid.gh * block, grid.gw * block);
  for (int c = 0; c < grid.ch; ++c) {
    float* plane = ext.plane(0, c);
    for (int y = 0; y < ext.h; ++y)
      for (int x = 0; x < ext.w; ++x)
        plane[static_cast<std::size_t>(y) * ext.w + x] =
            grid.at(y / block, x / block, c);
  }
  return ext;
}

Translated translate(const SpreadGrid& grid, const SpreadParams& params) {
  params.validate();
  if (grid.ch != params.tuple_bits())
    throw std::invalid_argument("translate: grid has " +
                                std::to_string(grid.ch) +
                                " channels, expected k'=" +
                                std::to_string(params.tuple_bits()));
  const int count = params.tuple_count();
  const int ib = params.index_bits();
  const int k = params.slice_len;

  std::vector<std::size_t> usable;
  usable.reserve(grid.cells());
  for (std::size_t cell = 0; cell < grid.cells(); ++cell)
    if (grid.valid[cell]) usable.push_back(cell);

  Translated out;
  out.message = BitMessage(params.msg_len);
  out.confidence.assign(static_cast<std::size_t>(count), 0.0);
  if (usable.empty()) {
    out.low_redundancy = true;
    return out;
  }
  if (static_cast<int>(usable.size()) < params.votes) out.low_redundancy = true;
  const int take = std::min<int>(params.votes, static_cast<int>(usable.size()));

  std::vector<std::pair<double, std::size_t>> scored(usable.size());
  for (int i = 0; i < count; ++i) {
    // L1 distance between the soft index channels and bin(i).
    for (std::size_t u = 0; u < usable.size(); ++u) {
      const float* cell = grid.v.data() + usable[u] * grid.ch;
      double d = 0.0;
      for (int j = 0; j < ib; ++j) {
        const float target = static_cast<float>((i >> (ib - 1 - j)) & 1);
        d += std::abs(cell[j] - target);
      }
      scored[u] = {d, usable[u]};
    }
    std::partial_sort(scored.begin(), scored.begin() + take, scored.end());
    double conf = 0.0;
    for (int j = 0; j < k; ++j) {
      double vote = 0.0;
      for (int v = 0; v < take; ++v)
        vote += grid.v[scored[static_cast<std::size_t>(v)].second * grid.ch + ib + j];
      vote /= take;
      out.message.bits[static_cast<std::size_t>(i * k + j)] = vote > 0.5 ? 1 : 0;
      conf += std::abs(vote - 0.5);
    }
    out.confidence[static_cast<std::size_t>(i)] = conf / k;
  }
  return out;
}

SpreadGrid grid_from_tensor(const Tensor& t, int image_index) {
  SpreadGrid grid(t.w, t.h, t.c);
  for (int c = 0; c < t.c; ++c) {
    const float* plane = t.plane(image_index, c);
    for (int y = 0; y < t.h; ++y)
      for (int x = 0; x < t.w; ++x)
        grid.at(y, x, c) = plane[static_cast<std::size_t>(y) * t.w + x];
  }
  return grid;
}

Tensor grid_to_tensor(const SpreadGrid& grid) {
  Tensor t(1, grid.ch, grid.gh, grid.gw);
  for (int c = 0; c < grid.ch; ++c) {
    float* plane = t.plane(0, c);
    for (int y = 0; y < grid.gh; ++y)
      for (int x = 0; x < grid.gw; ++x)
        plane[static_cast<std::size_t>(y) * grid.gw + x] = grid.at(y, x, c);
  }
  return t;
}

SpreadGrid calibrate_crop(const SpreadGrid& grid, const CropWindow& win,
                          int block) {
  const int out_cells = win.side / block;
  if (out_cells < 1)
    throw std::invalid_argument("calibrate_crop: window smaller than a block");
  SpreadGrid out(out_cells, out_cells, grid.ch);
  for (int v = 0; v < out_cells; ++v)
    for (int u = 0; u < out_cells; ++u) {
      const int sy = std::min((win.y0 + v * block + block / 2) / block, grid.gh - 1);
      const int sx = std::min((win.x0 + u * block + block / 2) / block, grid.gw - 1);
      for (int c = 0; c < grid.ch; ++c) out.at(v, u, c) = grid.at(sy, sx, c);
      out.layout[static_cast<std::size_t>(v) * out_cells + u] =
          grid.layout[static_cast<std::size_t>(sy) * grid.gw + sx];
      out.valid[static_cast<std::size_t>(v) * out_cells + u] =
          grid.valid[static_cast<std::size_t>(sy) * grid.gw + sx];
    }
  return out;
}

SpreadGrid calibrate_cropout(const SpreadGrid& grid, const CropWindow& win,
                             int block) {
  SpreadGrid out = grid;
  for (int y = 0; y < grid.gh; ++y)
    for (int x = 0; x < grid.gw; ++x) {
      const int px0 = x * block, py0 = y * block;
      const bool inside = px0 >= win.x0 && py0 >= win.y0 &&
                          px0 + block <= win.x0 + win.side &&
                          py0 + block <= win.y0 + win.side;
      if (!inside) out.valid[static_cast<std::size_t>(y) * grid.gw + x] = 0;
    }
  return out;
}

SpreadGrid calibrate_resize(const SpreadGrid& grid, int new_gw, int new_gh) {
  if (new_gw < 1 || new_gh < 1)
    throw std::invalid_argument("calibrate_resize: empty target grid");
  SpreadGrid out(new_gw, new_gh, grid.ch);
  for (int y = 0; y < new_gh; ++y)
    for (int x = 0; x < new_gw; ++x) {
      const int sy = std::min(static_cast<int>((y + 0.5) * grid.gh / new_gh), grid.gh - 1);
      const int sx = std::min(static_cast<int>((x + 0.5) * grid.gw / new_gw), grid.gw - 1);
      for (int c = 0; c < grid.ch; ++c) out.at(y, x, c) = grid.at(sy, sx, c);
      out.layout[static_cast<std::size_t>(y) * new_gw + x] =
          grid.layout[static_cast<std::size_t>(sy) * grid.gw + sx];
      out.valid[static_cast<std::size_t>(y) * new_gw + x] =
          grid.valid[static_cast<std::size_t>(sy) * grid.gw + sx];
    }
  return out;
}

}  // namespace wm::msgcodec
