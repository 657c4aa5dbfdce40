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

#ifndef WM_MSGCODEC_HPP_
#define WM_MSGCODEC_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "wm/rng.hpp"
#include "wm/tensor.hpp"

namespace wm::msgcodec {

// Fixed-length binary payload. Hex I/O is most-significant bit first, so the
// 32-bit message "deadbeef" has bit 0 == 1 (the top bit of 0xd).
struct BitMessage {
  std::vector<std::uint8_t> bits;

  BitMessage() = default;
  explicit BitMessage(int length) : bits(static_cast<std::size_t>(length), 0) {}

  int length() const { return static_cast<int>(bits.size()); }
  void validate() const;

  static BitMessage random(int length, Rng& rng);
  static BitMessage from_hex(const std::string& hex, int length);
  std::string to_hex() const;

  bool operator==(const BitMessage& o) const { return bits == o.bits; }
};

// Spreading layout parameters. k' (tuple width in bits) and the tuple count
// are derived; message length must be a multiple of the slice size and the
// image must be a whole number of b x b blocks.
struct SpreadParams {
  int msg_len = 32;    // L
  int slice_len = 2;   // k
  int block = 16;      // b
  int votes = 3;       // n
  int width = 256;     // W
  int height = 256;    // H
  std::uint64_t seed = 0;

  int tuple_count() const { return (msg_len + slice_len - 1) / slice_len; }
  int index_bits() const;
  int tuple_bits() const { return slice_len + index_bits(); }  // k'
  int grid_w() const { return width / block; }
  int grid_h() const { return height / block; }
  void validate() const;
};

struct TupleSequence {
  struct Tuple {
    int index = 0;
    std::vector<std::uint8_t> index_bits;  // MSB first
    std::vector<std::uint8_t> slice_bits;
  };
  std::vector<Tuple> tuples;
};

// Cell-level spread message. Ground-truth grids are binary; decoded grids
// hold sigmoid outputs in [0,1]. `layout` maps each cell to the tuple index
// it carries (-1 when unknown, e.g. for decoded grids) and `valid` flags the
// cells that survived spatial calibration.
struct SpreadGrid {
  int gw = 0, gh = 0, ch = 0;
  std::vector<float> v;
  std::vector<int> layout;
  std::vector<std::uint8_t> valid;

  SpreadGrid() = default;
  SpreadGrid(int gw_, int gh_, int ch_)
      : gw(gw_), gh(gh_), ch(ch_),
        v(static_cast<std::size_t>(gw_) * gh_ * ch_, 0.0f),
        layout(static_cast<std::size_t>(gw_) * gh_, -1),
        valid(static_cast<std::size_t>(gw_) * gh_, 1) {}

  std::size_t cells() const { return static_cast<std::size_t>(gw) * gh; }
  float& at(int y, int x, int c) {
    return v[(static_cast<std::size_t>(y) * gw + x) * ch + c];
  }
  float at(int y, int x, int c) const {
    return v[(static_cast<std::size_t>(y) * gw + x) * ch + c];
  }
  bool cell_valid(int y, int x) const {
    return valid[static_cast<std::size_t>(y) * gw + x] != 0;
  }
  int valid_count() const;
};

// Pixel-level spread message as a (1, k', H, W) tensor, each b x b block
// constant per channel.
using ExtendedGrid = Tensor;

struct Propagated {
  SpreadGrid grid;
  ExtendedGrid ext;
};

struct Translated {
  BitMessage message;
  std::vector<double> confidence;  // per slice, |mean soft vote - 0.5|
  bool low_redundancy = false;
};

// Splits m into ceil(L/k) tuples of (bin(i), m[ik..ik+k-1]). Deterministic.
TupleSequence make_tuples(const BitMessage& m, const SpreadParams& params);

// Spreads m over the cell grid. Every tuple index appears at least once: the
// first tuple_count() cells in row-major order receive a random permutation
// of all indices, the remaining cells are sampled uniformly.
Propagated propagate(const BitMessage& m, const SpreadParams& params);

// Builds the pixel-level replication of an existing grid.
ExtendedGrid extend(const SpreadGrid& grid, int block);

// Recovers the message from a (possibly soft) grid: for each slice, the
// `votes` valid cells whose index channels are L1-closest to bin(i) are
// averaged and thresholded at 0.5 (exact 0.5 decodes as 0). Ties in
// closeness break toward the lowest (row, col). Needs no layout information.
Translated translate(const SpreadGrid& grid, const SpreadParams& params);

// Converts the decoder output (1, k', gh, gw) into a SpreadGrid.
SpreadGrid grid_from_tensor(const Tensor& t, int image_index = 0);
Tensor grid_to_tensor(const SpreadGrid& grid);

// --- spatial calibration ----------------------------------------------------
// Pixel-space window, used by the crop and cropout attacks.
struct CropWindow {
  int x0 = 0, y0 = 0, side = 0;
};

// Grid for a cropped image: cell (u,v) of the result is the source cell under
// the center of the corresponding b x b block of the cropped image. For
// block-aligned windows this keeps exactly the cells fully inside the window.
SpreadGrid calibrate_crop(const SpreadGrid& grid, const CropWindow& win,
                          int block);

// Full-size grid with every cell not fully inside the window invalidated.
SpreadGrid calibrate_cropout(const SpreadGrid& grid, const CropWindow& win,
                             int block);

// Nearest-neighbor rescale of the grid to the post-resize cell count.
SpreadGrid calibrate_resize(const SpreadGrid& grid, int new_gw, int new_gh);

}  // namespace wm::msgcodec

#endif  // WM_MSGCODEC_HPP_
