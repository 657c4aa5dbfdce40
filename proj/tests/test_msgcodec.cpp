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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <map>
#include <vector>

#include "doctest.h"
#include "support/oracles.hpp"
#include "wm/msgcodec.hpp"

using namespace wm;
using namespace wm::msgcodec;

namespace {

SpreadParams default_params(std::uint64_t seed = 11) {
  SpreadParams p;
  p.seed = seed;
  return p;
}

}  // namespace

TEST_CASE("hex I/O is MSB-first and validated") {
  const auto m = BitMessage::from_hex("80000001", 32);
  CHECK(m.bits[0] == 1);
  CHECK(m.bits[31] == 1);
  for (int i = 1; i < 31; ++i) CHECK(m.bits[static_cast<std::size_t>(i)] == 0);
  CHECK(m.to_hex() == "80000001");
  CHECK(BitMessage::from_hex("deadbeef", 32).to_hex() == "deadbeef");
  CHECK_THROWS_AS(BitMessage::from_hex("deadbee", 32), std::invalid_argument);
  CHECK_THROWS_AS(BitMessage::from_hex("deadbeeg", 32), std::invalid_argument);
}

TEST_CASE("make_tuples splits the message with binary indices") {
  auto params = default_params();
  Rng rng(1);
  const auto m = BitMessage::random(32, rng);
  const auto seq = make_tuples(m, params);

  // 16 tuples of 6 bits each: 4 index bits + 2 payload bits
  REQUIRE(seq.tuples.size() == 16);
  for (int i = 0; i < 16; ++i) {
    const auto& t = seq.tuples[static_cast<std::size_t>(i)];
    CHECK(t.index == i);
    REQUIRE(t.index_bits.size() == 4);
    REQUIRE(t.slice_bits.size() == 2);
    int decoded = 0;
    for (const auto b : t.index_bits) decoded = decoded * 2 + b;
    CHECK(decoded == i);
    CHECK(t.slice_bits[0] == m.bits[static_cast<std::size_t>(2 * i)]);
    CHECK(t.slice_bits[1] == m.bits[static_cast<std::size_t>(2 * i + 1)]);
  }

  // all-zero payload keeps only the indices
  const auto zeros = make_tuples(BitMessage(32), params);
  for (const auto& t : zeros.tuples)
    for (const auto b : t.slice_bits) CHECK(b == 0);

  // k=4: 8 tuples of 7 bits; concatenating slices reconstructs m
  params.slice_len = 4;
  const auto seq4 = make_tuples(m, params);
  REQUIRE(seq4.tuples.size() == 8);
  BitMessage rebuilt(32);
  for (const auto& t : seq4.tuples) {
    CHECK(t.index_bits.size() == 3);
    CHECK(t.slice_bits.size() == 4);
    for (std::size_t j = 0; j < 4; ++j)
      rebuilt.bits[static_cast<std::size_t>(t.index) * 4 + j] = t.slice_bits[j];
  }
  CHECK(rebuilt == m);
}

TEST_CASE("make_tuples rejects invalid input") {
  auto params = default_params();
  Rng rng(2);
  CHECK_THROWS_AS(make_tuples(BitMessage::random(16, rng), params),
                  std::invalid_argument);
  params.slice_len = 3;  // does not divide 32
  CHECK_THROWS_AS(make_tuples(BitMessage::random(32, rng), params),
                  std::invalid_argument);
  params = default_params();
  params.block = 24;  // does not divide 256
  CHECK_THROWS_AS(make_tuples(BitMessage::random(32, rng), params),
                  std::invalid_argument);
}

TEST_CASE("propagate spreads with full coverage and 16x redundancy") {
  const auto params = default_params();
  Rng rng(3);
  const auto m = BitMessage::random(32, rng);
  const auto prop = propagate(m, params);

  CHECK(prop.grid.gw == 16);
  CHECK(prop.grid.gh == 16);
  CHECK(prop.grid.ch == 6);
  CHECK(prop.ext.h == 256);
  CHECK(prop.ext.w == 256);
  CHECK(prop.ext.c == 6);

  std::map<int, int> counts;
  for (const int idx : prop.grid.layout) {
    CHECK(idx >= 0);
    CHECK(idx < 16);
    counts[idx]++;
  }
  REQUIRE(counts.size() == 16);  // every tuple appears
  int total = 0;
  for (const auto& [idx, n] : counts) total += n;
  CHECK(total == 256);  // mean redundancy is exactly 16

  // ground truth grids are binary
  for (const float v : prop.grid.v) CHECK((v == 0.0f || v == 1.0f));
}

TEST_CASE("extended grid replicates each cell over its block") {
  const auto params = default_params(17);
  Rng rng(4);
  const auto prop = propagate(BitMessage::random(32, rng), params);
  for (int c = 0; c < 6; ++c)
    for (int y = 0; y < 256; ++y)
      for (int x = 0; x < 256; ++x)
        CHECK(prop.ext.at(0, c, y, x) == prop.grid.at(y / 16, x / 16, c));
}

TEST_CASE("degenerate one-cell grid works only when L == k") {
  SpreadParams tiny;
  tiny.msg_len = 2;
  tiny.slice_len = 2;
  tiny.width = tiny.height = 16;
  tiny.block = 16;
  Rng rng(5);
  const auto m = BitMessage::random(2, rng);
  const auto prop = propagate(m, tiny);
  CHECK(prop.grid.gw == 1);
  CHECK(prop.grid.ch == 2);  // no index bits needed for a single tuple
  CHECK(translate(prop.grid, tiny).message == m);

  SpreadParams too_small = default_params();
  too_small.width = too_small.height = 16;  // 1 cell for 16 tuples
  CHECK_THROWS_AS(propagate(BitMessage::random(32, rng), too_small),
                  std::invalid_argument);
}

TEST_CASE("propagation is deterministic per seed and varies across seeds") {
  Rng rng(6);
  const auto m = BitMessage::random(32, rng);
  const auto a = propagate(m, default_params(99));
  const auto b = propagate(m, default_params(99));
  CHECK(a.grid.layout == b.grid.layout);
  CHECK(a.grid.v == b.grid.v);

  int differing = 0;
  for (std::uint64_t s = 0; s < 10; ++s)
    if (propagate(m, default_params(100 + s)).grid.layout != a.grid.layout)
      ++differing;
  CHECK(differing == 10);
}

TEST_CASE("round trip recovers every message exactly") {
  Rng rng(7);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto m = BitMessage::random(32, rng);
    const auto params = default_params(1000 + static_cast<std::uint64_t>(trial));
    const auto prop = propagate(m, params);
    const auto res = translate(prop.grid, params);
    REQUIRE(res.message == m);
    CHECK_FALSE(res.low_redundancy);
  }
}

TEST_CASE("translate needs no layout: cell shuffling is harmless") {
  Rng rng(8);
  const auto m = BitMessage::random(32, rng);
  const auto params = default_params(55);
  auto grid = propagate(m, params).grid;
  // scramble cells spatially; the stored index bits still locate every slice
  std::vector<std::size_t> perm(grid.cells());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  rng.shuffle(perm);
  SpreadGrid shuffled = grid;
  for (std::size_t i = 0; i < perm.size(); ++i)
    for (int c = 0; c < grid.ch; ++c)
      shuffled.v[i * grid.ch + c] = grid.v[perm[i] * grid.ch + c];
  CHECK(translate(shuffled, params).message == m);
}

TEST_CASE("translate survives one corrupted cell per tuple") {
  Rng rng(9);
  const auto m = BitMessage::random(32, rng);
  const auto params = default_params(77);
  auto grid = propagate(m, params).grid;
  // flip the payload of the first cell carrying each tuple
  std::vector<bool> done(16, false);
  for (std::size_t cell = 0; cell < grid.cells(); ++cell) {
    const int idx = grid.layout[cell];
    if (done[static_cast<std::size_t>(idx)]) continue;
    done[static_cast<std::size_t>(idx)] = true;
    for (int c = 4; c < 6; ++c)
      grid.v[cell * grid.ch + c] = 1.0f - grid.v[cell * grid.ch + c];
  }
  const auto res = translate(grid, params);
  CHECK(res.message == m);
  CHECK(res.message == oracles::reference_translate(grid, params));
}

TEST_CASE("translate agrees with the exhaustive reference on soft grids") {
  Rng rng(10);
  const auto params = default_params();
  for (int trial = 0; trial < 25; ++trial) {
    SpreadGrid grid(16, 16, 6);
    for (auto& v : grid.v) v = rng.next_float();
    // random masks too
    if (trial % 3 == 0)
      for (auto& f : grid.valid) f = rng.bernoulli(0.8) ? 1 : 0;
    if (std::count(grid.valid.begin(), grid.valid.end(), 1) == 0) continue;
    CHECK(translate(grid, params).message ==
          oracles::reference_translate(grid, params));
  }
}

TEST_CASE("uninformative grid yields zero confidence") {
  const auto params = default_params();
  SpreadGrid grid(16, 16, 6);
  for (auto& v : grid.v) v = 0.5f;
  const auto res = translate(grid, params);
  for (const double c : res.confidence) CHECK(c == doctest::Approx(0.0));
  // exact 0.5 votes resolve to 0
  for (const auto b : res.message.bits) CHECK(b == 0);
}

TEST_CASE("fewer valid cells than votes sets the low-redundancy flag") {
  SpreadParams tiny;
  tiny.msg_len = 4;
  tiny.slice_len = 2;
  tiny.width = tiny.height = 32;
  tiny.block = 16;
  tiny.votes = 3;
  Rng rng(11);
  const auto m = BitMessage::random(4, rng);
  auto grid = propagate(m, tiny).grid;
  grid.valid = {1, 1, 0, 0};
  const auto res = translate(grid, tiny);
  CHECK(res.low_redundancy);
}

TEST_CASE("crop calibration keeps exactly the fully covered cells") {
  Rng rng(12);
  const auto params = default_params(31);
  const auto prop = propagate(BitMessage::random(32, rng), params);
  // block-aligned window: cells (2..5, 2..5)
  const CropWindow win{32, 32, 64};
  const auto cal = calibrate_crop(prop.grid, win, 16);
  REQUIRE(cal.gw == 4);
  REQUIRE(cal.gh == 4);
  for (int v = 0; v < 4; ++v)
    for (int u = 0; u < 4; ++u) {
      for (int c = 0; c < 6; ++c)
        CHECK(cal.at(v, u, c) == prop.grid.at(2 + v, 2 + u, c));
      CHECK(cal.layout[static_cast<std::size_t>(v) * 4 + u] ==
            prop.grid.layout[static_cast<std::size_t>(2 + v) * 16 + (2 + u)]);
    }
}

TEST_CASE("cropout calibration masks everything outside the window") {
  Rng rng(13);
  const auto params = default_params(32);
  const auto prop = propagate(BitMessage::random(32, rng), params);
  const CropWindow win{32, 48, 64};
  const auto cal = calibrate_cropout(prop.grid, win, 16);
  REQUIRE(cal.gw == 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      const bool inside = x >= 2 && x + 1 <= 6 && y >= 3 && y + 1 <= 7;
      CHECK(cal.cell_valid(y, x) == inside);
    }
  CHECK(cal.v == prop.grid.v);  // values untouched, only the mask changes
}

TEST_CASE("resize calibration downsamples the grid nearest-neighbor") {
  Rng rng(14);
  const auto params = default_params(33);
  const auto prop = propagate(BitMessage::random(32, rng), params);
  const auto half = calibrate_resize(prop.grid, 8, 8);
  REQUIRE(half.gw == 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      const int sy = std::min(15, static_cast<int>((y + 0.5) * 16 / 8));
      const int sx = std::min(15, static_cast<int>((x + 0.5) * 16 / 8));
      for (int c = 0; c < 6; ++c)
        CHECK(half.at(y, x, c) == prop.grid.at(sy, sx, c));
    }
}
