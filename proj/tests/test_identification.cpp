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
#include <bit>
#include <cmath>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "wm/identification.hpp"

using namespace wm;
using namespace wm::identification;
using msgcodec::BitMessage;

namespace {

BitMessage complement(const BitMessage& m) {
  BitMessage out = m;
  for (auto& b : out.bits) b = static_cast<std::uint8_t>(1 - b);
  return out;
}

// A fixture pool whose keys all start with eight zero bits, so a message
// that starts with eight one bits can never reach 24+ bits of agreement.
KeyPool structured_pool(std::size_t size, std::uint64_t seed) {
  KeyPool pool;
  pool.msg_len = 32;
  Rng rng(seed);
  std::set<std::uint64_t> seen;
  while (pool.keys.size() < size) {
    const std::uint64_t k = rng.next_u64() & 0x00FFFFFFULL;
    if (seen.insert(k).second) pool.keys.push_back(k);
  }
  return pool;
}

BitMessage far_from(const KeyPool& pool) {
  BitMessage m(32);
  for (int i = 0; i < 8; ++i) m.bits[static_cast<std::size_t>(i)] = 1;
  (void)pool;
  return m;
}

}  // namespace

TEST_CASE("bit accuracy counts agreeing positions") {
  Rng rng(1);
  const auto m = BitMessage::random(32, rng);
  CHECK(bit_accuracy(m, m) == 1.0);
  CHECK(bit_accuracy(m, complement(m)) == 0.0);
  CHECK_THROWS_AS(bit_accuracy(m, BitMessage::random(16, rng)),
                  std::invalid_argument);
  // independent random pairs agree on half the bits
  double mean = 0.0;
  for (int t = 0; t < 10000; ++t)
    mean += bit_accuracy(BitMessage::random(32, rng), BitMessage::random(32, rng));
  mean /= 10000.0;
  CHECK(std::abs(mean - 0.5) <= 0.01);
}

TEST_CASE("key pools store distinct keys and round trip through hex files") {
  const auto pool = KeyPool::random(500, 32, 7);
  REQUIRE(pool.keys.size() == 500);
  std::set<std::uint64_t> uniq(pool.keys.begin(), pool.keys.end());
  CHECK(uniq.size() == 500);
  namespace fs = std::filesystem;
  const auto path = (fs::temp_directory_path() / "wmkit_pool.txt").string();
  pool.save(path);
  const auto loaded = KeyPool::load(path, 32);
  CHECK(loaded.keys == pool.keys);
  fs::remove(path);
}

TEST_CASE("match_keys finds exactly the keys above the agreement threshold") {
  const auto pool = KeyPool::random(1000, 32, 8);
  // the probe is a pool member: with t = L it matches itself (and any twin)
  const auto probe = pool.key_message(123);
  const auto exact = match_keys(probe, pool, 32);
  REQUIRE(exact.size() == 1);
  CHECK(exact[0] == 123);
  // t = 0 accepts the whole pool
  CHECK(match_keys(probe, pool, 0).size() == pool.keys.size());
}

TEST_CASE("match_keys agrees with a per-bit scan") {
  const auto pool = KeyPool::random(2000, 32, 9);
  Rng rng(10);
  for (int trial = 0; trial < 200; ++trial) {
    const auto probe = BitMessage::random(32, rng);
    const auto got = match_keys(probe, pool, 29);
    std::vector<std::size_t> expect;
    for (std::size_t k = 0; k < pool.keys.size(); ++k) {
      const auto key = pool.key_message(k);
      int agree = 0;
      for (int i = 0; i < 32; ++i)
        agree += key.bits[static_cast<std::size_t>(i)] ==
                 probe.bits[static_cast<std::size_t>(i)];
      if (agree >= 29) expect.push_back(k);
    }
    REQUIRE(got == expect);
  }
}

TEST_CASE("random probes hit a 1000-key pool at the binomial-tail rate") {
  // expected suspects per probe: 1000 * sum_{i=29}^{32} C(32,i) / 2^32
  const double expected_rate = 1000.0 * 5489.0 / 4294967296.0;
  const auto pool = KeyPool::random(1000, 32, 11);
  Rng rng(12);
  const int trials = 100000;
  long total = 0;
  for (int t = 0; t < trials; ++t)
    total += static_cast<long>(match_keys(BitMessage::random(32, rng), pool, 29).size());
  const double expected_total = expected_rate * trials;
  const double sigma = std::sqrt(expected_total);
  CHECK(std::abs(total - expected_total) <= 3.5 * sigma);
}

TEST_CASE("collision probability reproduces the closed-form benchmark") {
  // one million random 32-bit keys against a t=29 sharing rule
  const double p = collision_probability(32, 29, 1e6);
  CHECK(p >= 0.71);
  CHECK(p <= 0.73);
  // impossible threshold
  CHECK(collision_probability(32, 33, 1e6) == 0.0);
  // monotone: larger pools collide more, stricter thresholds collide less
  CHECK(collision_probability(32, 29, 1e5) < p);
  CHECK(collision_probability(32, 29, 1e7) > p);
  CHECK(collision_probability(32, 30, 1e6) < p);
  CHECK(collision_probability(32, 28, 1e6) > p);
  // no underflow for huge pools
  CHECK(collision_probability(32, 32, 1e12) > 0.0);
}

TEST_CASE("collision probability matches a Monte-Carlo estimate") {
  const double predicted = collision_probability(8, 7, 50);
  Rng rng(13);
  const int trials = 100000;
  int hits = 0;
  for (int t = 0; t < trials; ++t) {
    const std::uint64_t probe = rng.next_u64() & 0xFF;
    bool hit = false;
    for (int k = 0; k < 50; ++k) {
      const std::uint64_t key = rng.next_u64() & 0xFF;
      if (8 - std::popcount(probe ^ key) >= 7) {
        hit = true;
        break;
      }
    }
    hits += hit;
  }
  const double estimate = hits / static_cast<double>(trials);
  const double sigma = std::sqrt(predicted * (1.0 - predicted) / trials);
  CHECK(std::abs(estimate - predicted) <= 3.0 * sigma);
}

TEST_CASE("classification follows the strict threshold rule") {
  CHECK(classify(0.9, 0.5));
  CHECK_FALSE(classify(0.5, 0.5));  // strict >
  CHECK(categorize(classify(0.9, 0.5), true) == Category::TP);
  CHECK(categorize(classify(0.5, 0.5), true) == Category::FN);
  CHECK(categorize(classify(0.9, 0.5), false) == Category::FP);
  CHECK(categorize(classify(0.2, 0.5), false) == Category::TN);
}

TEST_CASE("protocol rates match hand-computed values on a small fixture") {
  // Pool keys share the 8-bit zero prefix; "bad" decodes can never match.
  auto pool = structured_pool(10, 14);
  const auto bad = far_from(pool);

  // 6 encoded, 4 covers. Scores relative to t_f = 0.5:
  //  e0 0.9 true-key      -> TP, true extracted
  //  e1 0.8 true-key      -> TP, true extracted
  //  e2 0.7 bad           -> TP, nothing extracted
  //  e3 0.6 wrong-key     -> TP, wrong key
  //  e4 0.4 true-key      -> FN (double skips, naive still decodes)
  //  e5 0.3 bad           -> FN
  //  c0 0.9 bad           -> FP, no suspect
  //  c1 0.6 key match     -> FP with suspect (counts in double FIR_co)
  //  c2 0.4 key match     -> TN (double); naive still matches
  //  c3 0.1 bad           -> TN
  std::vector<Sample> samples;
  const auto enc = [&](double score, const BitMessage& decoded, long key) {
    Sample s;
    s.score = score;
    s.decoded = decoded;
    s.is_encoded = true;
    s.true_key = key;
    samples.push_back(s);
  };
  const auto cov = [&](double score, const BitMessage& decoded) {
    Sample s;
    s.score = score;
    s.decoded = decoded;
    s.is_encoded = false;
    samples.push_back(s);
  };
  enc(0.9, pool.key_message(0), 0);
  enc(0.8, pool.key_message(1), 1);
  enc(0.7, bad, 2);
  enc(0.6, pool.key_message(5), 3);  // decodes someone else's key
  enc(0.4, pool.key_message(4), 4);
  enc(0.3, bad, 5);
  cov(0.9, bad);
  cov(0.6, pool.key_message(7));
  cov(0.4, pool.key_message(8));
  cov(0.1, bad);

  DetectionConfig config;
  config.t = 29;
  config.t_f = 0.5;
  config.mode = Mode::doubled;
  const auto dbl = evaluate_protocol(samples, pool, config);
  CHECK(dbl.tp == 4);
  CHECK(dbl.fn == 2);
  CHECK(dbl.fp == 2);
  CHECK(dbl.tn == 2);
  CHECK(dbl.tp + dbl.fp + dbl.tn + dbl.fn == 10);
  CHECK(dbl.tir == doctest::Approx(2.0 / 4.0));     // e0, e1 of 4 TPs
  CHECK(dbl.fir_en == doctest::Approx(1.0 / 4.0));  // e3
  CHECK(dbl.fir_co == doctest::Approx(1.0 / 4.0));  // c1 of 4 covers

  config.mode = Mode::naive;
  const auto nve = evaluate_protocol(samples, pool, config);
  CHECK(nve.tir == doctest::Approx(3.0 / 6.0));     // e0, e1, e4 of all 6
  CHECK(nve.fir_en == doctest::Approx(1.0 / 6.0));  // e3
  CHECK(nve.fir_co == doctest::Approx(2.0 / 4.0));  // c1 and c2
}

TEST_CASE("all-cover sets report only the cover identification rate") {
  auto pool = structured_pool(10, 15);
  std::vector<Sample> samples;
  for (int i = 0; i < 5; ++i) {
    Sample s;
    s.score = 0.8;
    s.decoded = i < 2 ? pool.key_message(static_cast<std::size_t>(i)) : far_from(pool);
    s.is_encoded = false;
    samples.push_back(s);
  }
  DetectionConfig config;
  const auto rates = evaluate_protocol(samples, pool, config);
  CHECK(rates.tir == 0.0);
  CHECK(rates.fir_en == 0.0);
  CHECK(rates.fir_co == doctest::Approx(0.4));
}

TEST_CASE("perfect decoder and discriminator give ideal rates") {
  auto pool = structured_pool(10, 16);
  std::vector<Sample> samples;
  for (int i = 0; i < 8; ++i) {
    Sample s;
    s.is_encoded = i < 4;
    s.score = s.is_encoded ? 0.99 : 0.01;
    s.true_key = s.is_encoded ? i : -1;
    s.decoded = s.is_encoded ? pool.key_message(static_cast<std::size_t>(i))
                             : far_from(pool);
    samples.push_back(s);
  }
  DetectionConfig config;
  for (const auto mode : {Mode::doubled, Mode::naive}) {
    config.mode = mode;
    const auto rates = evaluate_protocol(samples, pool, config);
    CHECK(rates.tir == 1.0);
    CHECK(rates.fir_en == 0.0);
    CHECK(rates.fir_co == 0.0);
  }
}

TEST_CASE("true key extraction requires the unique best agreement") {
  // two identical... not allowed (keys distinct); instead the decoded message
  // sits equally close to two pool keys, so neither is uniquely best
  KeyPool pool;
  pool.msg_len = 32;
  pool.keys = {0x0000000FULL, 0x000000F0ULL};  // both 28 bits from zero
  Sample s;
  s.is_encoded = true;
  s.true_key = 0;
  s.score = 0.9;
  s.decoded = BitMessage(32);  // all zeros: agreement 28 with both keys
  DetectionConfig config;
  config.t = 28;
  const auto rates = evaluate_protocol({s}, pool, config);
  CHECK(rates.tir == 0.0);     // tie, not uniquely best
  CHECK(rates.fir_en == 1.0);  // a suspect existed but not the true key alone
}

TEST_CASE("gated FIR_co never exceeds the naive FIR_co") {
  Rng rng(17);
  auto pool = structured_pool(20, 18);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Sample> samples;
    for (int i = 0; i < 40; ++i) {
      Sample s;
      s.is_encoded = rng.bernoulli(0.5);
      s.score = rng.next_double();
      s.true_key = s.is_encoded ? static_cast<long>(rng.next_below(20)) : -1;
      const double roll = rng.next_double();
      if (roll < 0.4)
        s.decoded = pool.key_message(rng.next_below(20));
      else
        s.decoded = far_from(pool);
      samples.push_back(s);
    }
    DetectionConfig config;
    config.t = 29;
    config.t_f = rng.next_double();
    config.mode = Mode::doubled;
    const double gated = evaluate_protocol(samples, pool, config).fir_co;
    config.mode = Mode::naive;
    const double naive = evaluate_protocol(samples, pool, config).fir_co;
    CHECK(gated <= naive + 1e-12);
  }
}

TEST_CASE("threshold sweep trades a little TIR for much lower FIR_co") {
  auto pool = structured_pool(40, 19);
  const auto bad = far_from(pool);
  std::vector<Sample> samples;
  // encoded: 60 at 0.95 (50 true / 10 bad), 40 at 0.6 (38 true / 2 bad)
  for (int i = 0; i < 60; ++i) {
    Sample s;
    s.is_encoded = true;
    s.score = 0.95;
    s.true_key = i % 40;
    s.decoded = i < 50 ? pool.key_message(static_cast<std::size_t>(i % 40)) : bad;
    samples.push_back(s);
  }
  for (int i = 0; i < 40; ++i) {
    Sample s;
    s.is_encoded = true;
    s.score = 0.6;
    s.true_key = i % 40;
    s.decoded = i < 38 ? pool.key_message(static_cast<std::size_t>(i % 40)) : bad;
    samples.push_back(s);
  }
  // covers: 20 at 0.7 decoding straight into pool keys, 80 at 0.1 harmless
  for (int i = 0; i < 100; ++i) {
    Sample s;
    s.is_encoded = false;
    s.score = i < 20 ? 0.7 : 0.1;
    s.decoded = i < 20 ? pool.key_message(static_cast<std::size_t>(i % 40)) : bad;
    samples.push_back(s);
  }

  const auto sweep = sweep_threshold(samples, pool, 29);
  CHECK_FALSE(sweep.degenerate);
  // best TIR (0.88) lives below 0.6 but carries FIR_co = 0.2; the rule takes
  // the within-5% candidate that zeroes FIR_co instead
  double best_tir = 0.0;
  for (const auto& row : sweep.table) best_tir = std::max(best_tir, row.tir);
  CHECK(best_tir == doctest::Approx(0.88));
  CHECK(sweep.chosen_t_f >= 0.7);
  CHECK(sweep.chosen_t_f < 0.95);
  // the chosen row: TIR 50/60 with zero cover identifications
  for (const auto& row : sweep.table)
    if (row.t_f == sweep.chosen_t_f) {
      CHECK(row.tir == doctest::Approx(50.0 / 60.0));
      CHECK(row.fir_co == 0.0);
    }
  // FIR_co is non-increasing in the threshold
  for (std::size_t i = 1; i < sweep.table.size(); ++i)
    CHECK(sweep.table[i].fir_co <= sweep.table[i - 1].fir_co + 1e-12);
}

TEST_CASE("threshold sweep separates perfectly separable scores") {
  auto pool = structured_pool(10, 20);
  std::vector<Sample> samples;
  for (int i = 0; i < 20; ++i) {
    Sample s;
    s.is_encoded = i < 10;
    s.score = s.is_encoded ? 0.8 : 0.2;
    s.true_key = s.is_encoded ? i : -1;
    s.decoded = s.is_encoded ? pool.key_message(static_cast<std::size_t>(i))
                             : far_from(pool);
    samples.push_back(s);
  }
  const auto sweep = sweep_threshold(samples, pool, 29);
  CHECK(sweep.chosen_t_f >= 0.2);
  CHECK(sweep.chosen_t_f < 0.8);
  for (const auto& row : sweep.table)
    if (row.t_f == sweep.chosen_t_f) {
      CHECK(row.tir == 1.0);
      CHECK(row.fir_co == 0.0);
    }
}

TEST_CASE("degenerate score distributions are flagged") {
  auto pool = structured_pool(5, 21);
  std::vector<Sample> samples(4);
  for (auto& s : samples) {
    s.score = 0.5;
    s.decoded = far_from(pool);
  }
  samples[0].is_encoded = true;
  samples[0].true_key = 0;
  const auto sweep = sweep_threshold(samples, pool, 29);
  CHECK(sweep.degenerate);
  CHECK(sweep.chosen_t_f == 0.5);
}
