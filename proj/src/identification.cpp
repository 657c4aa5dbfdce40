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

#include "wm/identification.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

namespace wm::identification {

double bit_accuracy(const msgcodec::BitMessage& a,
                    const msgcodec::BitMessage& b) {
  if (a.length() != b.length())
    throw std::invalid_argument("bit_accuracy: lengths differ (" +
                                std::to_string(a.length()) + " vs " +
                                std::to_string(b.length()) + ")");
  int same = 0;
  for (int i = 0; i < a.length(); ++i)
    same += a.bits[static_cast<std::size_t>(i)] == b.bits[static_cast<std::size_t>(i)];
  return static_cast<double>(same) / a.length();
}

std::uint64_t KeyPool::pack(const msgcodec::BitMessage& m) {
  if (m.length() > 64)
    throw std::invalid_argument("key pool supports up to 64-bit keys");
  std::uint64_t v = 0;
  for (const std::uint8_t b : m.bits) v = (v << 1) | b;
  return v;
}

msgcodec::BitMessage KeyPool::key_message(std::size_t index) const {
  msgcodec::BitMessage m(msg_len);
  const std::uint64_t v = keys[index];
  for (int i = 0; i < msg_len; ++i)
    m.bits[static_cast<std::size_t>(i)] =
        static_cast<std::uint8_t>((v >> (msg_len - 1 - i)) & 1);
  return m;
}

KeyPool KeyPool::random(std::size_t size, int msg_len, std::uint64_t seed) {
  if (msg_len <= 0 || msg_len > 64)
    throw std::invalid_argument("key pool supports 1..64 bit keys");
  KeyPool pool;
  pool.msg_len = msg_len;
  pool.keys.reserve(size);
  std::set<std::uint64_t> seen;
  Rng rng(mix_seed(seed, 0x6b6579706f6f6cULL));
  const std::uint64_t mask =
      msg_len == 64 ? ~0ULL : ((1ULL << msg_len) - 1);
  if (static_cast<double>(size) > std::ldexp(1.0, std::min(msg_len, 62)))
    throw std::invalid_argument("key pool larger than the key space");
  while (pool.keys.size() < size) {
    const std::uint64_t k = rng.next_u64() & mask;
    if (seen.insert(k).second) pool.keys.push_back(k);
  }
  return pool;
}

KeyPool KeyPool::load(const std::string& path, int msg_len) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open key pool '" + path + "'");
  KeyPool pool;
  pool.msg_len = msg_len;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    pool.keys.push_back(KeyPool::pack(msgcodec::BitMessage::from_hex(line, msg_len)));
  }
  if (pool.keys.empty())
    throw std::runtime_error("key pool '" + path + "' is empty");
  return pool;
}

void KeyPool::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write key pool '" + path + "'");
  for (std::size_t i = 0; i < keys.size(); ++i)
    os << key_message(i).to_hex() << "\n";
}

std::vector<std::size_t> match_keys(const msgcodec::BitMessage& extracted,
                                    const KeyPool& pool, int t) {
  if (pool.keys.empty()) throw std::invalid_argument("match_keys: empty pool");
  const std::uint64_t probe = KeyPool::pack(extracted);
  const int len = pool.msg_len;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < pool.keys.size(); ++i) {
    const int agree = len - std::popcount(probe ^ pool.keys[i]);
    if (agree >= t) out.push_back(i);
  }
  return out;
}

double collision_probability(int msg_len, int t, double pool_size) {
  if (t <= 0) return pool_size >= 1.0 ? 1.0 : 0.0;
  if (t > msg_len) return 0.0;
  // P(single key agrees on >= t of L fair bits) = sum_{i=t}^{L} C(L,i) / 2^L
  long double tail = 0.0L;
  long double binom = 1.0L;  // C(L, 0)
  for (int i = 0; i <= msg_len; ++i) {
    if (i >= t) tail += binom;
    binom = binom * (msg_len - i) / (i + 1);
  }
  const long double p_one = tail * std::pow(0.5L, msg_len);
  // 1 - (1 - p)^N without catastrophic underflow
  const long double log_miss = pool_size * std::log1p(-static_cast<double>(p_one));
  return static_cast<double>(-std::expm1(log_miss));
}

bool classify(double score, double t_f) { return score > t_f; }

Category categorize(bool classified_watermarked, bool is_encoded) {
  if (is_encoded) return classified_watermarked ? Category::TP : Category::FN;
  return classified_watermarked ? Category::FP : Category::TN;
}

namespace {

// True when the true key is a suspect and is the unique key with maximal
// agreement; "wrong" when some key matched but that condition failed.
struct Extraction {
  bool any = false;
  bool true_key = false;
};

Extraction extract_key(const Sample& s, const KeyPool& pool, int t) {
  Extraction e;
  const auto suspects = match_keys(s.decoded, pool, t);
  e.any = !suspects.empty();
  if (!e.any || s.true_key < 0) return e;
  const std::uint64_t probe = KeyPool::pack(s.decoded);
  int best = -1;
  std::size_t best_count = 0;
  bool best_is_true = false;
  for (const std::size_t idx : suspects) {
    const int agree = pool.msg_len - std::popcount(probe ^ pool.keys[idx]);
    if (agree > best) {
      best = agree;
      best_count = 1;
      best_is_true = idx == static_cast<std::size_t>(s.true_key);
    } else if (agree == best) {
      ++best_count;
      if (idx == static_cast<std::size_t>(s.true_key)) best_is_true = true;
    }
  }
  e.true_key = best_is_true && best_count == 1;
  return e;
}

}  // namespace

ProtocolRates evaluate_protocol(const std::vector<Sample>& samples,
                                const KeyPool& pool,
                                const DetectionConfig& config) {
  if (samples.empty())
    throw std::invalid_argument("evaluate_protocol: empty sample set");
  ProtocolRates rates;
  long covers = 0, covers_identified = 0;
  long tp_true = 0, tp_wrong = 0;
  for (const auto& s : samples) {
    const bool gated = config.mode == Mode::naive || classify(s.score, config.t_f);
    switch (categorize(classify(s.score, config.t_f), s.is_encoded)) {
      case Category::TP: ++rates.tp; break;
      case Category::FP: ++rates.fp; break;
      case Category::TN: ++rates.tn; break;
      case Category::FN: ++rates.fn; break;
    }
    if (s.is_encoded) {
      // The naive protocol has no gate: every encoded image counts as a
      // detection opportunity. The double protocol conditions on TP.
      if (!gated) continue;
      const Extraction e = extract_key(s, pool, config.t);
      if (e.true_key) ++tp_true;
      else if (e.any) ++tp_wrong;
    } else {
      ++covers;
      if (gated) {
        const Extraction e = extract_key(s, pool, config.t);
        if (e.any) ++covers_identified;
      }
    }
  }
  long tp_total = 0;
  if (config.mode == Mode::naive) {
    for (const auto& s : samples) tp_total += s.is_encoded ? 1 : 0;
  } else {
    tp_total = rates.tp;
  }
  rates.tir = tp_total > 0 ? static_cast<double>(tp_true) / tp_total : 0.0;
  rates.fir_en = tp_total > 0 ? static_cast<double>(tp_wrong) / tp_total : 0.0;
  rates.fir_co = covers > 0 ? static_cast<double>(covers_identified) / covers : 0.0;
  return rates;
}

SweepResult sweep_threshold(const std::vector<Sample>& samples,
                            const KeyPool& pool, int t) {
  if (samples.empty())
    throw std::invalid_argument("sweep_threshold: empty sample set");
  std::set<double> candidates;
  for (int i = 0; i <= 200; ++i) candidates.insert(i / 200.0);
  double score_min = samples.front().score, score_max = samples.front().score;
  for (const auto& s : samples) {
    candidates.insert(s.score);
    score_min = std::min(score_min, s.score);
    score_max = std::max(score_max, s.score);
  }

  SweepResult result;
  result.degenerate = score_min == score_max;
  DetectionConfig config;
  config.t = t;
  config.mode = Mode::doubled;
  for (const double t_f : candidates) {
    config.t_f = t_f;
    const auto rates = evaluate_protocol(samples, pool, config);
    result.table.push_back({t_f, rates.tir, rates.fir_en, rates.fir_co});
  }
  if (result.degenerate) {
    result.chosen_t_f = score_min;
    return result;
  }

  double best_tir = 0.0;
  for (const auto& row : result.table) best_tir = std::max(best_tir, row.tir);
  // Highest TIR wins, but anything within 0.05 of it may be chosen to lower
  // FIR_co; remaining ties resolve toward the larger threshold.
  const SweepRow* chosen = nullptr;
  for (const auto& row : result.table) {
    if (row.tir + 1e-12 < best_tir - 0.05) continue;
    if (!chosen || row.fir_co < chosen->fir_co - 1e-12 ||
        (std::abs(row.fir_co - chosen->fir_co) <= 1e-12 && row.t_f > chosen->t_f))
      chosen = &row;
  }
  result.chosen_t_f = chosen ? chosen->t_f : score_min;
  return result;
}

}  // namespace wm::identification
