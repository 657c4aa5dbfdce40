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

#ifndef WM_IDENTIFICATION_HPP_
#define WM_IDENTIFICATION_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "wm/msgcodec.hpp"

namespace wm::identification {

// Fraction of agreeing positions.
double bit_accuracy(const msgcodec::BitMessage& a,
                    const msgcodec::BitMessage& b);

// Database of distinct L-bit user keys, packed for fast Hamming matching
// (L <= 64).
struct KeyPool {
  int msg_len = 32;
  std::vector<std::uint64_t> keys;

  static KeyPool random(std::size_t size, int msg_len, std::uint64_t seed);
  static KeyPool load(const std::string& path, int msg_len);
  void save(const std::string& path) const;

  msgcodec::BitMessage key_message(std::size_t index) const;
  static std::uint64_t pack(const msgcodec::BitMessage& m);
};

// Indices of all keys sharing at least t bits with the extracted message.
std::vector<std::size_t> match_keys(const msgcodec::BitMessage& extracted,
                                    const KeyPool& pool, int t);

// Probability that a uniformly random extraction matches (>= t bits) at
// least one of pool_size random keys: 1 - (1 - P(match one))^pool_size,
// evaluated in log space so huge pools do not underflow.
double collision_probability(int msg_len, int t, double pool_size);

enum class Mode { naive, doubled };

struct DetectionConfig {
  int t = 29;          // bit-agreement threshold
  double t_f = 0.5;    // discriminator score threshold (strict >)
  Mode mode = Mode::doubled;
};

// F(I) > t_f, strict as defined.
bool classify(double score, double t_f);

enum class Category { TP, FP, TN, FN };
Category categorize(bool classified_watermarked, bool is_encoded);

// One evaluated image: the discriminator score, the decoded message, and the
// ground truth (cover images carry true_key < 0).
struct Sample {
  double score = 0.0;
  msgcodec::BitMessage decoded;
  bool is_encoded = false;
  long true_key = -1;  // index into the pool
};

struct ProtocolRates {
  double tir = 0.0;     // Pr(true key uniquely extracted | TP)
  double fir_en = 0.0;  // Pr(some key matched but not the true one | TP)
  double fir_co = 0.0;  // Pr(cover identified as carrying some key)
  long tp = 0, fp = 0, tn = 0, fn = 0;
};

// The double protocol gates decoding behind the discriminator threshold; the
// naive protocol decodes every image. "True key extracted" requires the true
// key to be a suspect and the unique key of maximal agreement.
ProtocolRates evaluate_protocol(const std::vector<Sample>& samples,
                                const KeyPool& pool,
                                const DetectionConfig& config);

struct SweepRow {
  double t_f = 0.0;
  double tir = 0.0, fir_en = 0.0, fir_co = 0.0;
};

struct SweepResult {
  double chosen_t_f = 0.0;
  std::vector<SweepRow> table;
  bool degenerate = false;  // single-valued score distribution
};

// Sweeps t_f over a uniform grid plus every observed score, then picks the
// threshold: best TIR first, and any threshold whose TIR is within 0.05 of
// the best wins if it lowers FIR_co; remaining ties break toward larger t_f.
SweepResult sweep_threshold(const std::vector<Sample>& samples,
                            const KeyPool& pool, int t);

}  // namespace wm::identification

#endif  // WM_IDENTIFICATION_HPP_
