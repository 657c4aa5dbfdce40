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
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "support/oracles.hpp"
#include "wm/training.hpp"
#include "wm/transparency.hpp"

using namespace wm;
using namespace wm::training;

namespace {

msgcodec::SpreadGrid random_grid(int g, int ch, std::uint64_t seed) {
  Rng rng(seed);
  msgcodec::SpreadGrid grid(g, g, ch);
  for (auto& v : grid.v) v = rng.next_float();
  return grid;
}

std::string slurp(const std::string& path) {
  std::ifstream is(path);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

TrainConfig tiny_config(const std::string& out_dir, std::uint64_t seed = 5) {
  TrainConfig c;
  c.dataset = "synthetic:12";
  c.train_count = 12;
  c.test_count = 4;
  c.image_size = 32;
  c.batch = 6;
  c.epochs = 1;
  c.disc_epochs = 1;
  c.codec.msg_len = 8;
  c.codec.slice_len = 2;
  c.codec.width = c.codec.height = 32;
  c.attacks = {"none", "dropout:p=0.5"};
  c.seed = seed;
  c.out_dir = out_dir;
  return c;
}

}  // namespace

TEST_CASE("encoder mse matches the closed forms") {
  Rng rng(1);
  Tensor a(2, 3, 8, 8), b(2, 3, 8, 8);
  for (auto& v : a.v) v = rng.next_float();
  b = a;
  CHECK(loss_encoder_mse(a, b) == 0.0);
  for (auto& v : b.v) v += 0.1f;
  CHECK(loss_encoder_mse(a, b) == doctest::Approx(0.01).epsilon(1e-5));
  // PSNR consistency: 10 log10(1/mse)
  Tensor c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.v[i] = a.v[i] * 0.9f + 0.05f;
  const double mse = loss_encoder_mse(a, c);
  CHECK(transparency::psnr(a, c) ==
        doctest::Approx(10.0 * std::log10(1.0 / mse)).epsilon(1e-9));
}

TEST_CASE("losses equal their scalar-loop references on random inputs") {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor a(1, 3, 6, 7), b(1, 3, 6, 7);
    for (auto& v : a.v) v = rng.next_float();
    for (auto& v : b.v) v = rng.next_float();
    CHECK(std::abs(loss_encoder_mse(a, b) - oracles::mse_reference(a, b)) <= 1e-6);

    const auto truth = random_grid(4, 6, 100 + static_cast<std::uint64_t>(trial));
    const auto decoded = random_grid(4, 6, 200 + static_cast<std::uint64_t>(trial));
    LossWeights w;
    w.lambda_mean = 0.5 + rng.next_double();
    w.lambda_var = rng.next_double();
    CHECK(std::abs(loss_decoder_meanvar(truth, decoded, w) -
                   oracles::meanvar_reference(truth, decoded, w.lambda_mean,
                                              w.lambda_var)) <= 1e-6);

    std::vector<float> sc(5), se(5);
    for (auto& s : sc) s = rng.next_float();
    for (auto& s : se) s = rng.next_float();
    CHECK(std::abs(loss_adversarial(se) - oracles::adversarial_reference(se)) <= 1e-6);
    CHECK(std::abs(loss_discriminator(sc, se) -
                   oracles::discriminator_reference(sc, se)) <= 1e-6);
  }
}

TEST_CASE("mean-variance loss follows the hand-computed single cell") {
  msgcodec::SpreadGrid truth(1, 1, 6), decoded(1, 1, 6);
  for (int c = 0; c < 6; ++c) {
    truth.at(0, 0, c) = 1.0f;
    decoded.at(0, 0, c) = 0.8f;  // |diff| = 0.2 on every channel
  }
  LossWeights w;  // lambda_mean = lambda_var = 1
  CHECK(loss_decoder_meanvar(truth, decoded, w) ==
        doctest::Approx(0.2).epsilon(1e-6));
  CHECK(loss_decoder_meanvar(truth, truth, w) == 0.0);
}

TEST_CASE("masked cells do not contribute to the decoder loss") {
  auto truth = random_grid(4, 6, 7);
  for (auto& v : truth.v) v = v > 0.5f ? 1.0f : 0.0f;
  auto decoded = random_grid(4, 6, 8);
  LossWeights w;
  const double full = loss_decoder_meanvar(truth, decoded, w);
  // invalidate one cell and plant garbage there
  truth.valid[5] = 0;
  for (int c = 0; c < 6; ++c) truth.v[5 * 6 + c] = 1.0f;
  for (int c = 0; c < 6; ++c) decoded.v[5 * 6 + c] = 0.0f;
  const double masked = loss_decoder_meanvar(truth, decoded, w);
  CHECK(masked != doctest::Approx(full));
  CHECK(std::abs(masked - oracles::meanvar_reference(truth, decoded, 1.0, 1.0)) <= 1e-9);
  const auto grad = loss_decoder_meanvar_grad(truth, decoded, w);
  for (int c = 0; c < 6; ++c) CHECK(grad.v[5 * 6 + c] == 0.0f);
}

TEST_CASE("adversarial losses match the quoted values and signs") {
  CHECK(loss_adversarial({0.5f}) == doctest::Approx(std::log(0.5)).epsilon(1e-9));
  // both scores at their clamped extremes: L_F ~ 2 log(eps)
  const double lf = loss_discriminator({1e-6f}, {1.0f - 1e-6f});
  CHECK(lf == doctest::Approx(2.0 * std::log(1e-6)).epsilon(1e-3));
  // dL_F/ds_en < 0 everywhere inside (0,1)
  for (const float s : {0.1f, 0.3f, 0.5f, 0.7f, 0.9f}) {
    std::vector<float> gco, gen;
    loss_discriminator_grad({0.5f}, {s}, &gco, &gen);
    CHECK(gen[0] < 0.0f);
    const float h = 1e-4f;
    const double fd = (loss_discriminator({0.5f}, {s + h}) -
                       loss_discriminator({0.5f}, {s - h})) /
                      (2.0 * h);
    CHECK(fd < 0.0);
    CHECK(std::abs(fd - gen[0]) <= 1e-3 * std::abs(fd));
  }
}

TEST_CASE("loss gradients match central finite differences") {
  Rng rng(9);
  // encoder mse wrt the encoded image
  Tensor en(1, 3, 5, 6), co(1, 3, 5, 6);
  for (auto& v : en.v) v = rng.next_float();
  for (auto& v : co.v) v = rng.next_float();
  const Tensor gmse = loss_encoder_mse_grad(en, co);
  for (int t = 0; t < 20; ++t) {
    const std::size_t i = static_cast<std::size_t>(rng.next_below(en.size()));
    const double fd = oracles::central_difference(
        [&] { return loss_encoder_mse(en, co); }, en.v, i, 1e-3f);
    CHECK(std::abs(fd - gmse.v[i]) <= 1e-3 * std::max(1e-3, std::abs(fd)));
  }

  // mean-variance loss wrt the decoded grid
  auto truth = random_grid(4, 6, 10);
  for (auto& v : truth.v) v = v > 0.5f ? 1.0f : 0.0f;
  auto decoded = random_grid(4, 6, 11);
  LossWeights w;
  w.lambda_mean = 0.8;
  w.lambda_var = 1.3;
  const auto ggrid = loss_decoder_meanvar_grad(truth, decoded, w);
  for (int t = 0; t < 20; ++t) {
    const std::size_t i = static_cast<std::size_t>(rng.next_below(decoded.v.size()));
    const double fd = oracles::central_difference(
        [&] { return loss_decoder_meanvar(truth, decoded, w); }, decoded.v, i,
        1e-4f);
    CHECK(std::abs(fd - ggrid.v[i]) <= 1e-3 * std::max(1.0, std::abs(fd)));
  }

  // adversarial terms wrt the scores
  std::vector<float> se(4), sc(4);
  for (auto& s : se) s = 0.2f + 0.6f * rng.next_float();
  for (auto& s : sc) s = 0.2f + 0.6f * rng.next_float();
  const auto gadv = loss_adversarial_grad(se);
  std::vector<float> gco, gen;
  loss_discriminator_grad(sc, se, &gco, &gen);
  for (std::size_t i = 0; i < se.size(); ++i) {
    const double fd_adv = oracles::central_difference(
        [&] { return loss_adversarial(se); }, se, i, 1e-4f);
    CHECK(std::abs(fd_adv - gadv[i]) <= 1e-3 * std::abs(fd_adv));
    const double fd_en = oracles::central_difference(
        [&] { return loss_discriminator(sc, se); }, se, i, 1e-4f);
    CHECK(std::abs(fd_en - gen[i]) <= 1e-3 * std::abs(fd_en));
    const double fd_co = oracles::central_difference(
        [&] { return loss_discriminator(sc, se); }, sc, i, 1e-4f);
    CHECK(std::abs(fd_co - gco[i]) <= 1e-3 * std::abs(fd_co));
  }
}

TEST_CASE("attack scheduling is uniform over one epoch") {
  const int kinds = 3, steps = 3000;
  std::vector<int> counts(kinds, 0);
  for (int s = 0; s < steps; ++s) counts[static_cast<std::size_t>(
      schedule_attack(42, 0, s, kinds))]++;
  const double expected = steps / static_cast<double>(kinds);
  const double sigma = std::sqrt(steps * (1.0 / kinds) * (1.0 - 1.0 / kinds));
  for (const int c : counts) CHECK(std::abs(c - expected) <= 3.0 * sigma);
}

TEST_CASE("config json round trips") {
  TrainConfig c = tiny_config("x");
  c.weights.lambda_e = 3.0;
  c.weights.lambda_f = 0.01;
  c.prenoise_p = 0.3;
  const TrainConfig d = TrainConfig::from_json(c.to_json());
  CHECK(d.dataset == c.dataset);
  CHECK(d.batch == c.batch);
  CHECK(d.codec.msg_len == 8);
  CHECK(d.weights.lambda_e == doctest::Approx(3.0));
  CHECK(d.weights.lambda_f == doctest::Approx(0.01));
  CHECK(d.prenoise_p == doctest::Approx(0.3));
  CHECK(d.attacks == c.attacks);
}

TEST_CASE("config validation rejects bad setups") {
  auto c = tiny_config("x");
  c.train_count = 3;  // less than one batch
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = tiny_config("x");
  c.attacks = {"melt:p=1"};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = tiny_config("x");
  c.image_size = 64;  // codec W/H stays 32
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("zero loss weights leave the codec networks untouched") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "wmkit_zero_lambda";
  fs::remove_all(dir);

  auto config = tiny_config((dir / "run").string(), 21);
  config.disc_epochs = 0;
  config.weights.lambda_e = 0.0;
  config.weights.lambda_f = 0.0;
  config.weights.lambda_mean = 0.0;
  config.weights.lambda_var = 0.0;
  const auto summary = train_pipeline(config);

  nn::ModelBundle trained(config.codec.block, config.codec.tuple_bits());
  nn::load_checkpoint(summary.checkpoint_path, trained);
  nn::ModelBundle fresh(config.codec.block, config.codec.tuple_bits());
  fresh.init(config.seed);

  auto pt = trained.codec_params();
  auto pf = fresh.codec_params();
  REQUIRE(pt.size() == pf.size());
  for (std::size_t i = 0; i < pt.size(); ++i)
    for (std::size_t j = 0; j < pt[i].count; ++j)
      REQUIRE(pt[i].value[j] == pf[i].value[j]);

  // with the decoder loss enabled the same run does move the codec weights
  auto config2 = tiny_config((dir / "run2").string(), 21);
  config2.disc_epochs = 0;
  config2.weights.lambda_e = 0.0;
  config2.weights.lambda_f = 0.0;
  const auto summary2 = train_pipeline(config2);
  nn::ModelBundle trained2(config.codec.block, config.codec.tuple_bits());
  nn::load_checkpoint(summary2.checkpoint_path, trained2);
  auto pt2 = trained2.codec_params();
  bool moved = false;
  for (std::size_t i = 0; i < pt2.size() && !moved; ++i)
    for (std::size_t j = 0; j < pt2[i].count; ++j)
      if (pt2[i].value[j] != pf[i].value[j]) {
        moved = true;
        break;
      }
  CHECK(moved);
  fs::remove_all(dir);
}

TEST_CASE("phase two trains only the discriminator") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "wmkit_phase2";
  fs::remove_all(dir);

  auto phase1 = tiny_config((dir / "p1").string(), 33);
  phase1.disc_epochs = 0;
  phase1.checkpoint_every = 1;
  const auto s1 = train_pipeline(phase1);

  auto both = tiny_config((dir / "p2").string(), 33);
  both.disc_epochs = 2;
  both.checkpoint_every = 1;
  const auto s2 = train_pipeline(both);

  nn::ModelBundle after1(phase1.codec.block, phase1.codec.tuple_bits());
  nn::load_checkpoint(s1.checkpoint_path, after1);
  nn::ModelBundle after2(both.codec.block, both.codec.tuple_bits());
  nn::load_checkpoint(s2.checkpoint_path, after2);

  // adapter/encoder/decoder weights and BN buffers are bitwise frozen
  auto p1 = after1.codec_params();
  auto p2 = after2.codec_params();
  for (std::size_t i = 0; i < p1.size(); ++i)
    for (std::size_t j = 0; j < p1[i].count; ++j)
      REQUIRE(p1[i].value[j] == p2[i].value[j]);
  std::vector<nn::BufferRef> b1, b2;
  after1.adapter.collect_buffers(b1);
  after1.encoder.collect_buffers(b1);
  after1.decoder.collect_buffers(b1);
  after2.adapter.collect_buffers(b2);
  after2.encoder.collect_buffers(b2);
  after2.decoder.collect_buffers(b2);
  for (std::size_t i = 0; i < b1.size(); ++i)
    for (std::size_t j = 0; j < b1[i].count; ++j)
      REQUIRE(b1[i].value[j] == b2[i].value[j]);

  // while the discriminator moved
  std::vector<nn::ParamRef> d1, d2;
  after1.discriminator.collect_params(d1);
  after2.discriminator.collect_params(d2);
  bool moved = false;
  for (std::size_t i = 0; i < d1.size() && !moved; ++i)
    for (std::size_t j = 0; j < d1[i].count; ++j)
      if (d1[i].value[j] != d2[i].value[j]) {
        moved = true;
        break;
      }
  CHECK(moved);
  fs::remove_all(dir);
}

TEST_CASE("resume reproduces the uninterrupted run") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "wmkit_resume";
  fs::remove_all(dir);

  auto full = tiny_config((dir / "full").string(), 44);
  full.epochs = 2;
  full.disc_epochs = 0;
  full.checkpoint_every = 1;
  const auto sfull = train_pipeline(full);

  auto resumed = tiny_config((dir / "resumed").string(), 44);
  resumed.epochs = 2;
  resumed.disc_epochs = 0;
  const auto sres = train_pipeline(
      resumed, (fs::path(full.out_dir) / "checkpoint_epoch1.wmck").string());

  nn::ModelBundle a(full.codec.block, full.codec.tuple_bits());
  nn::load_checkpoint(sfull.checkpoint_path, a);
  nn::ModelBundle b(full.codec.block, full.codec.tuple_bits());
  nn::load_checkpoint(sres.checkpoint_path, b);
  auto pa = a.params();
  auto pb = b.params();
  for (std::size_t i = 0; i < pa.size(); ++i)
    for (std::size_t j = 0; j < pa[i].count; ++j)
      REQUIRE(pa[i].value[j] == pb[i].value[j]);

  // the resumed epoch's metrics row matches the uninterrupted run's
  const std::string full_csv = slurp(sfull.metrics_path);
  const std::string res_csv = slurp(sres.metrics_path);
  const auto last_line = [](const std::string& text) {
    auto end = text.find_last_not_of('\n');
    auto start = text.rfind('\n', end);
    return text.substr(start + 1, end - start);
  };
  CHECK(last_line(full_csv) == last_line(res_csv));
  fs::remove_all(dir);
}

TEST_CASE("the prenoiser trains through the same pipeline") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "wmkit_prenoise";
  fs::remove_all(dir);
  auto config = tiny_config((dir / "run").string(), 66);
  config.prenoise_p = 0.3;
  config.disc_epochs = 0;
  const auto summary = train_pipeline(config);
  CHECK(fs::exists(summary.checkpoint_path));
  CHECK(summary.final_eval.bit_accuracy.count("none") == 1);
  fs::remove_all(dir);
}

TEST_CASE("identical seeds give identical runs, different seeds differ") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "wmkit_det";
  fs::remove_all(dir);
  auto c1 = tiny_config((dir / "a").string(), 55);
  auto c2 = tiny_config((dir / "b").string(), 55);
  const auto s1 = train_pipeline(c1);
  const auto s2 = train_pipeline(c2);
  auto strip_config = [](std::string text) {
    return text.substr(text.find('\n') + 1);  // out_dir differs in the header
  };
  CHECK(strip_config(slurp(s1.metrics_path)) == strip_config(slurp(s2.metrics_path)));

  auto c3 = tiny_config((dir / "c").string(), 56);
  const auto s3 = train_pipeline(c3);
  CHECK(strip_config(slurp(s1.metrics_path)) != strip_config(slurp(s3.metrics_path)));
  fs::remove_all(dir);
}
