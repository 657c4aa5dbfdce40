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

#include "wm/training.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "wm/identification.hpp"
#include "wm/image.hpp"
#include "wm/transparency.hpp"

namespace wm::training {

namespace {

constexpr double kScoreEps = 1e-6;

inline double clamp_score(double s) {
  return std::min(1.0 - kScoreEps, std::max(kScoreEps, s));
}

}  // namespace

void TrainConfig::validate() const {
  codec.validate();
  if (batch < 1 || epochs < 0 || disc_epochs < 0)
    throw std::invalid_argument("train config: bad batch/epoch counts");
  if (train_count < batch)
    throw std::invalid_argument("train config: need at least one full batch (" +
                                std::to_string(train_count) + " images, batch " +
                                std::to_string(batch) + ")");
  if (image_size != codec.width || image_size != codec.height)
    throw std::invalid_argument(
        "train config: image_size must match the codec W/H");
  if (attacks.empty())
    throw std::invalid_argument("train config: enable at least one attack");
  for (const auto& a : attacks) attacks::AttackSpec::parse(a);
  if (prenoise_p < 0.0 || prenoise_p > 1.0)
    throw std::invalid_argument("train config: prenoise_p must be in [0,1]");
}

std::string TrainConfig::to_json() const {
  nlohmann::json j;
  j["dataset"] = dataset;
  j["train_count"] = train_count;
  j["test_count"] = test_count;
  j["image_size"] = image_size;
  j["batch"] = batch;
  j["epochs"] = epochs;
  j["disc_epochs"] = disc_epochs;
  j["lr"] = lr;
  j["prenoise_p"] = prenoise_p;
  j["attacks"] = attacks;
  j["codec"] = {{"L", codec.msg_len}, {"k", codec.slice_len},
                {"b", codec.block},   {"n", codec.votes},
                {"W", codec.width},   {"H", codec.height},
                {"seed", codec.seed}};
  j["weights"] = {{"lambda_e", weights.lambda_e},
                  {"lambda_f", weights.lambda_f},
                  {"lambda_mean", weights.lambda_mean},
                  {"lambda_var", weights.lambda_var}};
  j["seed"] = seed;
  j["out_dir"] = out_dir;
  j["checkpoint_every"] = checkpoint_every;
  return j.dump();
}

TrainConfig TrainConfig::from_json(const std::string& json) {
  const nlohmann::json j = nlohmann::json::parse(json);
  TrainConfig c;
  c.dataset = j.value("dataset", c.dataset);
  c.train_count = j.value("train_count", c.train_count);
  c.test_count = j.value("test_count", c.test_count);
  c.image_size = j.value("image_size", c.image_size);
  c.batch = j.value("batch", c.batch);
  c.epochs = j.value("epochs", c.epochs);
  c.disc_epochs = j.value("disc_epochs", c.disc_epochs);
  c.lr = j.value("lr", c.lr);
  c.prenoise_p = j.value("prenoise_p", c.prenoise_p);
  if (j.contains("attacks")) c.attacks = j["attacks"].get<std::vector<std::string>>();
  if (j.contains("codec")) {
    const auto& k = j["codec"];
    c.codec.msg_len = k.value("L", c.codec.msg_len);
    c.codec.slice_len = k.value("k", c.codec.slice_len);
    c.codec.block = k.value("b", c.codec.block);
    c.codec.votes = k.value("n", c.codec.votes);
    c.codec.width = k.value("W", c.codec.width);
    c.codec.height = k.value("H", c.codec.height);
    c.codec.seed = k.value("seed", c.codec.seed);
  }
  if (j.contains("weights")) {
    const auto& w = j["weights"];
    c.weights.lambda_e = w.value("lambda_e", c.weights.lambda_e);
    c.weights.lambda_f = w.value("lambda_f", c.weights.lambda_f);
    c.weights.lambda_mean = w.value("lambda_mean", c.weights.lambda_mean);
    c.weights.lambda_var = w.value("lambda_var", c.weights.lambda_var);
  }
  c.seed = j.value("seed", c.seed);
  c.out_dir = j.value("out_dir", c.out_dir);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  return c;
}

// ---- losses -------------------------------------------------------------------

double loss_encoder_mse(const Tensor& encoded, const Tensor& cover) {
  require_same_shape(encoded, cover, "loss_encoder_mse");
  double s = 0.0;
  for (std::size_t i = 0; i < encoded.size(); ++i) {
    const double d = static_cast<double>(encoded.v[i]) - cover.v[i];
    s += d * d;
  }
  return s / static_cast<double>(encoded.size());
}

Tensor loss_encoder_mse_grad(const Tensor& encoded, const Tensor& cover) {
  require_same_shape(encoded, cover, "loss_encoder_mse");
  Tensor g = Tensor::like(encoded);
  const float scale = 2.0f / static_cast<float>(encoded.size());
  for (std::size_t i = 0; i < encoded.size(); ++i)
    g.v[i] = scale * (encoded.v[i] - cover.v[i]);
  return g;
}

double loss_decoder_meanvar(const msgcodec::SpreadGrid& truth,
                            const msgcodec::SpreadGrid& decoded,
                            const LossWeights& weights) {
  if (truth.gw != decoded.gw || truth.gh != decoded.gh || truth.ch != decoded.ch)
    throw std::invalid_argument("loss_decoder_meanvar: grid shape mismatch");
  const int k = truth.ch;
  double total = 0.0;
  int valid = 0;
  for (std::size_t cell = 0; cell < truth.cells(); ++cell) {
    if (!truth.valid[cell]) continue;
    ++valid;
    const float* a = truth.v.data() + cell * k;
    const float* b = decoded.v.data() + cell * k;
    double mean = 0.0;
    for (int j = 0; j < k; ++j) mean += std::abs(a[j] - b[j]);
    mean /= k;
    double var = 0.0;
    for (int j = 0; j < k; ++j) {
      const double d = std::abs(a[j] - b[j]) - mean;
      var += d * d;
    }
    var /= k;
    total += weights.lambda_mean * mean + weights.lambda_var * var;
  }
  return valid > 0 ? total / valid : 0.0;
}

msgcodec::SpreadGrid loss_decoder_meanvar_grad(
    const msgcodec::SpreadGrid& truth, const msgcodec::SpreadGrid& decoded,
    const LossWeights& weights) {
  if (truth.gw != decoded.gw || truth.gh != decoded.gh || truth.ch != decoded.ch)
    throw std::invalid_argument("loss_decoder_meanvar: grid shape mismatch");
  const int k = truth.ch;
  msgcodec::SpreadGrid g(decoded.gw, decoded.gh, decoded.ch);
  const int valid = truth.valid_count();
  if (valid == 0) return g;
  const double cell_scale = 1.0 / valid;
  for (std::size_t cell = 0; cell < truth.cells(); ++cell) {
    if (!truth.valid[cell]) continue;
    const float* a = truth.v.data() + cell * k;
    const float* b = decoded.v.data() + cell * k;
    double mean = 0.0;
    for (int j = 0; j < k; ++j) mean += std::abs(a[j] - b[j]);
    mean /= k;
    float* dst = g.v.data() + cell * k;
    for (int j = 0; j < k; ++j) {
      const double e = std::abs(a[j] - b[j]);
      // d|x|/dx is taken as 0 at the kink
      const double sgn = b[j] > a[j] ? 1.0 : (b[j] < a[j] ? -1.0 : 0.0);
      const double de = weights.lambda_mean / k +
                        weights.lambda_var * 2.0 / k * (e - mean);
      dst[j] = static_cast<float>(cell_scale * de * sgn);
    }
  }
  return g;
}

double loss_adversarial(const std::vector<float>& scores_encoded) {
  double s = 0.0;
  for (const float v : scores_encoded) s += std::log(clamp_score(v));
  return s / static_cast<double>(scores_encoded.size());
}

std::vector<float> loss_adversarial_grad(
    const std::vector<float>& scores_encoded) {
  std::vector<float> g(scores_encoded.size());
  const double inv = 1.0 / static_cast<double>(scores_encoded.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double s = clamp_score(scores_encoded[i]);
    const bool saturated = scores_encoded[i] < kScoreEps ||
                           scores_encoded[i] > 1.0 - kScoreEps;
    g[i] = saturated ? 0.0f : static_cast<float>(inv / s);
  }
  return g;
}

double loss_discriminator(const std::vector<float>& scores_cover,
                          const std::vector<float>& scores_encoded) {
  if (scores_cover.size() != scores_encoded.size())
    throw std::invalid_argument("loss_discriminator: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < scores_cover.size(); ++i)
    s += std::log(clamp_score(scores_cover[i])) +
         std::log(1.0 - clamp_score(scores_encoded[i]));
  return s / static_cast<double>(scores_cover.size());
}

void loss_discriminator_grad(const std::vector<float>& scores_cover,
                             const std::vector<float>& scores_encoded,
                             std::vector<float>* gcover,
                             std::vector<float>* gencoded) {
  const double inv = 1.0 / static_cast<double>(scores_cover.size());
  gcover->assign(scores_cover.size(), 0.0f);
  gencoded->assign(scores_encoded.size(), 0.0f);
  for (std::size_t i = 0; i < scores_cover.size(); ++i) {
    if (scores_cover[i] > kScoreEps && scores_cover[i] < 1.0 - kScoreEps)
      (*gcover)[i] = static_cast<float>(inv / clamp_score(scores_cover[i]));
    if (scores_encoded[i] > kScoreEps && scores_encoded[i] < 1.0 - kScoreEps)
      (*gencoded)[i] =
          static_cast<float>(-inv / (1.0 - clamp_score(scores_encoded[i])));
  }
}

// ---- pipeline helpers -----------------------------------------------------------

int schedule_attack(std::uint64_t seed, int epoch, int step, int kinds) {
  Rng rng(mix_seed(seed, 0x7363686564ULL, static_cast<std::uint64_t>(epoch),
                   static_cast<std::uint64_t>(step)));
  return static_cast<int>(rng.next_below(static_cast<std::uint64_t>(kinds)));
}

namespace {

Tensor stack_images(const std::vector<Tensor>& images,
                    const std::vector<int>& indices) {
  const Tensor& first = images[static_cast<std::size_t>(indices[0])];
  Tensor out = Tensor::uninit(static_cast<int>(indices.size()), first.c,
                              first.h, first.w);
  for (std::size_t i = 0; i < indices.size(); ++i)
    out.set_slice(static_cast<int>(i), images[static_cast<std::size_t>(indices[i])]);
  return out;
}

void write_grid_into(Tensor& batch, int index, const msgcodec::SpreadGrid& g) {
  for (int c = 0; c < g.ch; ++c) {
    float* plane = batch.plane(index, c);
    for (int y = 0; y < g.gh; ++y)
      for (int x = 0; x < g.gw; ++x)
        plane[static_cast<std::size_t>(y) * g.gw + x] = g.at(y, x, c);
  }
}

struct NoisedBatch {
  Tensor encoded;
  Tensor cover;
  std::vector<msgcodec::SpreadGrid> grids;
  std::vector<attacks::Realization> pre;   // empty when the prenoiser is off
  std::vector<attacks::Realization> main;
};

NoisedBatch noise_batch(const Tensor& encoded, const Tensor& cover,
                        const std::vector<msgcodec::SpreadGrid>& grids,
                        const attacks::AttackSpec& spec, double prenoise_p,
                        std::uint64_t seed) {
  NoisedBatch out;
  const int n = encoded.n;
  std::vector<Tensor> en_imgs, co_imgs;
  en_imgs.reserve(static_cast<std::size_t>(n));
  co_imgs.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Tensor en = encoded.slice(i);
    Tensor co = cover.slice(i);
    msgcodec::SpreadGrid grid = grids[static_cast<std::size_t>(i)];
    if (prenoise_p > 0.0) {
      auto pre = attacks::prenoise(en, co, grid, prenoise_p,
                                   mix_seed(seed, 0x707265ULL, i));
      en = std::move(pre.encoded);
      grid = std::move(pre.grid);
      out.pre.push_back(pre.meta);
    }
    auto res = attacks::apply_attack(en, co, grid, spec,
                                     mix_seed(seed, 0x6d61696eULL, i));
    out.main.push_back(res.meta);
    out.grids.push_back(std::move(res.grid));
    en_imgs.push_back(std::move(res.encoded));
    co_imgs.push_back(std::move(res.cover));
  }
  out.encoded = Tensor::uninit(n, en_imgs[0].c, en_imgs[0].h, en_imgs[0].w);
  out.cover = Tensor::uninit(n, co_imgs[0].c, co_imgs[0].h, co_imgs[0].w);
  for (int i = 0; i < n; ++i) {
    out.encoded.set_slice(i, en_imgs[static_cast<std::size_t>(i)]);
    out.cover.set_slice(i, co_imgs[static_cast<std::size_t>(i)]);
  }
  return out;
}

std::string csv_label(const std::string& attack) {
  std::string out = attack;
  std::replace(out.begin(), out.end(), ',', ';');
  return out;
}

std::string format_metric(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

EvalResult evaluate_bundle(nn::ModelBundle& models,
                           const std::vector<Tensor>& test_images,
                           const std::vector<attacks::AttackSpec>& specs,
                           const msgcodec::SpreadParams& codec,
                           std::uint64_t seed) {
  EvalResult result;
  if (test_images.empty()) throw std::invalid_argument("evaluate: no images");
  std::map<std::string, double> acc_sum;
  for (const auto& s : specs) acc_sum[s.to_string()] = 0.0;
  double psnr[3] = {0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < test_images.size(); ++i) {
    const Tensor& cover = test_images[i];
    Rng mrng(mix_seed(seed, 0x6576616c6d7367ULL, i));
    const auto message = msgcodec::BitMessage::random(codec.msg_len, mrng);
    msgcodec::SpreadParams params = codec;
    params.seed = mix_seed(seed, 0x6576616c6c6179ULL, i);
    const auto prop = msgcodec::propagate(message, params);

    Tensor adapted = models.adapter.forward(prop.ext, false);
    Tensor encoded = models.encoder.forward(cover, adapted, false);
    clamp01(encoded);

    const auto triple = transparency::psnr_per_channel(encoded, cover);
    for (int c = 0; c < 3; ++c) psnr[c] += triple[static_cast<std::size_t>(c)];

    int k = 0;
    for (const auto& spec : specs) {
      const auto res = attacks::apply_attack(
          encoded, cover, prop.grid, spec,
          mix_seed(seed, 0x6576616c61746bULL, i, static_cast<std::uint64_t>(k)));
      const Tensor soft = models.decoder.forward(res.encoded, false);
      auto grid = msgcodec::grid_from_tensor(soft);
      grid.valid = res.grid.valid;  // calibrated cells only
      const auto translated = msgcodec::translate(grid, params);
      acc_sum[spec.to_string()] +=
          identification::bit_accuracy(message, translated.message);
      ++k;
    }
  }
  const double inv = 1.0 / static_cast<double>(test_images.size());
  for (auto& [name, sum] : acc_sum) result.bit_accuracy[name] = sum * inv;
  result.psnr_y = psnr[0] * inv;
  result.psnr_cb = psnr[2] * inv;
  result.psnr_cr = psnr[1] * inv;
  return result;
}

Tensor embed_image(nn::ModelBundle& models, const Tensor& cover_ycrcb,
                   const msgcodec::BitMessage& message,
                   const msgcodec::SpreadParams& codec) {
  const auto prop = msgcodec::propagate(message, codec);
  Tensor adapted = models.adapter.forward(prop.ext, false);
  Tensor encoded = models.encoder.forward(cover_ycrcb, adapted, false);
  clamp01(encoded);
  return encoded;
}

msgcodec::SpreadGrid decode_image(nn::ModelBundle& models,
                                  const Tensor& image_ycrcb) {
  return msgcodec::grid_from_tensor(models.decoder.forward(image_ycrcb, false));
}

float discriminator_score(nn::ModelBundle& models, const Tensor& image_ycrcb) {
  return models.discriminator.forward(image_ycrcb, false)[0];
}

// ---- train_pipeline ---------------------------------------------------------------

TrainSummary train_pipeline(const TrainConfig& config,
                            const std::string& resume_from) {
  config.validate();
#if defined(__GLIBC__)
  // keep the large activation buffers inside the arena so freed blocks are
  // reused instead of being re-mapped (and re-zeroed) by the kernel
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  namespace fs = std::filesystem;
  fs::create_directories(config.out_dir);

  std::vector<attacks::AttackSpec> specs;
  for (const auto& a : config.attacks)
    specs.push_back(attacks::AttackSpec::parse(a));

  // Train and test sets are disjoint: synthetic corpora use independent
  // generator streams, directories are split by file order.
  std::vector<Tensor> train_images, test_images;
  if (config.dataset.rfind("synthetic", 0) == 0) {
    train_images = img::load_dataset(
        "synthetic:" + std::to_string(config.train_count), config.image_size,
        mix_seed(config.seed, 0x747261696eULL));
    test_images = img::load_dataset(
        "synthetic:" + std::to_string(config.test_count), config.image_size,
        mix_seed(config.seed, 0x74657374ULL));
  } else {
    auto all = img::load_dataset(config.dataset, config.image_size, 0,
                                 config.train_count + config.test_count);
    if (static_cast<int>(all.size()) < config.train_count + config.test_count)
      throw std::runtime_error(
          "dataset '" + config.dataset + "' provides " +
          std::to_string(all.size()) + " images, need " +
          std::to_string(config.train_count + config.test_count) +
          " for disjoint train/test sets");
    test_images.assign(all.begin() + config.train_count,
                       all.begin() + config.train_count + config.test_count);
    all.resize(static_cast<std::size_t>(config.train_count));
    train_images = std::move(all);
  }
  if (static_cast<int>(train_images.size()) < config.batch)
    throw std::runtime_error("dataset provides too few training images");

  nn::ModelBundle models(config.codec.block, config.codec.tuple_bits());
  models.init(config.seed);
  nn::Adam opt_codec(config.lr);
  nn::Adam opt_disc(config.lr);
  const auto codec_params = models.codec_params();
  const auto disc_params = models.discriminator_params();
  opt_codec.attach(codec_params);
  opt_disc.attach(disc_params);

  std::int64_t start_epoch = 0;
  if (!resume_from.empty()) {
    const auto info = nn::load_checkpoint(resume_from, models, &opt_codec, &opt_disc);
    start_epoch = info.step;
  }

  const std::string config_json = config.to_json();
  const std::string metrics_path = config.out_dir + "/metrics.csv";
  std::ofstream csv(metrics_path, start_epoch == 0 ? std::ios::trunc : std::ios::app);
  if (!csv) throw std::runtime_error("cannot write metrics to " + metrics_path);
  if (start_epoch == 0) {
    csv << "# config: " << config_json << "\n";
    csv << "phase,epoch,l_e,l_d,l_adv,l_f,psnr_y,psnr_cb,psnr_cr";
    for (const auto& s : specs) csv << ",acc_" << csv_label(s.to_string());
    csv << "\n";
  }

  const int steps_per_epoch = static_cast<int>(train_images.size()) / config.batch;
  const int total_epochs = config.epochs + config.disc_epochs;
  EvalResult last_eval;

  const auto emit_row = [&](int phase, std::int64_t epoch, double le, double ld,
                            double ladv, double lf) {
    last_eval = evaluate_bundle(models, test_images, specs, config.codec,
                                mix_seed(config.seed, 0x6576616cULL));
    csv << phase << "," << epoch << "," << format_metric(le) << ","
        << format_metric(ld) << "," << format_metric(ladv) << ","
        << format_metric(lf) << "," << format_metric(last_eval.psnr_y) << ","
        << format_metric(last_eval.psnr_cb) << ","
        << format_metric(last_eval.psnr_cr);
    for (const auto& s : specs)
      csv << "," << format_metric(last_eval.bit_accuracy.at(s.to_string()));
    csv << "\n";
    csv.flush();
  };

  const auto save_epoch_checkpoint = [&](std::int64_t epoch, bool final) {
    const std::string path =
        final ? config.out_dir + "/checkpoint.wmck"
              : config.out_dir + "/checkpoint_epoch" + std::to_string(epoch) + ".wmck";
    nn::save_checkpoint(path, models, config_json, epoch, &opt_codec, &opt_disc);
    return path;
  };

  std::string checkpoint_path;
  for (std::int64_t epoch = start_epoch; epoch < total_epochs; ++epoch) {
    const bool phase1 = epoch < config.epochs;
    Rng order_rng(mix_seed(config.seed, 0x6f72646572ULL,
                           static_cast<std::uint64_t>(epoch)));
    std::vector<int> order(train_images.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    order_rng.shuffle(order);

    double sum_le = 0.0, sum_ld = 0.0, sum_ladv = 0.0, sum_lf = 0.0;
    for (int step = 0; step < steps_per_epoch; ++step) {
      const std::uint64_t step_seed =
          mix_seed(config.seed, 0x73746570ULL, static_cast<std::uint64_t>(epoch),
                   static_cast<std::uint64_t>(step));
      std::vector<int> batch_idx(order.begin() + step * config.batch,
                                 order.begin() + (step + 1) * config.batch);
      Tensor cover = stack_images(train_images, batch_idx);

      // per-image message + spreading
      std::vector<msgcodec::SpreadGrid> grids;
      Tensor ext = Tensor::uninit(config.batch, config.codec.tuple_bits(),
                                  config.image_size, config.image_size);
      std::vector<msgcodec::BitMessage> messages;
      for (int i = 0; i < config.batch; ++i) {
        Rng mrng(mix_seed(step_seed, 0x6d7367ULL, i));
        messages.push_back(msgcodec::BitMessage::random(config.codec.msg_len, mrng));
        msgcodec::SpreadParams params = config.codec;
        params.seed = mix_seed(step_seed, 0x6c6179ULL, i);
        auto prop = msgcodec::propagate(messages.back(), params);
        grids.push_back(std::move(prop.grid));
        for (int c = 0; c < ext.c; ++c)
          std::copy(prop.ext.plane(0, c), prop.ext.plane(0, c) + ext.plane_size(),
                    ext.plane(i, c));
      }

      const auto& spec = specs[static_cast<std::size_t>(schedule_attack(
          config.seed, static_cast<int>(epoch), step, static_cast<int>(specs.size())))];

      if (phase1) {
        opt_codec.zero_grads(codec_params);
        opt_disc.zero_grads(disc_params);

        Tensor adapted = models.adapter.forward(ext, true, true);
        Tensor encoded = models.encoder.forward(cover, adapted, true, true);
        NoisedBatch noised = noise_batch(encoded, cover, grids, spec,
                                         config.prenoise_p, step_seed);

        // decoder loss over calibrated grids
        Tensor soft = models.decoder.forward(noised.encoded, true, true);
        Tensor gsoft = Tensor::uninit_like(soft);
        double l_d = 0.0;
        for (int i = 0; i < config.batch; ++i) {
          const auto decoded = msgcodec::grid_from_tensor(soft, i);
          l_d += loss_decoder_meanvar(noised.grids[static_cast<std::size_t>(i)],
                                      decoded, config.weights);
          auto ggrid = loss_decoder_meanvar_grad(
              noised.grids[static_cast<std::size_t>(i)], decoded, config.weights);
          const float scale = 1.0f / static_cast<float>(config.batch);
          for (auto& v : ggrid.v) v *= scale;
          write_grid_into(gsoft, i, ggrid);
        }
        l_d /= config.batch;

        // discriminator scores on the paired noised batch
        Tensor disc_in = Tensor::uninit(2 * config.batch, 3,
                                        noised.encoded.h, noised.encoded.w);
        for (int i = 0; i < config.batch; ++i) {
          disc_in.set_slice(i, noised.cover.slice(i));
          disc_in.set_slice(config.batch + i, noised.encoded.slice(i));
        }
        const auto scores = models.discriminator.forward(disc_in, true, true);
        std::vector<float> scores_co(scores.begin(), scores.begin() + config.batch);
        std::vector<float> scores_en(scores.begin() + config.batch, scores.end());

        const double l_e = loss_encoder_mse(encoded, cover);
        const double l_adv = loss_adversarial(scores_en);
        const double l_f = loss_discriminator(scores_co, scores_en);
        if (!std::isfinite(l_e) || !std::isfinite(l_d) || !std::isfinite(l_adv) ||
            !std::isfinite(l_f))
          throw std::runtime_error(
              "non-finite loss at epoch " + std::to_string(epoch) + " step " +
              std::to_string(step) + " (l_e=" + std::to_string(l_e) +
              ", l_d=" + std::to_string(l_d) + ", l_adv=" + std::to_string(l_adv) +
              ", l_f=" + std::to_string(l_f) + ")");

        // gradients into the attacked encoded image
        Tensor g_attacked = models.decoder.backward(gsoft);
        if (config.weights.lambda_f != 0.0) {
          auto gadv = loss_adversarial_grad(scores_en);
          std::vector<float> gscores(scores.size(), 0.0f);
          for (int i = 0; i < config.batch; ++i)
            gscores[static_cast<std::size_t>(config.batch + i)] =
                static_cast<float>(config.weights.lambda_f) *
                gadv[static_cast<std::size_t>(i)];
          Tensor gdisc_in = models.discriminator.backward(gscores, false, true);
          for (int i = 0; i < config.batch; ++i) {
            const Tensor slice = gdisc_in.slice(config.batch + i);
            const std::size_t len = slice.size();
            float* dst = g_attacked.plane(i, 0);
            for (std::size_t p = 0; p < len; ++p) dst[p] += slice.v[p];
          }
        }

        // through the noiser, per image
        Tensor g_encoded = Tensor::uninit_like(encoded);
        for (int i = 0; i < config.batch; ++i) {
          Tensor g = attacks::attack_backward(
              g_attacked.slice(i), noised.main[static_cast<std::size_t>(i)]);
          if (!noised.pre.empty())
            g = attacks::attack_backward(g, noised.pre[static_cast<std::size_t>(i)]);
          g_encoded.set_slice(i, g);
        }
        if (config.weights.lambda_e != 0.0) {
          Tensor gmse = loss_encoder_mse_grad(encoded, cover);
          for (std::size_t p = 0; p < g_encoded.size(); ++p)
            g_encoded.v[p] += static_cast<float>(config.weights.lambda_e) * gmse.v[p];
        }

        auto enc_grads = models.encoder.backward(g_encoded);
        models.adapter.backward(enc_grads.adapted);
        opt_codec.step(codec_params);

        // discriminator update on its own objective (minimized)
        std::vector<float> gco, gen;
        loss_discriminator_grad(scores_co, scores_en, &gco, &gen);
        std::vector<float> gscores_f(scores.size());
        for (int i = 0; i < config.batch; ++i) {
          gscores_f[static_cast<std::size_t>(i)] = gco[static_cast<std::size_t>(i)];
          gscores_f[static_cast<std::size_t>(config.batch + i)] =
              gen[static_cast<std::size_t>(i)];
        }
        models.discriminator.backward(gscores_f, true, false);
        opt_disc.step(disc_params);

        sum_le += l_e;
        sum_ld += l_d;
        sum_ladv += l_adv;
        sum_lf += l_f;
      } else {
        // phase 2: codec frozen in eval mode, discriminator keeps training
        opt_disc.zero_grads(disc_params);
        Tensor adapted = models.adapter.forward(ext, false);
        Tensor encoded = models.encoder.forward(cover, adapted, false);
        NoisedBatch noised = noise_batch(encoded, cover, grids, spec,
                                         config.prenoise_p, step_seed);
        Tensor disc_in = Tensor(2 * config.batch, 3, noised.encoded.h, noised.encoded.w);
        for (int i = 0; i < config.batch; ++i) {
          disc_in.set_slice(i, noised.cover.slice(i));
          disc_in.set_slice(config.batch + i, noised.encoded.slice(i));
        }
        const auto scores = models.discriminator.forward(disc_in, true, true);
        std::vector<float> scores_co(scores.begin(), scores.begin() + config.batch);
        std::vector<float> scores_en(scores.begin() + config.batch, scores.end());
        const double l_f = loss_discriminator(scores_co, scores_en);
        if (!std::isfinite(l_f))
          throw std::runtime_error("non-finite discriminator loss at epoch " +
                                   std::to_string(epoch));
        std::vector<float> gco, gen;
        loss_discriminator_grad(scores_co, scores_en, &gco, &gen);
        std::vector<float> gscores_f(scores.size());
        for (int i = 0; i < config.batch; ++i) {
          gscores_f[static_cast<std::size_t>(i)] = gco[static_cast<std::size_t>(i)];
          gscores_f[static_cast<std::size_t>(config.batch + i)] =
              gen[static_cast<std::size_t>(i)];
        }
        models.discriminator.backward(gscores_f, true, false);
        opt_disc.step(disc_params);
        sum_lf += l_f;
      }
    }
    models.drop_state();

    emit_row(phase1 ? 1 : 2, epoch, sum_le / steps_per_epoch,
             sum_ld / steps_per_epoch, sum_ladv / steps_per_epoch,
             sum_lf / steps_per_epoch);
    if (config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0 &&
        epoch + 1 < total_epochs)
      save_epoch_checkpoint(epoch + 1, false);
    checkpoint_path = save_epoch_checkpoint(epoch + 1, true);
  }

  if (checkpoint_path.empty())
    checkpoint_path = save_epoch_checkpoint(total_epochs, true);
  if (start_epoch >= total_epochs)
    last_eval = evaluate_bundle(models, test_images, specs, config.codec,
                                mix_seed(config.seed, 0x6576616cULL));

  TrainSummary summary;
  summary.final_eval = last_eval;
  summary.checkpoint_path = checkpoint_path;
  summary.metrics_path = metrics_path;
  summary.epochs_done = total_epochs;
  return summary;
}

}  // namespace wm::training
