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

#ifndef WM_TRAINING_HPP_
#define WM_TRAINING_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "wm/attacks.hpp"
#include "wm/msgcodec.hpp"
#include "wm/networks.hpp"
#include "wm/tensor.hpp"

namespace wm::training {

struct LossWeights {
  double lambda_e = 2.4;
  double lambda_f = 0.05;
  double lambda_mean = 1.0;
  double lambda_var = 1.0;
};

struct TrainConfig {
  std::string dataset = "synthetic:500";
  int train_count = 500;
  int test_count = 100;
  int image_size = 128;
  int batch = 12;
  int epochs = 10;
  int disc_epochs = 2;
  double lr = 0.001;
  double prenoise_p = 0.0;  // 0 disables the prenoiser
  std::vector<std::string> attacks = {"none", "dropout:p=0.5", "jpeg:q=50"};
  msgcodec::SpreadParams codec;
  LossWeights weights;
  std::uint64_t seed = 1;
  std::string out_dir = "run";
  int checkpoint_every = 0;  // epochs; 0 keeps only the final checkpoint

  void validate() const;
  std::string to_json() const;
  static TrainConfig from_json(const std::string& json);
};

// ---- losses -------------------------------------------------------------------
// Each loss has a closed-form gradient; the unit tests check both against
// scalar-loop references and central finite differences.

// Mean squared error over every element of the batch.
double loss_encoder_mse(const Tensor& encoded, const Tensor& cover);
Tensor loss_encoder_mse_grad(const Tensor& encoded, const Tensor& cover);

// Mean-variance grid loss: per valid cell, lambda_mean * mean(|M - M'|) +
// lambda_var * var(|M - M'|) over the k' channels, averaged over valid cells.
double loss_decoder_meanvar(const msgcodec::SpreadGrid& truth,
                            const msgcodec::SpreadGrid& decoded,
                            const LossWeights& weights);
msgcodec::SpreadGrid loss_decoder_meanvar_grad(
    const msgcodec::SpreadGrid& truth, const msgcodec::SpreadGrid& decoded,
    const LossWeights& weights);

// Adversarial terms; scores are clamped to [eps, 1-eps] with eps = 1e-6.
// The encoder minimizes log F(I'_en); the discriminator minimizes
// log F(I'_co) + log(1 - F(I'_en)), driving covers to 0 and encodes to 1.
double loss_adversarial(const std::vector<float>& scores_encoded);
std::vector<float> loss_adversarial_grad(const std::vector<float>& scores_encoded);
double loss_discriminator(const std::vector<float>& scores_cover,
                          const std::vector<float>& scores_encoded);
void loss_discriminator_grad(const std::vector<float>& scores_cover,
                             const std::vector<float>& scores_encoded,
                             std::vector<float>* gcover,
                             std::vector<float>* gencoded);

// ---- pipeline -----------------------------------------------------------------

// Uniform attack choice for one iteration, derived from the run seed.
int schedule_attack(std::uint64_t seed, int epoch, int step, int kinds);

struct EvalResult {
  std::map<std::string, double> bit_accuracy;  // by attack string
  double psnr_y = 0.0, psnr_cb = 0.0, psnr_cr = 0.0;
};

// Embeds seeded random messages into every test image, applies each attack,
// decodes, and reports mean bit accuracy per attack plus mean per-channel
// PSNR of the unattacked encoded images. Runs the networks in eval mode.
EvalResult evaluate_bundle(nn::ModelBundle& models,
                           const std::vector<Tensor>& test_images,
                           const std::vector<attacks::AttackSpec>& specs,
                           const msgcodec::SpreadParams& codec,
                           std::uint64_t seed);

struct TrainSummary {
  EvalResult final_eval;
  std::string checkpoint_path;
  std::string metrics_path;
  std::int64_t epochs_done = 0;
};

// Two-phase training: joint adapter/encoder/decoder training with an
// alternating discriminator update, then discriminator-only epochs with the
// codec frozen in eval mode. Emits metrics.csv and checkpoints under
// config.out_dir. `resume_from` continues a previous run at its epoch
// boundary.
TrainSummary train_pipeline(const TrainConfig& config,
                            const std::string& resume_from = "");

// Embedding/decoding helpers shared by the CLI and the evaluation protocol
// (eval mode, inference clamp applied).
Tensor embed_image(nn::ModelBundle& models, const Tensor& cover_ycrcb,
                   const msgcodec::BitMessage& message,
                   const msgcodec::SpreadParams& codec);
msgcodec::SpreadGrid decode_image(nn::ModelBundle& models,
                                  const Tensor& image_ycrcb);
float discriminator_score(nn::ModelBundle& models, const Tensor& image_ycrcb);

}  // namespace wm::training

#endif  // WM_TRAINING_HPP_
