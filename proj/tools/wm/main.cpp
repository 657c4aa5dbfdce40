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

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "wm/attacks.hpp"
#include "wm/config.hpp"
#include "wm/identification.hpp"
#include "wm/image.hpp"
#include "wm/msgcodec.hpp"
#include "wm/networks.hpp"
#include "wm/training.hpp"
#include "wm/transparency.hpp"

namespace {

using wm::Tensor;

struct LoadedBundle {
  std::unique_ptr<wm::nn::ModelBundle> models;
  wm::training::TrainConfig config;
};

LoadedBundle load_bundle(const std::string& checkpoint) {
  const auto info = wm::nn::peek_checkpoint(checkpoint);
  LoadedBundle out;
  out.config = wm::training::TrainConfig::from_json(info.config_json);
  out.models = std::make_unique<wm::nn::ModelBundle>(
      out.config.codec.block, out.config.codec.tuple_bits());
  wm::nn::load_checkpoint(checkpoint, *out.models);
  return out;
}

Tensor load_image_as_ycrcb(const std::string& path, int size) {
  Tensor rgb = wm::img::load_png_rgb(path);
  if (size > 0 && (rgb.h != size || rgb.w != size))
    rgb = wm::img::resize_linear(rgb, size, size);
  return wm::img::rgb_to_ycrcb(rgb);
}

void save_ycrcb_png(const std::string& path, const Tensor& ycrcb,
                    const std::string& meta) {
  wm::img::save_png_rgb(path, wm::img::ycrcb_to_rgb(ycrcb), meta);
}

std::vector<wm::attacks::AttackSpec> parse_attack_list(
    const std::vector<std::string>& items) {
  std::vector<wm::attacks::AttackSpec> out;
  for (const auto& s : items) out.push_back(wm::attacks::AttackSpec::parse(s));
  return out;
}

// Builds paired (encoded, cover) protocol samples for one attack: image i
// embeds pool key i, both images receive the same distortion realization.
struct ProtocolSamples {
  std::vector<wm::identification::Sample> samples;
  double bit_accuracy = 0.0;
};

ProtocolSamples build_protocol_samples(
    wm::nn::ModelBundle& models, const std::vector<Tensor>& covers,
    const wm::identification::KeyPool& pool,
    const wm::attacks::AttackSpec& spec,
    const wm::msgcodec::SpreadParams& codec, std::uint64_t seed) {
  ProtocolSamples out;
  for (std::size_t i = 0; i < covers.size(); ++i) {
    const auto message = pool.key_message(i % pool.keys.size());
    wm::msgcodec::SpreadParams params = codec;
    params.seed = wm::mix_seed(seed, 0x70726f746fULL, i);
    const auto prop = wm::msgcodec::propagate(message, params);
    Tensor adapted = models.adapter.forward(prop.ext, false);
    Tensor encoded = models.encoder.forward(covers[i], adapted, false);
    wm::clamp01(encoded);
    const auto res = wm::attacks::apply_attack(
        encoded, covers[i], prop.grid, spec, wm::mix_seed(seed, 0x7265616cULL, i));
    for (const bool is_encoded : {true, false}) {
      const Tensor& img = is_encoded ? res.encoded : res.cover;
      wm::identification::Sample s;
      s.is_encoded = is_encoded;
      s.true_key = is_encoded ? static_cast<long>(i % pool.keys.size()) : -1;
      s.score = models.discriminator.forward(img, false)[0];
      auto grid = wm::msgcodec::grid_from_tensor(models.decoder.forward(img, false));
      grid.valid = res.grid.valid;
      s.decoded = wm::msgcodec::translate(grid, params).message;
      if (is_encoded)
        out.bit_accuracy += wm::identification::bit_accuracy(message, s.decoded);
      out.samples.push_back(std::move(s));
    }
  }
  out.bit_accuracy /= static_cast<double>(covers.size());
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wmkit: trainable blind image watermarking toolkit"};
  app.require_subcommand(1);

  // ---- train ----------------------------------------------------------------
  auto* cmd_train = app.add_subcommand("train", "train the watermarking pipeline");
  std::string train_config_path, train_resume;
  std::map<std::string, std::string> train_overrides;
  std::vector<std::string> override_kv;
  cmd_train->add_option("--config", train_config_path, "key=value config file");
  cmd_train->add_option("--set", override_kv,
                        "override a config key, e.g. --set epochs=10");
  cmd_train->add_option("--resume", train_resume, "checkpoint to resume from");
  cmd_train->callback([&] {
    std::map<std::string, std::string> entries;
    if (!train_config_path.empty())
      entries = wm::config::parse_file(train_config_path);
    for (const auto& kv : override_kv) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos)
        throw CLI::ValidationError("--set expects key=value, got '" + kv + "'");
      entries[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    const auto config = wm::config::train_config_from(entries);
    const auto summary = wm::training::train_pipeline(config, train_resume);
    std::cout << "checkpoint: " << summary.checkpoint_path << "\n";
    std::cout << "metrics:    " << summary.metrics_path << "\n";
    std::printf("psnr Y/Cb/Cr: %.2f / %.2f / %.2f dB\n",
                summary.final_eval.psnr_y, summary.final_eval.psnr_cb,
                summary.final_eval.psnr_cr);
    for (const auto& [attack, acc] : summary.final_eval.bit_accuracy)
      std::printf("bit accuracy  %-24s %.4f\n", attack.c_str(), acc);
  });

  // ---- embed ----------------------------------------------------------------
  auto* cmd_embed = app.add_subcommand("embed", "embed a message into an image");
  std::string embed_image_path, embed_hex, embed_checkpoint, embed_out;
  double embed_blend = 1.0;
  cmd_embed->add_option("image", embed_image_path, "cover image (PNG)")->required();
  cmd_embed->add_option("--message", embed_hex, "message as hex (MSB first)")->required();
  cmd_embed->add_option("--checkpoint", embed_checkpoint, "trained model")->required();
  cmd_embed->add_option("--out", embed_out, "output PNG")->required();
  cmd_embed->add_option("--p-blend", embed_blend,
                        "Bernoulli transparency blend toward the cover (1 = off)");
  std::uint64_t embed_seed = 1;
  cmd_embed->add_option("--seed", embed_seed, "layout / blend seed");
  cmd_embed->callback([&] {
    auto bundle = load_bundle(embed_checkpoint);
    auto codec = bundle.config.codec;
    codec.seed = embed_seed;
    const auto message =
        wm::msgcodec::BitMessage::from_hex(embed_hex, codec.msg_len);
    if (embed_blend == 0.0) {
      // all-cover blend: emit the (resized) cover pixels untouched
      Tensor rgb = wm::img::load_png_rgb(embed_image_path);
      if (rgb.h != codec.height || rgb.w != codec.width)
        rgb = wm::img::resize_linear(rgb, codec.height, codec.width);
      wm::img::save_png_rgb(embed_out, rgb, "");
      std::printf("psnr Y/Cb/Cr: %.2f / %.2f / %.2f dB\n",
                  wm::transparency::kPsnrCap, wm::transparency::kPsnrCap,
                  wm::transparency::kPsnrCap);
      std::cout << "wrote " << embed_out << "\n";
      return;
    }
    const Tensor cover = load_image_as_ycrcb(embed_image_path, codec.width);
    Tensor encoded =
        wm::training::embed_image(*bundle.models, cover, message, codec);
    if (embed_blend < 1.0)
      encoded = wm::transparency::bernoulli_blend(encoded, cover, embed_blend,
                                                  wm::mix_seed(embed_seed, 0x626cULL));
    const auto triple = wm::transparency::psnr_per_channel(encoded, cover);
    nlohmann::json meta;
    meta["message"] = embed_hex;
    meta["seed"] = embed_seed;
    meta["p_blend"] = embed_blend;
    meta["config"] = nlohmann::json::parse(bundle.config.to_json());
    save_ycrcb_png(embed_out, encoded, meta.dump());
    std::printf("psnr Y/Cb/Cr: %.2f / %.2f / %.2f dB\n", triple[0], triple[2],
                triple[1]);
    std::cout << "wrote " << embed_out << "\n";
  });

  // ---- extract ---------------------------------------------------------------
  auto* cmd_extract = app.add_subcommand("extract", "extract the message");
  std::string extract_image_path, extract_checkpoint;
  std::uint64_t extract_seed = 1;
  bool extract_confidence = false;
  cmd_extract->add_option("image", extract_image_path, "image (PNG)")->required();
  cmd_extract->add_option("--checkpoint", extract_checkpoint)->required();
  cmd_extract->add_option("--seed", extract_seed, "unused; kept for symmetry");
  cmd_extract->add_flag("--confidence", extract_confidence,
                        "print per-slice confidences");
  cmd_extract->callback([&] {
    auto bundle = load_bundle(extract_checkpoint);
    const Tensor image = load_image_as_ycrcb(extract_image_path, 0);
    const auto grid = wm::training::decode_image(*bundle.models, image);
    const auto res = wm::msgcodec::translate(grid, bundle.config.codec);
    std::cout << res.message.to_hex() << "\n";
    if (extract_confidence) {
      double mean = 0.0;
      for (const double c : res.confidence) mean += c;
      mean /= static_cast<double>(res.confidence.size());
      std::printf("confidence mean %.4f\n", mean);
      for (std::size_t i = 0; i < res.confidence.size(); ++i)
        std::printf("slice %2zu  %.4f\n", i, res.confidence[i]);
    }
    if (res.low_redundancy)
      std::cerr << "warning: fewer cells than votes, low redundancy\n";
  });

  // ---- attack ----------------------------------------------------------------
  auto* cmd_attack = app.add_subcommand("attack", "apply a distortion to an image");
  std::string attack_image_path, attack_spec, attack_out, attack_cover;
  std::uint64_t attack_seed = 1;
  cmd_attack->add_option("image", attack_image_path, "input PNG")->required();
  cmd_attack->add_option("--spec", attack_spec,
                         "attack spec, e.g. crop:p=0.3 or jpeg:q=50")->required();
  cmd_attack->add_option("--out", attack_out, "output PNG")->required();
  cmd_attack->add_option("--cover", attack_cover,
                         "cover image (required for cropout/dropout)");
  cmd_attack->add_option("--seed", attack_seed);
  cmd_attack->callback([&] {
    const auto spec = wm::attacks::AttackSpec::parse(attack_spec);
    nlohmann::json meta;
    meta["attack"] = spec.to_string();
    meta["seed"] = attack_seed;
    if (spec.kind == wm::attacks::Kind::none) {
      // byte-preserving pass-through
      Tensor rgb = wm::img::load_png_rgb(attack_image_path);
      wm::img::save_png_rgb(attack_out, rgb, meta.dump());
      std::cout << "wrote " << attack_out << "\n";
      return;
    }
    const Tensor image = load_image_as_ycrcb(attack_image_path, 0);
    Tensor attacked;
    if (spec.kind == wm::attacks::Kind::cropout ||
        spec.kind == wm::attacks::Kind::dropout) {
      if (attack_cover.empty())
        throw CLI::ValidationError(spec.to_string() + " needs --cover");
      const Tensor cover = load_image_as_ycrcb(attack_cover, 0);
      wm::msgcodec::SpreadGrid dummy(1, 1, 1);
      attacked = wm::attacks::apply_attack(image, cover, dummy, spec, attack_seed)
                     .encoded;
    } else {
      const auto r =
          wm::attacks::sample_realization(spec, image.h, image.w, attack_seed);
      attacked = wm::attacks::apply_realization(image, r);
      wm::clamp01(attacked);
    }
    save_ycrcb_png(attack_out, attacked, meta.dump());
    std::cout << "wrote " << attack_out << "\n";
  });

  // ---- detect ----------------------------------------------------------------
  auto* cmd_detect = app.add_subcommand(
      "detect", "score an image with the watermark discriminator");
  std::string detect_image_path, detect_checkpoint;
  double detect_tf = 0.5;
  cmd_detect->add_option("image", detect_image_path)->required();
  cmd_detect->add_option("--checkpoint", detect_checkpoint)->required();
  cmd_detect->add_option("--t-f", detect_tf, "score threshold (strict >)");
  cmd_detect->callback([&] {
    auto bundle = load_bundle(detect_checkpoint);
    const Tensor image = load_image_as_ycrcb(detect_image_path, 0);
    const float score =
        wm::training::discriminator_score(*bundle.models, image);
    const bool wm_found = wm::identification::classify(score, detect_tf);
    std::printf("score %.6f\n", static_cast<double>(score));
    std::cout << (wm_found ? "watermarked" : "not watermarked") << "\n";
  });

  // ---- evaluate --------------------------------------------------------------
  auto* cmd_eval = app.add_subcommand(
      "evaluate", "bit-accuracy table plus naive/double TIR-FIR report");
  std::string eval_checkpoint, eval_images = "synthetic:64", eval_keypool,
              eval_out = "evaluation.json";
  int eval_count = 64, eval_t = 29;
  std::uint64_t eval_seed = 7, eval_pool_size = 1000000;
  std::vector<std::string> eval_attacks = {
      "none", "crop:p=0.3", "cropout:p=0.3", "dropout:p=0.5", "rotate:alpha=5",
      "gaussian:sigma=2", "gaussian:sigma=4", "subsample420",
      "resize:s=0.5,m=N", "resize:s=0.5,m=L", "jpeg:q=50"};
  cmd_eval->add_option("--checkpoint", eval_checkpoint)->required();
  cmd_eval->add_option("--images", eval_images, "dataset dir or synthetic:N");
  cmd_eval->add_option("--count", eval_count, "number of test images");
  cmd_eval->add_option("--attacks", eval_attacks, "attack spec strings");
  cmd_eval->add_option("--keypool", eval_keypool, "hex key file (one per line)");
  cmd_eval->add_option("--pool-size", eval_pool_size,
                       "random pool size when no key file is given");
  cmd_eval->add_option("--t", eval_t, "bit-agreement threshold");
  cmd_eval->add_option("--seed", eval_seed);
  cmd_eval->add_option("--out", eval_out, "JSON report path");
  cmd_eval->callback([&] {
    auto bundle = load_bundle(eval_checkpoint);
    const auto specs = parse_attack_list(eval_attacks);
    const auto covers = wm::img::load_dataset(eval_images, bundle.config.image_size,
                                              wm::mix_seed(eval_seed, 0x65ULL),
                                              eval_count);
    const auto pool =
        eval_keypool.empty()
            ? wm::identification::KeyPool::random(eval_pool_size,
                                                  bundle.config.codec.msg_len,
                                                  eval_seed)
            : wm::identification::KeyPool::load(eval_keypool,
                                                bundle.config.codec.msg_len);
    nlohmann::json report;
    report["config"] = nlohmann::json::parse(bundle.config.to_json());
    report["t"] = eval_t;
    report["pool_size"] = pool.keys.size();
    report["image_count"] = covers.size();
    for (const auto& spec : specs) {
      const auto ps = build_protocol_samples(*bundle.models, covers, pool, spec,
                                             bundle.config.codec, eval_seed);
      const auto sweep =
          wm::identification::sweep_threshold(ps.samples, pool, eval_t);
      wm::identification::DetectionConfig dc;
      dc.t = eval_t;
      dc.t_f = sweep.chosen_t_f;
      dc.mode = wm::identification::Mode::doubled;
      const auto dbl = wm::identification::evaluate_protocol(ps.samples, pool, dc);
      dc.mode = wm::identification::Mode::naive;
      const auto nve = wm::identification::evaluate_protocol(ps.samples, pool, dc);
      nlohmann::json row;
      row["bit_accuracy"] = ps.bit_accuracy;
      row["chosen_t_f"] = sweep.chosen_t_f;
      row["double"] = {{"tir", dbl.tir}, {"fir_en", dbl.fir_en}, {"fir_co", dbl.fir_co}};
      row["naive"] = {{"tir", nve.tir}, {"fir_en", nve.fir_en}, {"fir_co", nve.fir_co}};
      report["attacks"][spec.to_string()] = row;
      std::printf("%-24s acc %.4f | double TIR %.3f FIRen %.3f FIRco %.3f | "
                  "naive TIR %.3f FIRen %.3f FIRco %.3f\n",
                  spec.to_string().c_str(), ps.bit_accuracy, dbl.tir, dbl.fir_en,
                  dbl.fir_co, nve.tir, nve.fir_en, nve.fir_co);
    }
    std::ofstream os(eval_out);
    os << report.dump(2) << "\n";
    std::cout << "wrote " << eval_out << "\n";
  });

  // ---- sweep-threshold ----------------------------------------------------------
  auto* cmd_sweep = app.add_subcommand(
      "sweep-threshold", "sweep the discriminator threshold for one attack");
  std::string sw_checkpoint, sw_images = "synthetic:64", sw_attack = "jpeg:q=50",
              sw_out = "threshold_sweep.csv";
  int sw_count = 64, sw_t = 29;
  std::uint64_t sw_seed = 7, sw_pool_size = 1000000;
  cmd_sweep->add_option("--checkpoint", sw_checkpoint)->required();
  cmd_sweep->add_option("--images", sw_images);
  cmd_sweep->add_option("--count", sw_count);
  cmd_sweep->add_option("--attack", sw_attack);
  cmd_sweep->add_option("--pool-size", sw_pool_size);
  cmd_sweep->add_option("--t", sw_t);
  cmd_sweep->add_option("--seed", sw_seed);
  cmd_sweep->add_option("--out", sw_out, "CSV path");
  cmd_sweep->callback([&] {
    auto bundle = load_bundle(sw_checkpoint);
    const auto spec = wm::attacks::AttackSpec::parse(sw_attack);
    const auto covers = wm::img::load_dataset(sw_images, bundle.config.image_size,
                                              wm::mix_seed(sw_seed, 0x65ULL),
                                              sw_count);
    const auto pool = wm::identification::KeyPool::random(
        sw_pool_size, bundle.config.codec.msg_len, sw_seed);
    const auto ps = build_protocol_samples(*bundle.models, covers, pool, spec,
                                           bundle.config.codec, sw_seed);
    const auto sweep = wm::identification::sweep_threshold(ps.samples, pool, sw_t);
    std::ofstream os(sw_out);
    os << "# config: " << bundle.config.to_json() << "\n";
    os << "t_f,tir,fir_en,fir_co\n";
    for (const auto& row : sweep.table)
      os << row.t_f << "," << row.tir << "," << row.fir_en << "," << row.fir_co
         << "\n";
    std::printf("chosen t_f = %.4f%s\n", sweep.chosen_t_f,
                sweep.degenerate ? " (degenerate score distribution)" : "");
    std::cout << "wrote " << sw_out << "\n";
  });

  // ---- transparency-sweep ---------------------------------------------------------
  auto* cmd_tsweep = app.add_subcommand(
      "transparency-sweep", "PSNR / robustness trade-off over the blend p");
  std::string ts_checkpoint, ts_images = "synthetic:32", ts_out = "transparency.csv";
  int ts_count = 32;
  std::uint64_t ts_seed = 7;
  std::vector<double> ts_p = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  std::vector<std::string> ts_attacks = {"none", "dropout:p=0.5", "jpeg:q=50"};
  cmd_tsweep->add_option("--checkpoint", ts_checkpoint)->required();
  cmd_tsweep->add_option("--images", ts_images);
  cmd_tsweep->add_option("--count", ts_count);
  cmd_tsweep->add_option("--p", ts_p, "blend strengths to sweep");
  cmd_tsweep->add_option("--attacks", ts_attacks);
  cmd_tsweep->add_option("--seed", ts_seed);
  cmd_tsweep->add_option("--out", ts_out, "CSV path");
  cmd_tsweep->callback([&] {
    auto bundle = load_bundle(ts_checkpoint);
    const auto covers = wm::img::load_dataset(ts_images, bundle.config.image_size,
                                              wm::mix_seed(ts_seed, 0x65ULL),
                                              ts_count);
    const auto table = wm::transparency::transparency_sweep(
        *bundle.models, covers, ts_p, parse_attack_list(ts_attacks),
        bundle.config.codec, ts_seed);
    std::ofstream os(ts_out);
    os << table.to_csv(bundle.config.to_json());
    std::cout << "wrote " << ts_out << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
