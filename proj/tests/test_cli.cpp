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

// Drives the wmkit binary end to end through temporary files. Model quality
// is covered by the acceptance suite; these tests pin the command surface:
// exit codes, file formats, determinism and geometry.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "wm/image.hpp"
#include "wm/rng.hpp"

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int status = 0;
  std::string output;
};

CliResult run_cli(const std::string& args) {
  const std::string out_file =
      (fs::temp_directory_path() / "wmkit_cli_out.txt").string();
  const std::string cmd =
      std::string(WMKIT_BIN) + " " + args + " > " + out_file + " 2>&1";
  CliResult res;
  res.status = std::system(cmd.c_str());
  std::ifstream is(out_file);
  std::stringstream ss;
  ss << is.rdbuf();
  res.output = ss.str();
  return res;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

struct Workspace {
  fs::path dir;
  Workspace() {
    dir = fs::temp_directory_path() / "wmkit_cli_ws";
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Workspace() { fs::remove_all(dir); }
  std::string path(const std::string& name) const { return (dir / name).string(); }
};

// One tiny training run shared by the command tests.
const std::string& shared_checkpoint(const Workspace& ws) {
  static std::string path;
  if (path.empty()) {
    const auto res = run_cli(
        "train --set dataset=synthetic:12 --set train_count=12 --set "
        "test_count=4 --set image_size=32 --set batch=6 --set epochs=1 --set "
        "disc_epochs=0 --set msg_len=8 --set attacks=none --set seed=3 --set "
        "out_dir=" + ws.path("run"));
    REQUIRE_MESSAGE(res.status == 0, res.output);
    path = ws.path("run") + "/checkpoint.wmck";
    REQUIRE(fs::exists(path));
  }
  return path;
}

Workspace& workspace() {
  static Workspace ws;
  return ws;
}

}  // namespace

TEST_CASE("RGB <-> YCrCb round trips within one 8-bit step") {
  const wm::Tensor rgb = wm::img::synthesize_rgb(64, 64, 42);
  const wm::Tensor back = wm::img::ycrcb_to_rgb(wm::img::rgb_to_ycrcb(rgb));
  double worst = 0.0;
  for (std::size_t i = 0; i < rgb.size(); ++i)
    worst = std::max(worst, std::abs(static_cast<double>(rgb.v[i]) - back.v[i]));
  CHECK(worst <= 1.0 / 255.0);
}

TEST_CASE("train writes a checkpoint and a metrics csv") {
  auto& ws = workspace();
  const auto& ckpt = shared_checkpoint(ws);
  CHECK(fs::exists(ckpt));
  const std::string csv = slurp(ws.path("run") + "/metrics.csv");
  CHECK(csv.find("# config:") == 0);
  CHECK(csv.find("acc_none") != std::string::npos);
}

TEST_CASE("training runs are reproducible per seed") {
  auto& ws = workspace();
  const std::string common =
      "train --set dataset=synthetic:12 --set train_count=12 --set "
      "test_count=4 --set image_size=32 --set batch=6 --set epochs=1 --set "
      "disc_epochs=0 --set msg_len=8 --set attacks=none --set seed=9 --set ";
  REQUIRE(run_cli(common + "out_dir=" + ws.path("det_a")).status == 0);
  REQUIRE(run_cli(common + "out_dir=" + ws.path("det_b")).status == 0);
  const auto strip = [](std::string text) {
    return text.substr(text.find('\n') + 1);  // header embeds out_dir
  };
  CHECK(strip(slurp(ws.path("det_a") + "/metrics.csv")) ==
        strip(slurp(ws.path("det_b") + "/metrics.csv")));
}

TEST_CASE("unknown config keys fail with a named diagnostic") {
  const auto res = run_cli("train --set epoch=5");
  CHECK(res.status != 0);
  CHECK(res.output.find("epoch") != std::string::npos);
}

TEST_CASE("a config file drives training like flags do") {
  auto& ws = workspace();
  {
    std::ofstream os(ws.path("train.cfg"));
    os << "# desk-scale smoke settings\n"
       << "dataset = synthetic:12\n"
       << "train_count = 12\ntest_count = 4\nimage_size = 32\nbatch = 6\n"
       << "epochs = 1\ndisc_epochs = 0\nmsg_len = 8\nattacks = none\n"
       << "seed = 9\nout_dir = " << ws.path("cfg_run") << "\n";
  }
  const auto res = run_cli("train --config " + ws.path("train.cfg"));
  CHECK(res.status == 0);
  CHECK(fs::exists(ws.path("cfg_run") + "/checkpoint.wmck"));
}

TEST_CASE("embed, extract and detect run against a checkpoint") {
  auto& ws = workspace();
  const auto& ckpt = shared_checkpoint(ws);
  wm::img::save_png_rgb(ws.path("cover.png"),
                        wm::img::synthesize_rgb(32, 32, 77));

  const auto embed = run_cli("embed " + ws.path("cover.png") +
                             " --message ab --checkpoint " + ckpt + " --out " +
                             ws.path("encoded.png") + " --seed 5");
  REQUIRE_MESSAGE(embed.status == 0, embed.output);
  CHECK(embed.output.find("psnr") != std::string::npos);
  REQUIRE(fs::exists(ws.path("encoded.png")));
  // the artifact carries its configuration
  CHECK(wm::img::read_png_meta(ws.path("encoded.png")).find("\"message\":\"ab\"") !=
        std::string::npos);

  const auto extract = run_cli("extract " + ws.path("encoded.png") +
                               " --checkpoint " + ckpt + " --confidence");
  REQUIRE_MESSAGE(extract.status == 0, extract.output);
  CHECK(extract.output.substr(0, 2).size() == 2);  // 2 hex chars for 8 bits
  CHECK(extract.output.find("confidence mean") != std::string::npos);

  const auto detect = run_cli("detect " + ws.path("encoded.png") +
                              " --checkpoint " + ckpt);
  REQUIRE_MESSAGE(detect.status == 0, detect.output);
  CHECK(detect.output.find("score") != std::string::npos);
  CHECK((detect.output.find("watermarked") != std::string::npos));
}

TEST_CASE("embed rejects malformed messages") {
  auto& ws = workspace();
  const auto& ckpt = shared_checkpoint(ws);
  wm::img::save_png_rgb(ws.path("c2.png"), wm::img::synthesize_rgb(32, 32, 78));
  const auto res = run_cli("embed " + ws.path("c2.png") +
                           " --message abcd --checkpoint " + ckpt + " --out " +
                           ws.path("x.png"));
  CHECK(res.status != 0);  // 16 bits for an 8-bit model
  CHECK(res.output.find("hex") != std::string::npos);
}

TEST_CASE("embed with a zero blend returns the cover pixels") {
  auto& ws = workspace();
  const auto& ckpt = shared_checkpoint(ws);
  wm::img::save_png_rgb(ws.path("c3.png"), wm::img::synthesize_rgb(32, 32, 79));
  const auto res = run_cli("embed " + ws.path("c3.png") +
                           " --message 7f --checkpoint " + ckpt + " --out " +
                           ws.path("c3_out.png") + " --p-blend 0");
  REQUIRE_MESSAGE(res.status == 0, res.output);
  CHECK(wm::img::load_png_rgb(ws.path("c3.png")).v ==
        wm::img::load_png_rgb(ws.path("c3_out.png")).v);
}

TEST_CASE("the none attack round-trips pixels exactly") {
  auto& ws = workspace();
  wm::img::save_png_rgb(ws.path("a0.png"), wm::img::synthesize_rgb(64, 48, 80));
  const auto res = run_cli("attack " + ws.path("a0.png") +
                           " --spec none --out " + ws.path("a0_out.png"));
  REQUIRE_MESSAGE(res.status == 0, res.output);
  CHECK(wm::img::load_png_rgb(ws.path("a0.png")).v ==
        wm::img::load_png_rgb(ws.path("a0_out.png")).v);
}

TEST_CASE("the crop attack emits the expected geometry") {
  auto& ws = workspace();
  wm::img::save_png_rgb(ws.path("a1.png"), wm::img::synthesize_rgb(256, 256, 81));
  const auto res = run_cli("attack " + ws.path("a1.png") +
                           " --spec crop:p=0.3 --out " + ws.path("a1_out.png") +
                           " --seed 4");
  REQUIRE_MESSAGE(res.status == 0, res.output);
  const auto out = wm::img::load_png_rgb(ws.path("a1_out.png"));
  CHECK(out.h == 140);
  CHECK(out.w == 140);
}

TEST_CASE("unknown attack specs exit with a usage error") {
  auto& ws = workspace();
  wm::img::save_png_rgb(ws.path("a2.png"), wm::img::synthesize_rgb(32, 32, 82));
  const auto res = run_cli("attack " + ws.path("a2.png") +
                           " --spec vaporize:p=1 --out " + ws.path("a2_out.png"));
  CHECK(res.status != 0);
  CHECK(res.output.find("vaporize") != std::string::npos);
  // dropout needs a cover image
  const auto res2 = run_cli("attack " + ws.path("a2.png") +
                            " --spec dropout:p=0.5 --out " + ws.path("a2b.png"));
  CHECK(res2.status != 0);
  CHECK(res2.output.find("cover") != std::string::npos);
}

TEST_CASE("evaluate and the sweeps emit their reports") {
  auto& ws = workspace();
  const auto& ckpt = shared_checkpoint(ws);
  const auto eval = run_cli(
      "evaluate --checkpoint " + ckpt +
      " --images synthetic:6 --count 6 --attacks none dropout:p=0.5 "
      "--pool-size 100 --t 7 --seed 3 --out " + ws.path("report.json"));
  REQUIRE_MESSAGE(eval.status == 0, eval.output);
  const std::string report = slurp(ws.path("report.json"));
  CHECK(report.find("\"bit_accuracy\"") != std::string::npos);
  CHECK(report.find("\"naive\"") != std::string::npos);
  CHECK(report.find("\"double\"") != std::string::npos);
  CHECK(report.find("\"config\"") != std::string::npos);

  const auto sweep = run_cli("sweep-threshold --checkpoint " + ckpt +
                             " --images synthetic:6 --count 6 --attack none "
                             "--pool-size 200 --t 7 --seed 3 --out " +
                             ws.path("sweep.csv"));
  REQUIRE_MESSAGE(sweep.status == 0, sweep.output);
  CHECK(slurp(ws.path("sweep.csv")).find("t_f,tir,fir_en,fir_co") !=
        std::string::npos);

  const auto tsweep = run_cli("transparency-sweep --checkpoint " + ckpt +
                              " --images synthetic:6 --count 6 --p 0 1 "
                              "--attacks none --seed 3 --out " +
                              ws.path("tsweep.csv"));
  REQUIRE_MESSAGE(tsweep.status == 0, tsweep.output);
  const std::string tcsv = slurp(ws.path("tsweep.csv"));
  CHECK(tcsv.find("p,psnr_Y,psnr_Cb,psnr_Cr,acc_none") != std::string::npos);
}
