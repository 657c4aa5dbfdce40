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

// Times the OpenMP kernels against their serial references on the shapes the
// training loop actually runs (64 channels at 128x128).

#include <chrono>
#include <cstdio>
#include <functional>
#include <vector>

#include "wm/kernels.hpp"
#include "wm/rng.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  const auto t0 = Clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = Clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void report(const char* name, double serial_ms, double parallel_ms) {
  std::printf("%-26s serial %9.3f ms   parallel %9.3f ms   speedup %5.2fx\n",
              name, serial_ms, parallel_ms, serial_ms / parallel_ms);
}

std::vector<float> random_vec(std::size_t n, wm::Rng& rng) {
  std::vector<float> v(n);
  for (auto& x : v) x = rng.next_float() - 0.5f;
  return v;
}

}  // namespace

int main() {
  constexpr int kH = 128, kW = 128, kC = 64;
  wm::Rng rng(42);

  std::printf("wmkit kernel benchmark (%d threads)\n\n",
              wm::kernels::thread_count());

  {
    const auto pad = random_vec(static_cast<std::size_t>(kC) * (kH + 2) * (kW + 2), rng);
    const auto weight = random_vec(static_cast<std::size_t>(kC) * kC * 9, rng);
    const auto bias = random_vec(kC, rng);
    std::vector<float> out(static_cast<std::size_t>(kC) * kH * kW);
    report("conv3x3 forward",
           time_ms([&] {
             wm::kernels::ref::conv3x3_forward(pad.data(), kC, kH, kW,
                                               weight.data(), bias.data(), kC,
                                               out.data());
           }, 2),
           time_ms([&] {
             wm::kernels::conv3x3_forward(pad.data(), kC, kH, kW, weight.data(),
                                          bias.data(), kC, out.data());
           }, 6));

    std::vector<float> gpad(pad.size());
    report("conv3x3 backward input",
           time_ms([&] {
             wm::kernels::ref::conv3x3_backward_input(out.data(), kC, kH, kW,
                                                      weight.data(), kC,
                                                      gpad.data());
           }, 2),
           time_ms([&] {
             wm::kernels::conv3x3_backward_input(out.data(), kC, kH, kW,
                                                 weight.data(), kC, gpad.data());
           }, 6));

    std::vector<float> gw(weight.size()), gb(bias.size());
    report("conv3x3 backward weights",
           time_ms([&] {
             wm::kernels::ref::conv3x3_backward_weights(pad.data(), kC, kH, kW,
                                                        out.data(), kC,
                                                        gw.data(), gb.data());
           }, 2),
           time_ms([&] {
             wm::kernels::conv3x3_backward_weights(pad.data(), kC, kH, kW,
                                                   out.data(), kC, gw.data(),
                                                   gb.data());
           }, 6));
  }

  {
    const auto in = random_vec(static_cast<std::size_t>(kC) * kH * kW, rng);
    const auto weight = random_vec(static_cast<std::size_t>(kC) * kC, rng);
    const auto bias = random_vec(kC, rng);
    std::vector<float> out(in.size());
    report("conv1x1 forward",
           time_ms([&] {
             wm::kernels::ref::conv1x1_forward(in.data(), kC,
                                               static_cast<std::size_t>(kH) * kW,
                                               weight.data(), bias.data(), kC,
                                               out.data());
           }, 4),
           time_ms([&] {
             wm::kernels::conv1x1_forward(in.data(), kC,
                                          static_cast<std::size_t>(kH) * kW,
                                          weight.data(), bias.data(), kC,
                                          out.data());
           }, 12));
  }

  {
    const int n = 12;
    const auto x = random_vec(static_cast<std::size_t>(n) * kC * kH * kW, rng);
    std::vector<float> mean(kC), var(kC);
    report("batchnorm statistics",
           time_ms([&] {
             wm::kernels::ref::bn_batch_stats(x.data(), n, kC,
                                              static_cast<std::size_t>(kH) * kW,
                                              mean.data(), var.data());
           }, 4),
           time_ms([&] {
             wm::kernels::bn_batch_stats(x.data(), n, kC,
                                         static_cast<std::size_t>(kH) * kW,
                                         mean.data(), var.data());
           }, 12));
  }

  {
    const auto in = random_vec(static_cast<std::size_t>(kC) * kH * kW, rng);
    std::vector<float> out(static_cast<std::size_t>(kC) * (kH / 16) * (kW / 16));
    report("avgpool b=16",
           time_ms([&] {
             wm::kernels::ref::avgpool_forward(in.data(), kC, kH, kW, 16,
                                               out.data());
           }, 8),
           time_ms([&] {
             wm::kernels::avgpool_forward(in.data(), kC, kH, kW, 16, out.data());
           }, 24));
  }

  {
    const auto in = random_vec(static_cast<std::size_t>(kH) * kW, rng);
    std::vector<float> out(in.size()), tmp(in.size());
    const float kernel[13] = {0.004f, 0.018f, 0.054f, 0.12f, 0.19f, 0.23f,
                              0.19f,  0.12f,  0.054f, 0.018f, 0.004f, 0.0f, 0.0f};
    report("separable blur r=5",
           time_ms([&] {
             wm::kernels::ref::sep_blur(in.data(), kH, kW, kernel, 5, out.data());
           }, 8),
           time_ms([&] {
             wm::kernels::sep_blur(in.data(), kH, kW, kernel, 5, tmp.data(),
                                   out.data());
           }, 24));
  }

  {
    const auto in = random_vec(static_cast<std::size_t>(kH) * kW, rng);
    std::vector<float> out(in.size());
    report("8x8 block DCT",
           time_ms([&] {
             wm::kernels::ref::dct8x8_plane(in.data(), kH, kW, out.data());
           }, 2),
           time_ms([&] {
             wm::kernels::dct8x8_plane(in.data(), kH, kW, out.data());
           }, 24));
  }

  return 0;
}
