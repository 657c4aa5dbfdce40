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

#ifndef WM_IMAGE_HPP_
#define WM_IMAGE_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "wm/tensor.hpp"

namespace wm::img {

// PNG files are RGB; the pipeline works in YCrCb (BT.601 full range).
// Channel order in tensors: RGB images are (R,G,B), YCrCb images (Y,Cr,Cb).

Tensor load_png_rgb(const std::string& path);
// `meta` is stored in a tEXt chunk (key "wmkit") so artifacts carry their
// configuration; pass an empty string to skip.
void save_png_rgb(const std::string& path, const Tensor& rgb,
                  const std::string& meta = "");
std::string read_png_meta(const std::string& path);

Tensor rgb_to_ycrcb(const Tensor& rgb);
Tensor ycrcb_to_rgb(const Tensor& ycrcb);

// Bilinear resize used for dataset ingestion.
Tensor resize_linear(const Tensor& in, int out_h, int out_w);

// Procedural stand-in for a natural-image corpus: layered low-frequency
// gradients, soft shapes and light texture. Returns an RGB tensor in [0,1].
Tensor synthesize_rgb(int h, int w, std::uint64_t seed);

// "synthetic:<count>" generates a corpus procedurally; anything else is a
// directory whose PNG files are loaded in name order (resized to size x size).
// Returned images are YCrCb.
std::vector<Tensor> load_dataset(const std::string& spec, int size,
                                 std::uint64_t seed, int limit = -1);

}  // namespace wm::img

#endif  // WM_IMAGE_HPP_
