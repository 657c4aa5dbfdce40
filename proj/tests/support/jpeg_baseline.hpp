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

// Independent JPEG baseline built on libjpeg: compress to memory at a given
// quality (4:2:0) and decompress again, staying in YCbCr end to end so only
// the codec itself is compared.

#ifndef WM_TESTS_SUPPORT_JPEG_BASELINE_HPP_
#define WM_TESTS_SUPPORT_JPEG_BASELINE_HPP_

#include <cstdio>
#include <stdexcept>
#include <vector>

#include <jpeglib.h>

#include "wm/tensor.hpp"

namespace oracles {

// ycrcb in [0,1], channel order (Y, Cr, Cb); returns the decompressed image
// in the same layout.
inline wm::Tensor libjpeg_roundtrip(const wm::Tensor& ycrcb, int quality) {
  const int h = ycrcb.h, w = ycrcb.w;
  std::vector<unsigned char> interleaved(static_cast<std::size_t>(h) * w * 3);
  const auto to_byte = [](float v) {
    const float x = v * 255.0f + 0.5f;
    return static_cast<unsigned char>(x < 0 ? 0 : (x > 255 ? 255 : x));
  };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * w + x;
      interleaved[p * 3 + 0] = to_byte(ycrcb.plane(0, 0)[p]);  // Y
      interleaved[p * 3 + 1] = to_byte(ycrcb.plane(0, 2)[p]);  // Cb
      interleaved[p * 3 + 2] = to_byte(ycrcb.plane(0, 1)[p]);  // Cr
    }

  jpeg_compress_struct cinfo;
  jpeg_error_mgr jerr;
  cinfo.err = jpeg_std_error(&jerr);
  jpeg_create_compress(&cinfo);
  unsigned char* buf = nullptr;
  unsigned long buf_size = 0;
  jpeg_mem_dest(&cinfo, &buf, &buf_size);
  cinfo.image_width = static_cast<JDIMENSION>(w);
  cinfo.image_height = static_cast<JDIMENSION>(h);
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_YCbCr;
  jpeg_set_defaults(&cinfo);  // YCbCr input keeps 4:2:0 sampling
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  while (cinfo.next_scanline < cinfo.image_height) {
    JSAMPROW row = interleaved.data() +
                   static_cast<std::size_t>(cinfo.next_scanline) * w * 3;
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);

  jpeg_decompress_struct dinfo;
  dinfo.err = jpeg_std_error(&jerr);
  jpeg_create_decompress(&dinfo);
  jpeg_mem_src(&dinfo, buf, buf_size);
  jpeg_read_header(&dinfo, TRUE);
  dinfo.out_color_space = JCS_YCbCr;
  dinfo.do_fancy_upsampling = FALSE;  // plain replication, like the module
  jpeg_start_decompress(&dinfo);
  if (static_cast<int>(dinfo.output_width) != w ||
      static_cast<int>(dinfo.output_height) != h)
    throw std::runtime_error("libjpeg baseline: unexpected output size");
  std::vector<unsigned char> out(interleaved.size());
  while (dinfo.output_scanline < dinfo.output_height) {
    JSAMPROW row = out.data() +
                   static_cast<std::size_t>(dinfo.output_scanline) * w * 3;
    jpeg_read_scanlines(&dinfo, &row, 1);
  }
  jpeg_finish_decompress(&dinfo);
  jpeg_destroy_decompress(&dinfo);
  free(buf);

  wm::Tensor result(1, 3, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * w + x;
      result.plane(0, 0)[p] = out[p * 3 + 0] / 255.0f;
      result.plane(0, 1)[p] = out[p * 3 + 2] / 255.0f;  // Cr
      result.plane(0, 2)[p] = out[p * 3 + 1] / 255.0f;  // Cb
    }
  return result;
}

// The scaled quantization tables libjpeg would emit for this quality.
inline void libjpeg_quant_tables(int quality, int luma[64], int chroma[64]) {
  jpeg_compress_struct cinfo;
  jpeg_error_mgr jerr;
  cinfo.err = jpeg_std_error(&jerr);
  jpeg_create_compress(&cinfo);
  cinfo.image_width = 16;
  cinfo.image_height = 16;
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_YCbCr;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  for (int i = 0; i < 64; ++i) {
    luma[i] = cinfo.quant_tbl_ptrs[0]->quantval[i];
    chroma[i] = cinfo.quant_tbl_ptrs[1]->quantval[i];
  }
  jpeg_destroy_compress(&cinfo);
}

}  // namespace oracles

#endif  // WM_TESTS_SUPPORT_JPEG_BASELINE_HPP_
