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

#ifndef WM_NETWORKS_HPP_
#define WM_NETWORKS_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "wm/rng.hpp"
#include "wm/tensor.hpp"

namespace wm::nn {

struct ParamRef {
  std::string name;
  float* value;
  float* grad;
  std::size_t count;
};

// Non-trainable state that still belongs in a checkpoint (BN running stats).
struct BufferRef {
  std::string name;
  float* value;
  std::size_t count;
};

Tensor concat_channels(const std::vector<const Tensor*>& parts);
std::vector<Tensor> split_channels(const Tensor& t,
                                   const std::vector<int>& sizes);

// Convolution, kernel 1 or 3 (stride 1; 3x3 uses reflection padding).
class Conv2d {
 public:
  Conv2d(std::string name, int cin, int cout, int kernel);

  Tensor forward(const Tensor& x, bool keep_state);
  // Returns the input gradient; weight/bias gradients accumulate unless
  // disabled (the adversarial pass reads through the discriminator without
  // touching its gradients).
  Tensor backward(const Tensor& gy, bool param_grads = true);

  void init(Rng& rng);
  // Rewrites the kernel as an identity on the first `channels` input
  // channels (1x1 kernels only); all other taps become zero.
  void set_identity_passthrough(int channels);
  void collect_params(std::vector<ParamRef>& out);
  void drop_state();

  int cin() const { return cin_; }
  int cout() const { return cout_; }

 private:
  std::string name_;
  int cin_, cout_, kernel_;
  std::vector<float> weight_, bias_, gweight_, gbias_;
  Tensor saved_;  // padded input (3x3) or raw input (1x1)
  int in_h_ = 0, in_w_ = 0;
};

class BatchNorm2d {
 public:
  BatchNorm2d(std::string name, int channels);

  Tensor forward(const Tensor& x, bool train, bool keep_state);
  Tensor backward(const Tensor& gy);

  void collect_params(std::vector<ParamRef>& out);
  void collect_buffers(std::vector<BufferRef>& out);
  void drop_state();

 private:
  std::string name_;
  int channels_;
  float momentum_ = 0.1f, eps_ = 1e-5f;
  std::vector<float> gamma_, beta_, ggamma_, gbeta_;
  std::vector<float> running_mean_, running_var_;
  std::vector<float> mean_, var_;  // batch stats of the kept forward
  Tensor saved_x_;
};

// conv -> batch norm -> ReLU, the standard block of every network here.
class ConvBnRelu {
 public:
  ConvBnRelu(const std::string& name, int cin, int cout, int kernel = 3);

  Tensor forward(const Tensor& x, bool train, bool keep_state);
  Tensor backward(const Tensor& gy, bool param_grads = true);

  void init(Rng& rng);
  void collect_params(std::vector<ParamRef>& out);
  void collect_buffers(std::vector<BufferRef>& out);
  void drop_state();

 private:
  Conv2d conv_;
  BatchNorm2d bn_;
  std::vector<std::uint8_t> relu_mask_;
};

// Message adapter: four blocks, the last one emitting 6 channels.
class Adapter {
 public:
  explicit Adapter(int in_channels = 6);
  Tensor forward(const Tensor& m_ext, bool train, bool keep_state = false);
  Tensor backward(const Tensor& gy);
  void init(Rng& rng);
  void collect_params(std::vector<ParamRef>& out);
  void collect_buffers(std::vector<BufferRef>& out);
  void drop_state();

 private:
  ConvBnRelu b1_, b2_, b3_, b4_;
};

// Cover encoder: three blocks on the cover, concat(features, cover, adapted)
// through two more blocks, then a 1x1 convolution on concat(cover, features).
class Encoder {
 public:
  Encoder();

  struct Grads {
    Tensor cover;
    Tensor adapted;
  };

  Tensor forward(const Tensor& cover, const Tensor& adapted, bool train,
                 bool keep_state = false);
  Grads backward(const Tensor& gy);

  void init(Rng& rng);
  void collect_params(std::vector<ParamRef>& out);
  void collect_buffers(std::vector<BufferRef>& out);
  void drop_state();

  // Channel widths of the two concatenations, fixed by the architecture.
  static constexpr int kMidConcatChannels = 64 + 3 + 6;
  static constexpr int kFinalConcatChannels = 3 + 64;

 private:
  ConvBnRelu f1_, f2_, f3_, f4_, f5_;
  Conv2d final_;
};

// Grid decoder: eight blocks, average-pool by the block size, a 1x1
// conv-bn-relu and a 1x1 projection to k' channels, sigmoid output.
class Decoder {
 public:
  Decoder(int block, int out_channels);

  Tensor forward(const Tensor& image, bool train, bool keep_state = false);
  Tensor backward(const Tensor& gy);

  void init(Rng& rng);
  void collect_params(std::vector<ParamRef>& out);
  void collect_buffers(std::vector<BufferRef>& out);
  void drop_state();

  int block() const { return block_; }

 private:
  int block_;
  std::vector<ConvBnRelu> blocks_;
  ConvBnRelu post_;
  Conv2d final_;
  Tensor saved_out_;   // sigmoid output
  int pool_h_ = 0, pool_w_ = 0;
};

// Watermark discriminator: three blocks, global average pooling, one linear
// unit, sigmoid. Scores approach 1 on encoded images.
class Discriminator {
 public:
  Discriminator();

  std::vector<float> forward(const Tensor& images, bool train,
                             bool keep_state = false);
  // gscores: d(loss)/d(score). Input gradient is returned when requested.
  Tensor backward(const std::vector<float>& gscores, bool param_grads,
                  bool input_grad);

  void init(Rng& rng);
  void collect_params(std::vector<ParamRef>& out);
  void collect_buffers(std::vector<BufferRef>& out);
  void drop_state();

 private:
  ConvBnRelu c1_, c2_, c3_;
  std::vector<float> lin_w_, lin_b_, glin_w_, glin_b_;
  Tensor saved_pooled_;      // (n,64,1,1)
  std::vector<float> saved_scores_;
  int feat_h_ = 0, feat_w_ = 0;
};

struct ModelBundle {
  Adapter adapter;
  Encoder encoder;
  Decoder decoder;
  Discriminator discriminator;

  ModelBundle(int block, int tuple_bits)
      : adapter(tuple_bits), decoder(block, tuple_bits) {}

  void init(std::uint64_t seed);
  std::vector<ParamRef> params();
  std::vector<ParamRef> codec_params();  // adapter + encoder + decoder only
  std::vector<ParamRef> discriminator_params();
  std::vector<BufferRef> buffers();
  void drop_state();
};

class Adam {
 public:
  explicit Adam(double lr = 0.001, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);
  void attach(const std::vector<ParamRef>& params);
  void step(const std::vector<ParamRef>& params);
  void zero_grads(const std::vector<ParamRef>& params);

  double learning_rate() const { return lr_; }
  void collect_state(const std::string& prefix, std::vector<BufferRef>& out);

 private:
  double lr_, beta1_, beta2_, eps_;
  std::vector<float> step_count_;  // serialized with the moments
  std::vector<std::vector<float>> m_, v_;
};

// Versioned binary container: config snapshot plus every named tensor
// (parameters, BN buffers, optimizer state). Loading restores bit-identical
// inference.
void save_checkpoint(const std::string& path, ModelBundle& models,
                     const std::string& config_json, std::int64_t step,
                     Adam* opt_codec = nullptr, Adam* opt_disc = nullptr);
struct CheckpointInfo {
  std::string config_json;
  std::int64_t step = 0;
};
CheckpointInfo load_checkpoint(const std::string& path, ModelBundle& models,
                               Adam* opt_codec = nullptr,
                               Adam* opt_disc = nullptr);
// Reads only the embedded config snapshot (to size the networks before
// constructing a bundle).
CheckpointInfo peek_checkpoint(const std::string& path);

}  // namespace wm::nn

#endif  // WM_NETWORKS_HPP_
