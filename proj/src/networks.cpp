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

#include "wm/networks.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

#include "wm/kernels.hpp"

namespace wm::nn {

Tensor concat_channels(const std::vector<const Tensor*>& parts) {
  int total = 0;
  for (const Tensor* p : parts) total += p->c;
  Tensor out = Tensor::uninit(parts[0]->n, total, parts[0]->h, parts[0]->w);
  for (int n = 0; n < out.n; ++n) {
    int co = 0;
    for (const Tensor* p : parts) {
      if (p->n != out.n || p->h != out.h || p->w != out.w)
        throw std::invalid_argument("concat_channels: spatial shape mismatch");
      for (int c = 0; c < p->c; ++c, ++co)
        std::memcpy(out.plane(n, co), p->plane(n, c),
                    sizeof(float) * out.plane_size());
    }
  }
  return out;
}

std::vector<Tensor> split_channels(const Tensor& t,
                                   const std::vector<int>& sizes) {
  std::vector<Tensor> out;
  out.reserve(sizes.size());
  int c0 = 0;
  for (const int sz : sizes) {
    Tensor part = Tensor::uninit(t.n, sz, t.h, t.w);
    for (int n = 0; n < t.n; ++n)
      for (int c = 0; c < sz; ++c)
        std::memcpy(part.plane(n, c), t.plane(n, c0 + c),
                    sizeof(float) * t.plane_size());
    out.push_back(std::move(part));
    c0 += sz;
  }
  return out;
}

// ---- Conv2d -----------------------------------------------------------------

Conv2d::Conv2d(std::string name, int cin, int cout, int kernel)
    : name_(std::move(name)), cin_(cin), cout_(cout), kernel_(kernel),
      weight_(static_cast<std::size_t>(cout) * cin * kernel * kernel, 0.0f),
      bias_(static_cast<std::size_t>(cout), 0.0f),
      gweight_(weight_.size(), 0.0f), gbias_(bias_.size(), 0.0f) {
  if (kernel != 1 && kernel != 3)
    throw std::invalid_argument("Conv2d: only 1x1 and 3x3 kernels are used");
}

void Conv2d::init(Rng& rng) {
  const double fan_in = static_cast<double>(cin_) * kernel_ * kernel_;
  const double std = std::sqrt(2.0 / fan_in);
  for (auto& w : weight_) w = static_cast<float>(rng.normal() * std);
  std::fill(bias_.begin(), bias_.end(), 0.0f);
}

Tensor Conv2d::forward(const Tensor& x, bool keep_state) {
  if (x.c != cin_)
    throw std::invalid_argument(name_ + ": expected " + std::to_string(cin_) +
                                " input channels, got " + x.shape_str());
  in_h_ = x.h;
  in_w_ = x.w;
  Tensor out = Tensor::uninit(x.n, cout_, x.h, x.w);
  if (kernel_ == 3) {
    Tensor pad = Tensor::uninit(x.n, cin_, x.h + 2, x.w + 2);
    for (int n = 0; n < x.n; ++n) {
      kernels::reflect_pad1(x.plane(n, 0), cin_, x.h, x.w, pad.plane(n, 0));
      kernels::conv3x3_forward(pad.plane(n, 0), cin_, x.h, x.w, weight_.data(),
                               bias_.data(), cout_, out.plane(n, 0));
    }
    if (keep_state) saved_ = std::move(pad);
  } else {
    for (int n = 0; n < x.n; ++n)
      kernels::conv1x1_forward(x.plane(n, 0), cin_, x.plane_size(),
                               weight_.data(), bias_.data(), cout_,
                               out.plane(n, 0));
    if (keep_state) saved_ = x;
  }
  return out;
}

Tensor Conv2d::backward(const Tensor& gy, bool param_grads) {
  if (saved_.n != gy.n)
    throw std::logic_error(name_ + ": backward without a kept forward");
  Tensor gx = Tensor::uninit(gy.n, cin_, in_h_, in_w_);
  if (kernel_ == 3) {
    Tensor gpad = Tensor::uninit(1, cin_, in_h_ + 2, in_w_ + 2);
    for (int n = 0; n < gy.n; ++n) {
      if (param_grads)
        kernels::conv3x3_backward_weights(saved_.plane(n, 0), cin_, in_h_,
                                          in_w_, gy.plane(n, 0), cout_,
                                          gweight_.data(), gbias_.data());
      kernels::conv3x3_backward_input(gy.plane(n, 0), cout_, in_h_, in_w_,
                                      weight_.data(), cin_, gpad.plane(0, 0));
      kernels::reflect_pad1_adjoint(gpad.plane(0, 0), cin_, in_h_, in_w_,
                                    gx.plane(n, 0));
    }
  } else {
    for (int n = 0; n < gy.n; ++n) {
      if (param_grads)
        kernels::conv1x1_backward_weights(saved_.plane(n, 0), cin_,
                                          gx.plane_size(), gy.plane(n, 0),
                                          cout_, gweight_.data(),
                                          gbias_.data());
      kernels::conv1x1_backward_input(gy.plane(n, 0), cout_, gx.plane_size(),
                                      weight_.data(), cin_, gx.plane(n, 0));
    }
  }
  return gx;
}

void Conv2d::set_identity_passthrough(int channels) {
  if (kernel_ != 1 || channels > cin_ || channels > cout_)
    throw std::logic_error(name_ + ": identity passthrough needs a 1x1 kernel");
  std::fill(weight_.begin(), weight_.end(), 0.0f);
  std::fill(bias_.begin(), bias_.end(), 0.0f);
  for (int c = 0; c < channels; ++c)
    weight_[static_cast<std::size_t>(c) * cin_ + c] = 1.0f;
}

void Conv2d::collect_params(std::vector<ParamRef>& out) {
  out.push_back({name_ + ".weight", weight_.data(), gweight_.data(), weight_.size()});
  out.push_back({name_ + ".bias", bias_.data(), gbias_.data(), bias_.size()});
}

void Conv2d::drop_state() { saved_ = Tensor(); }

// ---- BatchNorm2d -------------------------------------------------------------

BatchNorm2d::BatchNorm2d(std::string name, int channels)
    : name_(std::move(name)), channels_(channels),
      gamma_(static_cast<std::size_t>(channels), 1.0f),
      beta_(static_cast<std::size_t>(channels), 0.0f),
      ggamma_(gamma_.size(), 0.0f), gbeta_(beta_.size(), 0.0f),
      running_mean_(gamma_.size(), 0.0f), running_var_(gamma_.size(), 1.0f),
      mean_(gamma_.size(), 0.0f), var_(gamma_.size(), 1.0f) {}

Tensor BatchNorm2d::forward(const Tensor& x, bool train, bool keep_state) {
  Tensor out = Tensor::uninit_like(x);
  if (train) {
    kernels::bn_batch_stats(x.data(), x.n, channels_, x.plane_size(),
                            mean_.data(), var_.data());
    for (int c = 0; c < channels_; ++c) {
      running_mean_[static_cast<std::size_t>(c)] =
          (1.0f - momentum_) * running_mean_[static_cast<std::size_t>(c)] +
          momentum_ * mean_[static_cast<std::size_t>(c)];
      running_var_[static_cast<std::size_t>(c)] =
          (1.0f - momentum_) * running_var_[static_cast<std::size_t>(c)] +
          momentum_ * var_[static_cast<std::size_t>(c)];
    }
    kernels::bn_forward(x.data(), x.n, channels_, x.plane_size(), mean_.data(),
                        var_.data(), gamma_.data(), beta_.data(), eps_,
                        out.data());
    if (keep_state) saved_x_ = x;
  } else {
    kernels::bn_forward(x.data(), x.n, channels_, x.plane_size(),
                        running_mean_.data(), running_var_.data(),
                        gamma_.data(), beta_.data(), eps_, out.data());
  }
  return out;
}

Tensor BatchNorm2d::backward(const Tensor& gy) {
  if (saved_x_.n != gy.n)
    throw std::logic_error(name_ + ": backward without a kept forward");
  Tensor gx = Tensor::uninit_like(gy);
  kernels::bn_backward(saved_x_.data(), gy.data(), gy.n, channels_,
                       gy.plane_size(), mean_.data(), var_.data(),
                       gamma_.data(), eps_, gx.data(), ggamma_.data(),
                       gbeta_.data());
  return gx;
}

void BatchNorm2d::collect_params(std::vector<ParamRef>& out) {
  out.push_back({name_ + ".gamma", gamma_.data(), ggamma_.data(), gamma_.size()});
  out.push_back({name_ + ".beta", beta_.data(), gbeta_.data(), beta_.size()});
}

void BatchNorm2d::collect_buffers(std::vector<BufferRef>& out) {
  out.push_back({name_ + ".running_mean", running_mean_.data(), running_mean_.size()});
  out.push_back({name_ + ".running_var", running_var_.data(), running_var_.size()});
}

void BatchNorm2d::drop_state() { saved_x_ = Tensor(); }

// ---- ConvBnRelu ---------------------------------------------------------------

ConvBnRelu::ConvBnRelu(const std::string& name, int cin, int cout, int kernel)
    : conv_(name + ".conv", cin, cout, kernel), bn_(name + ".bn", cout) {}

Tensor ConvBnRelu::forward(const Tensor& x, bool train, bool keep_state) {
  Tensor y = bn_.forward(conv_.forward(x, keep_state), train, keep_state);
  if (keep_state) {
    relu_mask_.resize(y.size());
    kernels::relu_forward_mask(y.data(), relu_mask_.data(), y.size());
  } else {
    kernels::relu_forward(y.data(), y.size());
  }
  return y;
}

Tensor ConvBnRelu::backward(const Tensor& gy, bool param_grads) {
  Tensor gz = Tensor::uninit_like(gy);
  kernels::relu_mask_backward(relu_mask_.data(), gy.data(), gz.data(),
                              gz.size());
  return conv_.backward(bn_.backward(gz), param_grads);
}

void ConvBnRelu::init(Rng& rng) { conv_.init(rng); }

void ConvBnRelu::collect_params(std::vector<ParamRef>& out) {
  conv_.collect_params(out);
  bn_.collect_params(out);
}

void ConvBnRelu::collect_buffers(std::vector<BufferRef>& out) {
  bn_.collect_buffers(out);
}

void ConvBnRelu::drop_state() {
  conv_.drop_state();
  bn_.drop_state();
  relu_mask_.clear();
  relu_mask_.shrink_to_fit();
}

// ---- Adapter -------------------------------------------------------------------

Adapter::Adapter(int in_channels)
    : b1_("adapter.b1", in_channels, 64), b2_("adapter.b2", 64, 64),
      b3_("adapter.b3", 64, 64), b4_("adapter.b4", 64, 6) {}

Tensor Adapter::forward(const Tensor& m_ext, bool train, bool keep_state) {
  Tensor x = b1_.forward(m_ext, train, keep_state);
  x = b2_.forward(x, train, keep_state);
  x = b3_.forward(x, train, keep_state);
  return b4_.forward(x, train, keep_state);
}

Tensor Adapter::backward(const Tensor& gy) {
  return b1_.backward(b2_.backward(b3_.backward(b4_.backward(gy))));
}

void Adapter::init(Rng& rng) {
  b1_.init(rng);
  b2_.init(rng);
  b3_.init(rng);
  b4_.init(rng);
}

void Adapter::collect_params(std::vector<ParamRef>& out) {
  b1_.collect_params(out);
  b2_.collect_params(out);
  b3_.collect_params(out);
  b4_.collect_params(out);
}

void Adapter::collect_buffers(std::vector<BufferRef>& out) {
  b1_.collect_buffers(out);
  b2_.collect_buffers(out);
  b3_.collect_buffers(out);
  b4_.collect_buffers(out);
}

void Adapter::drop_state() {
  b1_.drop_state();
  b2_.drop_state();
  b3_.drop_state();
  b4_.drop_state();
}

// ---- Encoder --------------------------------------------------------------------

Encoder::Encoder()
    : f1_("encoder.f1", 3, 64), f2_("encoder.f2", 64, 64),
      f3_("encoder.f3", 64, 64), f4_("encoder.f4", kMidConcatChannels, 64),
      f5_("encoder.f5", 64, 64),
      final_("encoder.final", kFinalConcatChannels, 3, 1) {}

Tensor Encoder::forward(const Tensor& cover, const Tensor& adapted, bool train,
                        bool keep_state) {
  if (cover.c != 3)
    throw std::invalid_argument("encoder: cover must have 3 channels, got " +
                                cover.shape_str());
  if (adapted.c != 6 || adapted.h != cover.h || adapted.w != cover.w ||
      adapted.n != cover.n)
    throw std::invalid_argument("encoder: adapted message shape " +
                                adapted.shape_str() + " does not match cover " +
                                cover.shape_str());
  Tensor a = f1_.forward(cover, train, keep_state);
  a = f2_.forward(a, train, keep_state);
  a = f3_.forward(a, train, keep_state);
  Tensor cat1 = concat_channels({&a, &cover, &adapted});
  Tensor b = f4_.forward(cat1, train, keep_state);
  b = f5_.forward(b, train, keep_state);
  Tensor cat2 = concat_channels({&cover, &b});
  return final_.forward(cat2, keep_state);
}

Encoder::Grads Encoder::backward(const Tensor& gy) {
  Grads g;
  Tensor gcat2 = final_.backward(gy);
  auto parts2 = split_channels(gcat2, {3, 64});
  g.cover = std::move(parts2[0]);
  Tensor gcat1 = f4_.backward(f5_.backward(parts2[1]));
  auto parts1 = split_channels(gcat1, {64, 3, 6});
  Tensor gfeat = f1_.backward(f2_.backward(f3_.backward(parts1[0])));
  for (std::size_t i = 0; i < g.cover.size(); ++i)
    g.cover.v[i] += parts1[1].v[i] + gfeat.v[i];
  g.adapted = std::move(parts1[2]);
  return g;
}

void Encoder::init(Rng& rng) {
  f1_.init(rng);
  f2_.init(rng);
  f3_.init(rng);
  f4_.init(rng);
  f5_.init(rng);
  final_.init(rng);
  // The output projection starts as the identity on the cover channels and
  // zero on the feature channels, so an untrained encoder emits the cover
  // and the message signal grows from the decoder's gradient.
  final_.set_identity_passthrough(3);
}

void Encoder::collect_params(std::vector<ParamRef>& out) {
  f1_.collect_params(out);
  f2_.collect_params(out);
  f3_.collect_params(out);
  f4_.collect_params(out);
  f5_.collect_params(out);
  final_.collect_params(out);
}

void Encoder::collect_buffers(std::vector<BufferRef>& out) {
  f1_.collect_buffers(out);
  f2_.collect_buffers(out);
  f3_.collect_buffers(out);
  f4_.collect_buffers(out);
  f5_.collect_buffers(out);
}

void Encoder::drop_state() {
  f1_.drop_state();
  f2_.drop_state();
  f3_.drop_state();
  f4_.drop_state();
  f5_.drop_state();
  final_.drop_state();
}

// ---- Decoder --------------------------------------------------------------------

Decoder::Decoder(int block, int out_channels)
    : block_(block), post_("decoder.post", 64, 64, 1),
      final_("decoder.final", 64, out_channels, 1) {
  blocks_.reserve(8);
  for (int i = 0; i < 8; ++i)
    blocks_.emplace_back("decoder.b" + std::to_string(i + 1), i == 0 ? 3 : 64,
                         64);
}

Tensor Decoder::forward(const Tensor& image, bool train, bool keep_state) {
  if (image.h < block_ || image.w < block_)
    throw std::invalid_argument("decoder: image " + image.shape_str() +
                                " is smaller than one " +
                                std::to_string(block_) + "px block");
  Tensor x = image;
  for (auto& b : blocks_) x = b.forward(x, train, keep_state);
  pool_h_ = x.h;
  pool_w_ = x.w;
  Tensor pooled = Tensor::uninit(x.n, 64, x.h / block_, x.w / block_);
  for (int n = 0; n < x.n; ++n)
    kernels::avgpool_forward(x.plane(n, 0), 64, x.h, x.w, block_,
                             pooled.plane(n, 0));
  Tensor out = final_.forward(post_.forward(pooled, train, keep_state), keep_state);
  kernels::sigmoid_forward(out.data(), out.size());
  if (keep_state) saved_out_ = out;
  return out;
}

Tensor Decoder::backward(const Tensor& gy) {
  Tensor gz = Tensor::uninit_like(gy);
  kernels::sigmoid_backward(saved_out_.data(), gy.data(), gz.data(), gz.size());
  Tensor gpooled = post_.backward(final_.backward(gz));
  Tensor gx = Tensor::uninit(gy.n, 64, pool_h_, pool_w_);
  for (int n = 0; n < gy.n; ++n)
    kernels::avgpool_backward(gpooled.plane(n, 0), 64, pool_h_, pool_w_,
                              block_, gx.plane(n, 0));
  for (int i = 7; i >= 0; --i)
    gx = blocks_[static_cast<std::size_t>(i)].backward(gx);
  return gx;
}

void Decoder::init(Rng& rng) {
  for (auto& b : blocks_) b.init(rng);
  post_.init(rng);
  final_.init(rng);
}

void Decoder::collect_params(std::vector<ParamRef>& out) {
  for (auto& b : blocks_) b.collect_params(out);
  post_.collect_params(out);
  final_.collect_params(out);
}

void Decoder::collect_buffers(std::vector<BufferRef>& out) {
  for (auto& b : blocks_) b.collect_buffers(out);
  post_.collect_buffers(out);
}

void Decoder::drop_state() {
  for (auto& b : blocks_) b.drop_state();
  post_.drop_state();
  final_.drop_state();
  saved_out_ = Tensor();
}

// ---- Discriminator ----------------------------------------------------------------

Discriminator::Discriminator()
    : c1_("disc.c1", 3, 64), c2_("disc.c2", 64, 64), c3_("disc.c3", 64, 64),
      lin_w_(64, 0.0f), lin_b_(1, 0.0f), glin_w_(64, 0.0f), glin_b_(1, 0.0f) {}

std::vector<float> Discriminator::forward(const Tensor& images, bool train,
                                          bool keep_state) {
  Tensor x = c1_.forward(images, train, keep_state);
  x = c2_.forward(x, train, keep_state);
  x = c3_.forward(x, train, keep_state);
  feat_h_ = x.h;
  feat_w_ = x.w;
  Tensor pooled(x.n, 64, 1, 1);
  const float inv = 1.0f / static_cast<float>(x.plane_size());
  for (int n = 0; n < x.n; ++n)
    for (int c = 0; c < 64; ++c) {
      const float* p = x.plane(n, c);
      double s = 0.0;
      for (std::size_t i = 0; i < x.plane_size(); ++i) s += p[i];
      pooled.at(n, c, 0, 0) = static_cast<float>(s) * inv;
    }
  std::vector<float> scores(static_cast<std::size_t>(x.n));
  for (int n = 0; n < x.n; ++n) {
    float z = lin_b_[0];
    for (int c = 0; c < 64; ++c)
      z += lin_w_[static_cast<std::size_t>(c)] * pooled.at(n, c, 0, 0);
    scores[static_cast<std::size_t>(n)] = 1.0f / (1.0f + std::exp(-z));
  }
  if (keep_state) {
    saved_pooled_ = std::move(pooled);
    saved_scores_ = scores;
  }
  return scores;
}

Tensor Discriminator::backward(const std::vector<float>& gscores,
                               bool param_grads, bool input_grad) {
  const int n = static_cast<int>(gscores.size());
  std::vector<float> gz(gscores.size());
  for (int i = 0; i < n; ++i) {
    const float s = saved_scores_[static_cast<std::size_t>(i)];
    gz[static_cast<std::size_t>(i)] =
        gscores[static_cast<std::size_t>(i)] * s * (1.0f - s);
  }
  if (param_grads) {
    for (int i = 0; i < n; ++i) {
      glin_b_[0] += gz[static_cast<std::size_t>(i)];
      for (int c = 0; c < 64; ++c)
        glin_w_[static_cast<std::size_t>(c)] +=
            gz[static_cast<std::size_t>(i)] * saved_pooled_.at(i, c, 0, 0);
    }
  }
  Tensor gfeat = Tensor::uninit(n, 64, feat_h_, feat_w_);
  const float inv = 1.0f / static_cast<float>(gfeat.plane_size());
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < 64; ++c) {
      const float g =
          gz[static_cast<std::size_t>(i)] * lin_w_[static_cast<std::size_t>(c)] * inv;
      float* p = gfeat.plane(i, c);
      std::fill(p, p + gfeat.plane_size(), g);
    }
  Tensor gx = c1_.backward(
      c2_.backward(c3_.backward(gfeat, param_grads), param_grads), param_grads);
  if (!input_grad) return Tensor();
  return gx;
}

void Discriminator::init(Rng& rng) {
  c1_.init(rng);
  c2_.init(rng);
  c3_.init(rng);
  const double std = std::sqrt(1.0 / 64.0);
  for (auto& w : lin_w_) w = static_cast<float>(rng.normal() * std);
  lin_b_[0] = 0.0f;
}

void Discriminator::collect_params(std::vector<ParamRef>& out) {
  c1_.collect_params(out);
  c2_.collect_params(out);
  c3_.collect_params(out);
  out.push_back({"disc.linear.weight", lin_w_.data(), glin_w_.data(), lin_w_.size()});
  out.push_back({"disc.linear.bias", lin_b_.data(), glin_b_.data(), lin_b_.size()});
}

void Discriminator::collect_buffers(std::vector<BufferRef>& out) {
  c1_.collect_buffers(out);
  c2_.collect_buffers(out);
  c3_.collect_buffers(out);
}

void Discriminator::drop_state() {
  c1_.drop_state();
  c2_.drop_state();
  c3_.drop_state();
  saved_pooled_ = Tensor();
  saved_scores_.clear();
}

// ---- ModelBundle -------------------------------------------------------------------

void ModelBundle::init(std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x696e6974ULL));
  adapter.init(rng);
  encoder.init(rng);
  decoder.init(rng);
  discriminator.init(rng);
}

std::vector<ParamRef> ModelBundle::params() {
  std::vector<ParamRef> out = codec_params();
  discriminator.collect_params(out);
  return out;
}

std::vector<ParamRef> ModelBundle::codec_params() {
  std::vector<ParamRef> out;
  adapter.collect_params(out);
  encoder.collect_params(out);
  decoder.collect_params(out);
  return out;
}

std::vector<ParamRef> ModelBundle::discriminator_params() {
  std::vector<ParamRef> out;
  discriminator.collect_params(out);
  return out;
}

std::vector<BufferRef> ModelBundle::buffers() {
  std::vector<BufferRef> out;
  adapter.collect_buffers(out);
  encoder.collect_buffers(out);
  decoder.collect_buffers(out);
  discriminator.collect_buffers(out);
  return out;
}

void ModelBundle::drop_state() {
  adapter.drop_state();
  encoder.drop_state();
  decoder.drop_state();
  discriminator.drop_state();
}

// ---- Adam ---------------------------------------------------------------------------

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), step_count_(1, 0.0f) {}

void Adam::attach(const std::vector<ParamRef>& params) {
  m_.clear();
  v_.clear();
  for (const auto& p : params) {
    m_.emplace_back(p.count, 0.0f);
    v_.emplace_back(p.count, 0.0f);
  }
  step_count_[0] = 0.0f;
}

void Adam::step(const std::vector<ParamRef>& params) {
  if (m_.size() != params.size())
    throw std::logic_error("Adam: attach() the parameter list first");
  step_count_[0] += 1.0f;
  const double t = step_count_[0];
  const double bc1 = 1.0 - std::pow(beta1_, t);
  const double bc2 = 1.0 - std::pow(beta2_, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const ParamRef& p = params[i];
    float* m = m_[i].data();
    float* v = v_[i].data();
    for (std::size_t j = 0; j < p.count; ++j) {
      const float g = p.grad[j];
      m[j] = static_cast<float>(beta1_ * m[j] + (1.0 - beta1_) * g);
      v[j] = static_cast<float>(beta2_ * v[j] + (1.0 - beta2_) * g * g);
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p.value[j] -= static_cast<float>(lr_ * mhat / (std::sqrt(vhat) + eps_));
    }
  }
}

void Adam::zero_grads(const std::vector<ParamRef>& params) {
  for (const auto& p : params) std::fill(p.grad, p.grad + p.count, 0.0f);
}

void Adam::collect_state(const std::string& prefix,
                         std::vector<BufferRef>& out) {
  out.push_back({prefix + ".t", step_count_.data(), step_count_.size()});
  for (std::size_t i = 0; i < m_.size(); ++i) {
    out.push_back({prefix + ".m" + std::to_string(i), m_[i].data(), m_[i].size()});
    out.push_back({prefix + ".v" + std::to_string(i), v_[i].data(), v_[i].size()});
  }
}

// ---- checkpoint ----------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'W', 'M', 'K', 'C', 'K', 'P', 'T', '1'};

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void write_i64(std::ostream& os, std::int64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
std::int64_t read_i64(std::istream& is) {
  std::int64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

std::vector<BufferRef> all_entries(ModelBundle& models, Adam* opt_codec,
                                   Adam* opt_disc) {
  std::vector<BufferRef> entries;
  std::vector<ParamRef> params = models.params();
  entries.reserve(params.size() + 64);
  for (const auto& p : params) entries.push_back({p.name, p.value, p.count});
  for (const auto& b : models.buffers()) entries.push_back(b);
  if (opt_codec) opt_codec->collect_state("opt_codec", entries);
  if (opt_disc) opt_disc->collect_state("opt_disc", entries);
  return entries;
}

}  // namespace

void save_checkpoint(const std::string& path, ModelBundle& models,
                     const std::string& config_json, std::int64_t step,
                     Adam* opt_codec, Adam* opt_disc) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  os.write(kMagic, sizeof kMagic);
  write_u32(os, 1);
  write_i64(os, step);
  write_u32(os, static_cast<std::uint32_t>(config_json.size()));
  os.write(config_json.data(), static_cast<std::streamsize>(config_json.size()));
  const auto entries = all_entries(models, opt_codec, opt_disc);
  write_u32(os, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    write_u32(os, static_cast<std::uint32_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    write_i64(os, static_cast<std::int64_t>(e.count));
    os.write(reinterpret_cast<const char*>(e.value),
             static_cast<std::streamsize>(e.count * sizeof(float)));
  }
  if (!os) throw std::runtime_error("short write to checkpoint '" + path + "'");
}

CheckpointInfo peek_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw std::runtime_error("'" + path + "' is not a wmkit checkpoint");
  const std::uint32_t version = read_u32(is);
  if (version != 1)
    throw std::runtime_error("unsupported checkpoint version " +
                             std::to_string(version));
  CheckpointInfo info;
  info.step = read_i64(is);
  const std::uint32_t len = read_u32(is);
  info.config_json.resize(len);
  is.read(info.config_json.data(), len);
  if (!is) throw std::runtime_error("truncated checkpoint '" + path + "'");
  return info;
}

CheckpointInfo load_checkpoint(const std::string& path, ModelBundle& models,
                               Adam* opt_codec, Adam* opt_disc) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw std::runtime_error("'" + path + "' is not a wmkit checkpoint");
  if (read_u32(is) != 1)
    throw std::runtime_error("unsupported checkpoint version");
  CheckpointInfo info;
  info.step = read_i64(is);
  const std::uint32_t len = read_u32(is);
  info.config_json.resize(len);
  is.read(info.config_json.data(), len);

  std::map<std::string, std::vector<float>> stored;
  const std::uint32_t count = read_u32(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = read_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const std::int64_t n = read_i64(is);
    std::vector<float> data(static_cast<std::size_t>(n));
    is.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(float)));
    if (!is) throw std::runtime_error("truncated checkpoint '" + path + "'");
    stored.emplace(std::move(name), std::move(data));
  }

  auto restore = [&](const std::string& name, float* dst, std::size_t n,
                     bool required) {
    const auto it = stored.find(name);
    if (it == stored.end()) {
      if (required)
        throw std::runtime_error("checkpoint is missing tensor '" + name + "'");
      return;
    }
    if (it->second.size() != n)
      throw std::runtime_error("checkpoint tensor '" + name + "' has " +
                               std::to_string(it->second.size()) +
                               " values, expected " + std::to_string(n));
    std::copy(it->second.begin(), it->second.end(), dst);
  };

  for (const auto& p : models.params()) restore(p.name, p.value, p.count, true);
  for (const auto& b : models.buffers()) restore(b.name, b.value, b.count, true);
  std::vector<BufferRef> opt_entries;
  if (opt_codec) opt_codec->collect_state("opt_codec", opt_entries);
  if (opt_disc) opt_disc->collect_state("opt_disc", opt_entries);
  for (const auto& e : opt_entries) restore(e.name, e.value, e.count, false);
  return info;
}

}  // namespace wm::nn
