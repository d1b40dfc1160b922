#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "aio/nn.hpp"
#include "aio/tensor.hpp"

namespace aio::restore {

struct RestorerConfig {
  int base_channels = 48;
  std::array<int, 4> blocks{4, 6, 6, 8};
  std::array<int, 4> heads{1, 2, 4, 8};
  double ffn_expansion = 2.66;
  double width_scale = 1.0;  // toy runs shrink channels

  // Channels at level l in 1..4: scaled base * 2^(l-1).
  int channels(int level) const;
  void validate() const;
};

// Test instrumentation: copies of every attention softmax output plus the
// guidance tensors consumed as cross-attention queries.
struct AttnRecord {
  std::vector<double> matrix;  // row-major [rows, cols]
  int rows = 0, cols = 0;
};
struct AttnProbe {
  std::vector<AttnRecord> attention;
  std::vector<const void*> cross_queries;
  std::vector<ad::Shape> cross_query_shapes;
};
using ProbeHandle = std::shared_ptr<AttnProbe*>;

// Channel-wise multi-head self-attention: attention matrices are
// [C/heads, C/heads] regardless of spatial size. Queries/keys/values come
// from a 1x1 conv followed by a 3x3 depthwise conv; each head carries a
// learnable temperature.
class ChannelAttention {
public:
  ChannelAttention() = default;
  ChannelAttention(nn::ParamStore& ps, const std::string& name, int channels,
                   int heads, ProbeHandle probe);
  ad::Tensor forward(const ad::Tensor& x) const;  // x pre-normalized

private:
  nn::Conv2d qkv_, qkv_dw_, proj_;
  ad::Tensor temperature_;  // [heads]
  int heads_ = 1;
  ProbeHandle probe_;
};

// Gated feed-forward: two depthwise-conv paths, one gated by GELU,
// elementwise product, 1x1 projection.
class GatedFeedForward {
public:
  GatedFeedForward() = default;
  GatedFeedForward(nn::ParamStore& ps, const std::string& name, int channels,
                   double expansion);
  ad::Tensor forward(const ad::Tensor& x) const;  // x pre-normalized

private:
  nn::Conv2d expand_, dw_, project_;
  int hidden_ = 0;
};

// Cross-attention where the guidance tensor provides queries over decoder
// features, followed by a channel-attention pass and a residual add of the
// guidance input.
class GuidedCrossAttention {
public:
  GuidedCrossAttention() = default;
  GuidedCrossAttention(nn::ParamStore& ps, const std::string& name, int channels,
                       int heads, ProbeHandle probe);
  ad::Tensor forward(const ad::Tensor& x_dec, const ad::Tensor& y_guid) const;

private:
  nn::ChannelLayerNorm norm_q_, norm_kv_, norm_inner_;
  nn::Conv2d q_proj_, q_dw_, kv_proj_, kv_dw_, cross_out_;
  ad::Tensor alpha_;  // [heads]
  ChannelAttention inner_;
  int heads_ = 1;
  ProbeHandle probe_;
};

// Encoder block: pre-norm channel attention then gated feed-forward, both
// with residual adds.
class TransformerBlock {
public:
  TransformerBlock() = default;
  TransformerBlock(nn::ParamStore& ps, const std::string& name, int channels,
                   int heads, double expansion, ProbeHandle probe);
  ad::Tensor forward(const ad::Tensor& x) const;

private:
  nn::ChannelLayerNorm norm1_, norm2_;
  ChannelAttention attn_;
  GatedFeedForward ffn_;
};

// Decoder/latent block: guided cross attention then gated feed-forward.
class GuidedTransformerBlock {
public:
  GuidedTransformerBlock() = default;
  GuidedTransformerBlock(nn::ParamStore& ps, const std::string& name, int channels,
                         int heads, double expansion, ProbeHandle probe);
  ad::Tensor forward(const ad::Tensor& x_dec, const ad::Tensor& y_guid) const;

private:
  GuidedCrossAttention cross_;
  nn::ChannelLayerNorm norm_ffn_;
  GatedFeedForward ffn_;
};

// Supplies the per-level guidance tensor given the decoder input at that
// level (level 4 is the latent).
class GuidanceProvider {
public:
  virtual ~GuidanceProvider() = default;
  virtual ad::Tensor guidance_for(int level, const ad::Tensor& x_dec) = 0;
};

// Guidance that returns the decoder features unchanged; used by tests and by
// the proxy restorer before any guidance modules exist.
class IdentityGuidance : public GuidanceProvider {
public:
  ad::Tensor guidance_for(int, const ad::Tensor& x_dec) override { return x_dec; }
};

// 4-level U-shaped restoration branch with a global residual: 3x3 embed,
// downsampling encoder of TransformerBlocks, guided latent/decoder blocks
// with encoder skip connections, 3x3 output conv, plus the input.
class Restorer {
public:
  Restorer(nn::ParamStore& ps, const std::string& prefix, RestorerConfig cfg);

  // image: [3,H,W] with H,W divisible by 8.
  ad::Tensor forward(const ad::Tensor& image, GuidanceProvider& guidance) const;

  void set_probe(AttnProbe* p) { *probe_ = p; }
  const RestorerConfig& config() const { return cfg_; }

private:
  RestorerConfig cfg_;
  ProbeHandle probe_;
  nn::Conv2d embed_, out_conv_;
  std::array<std::vector<TransformerBlock>, 3> encoder_;
  std::vector<GuidedTransformerBlock> latent_;
  std::array<std::vector<GuidedTransformerBlock>, 3> decoder_;
  std::array<nn::Conv2d, 3> down_;
  std::array<nn::Conv2d, 3> up_;
  std::array<nn::Conv2d, 3> reduce_;
};

}  // namespace aio::restore
