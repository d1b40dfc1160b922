#include "aio/restorer.hpp"

#include <cmath>

#include "aio/errors.hpp"

namespace aio::restore {

int RestorerConfig::channels(int level) const {
  const int base = std::max(2, static_cast<int>(std::lround(base_channels * width_scale)));
  return base << (level - 1);
}

void RestorerConfig::validate() const {
  if (base_channels < 2) throw ConfigError("restorer: base_channels must be >= 2");
  if (channels(1) % 2 != 0)
    throw ConfigError("restorer: scaled base channels must be even");
  for (int l = 1; l <= 4; ++l) {
    if (blocks[l - 1] < 1) throw ConfigError("restorer: every level needs >= 1 block");
    if (channels(l) % heads[l - 1] != 0)
      throw ConfigError("restorer: heads must divide channels at level " +
                        std::to_string(l));
  }
  if (ffn_expansion <= 0) throw ConfigError("restorer: ffn_expansion must be positive");
}

namespace {
// Shared channel-attention core: per head, rows of [c_h, HW] queries/keys are
// L2-normalized, logits scaled by the head's learnable temperature, softmax
// over key channels.
ad::Tensor attend(const ad::Tensor& q, const ad::Tensor& k, const ad::Tensor& v,
                  const ad::Tensor& temperature, int heads,
                  const ProbeHandle& probe) {
  const int c = q.dim(0), h = q.dim(1), w = q.dim(2);
  const int ch = c / heads, hw = h * w;
  std::vector<ad::Tensor> outs;
  outs.reserve(heads);
  for (int head = 0; head < heads; ++head) {
    auto qh = ad::reshape(ad::slice0(q, head * ch, ch), {ch, hw});
    auto kh = ad::reshape(ad::slice0(k, head * ch, ch), {ch, hw});
    auto vh = ad::reshape(ad::slice0(v, head * ch, ch), {ch, hw});
    auto logits = ad::matmul(ad::l2_normalize_rows(qh),
                             ad::transpose2(ad::l2_normalize_rows(kh)));
    auto attn = ad::softmax_rows(ad::scale_by(logits, ad::pick(temperature, head)));
    if (probe && *probe)
      (*probe)->attention.push_back({attn.values(), ch, ch});
    outs.push_back(ad::matmul(attn, vh));
  }
  return ad::reshape(ad::concat0(outs), {c, h, w});
}
}  // namespace

ChannelAttention::ChannelAttention(nn::ParamStore& ps, const std::string& name,
                                   int channels, int heads, ProbeHandle probe)
    : heads_(heads), probe_(std::move(probe)) {
  qkv_ = nn::Conv2d(ps, name + ".qkv", channels, channels * 3, 1, 1, 0, 1, false);
  qkv_dw_ = nn::Conv2d(ps, name + ".qkv_dw", channels * 3, channels * 3, 3, 1, -1,
                       channels * 3, false);
  proj_ = nn::Conv2d(ps, name + ".proj", channels, channels, 1, 1, 0, 1, false);
  temperature_ = ps.create_constant(name + ".temperature", {heads}, 1.0);
}

ad::Tensor ChannelAttention::forward(const ad::Tensor& x) const {
  const int c = x.dim(0);
  auto qkv = qkv_dw_.forward(qkv_.forward(x));
  auto q = ad::slice0(qkv, 0, c);
  auto k = ad::slice0(qkv, c, c);
  auto v = ad::slice0(qkv, 2 * c, c);
  return proj_.forward(attend(q, k, v, temperature_, heads_, probe_));
}

GatedFeedForward::GatedFeedForward(nn::ParamStore& ps, const std::string& name,
                                   int channels, double expansion) {
  hidden_ = std::max(2, static_cast<int>(channels * expansion));
  expand_ = nn::Conv2d(ps, name + ".expand", channels, hidden_ * 2, 1, 1, 0, 1, false);
  dw_ = nn::Conv2d(ps, name + ".dw", hidden_ * 2, hidden_ * 2, 3, 1, -1,
                   hidden_ * 2, false);
  project_ = nn::Conv2d(ps, name + ".project", hidden_, channels, 1, 1, 0, 1, false);
}

ad::Tensor GatedFeedForward::forward(const ad::Tensor& x) const {
  auto h = dw_.forward(expand_.forward(x));
  auto gate = ad::gelu(ad::slice0(h, 0, hidden_));
  auto value = ad::slice0(h, hidden_, hidden_);
  return project_.forward(ad::mul(gate, value));
}

GuidedCrossAttention::GuidedCrossAttention(nn::ParamStore& ps,
                                           const std::string& name, int channels,
                                           int heads, ProbeHandle probe)
    : heads_(heads), probe_(probe) {
  norm_q_ = nn::ChannelLayerNorm(ps, name + ".norm_q", channels);
  norm_kv_ = nn::ChannelLayerNorm(ps, name + ".norm_kv", channels);
  norm_inner_ = nn::ChannelLayerNorm(ps, name + ".norm_inner", channels);
  q_proj_ = nn::Conv2d(ps, name + ".q", channels, channels, 1, 1, 0, 1, false);
  q_dw_ = nn::Conv2d(ps, name + ".q_dw", channels, channels, 3, 1, -1, channels, false);
  kv_proj_ = nn::Conv2d(ps, name + ".kv", channels, channels * 2, 1, 1, 0, 1, false);
  kv_dw_ = nn::Conv2d(ps, name + ".kv_dw", channels * 2, channels * 2, 3, 1, -1,
                      channels * 2, false);
  cross_out_ = nn::Conv2d(ps, name + ".cross_out", channels, channels, 1, 1, 0, 1, false);
  alpha_ = ps.create_constant(name + ".alpha", {heads}, 1.0);
  inner_ = ChannelAttention(ps, name + ".inner", channels, heads, probe);
}

ad::Tensor GuidedCrossAttention::forward(const ad::Tensor& x_dec,
                                         const ad::Tensor& y_guid) const {
  if (x_dec.shape() != y_guid.shape())
    throw ContractError("guided cross attention: decoder/guidance shape mismatch");
  if (probe_ && *probe_) {
    (*probe_)->cross_queries.push_back(y_guid.node().get());
    (*probe_)->cross_query_shapes.push_back(y_guid.shape());
  }
  const int c = x_dec.dim(0);
  auto q = q_dw_.forward(q_proj_.forward(norm_q_.forward(y_guid)));
  auto kv = kv_dw_.forward(kv_proj_.forward(norm_kv_.forward(x_dec)));
  auto k = ad::slice0(kv, 0, c);
  auto v = ad::slice0(kv, c, c);
  auto ca = cross_out_.forward(attend(q, k, v, alpha_, heads_, probe_));
  // channel-attention pass on the cross-attended features, then the guidance
  // residual
  return ad::add(inner_.forward(norm_inner_.forward(ca)), y_guid);
}

TransformerBlock::TransformerBlock(nn::ParamStore& ps, const std::string& name,
                                   int channels, int heads, double expansion,
                                   ProbeHandle probe) {
  norm1_ = nn::ChannelLayerNorm(ps, name + ".norm1", channels);
  norm2_ = nn::ChannelLayerNorm(ps, name + ".norm2", channels);
  attn_ = ChannelAttention(ps, name + ".attn", channels, heads, std::move(probe));
  ffn_ = GatedFeedForward(ps, name + ".ffn", channels, expansion);
}

ad::Tensor TransformerBlock::forward(const ad::Tensor& x) const {
  auto a = ad::add(x, attn_.forward(norm1_.forward(x)));
  return ad::add(a, ffn_.forward(norm2_.forward(a)));
}

GuidedTransformerBlock::GuidedTransformerBlock(nn::ParamStore& ps,
                                               const std::string& name,
                                               int channels, int heads,
                                               double expansion, ProbeHandle probe) {
  cross_ = GuidedCrossAttention(ps, name + ".cross", channels, heads, probe);
  norm_ffn_ = nn::ChannelLayerNorm(ps, name + ".norm_ffn", channels);
  ffn_ = GatedFeedForward(ps, name + ".ffn", channels, expansion);
}

ad::Tensor GuidedTransformerBlock::forward(const ad::Tensor& x_dec,
                                           const ad::Tensor& y_guid) const {
  auto m = cross_.forward(x_dec, y_guid);
  return ad::add(m, ffn_.forward(norm_ffn_.forward(m)));
}

Restorer::Restorer(nn::ParamStore& ps, const std::string& prefix, RestorerConfig cfg)
    : cfg_(cfg), probe_(std::make_shared<AttnProbe*>(nullptr)) {
  cfg_.validate();
  const int c1 = cfg_.channels(1);
  embed_ = nn::Conv2d(ps, prefix + ".embed", 3, c1, 3);
  out_conv_ = nn::Conv2d(ps, prefix + ".out", c1, 3, 3);

  for (int l = 1; l <= 3; ++l) {
    const int c = cfg_.channels(l);
    auto& blocks = encoder_[l - 1];
    for (int i = 0; i < cfg_.blocks[l - 1]; ++i)
      blocks.emplace_back(ps,
                          prefix + ".enc" + std::to_string(l) + ".block" +
                              std::to_string(i),
                          c, cfg_.heads[l - 1], cfg_.ffn_expansion, probe_);
    // downsample: 3x3 conv to C/2 then pixel-unshuffle x2 -> 2C
    down_[l - 1] = nn::Conv2d(ps, prefix + ".down" + std::to_string(l), c, c / 2, 3,
                              1, -1, 1, false);
  }
  const int c4 = cfg_.channels(4);
  for (int i = 0; i < cfg_.blocks[3]; ++i)
    latent_.emplace_back(ps, prefix + ".latent.block" + std::to_string(i), c4,
                         cfg_.heads[3], cfg_.ffn_expansion, probe_);
  for (int l = 3; l >= 1; --l) {
    const int c = cfg_.channels(l);
    // upsample: 3x3 conv to 2*(2C) then pixel-shuffle x2 -> C
    up_[l - 1] = nn::Conv2d(ps, prefix + ".up" + std::to_string(l), 2 * c, 4 * c, 3,
                            1, -1, 1, false);
    reduce_[l - 1] = nn::Conv2d(ps, prefix + ".reduce" + std::to_string(l), 2 * c, c,
                                1, 1, 0, 1, false);
    auto& blocks = decoder_[l - 1];
    for (int i = 0; i < cfg_.blocks[l - 1]; ++i)
      blocks.emplace_back(ps,
                          prefix + ".dec" + std::to_string(l) + ".block" +
                              std::to_string(i),
                          c, cfg_.heads[l - 1], cfg_.ffn_expansion, probe_);
  }
}

ad::Tensor Restorer::forward(const ad::Tensor& image,
                             GuidanceProvider& guidance) const {
  if (image.shape().size() != 3 || image.dim(0) != 3)
    throw ContractError("restore: expected [3,H,W] input");
  if (image.dim(1) % 8 != 0 || image.dim(2) % 8 != 0)
    throw ContractError("restore: H and W must be divisible by 8");

  auto x = embed_.forward(image);
  std::array<ad::Tensor, 3> skips;
  for (int l = 1; l <= 3; ++l) {
    for (const auto& tb : encoder_[l - 1]) x = tb.forward(x);
    skips[l - 1] = x;
    x = ad::pixel_unshuffle(down_[l - 1].forward(x), 2);
  }

  auto y4 = guidance.guidance_for(4, x);
  for (const auto& etb : latent_) x = etb.forward(x, y4);

  for (int l = 3; l >= 1; --l) {
    x = ad::pixel_shuffle(up_[l - 1].forward(x), 2);
    x = reduce_[l - 1].forward(ad::concat0({x, skips[l - 1]}));
    auto y = guidance.guidance_for(l, x);
    for (const auto& etb : decoder_[l - 1]) x = etb.forward(x, y);
  }
  return ad::add(out_conv_.forward(x), image);
}

}  // namespace aio::restore
