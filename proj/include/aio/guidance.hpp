#pragma once

#include <array>
#include <string>

#include "aio/encoders.hpp"
#include "aio/nn.hpp"
#include "aio/restorer.hpp"
#include "aio/tensor.hpp"

namespace aio::guide {

// Compact degradation representation: four stride-2 convs, global average
// pool, two-layer MLP, L2-normalized 128-d code.
class DegradationEncoder {
public:
  static constexpr int kCodeDim = 128;
  static constexpr int kMinPatch = 32;

  DegradationEncoder() = default;
  DegradationEncoder(nn::ParamStore& ps, const std::string& prefix);

  // patch: [3,h,w] with h,w >= 32; returns a unit-norm [128] code.
  ad::Tensor encode(const ad::Tensor& patch) const;

private:
  std::array<nn::Conv2d, 4> stages_;
  nn::Linear fc1_, fc2_;
  ad::Tensor blur_kernel_;
};

// Pooled per-level features from the frozen semantic backend; constants with
// respect to the training graph.
enc::SemanticFeatureSet extract_semantic(const ad::Tensor& image,
                                         const enc::SemanticBackend& backend);
enc::SemanticFeatureSet extract_semantic(const ImageTensor& image,
                                         const enc::SemanticBackend& backend);

// Per-level affine modulation head: [semantic feature, degradation code]
// concat -> linear -> per-channel scale/shift applied to the normalized
// decoder features, with a residual add.
class FeatureModulator {
public:
  FeatureModulator() = default;
  FeatureModulator(nn::ParamStore& ps, const std::string& name, int channels);

  ad::Tensor forward(const ad::Tensor& f_l, const ad::Tensor& z,
                     const ad::Tensor& x_dec) const;

private:
  nn::Linear head_;
  ad::Tensor unit_gamma_, zero_beta_;  // plain normalization, fixed affine
  int channels_ = 0;
};

// Bundles the four modulation heads and supplies guidance tensors to the
// restorer; context (semantic features + degradation code) is set per image.
class GuidanceStack : public restore::GuidanceProvider {
public:
  GuidanceStack(nn::ParamStore& ps, const std::string& prefix,
                const restore::RestorerConfig& rcfg);

  void set_context(const enc::SemanticFeatureSet& features, const ad::Tensor& z);
  ad::Tensor guidance_for(int level, const ad::Tensor& x_dec) override;

  // audit hooks
  const void* produced_node(int level) const { return produced_[level - 1]; }
  int calls(int level) const { return calls_[level - 1]; }
  void reset_audit();

private:
  std::array<FeatureModulator, 4> pgm_;
  enc::SemanticFeatureSet features_;
  ad::Tensor z_;
  std::array<const void*, 4> produced_{};
  std::array<int, 4> calls_{};
};

}  // namespace aio::guide
