#include "aio/guidance.hpp"

#include "aio/errors.hpp"
#include "aio/imgtensor.hpp"

namespace aio::guide {

DegradationEncoder::DegradationEncoder(nn::ParamStore& ps, const std::string& prefix) {
  const int widths[5] = {3, 16, 32, 64, 64};
  for (int i = 0; i < 4; ++i)
    stages_[i] = nn::Conv2d(ps, prefix + ".stage" + std::to_string(i + 1),
                            widths[i], widths[i + 1], 3, 2);
  fc1_ = nn::Linear(ps, prefix + ".fc1", 256, kCodeDim);
  fc2_ = nn::Linear(ps, prefix + ".fc2", kCodeDim, kCodeDim);
  // fixed 3x3 binomial kernel for the input high-pass; not a parameter
  const double k[9] = {1, 2, 1, 2, 4, 2, 1, 2, 1};
  std::vector<double> w(27);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 9; ++i) w[c * 9 + i] = k[i] / 16.0;
  blur_kernel_ = ad::Tensor::from({3, 1, 3, 3}, std::move(w));
}

ad::Tensor DegradationEncoder::encode(const ad::Tensor& patch) const {
  if (patch.shape().size() != 3 || patch.dim(0) != 3)
    throw ContractError("degradation encoder: expected [3,h,w]");
  if (patch.dim(1) < kMinPatch || patch.dim(2) < kMinPatch)
    throw ContractError("degradation encoder: patch must be at least 32x32");
  // high-pass residual: degradation signatures (grain, streaks, contrast
  // loss) live above the content base band, and removing the base band keeps
  // the pooled statistics input-dependent instead of filter-dominated
  ad::Tensor nobias;
  auto hp = ad::sub(patch, ad::conv2d(patch, blur_kernel_, nobias, 1, 1, 3));
  auto h3 = ad::tanh_(stages_[2].forward(
      ad::tanh_(stages_[1].forward(ad::tanh_(stages_[0].forward(hp))))));
  auto h4 = ad::tanh_(stages_[3].forward(h3));
  // pooled channel means plus energies from the two deepest stages; energy
  // carries the degradation signature (noise grain vs streaks vs haze),
  // centering keeps the code direction off the shared response floor
  auto pooled = ad::concat0(
      {ad::mean_spatial(h3), ad::mean_spatial(h4),
       ad::mean_spatial(ad::square(h3)), ad::mean_spatial(ad::square(h4))});
  pooled = ad::l2_normalize(ad::add_broadcast(pooled, ad::neg(ad::mean_all(pooled))));
  return ad::l2_normalize(fc2_.forward(ad::tanh_(fc1_.forward(pooled))));
}

enc::SemanticFeatureSet extract_semantic(const ad::Tensor& image,
                                         const enc::SemanticBackend& backend) {
  auto feats = backend.encode(image);
  // guidance conditions on the degraded input itself; no gradient flows back
  for (auto& f : feats.levels) f = ad::detach(f);
  return feats;
}

enc::SemanticFeatureSet extract_semantic(const ImageTensor& image,
                                         const enc::SemanticBackend& backend) {
  return extract_semantic(to_chw(image), backend);
}

FeatureModulator::FeatureModulator(nn::ParamStore& ps, const std::string& name,
                                   int channels)
    : channels_(channels) {
  head_ = nn::Linear(ps, name + ".head",
                     enc::SemanticBackend::kFeatureDim + DegradationEncoder::kCodeDim,
                     2 * channels);
  unit_gamma_ = ad::Tensor::full({channels}, 1.0);
  zero_beta_ = ad::Tensor::zeros({channels});
}

ad::Tensor FeatureModulator::forward(const ad::Tensor& f_l, const ad::Tensor& z,
                                     const ad::Tensor& x_dec) const {
  if (x_dec.dim(0) != channels_)
    throw ContractError("feature modulator: channel mismatch");
  auto st = head_.forward(ad::concat0({f_l, z}));
  auto scale = ad::slice0(st, 0, channels_);
  auto shift = ad::slice0(st, channels_, channels_);
  auto normed = ad::layernorm_chw(x_dec, unit_gamma_, zero_beta_);
  return ad::add(ad::scale_shift_chw(normed, scale, shift), x_dec);
}

GuidanceStack::GuidanceStack(nn::ParamStore& ps, const std::string& prefix,
                             const restore::RestorerConfig& rcfg) {
  for (int l = 1; l <= 4; ++l)
    pgm_[l - 1] = FeatureModulator(ps, prefix + ".pgm" + std::to_string(l),
                                   rcfg.channels(l));
}

void GuidanceStack::set_context(const enc::SemanticFeatureSet& features,
                                const ad::Tensor& z) {
  features_ = features;
  z_ = z;
}

ad::Tensor GuidanceStack::guidance_for(int level, const ad::Tensor& x_dec) {
  if (level < 1 || level > 4) throw ContractError("guidance level out of range");
  if (!z_.defined())
    throw ContractError("guidance context not set before forward");
  auto y = pgm_[level - 1].forward(features_.levels[level - 1], z_, x_dec);
  produced_[level - 1] = y.node().get();
  calls_[level - 1]++;
  return y;
}

void GuidanceStack::reset_audit() {
  produced_ = {};
  calls_ = {};
}

}  // namespace aio::guide
