#include "aio/encoders.hpp"

#include "aio/checkpoint.hpp"
#include "aio/errors.hpp"
#include "aio/imgtensor.hpp"
#include "aio/rng.hpp"

namespace aio::enc {

BackendMode backend_mode_from_name(const std::string& name) {
  if (name == "toy") return BackendMode::Toy;
  if (name == "pretrained") return BackendMode::Pretrained;
  throw ConfigError("unknown backend mode: " + name);
}

namespace {
// Centered, unit-norm feature vector: keeps the embedding direction driven by
// what differs between inputs rather than by the shared response floor.
ad::Tensor standardize(const ad::Tensor& x) {
  return ad::l2_normalize(ad::add_broadcast(x, ad::neg(ad::mean_all(x))));
}

// Toy weights come from the store's seeded initializers; pretrained mode
// overwrites them from a named-array archive with matching names/shapes.
void finalize(nn::ParamStore& ps, BackendMode mode,
              const std::optional<std::string>& weights_path, const char* role) {
  if (mode == BackendMode::Pretrained) {
    if (!weights_path || weights_path->empty())
      throw DependencyError(
          std::string(role) +
          " backend: pretrained mode needs a weights archive; set the "
          "backend weights path in the config (see README, \"Pretrained "
          "backends\") or use mode \"toy\"");
    ckpt::Archive a;
    try {
      a = ckpt::load_archive(*weights_path);
    } catch (const std::exception& e) {
      throw DependencyError(std::string(role) + " backend: cannot load weights: " +
                            e.what());
    }
    for (auto& [name, t] : ps.entries()) {
      if (!a.has(name))
        throw DependencyError(std::string(role) + " backend: archive misses " + name);
      const auto& src = a.get(name);
      if (src.shape() != t.shape())
        throw DependencyError(std::string(role) + " backend: shape mismatch for " +
                              name);
      const_cast<ad::Tensor&>(t).values() = src.values();
    }
  }
  ps.set_trainable(false);  // frozen: no trainable parameters exposed
}
}  // namespace

VisionLanguageBackend::VisionLanguageBackend(
    BackendMode mode, std::uint64_t seed,
    const std::optional<std::string>& weights_path)
    : params_(derive_seed(seed, "vision_language")), seed_(seed) {
  conv1_ = nn::Conv2d(params_, "image.conv1", 3, 8, 3, 2);
  conv2_ = nn::Conv2d(params_, "image.conv2", 8, 16, 3, 2);
  conv3_ = nn::Conv2d(params_, "image.conv3", 16, 32, 3, 2);
  img_fc1_ = nn::Linear(params_, "image.fc1", 96, kEmbedDim);
  img_fc2_ = nn::Linear(params_, "image.fc2", kEmbedDim, kEmbedDim);
  txt_fc1_ = nn::Linear(params_, "text.fc1", kEmbedDim, kEmbedDim);
  txt_fc2_ = nn::Linear(params_, "text.fc2", kEmbedDim, kEmbedDim);
  finalize(params_, mode, weights_path, "vision-language");
}

ad::Tensor VisionLanguageBackend::encode_image(const ad::Tensor& image) const {
  if (image.shape().size() != 3 || image.dim(0) != 3)
    throw ContractError("encode_image: expected [3,H,W]");
  auto x = ad::resize_bilinear(image, input_resolution_, input_resolution_);
  auto h1 = ad::tanh_(conv1_.forward(x));
  auto h2 = ad::tanh_(conv2_.forward(h1));
  auto h3 = ad::tanh_(conv3_.forward(h2));
  // per-channel mean and energy from the two deepest stages; the energy
  // terms make noise-like content visible after spatial pooling
  auto pooled = ad::concat0(
      {ad::mean_spatial(h2), ad::mean_spatial(h3),
       ad::mean_spatial(ad::square(h2)), ad::mean_spatial(ad::square(h3))});
  return img_fc2_.forward(ad::tanh_(img_fc1_.forward(standardize(pooled))));
}

ad::Tensor VisionLanguageBackend::encode_image(const ImageTensor& image) const {
  return encode_image(to_chw(image));
}

ad::Tensor VisionLanguageBackend::encode_text_tokens(const ad::Tensor& tokens) const {
  if (tokens.shape().size() != 2 || tokens.dim(1) != kEmbedDim)
    throw ContractError("encode_text_tokens: expected [N,512]");
  auto pooled = standardize(ad::mean_rows(tokens));
  return txt_fc2_.forward(ad::tanh_(txt_fc1_.forward(pooled)));
}

ad::Tensor VisionLanguageBackend::vocab_embedding(const std::string& word) const {
  Rng rng(derive_seed(seed_, "vocab:" + word));
  std::vector<double> v(kEmbedDim);
  for (double& x : v) x = 0.02 * rng.gaussian();
  return ad::Tensor::from({kEmbedDim}, std::move(v));
}

SemanticBackend::SemanticBackend(BackendMode mode, std::uint64_t seed,
                                 const std::optional<std::string>& weights_path)
    : params_(derive_seed(seed, "semantic")) {
  const int widths[5] = {3, 8, 16, 24, 32};
  for (int i = 0; i < 4; ++i) {
    const std::string tag = "stage" + std::to_string(i + 1);
    stages_[i] = nn::Conv2d(params_, tag, widths[i], widths[i + 1], 3, 2);
    proj_[i] = nn::Linear(params_, tag + ".proj", widths[i + 1], kFeatureDim);
  }
  finalize(params_, mode, weights_path, "semantic");
}

SemanticFeatureSet SemanticBackend::encode(const ad::Tensor& image) const {
  if (image.shape().size() != 3 || image.dim(0) != 3)
    throw ContractError("semantic encode: expected [3,H,W]");
  SemanticFeatureSet out;
  auto x = ad::resize_bilinear(image, input_resolution_, input_resolution_);
  for (int i = 0; i < 4; ++i) {
    x = ad::tanh_(stages_[i].forward(x));
    out.levels[i] = proj_[i].forward(ad::mean_spatial(x));
  }
  return out;
}

SemanticFeatureSet SemanticBackend::encode(const ImageTensor& image) const {
  return encode(to_chw(image));
}

PerceptualBackend::PerceptualBackend(BackendMode mode, std::uint64_t seed,
                                     const std::optional<std::string>& weights_path)
    : params_(derive_seed(seed, "perceptual")) {
  stages_[0] = nn::Conv2d(params_, "stage1", 3, 8, 3, 1);
  stages_[1] = nn::Conv2d(params_, "stage2", 8, 12, 3, 2);
  stages_[2] = nn::Conv2d(params_, "stage3", 12, 16, 3, 2);
  stages_[3] = nn::Conv2d(params_, "stage4", 16, 16, 3, 2);
  finalize(params_, mode, weights_path, "perceptual");
}

std::array<ad::Tensor, 4> PerceptualBackend::encode(const ad::Tensor& image) const {
  if (image.shape().size() != 3 || image.dim(0) != 3)
    throw ContractError("perceptual encode: expected [3,H,W]");
  if (image.dim(1) < 8 || image.dim(2) < 8)
    throw ContractError("perceptual encode: input must be at least 8x8");
  std::array<ad::Tensor, 4> taps;
  auto x = image;
  for (int i = 0; i < 4; ++i) {
    x = ad::tanh_(stages_[i].forward(x));
    taps[i] = x;
  }
  return taps;
}

}  // namespace aio::enc
