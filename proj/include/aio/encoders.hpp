#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "aio/image.hpp"
#include "aio/nn.hpp"
#include "aio/tensor.hpp"

namespace aio::enc {

enum class BackendMode { Toy, Pretrained };
BackendMode backend_mode_from_name(const std::string& name);

// Frozen image/text embedding pair. Toy mode is a deterministic seeded
// network (fixed random projections + smooth nonlinearities); pretrained mode
// loads the same architecture's weights from a user-supplied archive.
// encode_image is differentiable with respect to the input image.
class VisionLanguageBackend {
public:
  static constexpr int kEmbedDim = 512;

  VisionLanguageBackend(BackendMode mode, std::uint64_t seed,
                        const std::optional<std::string>& weights_path = {});

  int input_resolution() const { return input_resolution_; }
  // image: [3,H,W], any H/W; resized internally (differentiably).
  ad::Tensor encode_image(const ad::Tensor& image) const;
  ad::Tensor encode_image(const ImageTensor& image) const;
  // tokens: [N,512] prompt embedding matrix.
  ad::Tensor encode_text_tokens(const ad::Tensor& tokens) const;
  // Deterministic per-word embedding from the backend's vocabulary seed.
  ad::Tensor vocab_embedding(const std::string& word) const;

  const nn::ParamStore& params() const { return params_; }

private:
  nn::ParamStore params_;
  std::uint64_t seed_;
  int input_resolution_ = 64;
  nn::Conv2d conv1_, conv2_, conv3_;
  nn::Linear img_fc1_, img_fc2_;
  nn::Linear txt_fc1_, txt_fc2_;
};

struct SemanticFeatureSet {
  std::array<ad::Tensor, 4> levels;  // each [768], shallow -> deep
};

// Frozen self-supervised feature extractor; pooled vector per tapped layer.
class SemanticBackend {
public:
  static constexpr int kFeatureDim = 768;
  static constexpr std::array<int, 4> kTaps{1, 4, 8, 12};

  SemanticBackend(BackendMode mode, std::uint64_t seed,
                  const std::optional<std::string>& weights_path = {});

  int input_resolution() const { return input_resolution_; }
  SemanticFeatureSet encode(const ad::Tensor& image) const;
  SemanticFeatureSet encode(const ImageTensor& image) const;

  const nn::ParamStore& params() const { return params_; }

private:
  nn::ParamStore params_;
  int input_resolution_ = 64;
  std::array<nn::Conv2d, 4> stages_;
  std::array<nn::Linear, 4> proj_;
};

// Frozen perceptual feature network; four tapped maps with non-increasing
// spatial size, fully convolutional (no resize), differentiable w.r.t. input.
class PerceptualBackend {
public:
  static constexpr std::array<int, 4> kTaps{3, 7, 11, 15};

  PerceptualBackend(BackendMode mode, std::uint64_t seed,
                    const std::optional<std::string>& weights_path = {});

  std::array<ad::Tensor, 4> encode(const ad::Tensor& image) const;

  const nn::ParamStore& params() const { return params_; }

private:
  nn::ParamStore params_;
  std::array<nn::Conv2d, 4> stages_;
};

}  // namespace aio::enc
