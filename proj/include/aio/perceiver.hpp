#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "aio/degrade.hpp"
#include "aio/encoders.hpp"
#include "aio/image.hpp"
#include "aio/tensor.hpp"

namespace aio::perceive {

enum class Tier { Bad, Medium, Good };
enum class InitMode { Fixed, Random, PartialRandom };

InitMode init_mode_from_name(const std::string& name);
std::string init_mode_name(InitMode mode);
std::string tier_name(Tier t);

// Three learnable token-embedding matrices tied to the quality anchor words.
// After stage-1 training the set is frozen; stage 2 only reads it.
struct PromptSet {
  ad::Tensor terrible, mediocre, excellent;  // each [tokens, 512]
  InitMode init_mode = InitMode::PartialRandom;
  int tokens = 16;
  std::uint64_t seed = 0;
  bool frozen = false;

  static constexpr std::array<const char*, 3> kAnchorWords{"terrible", "mediocre",
                                                           "excellent"};

  void freeze();
  bool any_trainable() const;
  std::vector<std::pair<std::string, ad::Tensor>> parameters() const;
};

// fixed: every token is the anchor word embedding, nothing trainable.
// random: all tokens Gaussian(0, 0.02), trainable.
// partial_random: random tokens with the anchor embedding in the last slot,
// all trainable.
PromptSet init_prompts(InitMode mode, std::uint64_t seed,
                       const enc::VisionLanguageBackend& vl, int tokens = 16);

struct QualityTriplet {
  ImageTensor bad, medium, good;
};

// Similarity matrix: rows = images (bad, medium, good), columns = prompts
// (excellent, mediocre, terrible). Cross entropy of per-image softmax at the
// true label (bad<->terrible, medium<->mediocre, good<->excellent).
ad::Tensor ce_loss_from_similarities(const ad::Tensor& sims);  // [3,3]
ad::Tensor ce_loss_from_embeddings(const std::array<ad::Tensor, 3>& image_embeds,
                                   const PromptSet& prompts,
                                   const enc::VisionLanguageBackend& vl);
ad::Tensor ce_loss(const PromptSet& prompts, const QualityTriplet& triplet,
                   const enc::VisionLanguageBackend& vl);

struct Classification {
  Tier tier = Tier::Bad;
  std::array<double, 3> probs{};  // order: bad, medium, good
};
Classification classify_quality(const ImageTensor& image, const PromptSet& prompts,
                                const enc::VisionLanguageBackend& vl);
Classification classify_from_embedding(const ad::Tensor& image_embed,
                                       const PromptSet& prompts,
                                       const enc::VisionLanguageBackend& vl);

struct PromptTrainConfig {
  InitMode init_mode = InitMode::PartialRandom;
  int tokens = 16;
  int iters = 500;
  double lr = 4e-5;
  int batch = 32;
  std::uint64_t seed = 0;
  std::string checkpoint_path;  // saved when non-empty
};

struct PromptTrainResult {
  PromptSet prompts;
  double initial_loss = 0.0;  // ce over the full corpus before training
  double final_loss = 0.0;
};

PromptTrainResult train_prompts(const PromptTrainConfig& cfg,
                                const std::vector<QualityTriplet>& corpus,
                                const enc::VisionLanguageBackend& vl);

void save_prompts(const PromptSet& prompts, const std::string& path);
PromptSet load_prompts(const std::string& path);

// Proxy restoration for medium-image generation: the trainer fits a model on
// one fold and returns a function restoring unseen images.
using RestoreFn = std::function<ImageTensor(const ImageTensor&)>;
using ProxyTrainer =
    std::function<RestoreFn(const std::vector<degrade::PairedSample>&)>;

// Two-fold cross-restoration: each degraded input is restored by a proxy
// model that never saw it during training.
std::vector<ImageTensor> gen_medium_images(
    const std::vector<degrade::PairedSample>& degraded_set,
    const ProxyTrainer& proxy_trainer, std::uint64_t seed);

}  // namespace aio::perceive
