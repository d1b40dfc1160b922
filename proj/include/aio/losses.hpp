#pragma once

#include <array>
#include <string>
#include <vector>

#include "aio/encoders.hpp"
#include "aio/image.hpp"
#include "aio/perceiver.hpp"
#include "aio/tensor.hpp"

namespace aio::loss {

struct NegativeEntry {
  ImageTensor image;        // proxy-quality negative
  double psnr_vs_clean = 0; // cached against the sample's ground truth
  std::string source;
};

// Per-sample negatives: the degraded input is the easy negative; non-easy
// entries span quality levels between degraded and clean.
struct NegativeBank {
  ImageTensor easy;
  std::vector<NegativeEntry> non_easy;
  int z() const { return static_cast<int>(non_easy.size()); }
};

struct DifficultyState {
  int epoch = 0;
  double avg_psnr = 0.0;  // previous-epoch model over the monitor set
  double gamma = 0.25;
  double easy_weight = 2.0;
  // tap weights for perceptual layers (3, 7, 11, 15)
  static constexpr std::array<double, 4> kTapWeights{1.0 / 12.0, 1.0 / 6.0,
                                                     1.0 / 3.0, 1.0};
};

// 1+gamma when the model's average PSNR meets or beats the negative (hard),
// 1-gamma when the negative is better than the model (very hard).
double negative_weight(const DifficultyState& state, double psnr_nq);

// 1 - softmax probability of the "excellent" prompt; sims ordered
// (excellent, mediocre, terrible).
ad::Tensor quality_gap_from_similarities(const std::array<ad::Tensor, 3>& sims);
ad::Tensor clip_aware_loss(const ad::Tensor& restored,
                           const perceive::PromptSet& prompts,
                           const enc::VisionLanguageBackend& vl);
// Text embeddings are constant once prompts are frozen; trainers cache them.
ad::Tensor clip_aware_loss_cached(const ad::Tensor& restored,
                                  const std::array<ad::Tensor, 3>& text_embeds,
                                  const enc::VisionLanguageBackend& vl);

struct DplStats {
  int eps_guards = 0;  // denominators that needed the epsilon floor
};

// Core of the difficulty-adaptive perceptual loss, on per-tap feature
// distances: sum_i xi_i * num_i / (easy_weight*easy_i + sum_q w_q*neg_qi).
ad::Tensor dpl_combine(const std::array<ad::Tensor, 4>& num,
                       const std::array<ad::Tensor, 4>& easy,
                       const std::vector<std::array<ad::Tensor, 4>>& negs,
                       const std::vector<double>& neg_weights, double easy_weight,
                       DplStats* stats = nullptr);

ad::Tensor dpl_loss(const ad::Tensor& restored, const ImageTensor& clean,
                    const NegativeBank& bank, const DifficultyState& state,
                    const enc::PerceptualBackend& perceptual,
                    DplStats* stats = nullptr);

// InfoNCE over degradation codes with cosine similarity.
ad::Tensor contrastive_degradation_loss(const ad::Tensor& anchor,
                                        const ad::Tensor& positive,
                                        const std::vector<ad::Tensor>& negatives,
                                        double tau);

// Mean absolute pixel difference.
ad::Tensor rec_loss(const ad::Tensor& restored, const ad::Tensor& target);

struct LossWeights {
  double cl = 0.1;
  double clip = 0.05;
  double dpl = 0.1;
};

ad::Tensor total_loss(const ad::Tensor& rec, const ad::Tensor& cl,
                      const ad::Tensor& clip, const ad::Tensor& dpl,
                      const LossWeights& w);

}  // namespace aio::loss
