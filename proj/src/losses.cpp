#include "aio/losses.hpp"

#include <cmath>

#include "aio/errors.hpp"
#include "aio/imgtensor.hpp"

namespace aio::loss {

double negative_weight(const DifficultyState& state, double psnr_nq) {
  return state.avg_psnr >= psnr_nq ? 1.0 + state.gamma : 1.0 - state.gamma;
}

ad::Tensor quality_gap_from_similarities(const std::array<ad::Tensor, 3>& sims) {
  auto probs = ad::softmax_vec(ad::stack_scalars({sims[0], sims[1], sims[2]}));
  return ad::add_scalar(ad::neg(ad::pick(probs, 0)), 1.0);
}

ad::Tensor clip_aware_loss_cached(const ad::Tensor& restored,
                                  const std::array<ad::Tensor, 3>& text_embeds,
                                  const enc::VisionLanguageBackend& vl) {
  const auto img = vl.encode_image(restored);
  return quality_gap_from_similarities({ad::cosine_similarity(img, text_embeds[0]),
                                        ad::cosine_similarity(img, text_embeds[1]),
                                        ad::cosine_similarity(img, text_embeds[2])});
}

ad::Tensor clip_aware_loss(const ad::Tensor& restored,
                           const perceive::PromptSet& prompts,
                           const enc::VisionLanguageBackend& vl) {
  if (!prompts.frozen)
    throw ContractError("clip-aware loss expects frozen prompts (run stage 1 first)");
  return clip_aware_loss_cached(restored,
                                {vl.encode_text_tokens(prompts.excellent),
                                 vl.encode_text_tokens(prompts.mediocre),
                                 vl.encode_text_tokens(prompts.terrible)},
                                vl);
}

namespace {
constexpr double kDenomEps = 1e-8;

// mean absolute difference of two feature maps
ad::Tensor feature_distance(const ad::Tensor& a, const ad::Tensor& b) {
  return ad::mean_all(ad::abs_(ad::sub(a, b)));
}
}  // namespace

ad::Tensor dpl_combine(const std::array<ad::Tensor, 4>& num,
                       const std::array<ad::Tensor, 4>& easy,
                       const std::vector<std::array<ad::Tensor, 4>>& negs,
                       const std::vector<double>& neg_weights, double easy_weight,
                       DplStats* stats) {
  if (negs.size() != neg_weights.size())
    throw ContractError("dpl: negative/weight count mismatch");
  ad::Tensor total = ad::Tensor::zeros({1});
  for (int i = 0; i < 4; ++i) {
    auto denom = ad::mul_scalar(easy[i], easy_weight);
    for (size_t q = 0; q < negs.size(); ++q)
      denom = ad::add(denom, ad::mul_scalar(negs[q][i], neg_weights[q]));
    if (denom.item() < kDenomEps) {
      denom = ad::add_scalar(denom, kDenomEps);
      if (stats) stats->eps_guards++;
    }
    total = ad::add(total, ad::mul_scalar(ad::div(num[i], denom),
                                          DifficultyState::kTapWeights[i]));
  }
  return total;
}

ad::Tensor dpl_loss(const ad::Tensor& restored, const ImageTensor& clean,
                    const NegativeBank& bank, const DifficultyState& state,
                    const enc::PerceptualBackend& perceptual, DplStats* stats) {
  const auto taps_r = perceptual.encode(restored);
  const auto taps_g = perceptual.encode(to_chw(clean));
  const auto taps_d = perceptual.encode(to_chw(bank.easy));

  std::array<ad::Tensor, 4> num, easy;
  for (int i = 0; i < 4; ++i) {
    num[i] = feature_distance(ad::detach(taps_g[i]), taps_r[i]);
    easy[i] = feature_distance(ad::detach(taps_d[i]), taps_r[i]);
  }
  std::vector<std::array<ad::Tensor, 4>> negs;
  std::vector<double> weights;
  for (const auto& entry : bank.non_easy) {
    const auto taps_q = perceptual.encode(to_chw(entry.image));
    std::array<ad::Tensor, 4> dq;
    for (int i = 0; i < 4; ++i)
      dq[i] = feature_distance(ad::detach(taps_q[i]), taps_r[i]);
    negs.push_back(dq);
    weights.push_back(negative_weight(state, entry.psnr_vs_clean));
  }
  return dpl_combine(num, easy, negs, weights, state.easy_weight, stats);
}

ad::Tensor contrastive_degradation_loss(const ad::Tensor& anchor,
                                        const ad::Tensor& positive,
                                        const std::vector<ad::Tensor>& negatives,
                                        double tau) {
  if (negatives.empty())
    throw ContractError("contrastive loss needs at least one negative");
  if (tau <= 0.0) throw ParamError("contrastive temperature must be positive");
  std::vector<ad::Tensor> logits;
  logits.reserve(negatives.size() + 1);
  logits.push_back(ad::mul_scalar(ad::cosine_similarity(anchor, positive), 1.0 / tau));
  for (const auto& n : negatives)
    logits.push_back(ad::mul_scalar(ad::cosine_similarity(anchor, n), 1.0 / tau));
  return ad::neg(ad::log_(ad::pick(ad::softmax_vec(ad::concat0(logits)), 0)));
}

ad::Tensor rec_loss(const ad::Tensor& restored, const ad::Tensor& target) {
  if (restored.shape() != target.shape())
    throw ContractError("rec loss: shape mismatch");
  return ad::mean_all(ad::abs_(ad::sub(restored, target)));
}

ad::Tensor total_loss(const ad::Tensor& rec, const ad::Tensor& cl,
                      const ad::Tensor& clip, const ad::Tensor& dpl,
                      const LossWeights& w) {
  auto t = ad::add(rec, ad::mul_scalar(cl, w.cl));
  t = ad::add(t, ad::mul_scalar(clip, w.clip));
  return ad::add(t, ad::mul_scalar(dpl, w.dpl));
}

}  // namespace aio::loss
