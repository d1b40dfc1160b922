#include "aio/perceiver.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "aio/checkpoint.hpp"
#include "aio/errors.hpp"
#include "aio/nn.hpp"
#include "aio/rng.hpp"

namespace aio::perceive {

InitMode init_mode_from_name(const std::string& name) {
  if (name == "fixed") return InitMode::Fixed;
  if (name == "random") return InitMode::Random;
  if (name == "partial_random") return InitMode::PartialRandom;
  throw ConfigError("unknown prompt init mode: " + name);
}

std::string init_mode_name(InitMode mode) {
  switch (mode) {
    case InitMode::Fixed: return "fixed";
    case InitMode::Random: return "random";
    case InitMode::PartialRandom: return "partial_random";
  }
  return "unknown";
}

std::string tier_name(Tier t) {
  switch (t) {
    case Tier::Bad: return "bad";
    case Tier::Medium: return "medium";
    case Tier::Good: return "good";
  }
  return "unknown";
}

void PromptSet::freeze() {
  frozen = true;
  terrible.set_requires_grad(false);
  mediocre.set_requires_grad(false);
  excellent.set_requires_grad(false);
}

bool PromptSet::any_trainable() const {
  return terrible.requires_grad() || mediocre.requires_grad() ||
         excellent.requires_grad();
}

std::vector<std::pair<std::string, ad::Tensor>> PromptSet::parameters() const {
  if (frozen) return {};
  std::vector<std::pair<std::string, ad::Tensor>> out;
  if (terrible.requires_grad()) out.emplace_back("prompt_terrible", terrible);
  if (mediocre.requires_grad()) out.emplace_back("prompt_mediocre", mediocre);
  if (excellent.requires_grad()) out.emplace_back("prompt_excellent", excellent);
  return out;
}

PromptSet init_prompts(InitMode mode, std::uint64_t seed,
                       const enc::VisionLanguageBackend& vl, int tokens) {
  if (tokens < 1) throw ConfigError("prompt token count must be >= 1");
  const int dim = enc::VisionLanguageBackend::kEmbedDim;
  PromptSet set;
  set.init_mode = mode;
  set.tokens = tokens;
  set.seed = seed;

  auto build = [&](const char* word, const char* tag) {
    const auto anchor = vl.vocab_embedding(word);
    std::vector<double> v(static_cast<size_t>(tokens) * dim);
    if (mode == InitMode::Fixed) {
      for (int t = 0; t < tokens; ++t)
        std::copy(anchor.values().begin(), anchor.values().end(),
                  v.begin() + static_cast<size_t>(t) * dim);
    } else {
      Rng rng(derive_seed(seed, std::string("prompt:") + tag));
      for (double& x : v) x = 0.02 * rng.gaussian();
      if (mode == InitMode::PartialRandom) {
        // anchor word occupies the last token slot
        std::copy(anchor.values().begin(), anchor.values().end(),
                  v.end() - dim);
      }
    }
    auto t = ad::Tensor::from({tokens, dim}, std::move(v));
    t.set_requires_grad(mode != InitMode::Fixed);
    return t;
  };

  set.terrible = build("terrible", "terrible");
  set.mediocre = build("mediocre", "mediocre");
  set.excellent = build("excellent", "excellent");
  return set;
}

ad::Tensor ce_loss_from_similarities(const ad::Tensor& sims) {
  if (sims.shape() != ad::Shape{3, 3})
    throw ContractError("ce loss: expected a [3,3] similarity matrix");
  auto logp = ad::log_(ad::reshape(ad::softmax_rows(sims), {9}));
  // rows: bad, medium, good; cols: excellent, mediocre, terrible
  auto picked = ad::add(ad::add(ad::pick(logp, 0 * 3 + 2), ad::pick(logp, 1 * 3 + 1)),
                        ad::pick(logp, 2 * 3 + 0));
  return ad::mul_scalar(picked, -1.0 / 3.0);
}

namespace {
std::array<ad::Tensor, 3> text_embeddings(const PromptSet& prompts,
                                          const enc::VisionLanguageBackend& vl) {
  // order: excellent, mediocre, terrible
  return {vl.encode_text_tokens(prompts.excellent),
          vl.encode_text_tokens(prompts.mediocre),
          vl.encode_text_tokens(prompts.terrible)};
}
}  // namespace

ad::Tensor ce_loss_from_embeddings(const std::array<ad::Tensor, 3>& image_embeds,
                                   const PromptSet& prompts,
                                   const enc::VisionLanguageBackend& vl) {
  if (prompts.frozen)
    throw ContractError("ce loss requires trainable prompts; this set is frozen");
  const auto text = text_embeddings(prompts, vl);
  std::vector<ad::Tensor> sims;
  sims.reserve(9);
  for (const auto& img : image_embeds)
    for (const auto& txt : text)
      sims.push_back(ad::cosine_similarity(img, txt));
  return ce_loss_from_similarities(ad::reshape(ad::concat0(sims), {3, 3}));
}

ad::Tensor ce_loss(const PromptSet& prompts, const QualityTriplet& triplet,
                   const enc::VisionLanguageBackend& vl) {
  return ce_loss_from_embeddings({vl.encode_image(triplet.bad),
                                  vl.encode_image(triplet.medium),
                                  vl.encode_image(triplet.good)},
                                 prompts, vl);
}

Classification classify_from_embedding(const ad::Tensor& image_embed,
                                       const PromptSet& prompts,
                                       const enc::VisionLanguageBackend& vl) {
  const auto text = text_embeddings(prompts, vl);
  std::vector<ad::Tensor> sims;
  for (const auto& txt : text)
    sims.push_back(ad::cosine_similarity(image_embed, txt));
  const auto probs = ad::softmax_vec(ad::concat0(sims));  // e, m, t

  Classification out;
  out.probs = {probs.values()[2], probs.values()[1], probs.values()[0]};
  const int arg = static_cast<int>(std::max_element(probs.values().begin(),
                                                    probs.values().end()) -
                                   probs.values().begin());
  out.tier = arg == 0 ? Tier::Good : (arg == 1 ? Tier::Medium : Tier::Bad);
  return out;
}

Classification classify_quality(const ImageTensor& image, const PromptSet& prompts,
                                const enc::VisionLanguageBackend& vl) {
  return classify_from_embedding(vl.encode_image(image), prompts, vl);
}

PromptTrainResult train_prompts(const PromptTrainConfig& cfg,
                                const std::vector<QualityTriplet>& corpus,
                                const enc::VisionLanguageBackend& vl) {
  if (corpus.empty()) throw ContractError("train_prompts: empty triplet corpus");
  if (cfg.batch < 1) throw ConfigError("train_prompts: batch must be >= 1");

  PromptSet prompts = init_prompts(cfg.init_mode, cfg.seed, vl, cfg.tokens);

  // image embeddings are constant while the encoder is frozen; cache them
  std::vector<std::array<ad::Tensor, 3>> embeds;
  embeds.reserve(corpus.size());
  for (const auto& t : corpus)
    embeds.push_back({ad::detach(vl.encode_image(t.bad)),
                      ad::detach(vl.encode_image(t.medium)),
                      ad::detach(vl.encode_image(t.good))});

  auto corpus_loss = [&](const PromptSet& p) {
    double acc = 0.0;
    for (const auto& e : embeds) acc += ce_loss_from_embeddings(e, p, vl).item();
    return acc / static_cast<double>(embeds.size());
  };

  PromptTrainResult result;
  result.initial_loss = corpus_loss(prompts);

  const auto params = prompts.parameters();
  if (!params.empty()) {
    nn::Adam opt(params, cfg.lr);
    std::array<std::vector<double>, 3> last_good{prompts.terrible.values(),
                                                 prompts.mediocre.values(),
                                                 prompts.excellent.values()};
    for (int it = 1; it <= cfg.iters; ++it) {
      Rng rng(derive_seed(cfg.seed, "stage1", static_cast<std::uint64_t>(it)));
      opt.zero_grad();
      std::vector<ad::Tensor> losses;
      const int batch = std::min<int>(cfg.batch, static_cast<int>(embeds.size()));
      losses.reserve(batch);
      for (int b = 0; b < batch; ++b) {
        const int idx = rng.uniform_int(0, static_cast<int>(embeds.size()) - 1);
        losses.push_back(ce_loss_from_embeddings(embeds[idx], prompts, vl));
      }
      auto loss = ad::mean_all(ad::concat0(losses));
      if (!std::isfinite(loss.item())) {
        prompts.terrible.values() = last_good[0];
        prompts.mediocre.values() = last_good[1];
        prompts.excellent.values() = last_good[2];
        prompts.freeze();
        if (!cfg.checkpoint_path.empty()) save_prompts(prompts, cfg.checkpoint_path);
        throw TrainingError("prompt training diverged (non-finite loss) at iteration " +
                            std::to_string(it) + "; last good state retained");
      }
      last_good = {prompts.terrible.values(), prompts.mediocre.values(),
                   prompts.excellent.values()};
      ad::backward(loss);
      opt.step();
    }
  }

  result.final_loss = corpus_loss(prompts);
  prompts.freeze();
  if (!cfg.checkpoint_path.empty()) save_prompts(prompts, cfg.checkpoint_path);
  result.prompts = prompts;
  return result;
}

void save_prompts(const PromptSet& prompts, const std::string& path) {
  ckpt::Archive a;
  a.meta["kind"] = "prompts";
  a.meta["init_mode"] = init_mode_name(prompts.init_mode);
  a.meta["tokens"] = prompts.tokens;
  a.meta["seed"] = prompts.seed;
  a.meta["frozen"] = prompts.frozen;
  a.put("prompt_terrible", prompts.terrible);
  a.put("prompt_mediocre", prompts.mediocre);
  a.put("prompt_excellent", prompts.excellent);
  save_archive(a, path);
}

PromptSet load_prompts(const std::string& path) {
  const auto a = ckpt::load_archive(path);
  if (!a.meta.contains("kind") || a.meta["kind"] != "prompts")
    throw DependencyError("not a prompt checkpoint: " + path);
  PromptSet p;
  p.init_mode = init_mode_from_name(a.meta["init_mode"].get<std::string>());
  p.tokens = a.meta["tokens"].get<int>();
  p.seed = a.meta["seed"].get<std::uint64_t>();
  p.terrible = ad::detach(a.get("prompt_terrible"));
  p.mediocre = ad::detach(a.get("prompt_mediocre"));
  p.excellent = ad::detach(a.get("prompt_excellent"));
  if (a.meta["frozen"].get<bool>()) p.freeze();
  return p;
}

std::vector<ImageTensor> gen_medium_images(
    const std::vector<degrade::PairedSample>& degraded_set,
    const ProxyTrainer& proxy_trainer, std::uint64_t seed) {
  const int n = static_cast<int>(degraded_set.size());
  if (n < 2) throw ContractError("gen_medium_images: need at least 2 samples");

  // deterministic shuffled split into two folds
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, "fold"));
  for (int i = n - 1; i > 0; --i)
    std::swap(order[i], order[rng.uniform_int(0, i)]);
  const int half = n / 2;

  std::vector<ImageTensor> medium(n);
  for (int fold = 0; fold < 2; ++fold) {
    std::vector<degrade::PairedSample> train_fold, restore_fold;
    std::vector<int> restore_idx;
    for (int i = 0; i < n; ++i) {
      const bool in_first = i < half;
      if ((fold == 0) == in_first)
        train_fold.push_back(degraded_set[order[i]]);
      else {
        restore_fold.push_back(degraded_set[order[i]]);
        restore_idx.push_back(order[i]);
      }
    }
    auto restore_fn = proxy_trainer(train_fold);
    for (size_t i = 0; i < restore_fold.size(); ++i)
      medium[restore_idx[i]] = restore_fn(restore_fold[i].degraded);
  }
  return medium;
}

}  // namespace aio::perceive
