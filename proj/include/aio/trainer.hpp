#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "aio/config.hpp"
#include "aio/degrade.hpp"
#include "aio/encoders.hpp"
#include "aio/guidance.hpp"
#include "aio/losses.hpp"
#include "aio/nn.hpp"
#include "aio/perceiver.hpp"
#include "aio/restorer.hpp"

namespace aio::train {

// Frozen feature extractors, seeded from the run seed.
struct Backends {
  enc::VisionLanguageBackend vl;
  enc::SemanticBackend sem;
  enc::PerceptualBackend perc;
};
Backends make_backends(const cfg::RunConfig& cfg);

// Restoration branch plus its guidance modules (degradation encoder and the
// per-level modulation heads); everything trainable lives in `params`.
struct Model {
  nn::ParamStore params;
  restore::RestorerConfig rcfg;
  std::unique_ptr<restore::Restorer> restorer;
  std::unique_ptr<guide::DegradationEncoder> cfe;
  std::unique_ptr<guide::GuidanceStack> guidance;

  Model(const restore::RestorerConfig& rc, std::uint64_t seed);

  // degraded: [3,H,W]; z: degradation code conditioning the guidance.
  ad::Tensor forward(const ad::Tensor& degraded, const enc::SemanticBackend& sem,
                     const ad::Tensor& z) const;
  // Inference path: the code comes from the full degraded image.
  ImageTensor restore_image(const ImageTensor& degraded,
                            const enc::SemanticBackend& sem);
};

std::string prompts_path(const cfg::RunConfig& cfg);
std::string restorer_ckpt_path(const cfg::RunConfig& cfg);

// Reduced-width proxy fitted with reconstruction loss only (stage-1 tooling;
// quality-aware losses need the prompts that do not exist yet).
perceive::ProxyTrainer make_proxy_trainer(const cfg::RunConfig& cfg,
                                          const enc::SemanticBackend& sem);

// bad = degraded, medium = cross-restored by the proxy, good = clean.
std::vector<perceive::QualityTriplet> build_triplets(const cfg::RunConfig& cfg,
                                                     const enc::SemanticBackend& sem);

perceive::PromptTrainResult run_train_prompts(const cfg::RunConfig& cfg,
                                              const Backends& backends);

// Writes the medium-image corpus as PNGs plus a manifest.
std::string run_gen_medium(const cfg::RunConfig& cfg, const Backends& backends);

loss::NegativeBank build_bank(const degrade::PairedSample& sample,
                              const std::vector<double>& dial_ratios);

struct Stage2Options {
  bool resume = false;
  std::optional<std::string> resume_from;  // defaults to the rolling checkpoint
  int max_steps = -1;                      // overrides stage2.iters when > 0
  double early_stop_gain = -1.0;           // dB over degraded-input PSNR
  int eval_every = 100;
};

struct Stage2Result {
  int steps = 0;
  double degraded_psnr = 0.0;  // train inputs vs clean
  double train_psnr = 0.0;     // restored train outputs vs clean, at the end
  std::string loss_csv;
  std::string checkpoint;
  bool config_hash_warning = false;
};

Stage2Result run_train_restorer(const cfg::RunConfig& cfg, const Backends& backends,
                                const Stage2Options& opt = {});

void save_model(const Model& model, const nn::Adam* opt, const cfg::RunConfig& cfg,
                int step, const loss::DifficultyState& state,
                const std::string& path);

struct LoadedCheckpoint {
  Model model;
  int step = 0;
  loss::DifficultyState state;
  nn::Adam::State adam_state;
  bool has_adam_state = false;
  bool hash_warning = false;
};
LoadedCheckpoint load_checkpoint(const cfg::RunConfig& cfg, const std::string& path);

struct EvalRow {
  std::string kind;
  int count = 0;
  double psnr_in = 0, ssim_in = 0, psnr_out = 0, ssim_out = 0;
};

// Per-kind fidelity on a held-out dataset; writes CSV and a bar-chart PNG
// when paths are non-empty.
std::vector<EvalRow> evaluate_model(const cfg::RunConfig& cfg, Model& model,
                                    const enc::SemanticBackend& sem,
                                    const std::string& csv_path,
                                    const std::string& plot_path);

// Mean PSNR of restored training images vs their clean versions.
double train_set_psnr(const cfg::RunConfig& cfg, Model& model,
                      const enc::SemanticBackend& sem);

}  // namespace aio::train
