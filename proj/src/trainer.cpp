#include "aio/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "aio/checkpoint.hpp"
#include "aio/errors.hpp"
#include "aio/imgtensor.hpp"
#include "aio/metrics.hpp"
#include "aio/plot.hpp"
#include "aio/rng.hpp"

namespace fs = std::filesystem;

namespace aio::train {

Backends make_backends(const cfg::RunConfig& cfg) {
  const auto mode = enc::backend_mode_from_name(cfg.stage2.backends.mode);
  const auto& b = cfg.stage2.backends;
  return Backends{
      enc::VisionLanguageBackend(mode, derive_seed(cfg.seed, "backend.vl"),
                                 b.vision_language_weights),
      enc::SemanticBackend(mode, derive_seed(cfg.seed, "backend.semantic"),
                           b.semantic_weights),
      enc::PerceptualBackend(mode, derive_seed(cfg.seed, "backend.perceptual"),
                             b.perceptual_weights)};
}

Model::Model(const restore::RestorerConfig& rc, std::uint64_t seed)
    : params(seed), rcfg(rc) {
  restorer = std::make_unique<restore::Restorer>(params, "restorer", rcfg);
  cfe = std::make_unique<guide::DegradationEncoder>(params, "cfe");
  guidance = std::make_unique<guide::GuidanceStack>(params, "guidance", rcfg);
}

ad::Tensor Model::forward(const ad::Tensor& degraded,
                          const enc::SemanticBackend& sem, const ad::Tensor& z) const {
  guidance->set_context(guide::extract_semantic(degraded, sem), z);
  return restorer->forward(degraded, *guidance);
}

ImageTensor Model::restore_image(const ImageTensor& degraded,
                                 const enc::SemanticBackend& sem) {
  const bool was_trainable = params.trainable();
  params.set_trainable(false);  // inference: retain no graph
  auto in = to_chw(degraded);
  auto out = forward(in, sem, cfe->encode(in));
  params.set_trainable(was_trainable);
  return to_image(out);
}

std::string prompts_path(const cfg::RunConfig& cfg) {
  return cfg.paths.checkpoint_dir + "/prompts.ckpt";
}

std::string restorer_ckpt_path(const cfg::RunConfig& cfg) {
  return cfg.paths.checkpoint_dir + "/restorer.ckpt";
}

namespace {

// Largest multiple of 8 that fits the requested patch inside the image.
int effective_patch(int requested, int h, int w) {
  int p = std::min({requested, h, w});
  p -= p % 8;
  if (p < 32)
    throw ConfigError("training patch must be at least 32 and divisible by 8");
  return p;
}

ImageTensor prep_patch(const ImageTensor& img, int y0, int x0, int p, bool fh,
                       bool fv) {
  ImageTensor out = crop(img, y0, x0, p, p);
  if (fh) out = flip_horizontal(out);
  if (fv) out = flip_vertical(out);
  return out;
}

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double finite_or_throw(double v, const std::string& what) {
  if (!std::isfinite(v)) throw TrainingError(what);
  return v;
}

}  // namespace

perceive::ProxyTrainer make_proxy_trainer(const cfg::RunConfig& cfg,
                                          const enc::SemanticBackend& sem) {
  const cfg::RunConfig run = cfg;
  const enc::SemanticBackend* sem_ptr = &sem;
  return [run, sem_ptr](const std::vector<degrade::PairedSample>& fold)
             -> perceive::RestoreFn {
    if (fold.empty()) throw ContractError("proxy trainer: empty fold");
    std::uint64_t salt = 0;
    for (const auto& s : fold) salt = derive_seed(salt, static_cast<std::uint64_t>(s.index));
    const std::uint64_t seed = derive_seed(run.seed, "proxy", salt);

    auto model = std::make_shared<Model>(run.proxy_restorer_config(),
                                         derive_seed(seed, "model"));
    nn::Adam adam(model->params.entries(), run.proxy.lr);
    for (int it = 1; it <= run.proxy.iters; ++it) {
      Rng rng(derive_seed(seed, "step", static_cast<std::uint64_t>(it)));
      const auto& s = fold[rng.uniform_int(0, static_cast<int>(fold.size()) - 1)];
      const int p = effective_patch(run.stage2.patch, s.clean.height, s.clean.width);
      const int y0 = s.clean.height > p ? rng.uniform_int(0, s.clean.height - p) : 0;
      const int x0 = s.clean.width > p ? rng.uniform_int(0, s.clean.width - p) : 0;
      const bool fh = rng.coin(), fv = rng.coin();
      const auto clean_p = prep_patch(s.clean, y0, x0, p, fh, fv);
      const auto degr_p = prep_patch(s.degraded, y0, x0, p, fh, fv);

      adam.zero_grad();
      auto in = to_chw(degr_p);
      const int cp = 32;
      const int cy = p > cp ? rng.uniform_int(0, p - cp) : 0;
      const int cx = p > cp ? rng.uniform_int(0, p - cp) : 0;
      auto z = model->cfe->encode(to_chw(crop(degr_p, cy, cx, cp, cp)));
      auto out = model->forward(in, *sem_ptr, z);
      auto l = loss::rec_loss(out, to_chw(clean_p));
      finite_or_throw(l.item(), "proxy training diverged (non-finite loss) at iteration " +
                                    std::to_string(it));
      ad::backward(l);
      adam.step();
    }
    return [model, sem_ptr](const ImageTensor& img) {
      return model->restore_image(img, *sem_ptr);
    };
  };
}

std::vector<perceive::QualityTriplet> build_triplets(const cfg::RunConfig& cfg,
                                                     const enc::SemanticBackend& sem) {
  const auto dataset = degrade::make_dataset(cfg.dataset_config());
  const auto mediums = perceive::gen_medium_images(
      dataset, make_proxy_trainer(cfg, sem), derive_seed(cfg.seed, "medium"));
  std::vector<perceive::QualityTriplet> triplets;
  triplets.reserve(dataset.size());
  for (size_t i = 0; i < dataset.size(); ++i)
    triplets.push_back({dataset[i].degraded, mediums[i], dataset[i].clean});
  return triplets;
}

perceive::PromptTrainResult run_train_prompts(const cfg::RunConfig& cfg,
                                              const Backends& backends) {
  fs::create_directories(cfg.paths.checkpoint_dir);
  perceive::PromptTrainConfig pc;
  pc.init_mode = perceive::init_mode_from_name(cfg.stage1.init_mode);
  pc.tokens = cfg.stage1.tokens;
  pc.iters = cfg.stage1.iters;
  pc.lr = cfg.stage1.lr;
  pc.batch = cfg.stage1.batch;
  pc.seed = derive_seed(cfg.seed, "stage1");
  pc.checkpoint_path = prompts_path(cfg);
  const auto triplets = build_triplets(cfg, backends.sem);
  return perceive::train_prompts(pc, triplets, backends.vl);
}

std::string run_gen_medium(const cfg::RunConfig& cfg, const Backends& backends) {
  const std::string dir = cfg.paths.log_dir + "/medium";
  fs::create_directories(dir);
  const auto dataset = degrade::make_dataset(cfg.dataset_config());
  const auto mediums = perceive::gen_medium_images(
      dataset, make_proxy_trainer(cfg, backends.sem), derive_seed(cfg.seed, "medium"));
  nlohmann::json manifest;
  manifest["config_hash"] = cfg::config_hash(cfg);
  manifest["count"] = mediums.size();
  for (size_t i = 0; i < mediums.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "medium_%04zu.png", i);
    save_png(mediums[i], dir + "/" + name);
    manifest["files"].push_back(name);
  }
  std::ofstream(dir + "/manifest.json") << manifest.dump(2) << "\n";
  return dir;
}

loss::NegativeBank build_bank(const degrade::PairedSample& sample,
                              const std::vector<double>& dial_ratios) {
  loss::NegativeBank bank;
  bank.easy = sample.degraded;
  for (double r : dial_ratios) {
    if (r < 0.0 || r > 1.0) throw ConfigError("dial ratio must be in [0,1]");
    loss::NegativeEntry e;
    e.image = blend(sample.degraded, sample.clean, r);
    e.psnr_vs_clean = metrics::psnr(e.image, sample.clean);
    e.source = "dial:" + std::to_string(r);
    bank.non_easy.push_back(std::move(e));
  }
  return bank;
}

void save_model(const Model& model, const nn::Adam* opt, const cfg::RunConfig& cfg,
                int step, const loss::DifficultyState& state,
                const std::string& path) {
  ckpt::Archive a;
  a.meta["kind"] = "restorer";
  a.meta["stage"] = 2;
  a.meta["step"] = step;
  a.meta["epoch"] = state.epoch;
  a.meta["avg_psnr"] = state.avg_psnr;
  a.meta["config_hash"] = cfg::config_hash(cfg);
  a.meta["seed"] = cfg.seed;
  for (const auto& [name, t] : model.params.entries()) a.put(name, t);
  if (opt) {
    const auto s = opt->state();
    a.meta["adam_t"] = s.t;
    for (const auto& [name, m] : s.m)
      a.put("adam.m." + name, ad::Tensor::from({static_cast<int>(m.size())},
                                               std::vector<double>(m)));
    for (const auto& [name, v] : s.v)
      a.put("adam.v." + name, ad::Tensor::from({static_cast<int>(v.size())},
                                               std::vector<double>(v)));
  }
  save_archive(a, path);
}

LoadedCheckpoint load_checkpoint(const cfg::RunConfig& cfg, const std::string& path) {
  const auto a = ckpt::load_archive(path);
  if (!a.meta.contains("kind") || a.meta["kind"] != "restorer")
    throw DependencyError("not a restorer checkpoint: " + path);

  LoadedCheckpoint out{Model(cfg.restorer_config(), derive_seed(cfg.seed, "model")),
                       0,
                       {},
                       {},
                       false,
                       false};
  out.step = a.meta["step"].get<int>();
  out.state.epoch = a.meta["epoch"].get<int>();
  out.state.avg_psnr = a.meta["avg_psnr"].get<double>();
  out.state.gamma = cfg.stage2.gamma;
  out.state.easy_weight = cfg.stage2.easy_weight;
  if (a.meta.contains("config_hash") &&
      a.meta["config_hash"].get<std::uint64_t>() != cfg::config_hash(cfg)) {
    std::cerr << "warning: checkpoint " << path
              << " was written under a different config\n";
    out.hash_warning = true;
  }

  for (auto& [name, t] : out.model.params.entries()) {
    if (!a.has(name)) throw DependencyError("checkpoint misses parameter " + name);
    const auto& src = a.get(name);
    if (src.shape() != t.shape())
      throw DependencyError("checkpoint shape mismatch for " + name);
    const_cast<ad::Tensor&>(t).values() = src.values();
  }
  if (a.meta.contains("adam_t")) {
    out.adam_state.t = a.meta["adam_t"].get<long long>();
    for (const auto& [name, t] : out.model.params.entries()) {
      out.adam_state.m.emplace_back(name, a.get("adam.m." + name).values());
      out.adam_state.v.emplace_back(name, a.get("adam.v." + name).values());
    }
    out.has_adam_state = true;
  }
  return out;
}

double train_set_psnr(const cfg::RunConfig& cfg, Model& model,
                      const enc::SemanticBackend& sem) {
  const auto dataset = degrade::make_dataset(cfg.dataset_config());
  double acc = 0.0;
  for (const auto& s : dataset)
    acc += metrics::psnr(model.restore_image(s.degraded, sem), s.clean);
  return acc / static_cast<double>(dataset.size());
}

namespace {
double monitor_avg_psnr(const cfg::RunConfig& cfg, Model& model,
                        const enc::SemanticBackend& sem) {
  auto mon_cfg = cfg.dataset_config();
  mon_cfg.seed = derive_seed(cfg.seed, "monitor");
  mon_cfg.size = std::max(1, cfg.stage2.monitor_size);
  double acc = 0.0;
  for (int i = 0; i < mon_cfg.size; ++i) {
    const auto s = degrade::make_sample(mon_cfg, i);
    acc += metrics::psnr(model.restore_image(s.degraded, sem), s.clean);
  }
  return acc / mon_cfg.size;
}
}  // namespace

Stage2Result run_train_restorer(const cfg::RunConfig& cfg, const Backends& backends,
                                const Stage2Options& opt) {
  fs::create_directories(cfg.paths.checkpoint_dir);
  fs::create_directories(cfg.paths.log_dir);

  // ordered pipeline: stage 2 requires the frozen stage-1 prompts
  perceive::PromptSet prompts;
  try {
    prompts = perceive::load_prompts(prompts_path(cfg));
  } catch (const std::exception& e) {
    throw PipelineError(std::string("stage 2 needs the stage-1 prompt checkpoint (") +
                        e.what() + "); run train-prompts first");
  }
  if (!prompts.frozen)
    throw PipelineError("prompt checkpoint is not frozen; rerun train-prompts");

  const std::array<ad::Tensor, 3> text_embeds{
      ad::detach(backends.vl.encode_text_tokens(prompts.excellent)),
      ad::detach(backends.vl.encode_text_tokens(prompts.mediocre)),
      ad::detach(backends.vl.encode_text_tokens(prompts.terrible))};

  const auto dataset = degrade::make_dataset(cfg.dataset_config());
  const int n = static_cast<int>(dataset.size());
  std::vector<loss::NegativeBank> banks;
  banks.reserve(n);
  for (const auto& s : dataset) banks.push_back(build_bank(s, cfg.stage2.dial_ratios));

  std::map<degrade::Kind, std::vector<int>> by_kind;
  for (int i = 0; i < n; ++i) by_kind[dataset[i].spec.kind].push_back(i);

  Stage2Result result;
  {
    double acc = 0.0;
    for (const auto& s : dataset) acc += metrics::psnr(s.degraded, s.clean);
    result.degraded_psnr = acc / n;
  }

  Model model(cfg.restorer_config(), derive_seed(cfg.seed, "model"));
  loss::DifficultyState dstate;
  dstate.gamma = cfg.stage2.gamma;
  dstate.easy_weight = cfg.stage2.easy_weight;
  int start_step = 0;
  nn::Adam adam(model.params.entries(), cfg.stage2.lr);
  if (opt.resume) {
    auto loaded =
        load_checkpoint(cfg, opt.resume_from.value_or(restorer_ckpt_path(cfg)));
    model = std::move(loaded.model);
    dstate = loaded.state;
    start_step = loaded.step;
    result.config_hash_warning = loaded.hash_warning;
    adam = nn::Adam(model.params.entries(), cfg.stage2.lr);
    if (loaded.has_adam_state) adam.restore(loaded.adam_state);
  }

  const int total_steps = opt.max_steps > 0 ? opt.max_steps : cfg.stage2.iters;
  const int batch = std::max(1, cfg.stage2.batch);
  const int steps_per_epoch = std::max(1, (n + batch - 1) / batch);
  const loss::LossWeights weights = cfg.loss_weights();
  const std::string ckpt_path = restorer_ckpt_path(cfg);
  result.loss_csv = cfg.paths.log_dir + "/stage2_losses.csv";
  result.checkpoint = ckpt_path;

  std::ofstream csv(result.loss_csv);
  csv << "step,rec,cl,clip,dpl,total\n";

  for (int step = start_step + 1; step <= total_steps; ++step) {
    if ((step - 1) % steps_per_epoch == 0) {
      dstate.epoch = (step - 1) / steps_per_epoch;
      dstate.avg_psnr = monitor_avg_psnr(cfg, model, backends.sem);
    }

    Rng rng(derive_seed(cfg.seed, "step", static_cast<std::uint64_t>(step)));
    adam.zero_grad();

    std::vector<ad::Tensor> recs, cls, clips, dpls;
    for (int b = 0; b < batch; ++b) {
      const int idx = rng.uniform_int(0, n - 1);
      const auto& sample = dataset[idx];
      const int h = sample.clean.height, w = sample.clean.width;
      const int p = effective_patch(cfg.stage2.patch, h, w);
      const int y0 = h > p ? rng.uniform_int(0, h - p) : 0;
      const int x0 = w > p ? rng.uniform_int(0, w - p) : 0;
      const bool fh = rng.coin(), fv = rng.coin();
      const auto clean_p = prep_patch(sample.clean, y0, x0, p, fh, fv);
      const auto degr_p = prep_patch(sample.degraded, y0, x0, p, fh, fv);

      // degradation code from a crop of the training patch; a second crop of
      // the same image is the contrastive positive, other kinds are negatives
      const int cp = 32;
      auto sub_crop = [&](const ImageTensor& img) {
        const int sy = img.height > cp ? rng.uniform_int(0, img.height - cp) : 0;
        const int sx = img.width > cp ? rng.uniform_int(0, img.width - cp) : 0;
        return to_chw(crop(img, sy, sx, cp, cp));
      };
      auto z = model.cfe->encode(sub_crop(degr_p));

      ad::Tensor cl_term = ad::Tensor::zeros({1});
      if (cfg.stage2.use_cl) {
        auto z_pos = model.cfe->encode(sub_crop(degr_p));
        std::vector<ad::Tensor> negatives;
        for (const auto& [kind, indices] : by_kind) {
          if (kind == sample.spec.kind) continue;
          const int oi = indices[rng.uniform_int(0, static_cast<int>(indices.size()) - 1)];
          negatives.push_back(model.cfe->encode(sub_crop(dataset[oi].degraded)));
        }
        if (!negatives.empty())
          cl_term = loss::contrastive_degradation_loss(z, z_pos, negatives,
                                                       cfg.stage2.tau);
      }

      auto restored = model.forward(to_chw(degr_p), backends.sem, z);
      auto rec = loss::rec_loss(restored, to_chw(clean_p));

      ad::Tensor clip_term = ad::Tensor::zeros({1});
      if (cfg.stage2.use_clip)
        clip_term = loss::clip_aware_loss_cached(restored, text_embeds, backends.vl);

      ad::Tensor dpl_term = ad::Tensor::zeros({1});
      if (cfg.stage2.use_dpl) {
        loss::NegativeBank pb;
        pb.easy = degr_p;
        for (const auto& e : banks[idx].non_easy)
          pb.non_easy.push_back(
              {prep_patch(e.image, y0, x0, p, fh, fv), e.psnr_vs_clean, e.source});
        dpl_term = loss::dpl_loss(restored, clean_p, pb, dstate, backends.perc);
      }

      recs.push_back(rec);
      cls.push_back(cl_term);
      clips.push_back(clip_term);
      dpls.push_back(dpl_term);
    }

    auto rec_m = ad::mean_all(ad::concat0(recs));
    auto cl_m = ad::mean_all(ad::concat0(cls));
    auto clip_m = ad::mean_all(ad::concat0(clips));
    auto dpl_m = ad::mean_all(ad::concat0(dpls));
    auto total = loss::total_loss(rec_m, cl_m, clip_m, dpl_m, weights);
    if (!std::isfinite(total.item()))
      throw TrainingError("training diverged (non-finite loss) at step " +
                          std::to_string(step) + "; last checkpoint kept at " +
                          ckpt_path);
    ad::backward(total);
    adam.step();

    csv << step << "," << fmt17(rec_m.item()) << "," << fmt17(cl_m.item()) << ","
        << fmt17(clip_m.item()) << "," << fmt17(dpl_m.item()) << ","
        << fmt17(total.item()) << "\n";
    csv.flush();
    result.steps = step;

    if (step % cfg.stage2.checkpoint_every == 0 || step == total_steps)
      save_model(model, &adam, cfg, step, dstate, ckpt_path);

    if (opt.early_stop_gain > 0 && step % std::max(1, opt.eval_every) == 0) {
      const double gain = train_set_psnr(cfg, model, backends.sem) - result.degraded_psnr;
      if (gain >= opt.early_stop_gain) {
        save_model(model, &adam, cfg, step, dstate, ckpt_path);
        break;
      }
    }
  }

  result.train_psnr = train_set_psnr(cfg, model, backends.sem);
  return result;
}

std::vector<EvalRow> evaluate_model(const cfg::RunConfig& cfg, Model& model,
                                    const enc::SemanticBackend& sem,
                                    const std::string& csv_path,
                                    const std::string& plot_path) {
  auto eval_cfg = cfg.dataset_config();
  eval_cfg.seed = derive_seed(cfg.seed, "eval");
  const auto dataset = degrade::make_dataset(eval_cfg);

  std::vector<EvalRow> rows;
  auto row_for = [&](const std::string& kind) -> EvalRow& {
    for (auto& r : rows)
      if (r.kind == kind) return r;
    rows.push_back({kind, 0, 0, 0, 0, 0});
    return rows.back();
  };

  for (const auto& s : dataset) {
    const auto restored = model.restore_image(s.degraded, sem);
    auto& r = row_for(degrade::kind_name(s.spec.kind));
    r.count++;
    r.psnr_in += metrics::psnr(s.degraded, s.clean);
    r.ssim_in += metrics::ssim(s.degraded, s.clean);
    r.psnr_out += metrics::psnr(restored, s.clean);
    r.ssim_out += metrics::ssim(restored, s.clean);
  }
  for (auto& r : rows) {
    r.psnr_in /= r.count;
    r.ssim_in /= r.count;
    r.psnr_out /= r.count;
    r.ssim_out /= r.count;
  }

  if (!csv_path.empty()) {
    const auto parent = fs::path(csv_path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
    std::ofstream csv(csv_path);
    csv << "kind,count,psnr_in,ssim_in,psnr_out,ssim_out\n";
    for (const auto& r : rows)
      csv << r.kind << "," << r.count << "," << fmt17(r.psnr_in) << ","
          << fmt17(r.ssim_in) << "," << fmt17(r.psnr_out) << ","
          << fmt17(r.ssim_out) << "\n";
  }
  if (!plot_path.empty()) {
    std::vector<plot::BarGroup> groups;
    for (const auto& r : rows) groups.push_back({r.kind, r.psnr_in, r.psnr_out});
    const auto parent = fs::path(plot_path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
    plot::save_bars(groups, plot_path);
  }
  return rows;
}

}  // namespace aio::train
