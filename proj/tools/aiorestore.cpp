// Command-line front end for the two-stage all-in-one restoration pipeline:
//   synth          write a synthetic paired dataset as PNGs + manifest
//   gen-medium     cross-restored medium-quality corpus from the proxy model
//   train-prompts  stage 1: learn the three quality prompts
//   train-restorer stage 2: train the guided restorer
//   eval           per-degradation PSNR/SSIM table (CSV + plot)
//   classify       quality tier of a single image under the learned prompts

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "aio/config.hpp"
#include "aio/degrade.hpp"
#include "aio/errors.hpp"
#include "aio/perceiver.hpp"
#include "aio/trainer.hpp"

namespace fs = std::filesystem;
using namespace aio;

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string preset = "desk";
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "JSON config file");
  cmd->add_option("--set", args.overrides,
                  "override a config key, e.g. --set stage2.iters=500");
  cmd->add_option("--preset", args.preset, "base preset: desk or paper")
      ->check(CLI::IsMember({"desk", "paper"}));
}

cfg::RunConfig load_config(const CommonArgs& args) {
  std::optional<std::string> path;
  if (!args.config_path.empty()) path = args.config_path;
  return cfg::load(path, args.overrides, args.preset);
}

int cmd_synth(const CommonArgs& args, const std::string& out_dir) {
  const auto cfg = load_config(args);
  const auto dataset = degrade::make_dataset(cfg.dataset_config());
  fs::create_directories(out_dir + "/clean");
  fs::create_directories(out_dir + "/degraded");
  nlohmann::json manifest;
  manifest["config_hash"] = cfg::config_hash(cfg);
  for (const auto& s : dataset) {
    char name[32];
    std::snprintf(name, sizeof name, "%04d.png", s.index);
    save_png(s.clean, out_dir + "/clean/" + name);
    save_png(s.degraded, out_dir + "/degraded/" + name);
    manifest["samples"].push_back(
        {{"index", s.index}, {"kind", degrade::kind_name(s.spec.kind)}, {"file", name}});
  }
  std::ofstream(out_dir + "/manifest.json") << manifest.dump(2) << "\n";
  std::cout << "wrote " << dataset.size() << " pairs to " << out_dir << "\n";
  return 0;
}

int cmd_train_prompts(const CommonArgs& args) {
  const auto cfg = load_config(args);
  auto backends = train::make_backends(cfg);
  const auto result = train::run_train_prompts(cfg, backends);
  std::cout << "prompt training: ce " << result.initial_loss << " -> "
            << result.final_loss << "\n"
            << "checkpoint: " << train::prompts_path(cfg) << "\n";
  return 0;
}

int cmd_gen_medium(const CommonArgs& args) {
  const auto cfg = load_config(args);
  auto backends = train::make_backends(cfg);
  std::cout << "medium corpus: " << train::run_gen_medium(cfg, backends) << "\n";
  return 0;
}

int cmd_train_restorer(const CommonArgs& args, bool resume) {
  const auto cfg = load_config(args);
  auto backends = train::make_backends(cfg);
  train::Stage2Options opt;
  opt.resume = resume;
  const auto result = train::run_train_restorer(cfg, backends, opt);
  std::cout << "trained " << result.steps << " steps\n"
            << "train psnr: " << result.degraded_psnr << " dB (degraded) -> "
            << result.train_psnr << " dB (restored)\n"
            << "losses: " << result.loss_csv << "\n"
            << "checkpoint: " << result.checkpoint << "\n";
  return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& ckpt) {
  const auto cfg = load_config(args);
  auto backends = train::make_backends(cfg);
  const std::string path = ckpt.empty() ? train::restorer_ckpt_path(cfg) : ckpt;
  auto loaded = train::load_checkpoint(cfg, path);
  const std::string csv = cfg.paths.log_dir + "/eval.csv";
  const std::string plot = cfg.paths.log_dir + "/eval.png";
  const auto rows = train::evaluate_model(cfg, loaded.model, backends.sem, csv, plot);
  std::printf("%-10s %5s %9s %7s %9s %7s\n", "kind", "n", "psnr_in", "ssim_in",
              "psnr_out", "ssim_out");
  for (const auto& r : rows)
    std::printf("%-10s %5d %9.2f %7.4f %9.2f %7.4f\n", r.kind.c_str(), r.count,
                r.psnr_in, r.ssim_in, r.psnr_out, r.ssim_out);
  std::cout << "csv: " << csv << "\nplot: " << plot << "\n";
  return 0;
}

int cmd_classify(const CommonArgs& args, const std::string& image_path) {
  const auto cfg = load_config(args);
  auto backends = train::make_backends(cfg);
  const auto prompts = perceive::load_prompts(train::prompts_path(cfg));
  const auto image = load_png(image_path);
  const auto c = perceive::classify_quality(image, prompts, backends.vl);
  std::printf("tier: %s  (bad %.4f, medium %.4f, good %.4f)\n",
              perceive::tier_name(c.tier).c_str(), c.probs[0], c.probs[1], c.probs[2]);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"two-stage all-in-one image restoration trainer"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string synth_out = "runs/dataset";
  std::string eval_ckpt;
  std::string classify_image;
  bool resume = false;

  auto* synth = app.add_subcommand("synth", "write the synthetic paired dataset");
  add_common(synth, args);
  synth->add_option("--out", synth_out, "output directory");

  auto* tp = app.add_subcommand("train-prompts", "stage 1: learn quality prompts");
  add_common(tp, args);

  auto* gm = app.add_subcommand("gen-medium", "cross-restored medium corpus");
  add_common(gm, args);

  auto* tr = app.add_subcommand("train-restorer", "stage 2: train the restorer");
  add_common(tr, args);
  tr->add_flag("--resume", resume, "resume from the rolling checkpoint");

  auto* ev = app.add_subcommand("eval", "per-degradation PSNR/SSIM report");
  add_common(ev, args);
  ev->add_option("--checkpoint", eval_ckpt, "restorer checkpoint path");

  auto* cl = app.add_subcommand("classify", "quality tier of one image");
  add_common(cl, args);
  cl->add_option("image", classify_image, "PNG to classify")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return cmd_synth(args, synth_out);
    if (tp->parsed()) return cmd_train_prompts(args);
    if (gm->parsed()) return cmd_gen_medium(args);
    if (tr->parsed()) return cmd_train_restorer(args, resume);
    if (ev->parsed()) return cmd_eval(args, eval_ckpt);
    if (cl->parsed()) return cmd_classify(args, classify_image);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
