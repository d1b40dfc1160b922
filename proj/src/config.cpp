#include "aio/config.hpp"

#include <fstream>

#include "aio/errors.hpp"
#include "aio/rng.hpp"

namespace aio::cfg {

using nlohmann::json;

RunConfig RunConfig::desk_preset() {
  RunConfig c;
  c.dataset.kinds = {"noise", "rain"};
  c.dataset.size = 8;
  c.dataset.image_size = 64;
  c.stage1.iters = 500;
  c.stage1.lr = 2e-2;
  c.stage2.iters = 2000;
  c.stage2.lr = 2e-3;
  c.stage2.tau = 0.25;  // 0.07 collapses the toy-scale degradation codes
  c.stage2.batch = 1;
  c.stage2.patch = 64;
  c.stage2.width_scale = 1.0 / 6.0;  // 48 -> 8 base channels
  c.stage2.blocks = {1, 1, 1, 1};
  c.stage2.monitor_size = 4;
  c.stage2.checkpoint_every = 500;
  c.proxy.iters = 250;
  return c;
}

degrade::DatasetConfig RunConfig::dataset_config() const {
  degrade::DatasetConfig d;
  d.kinds.clear();
  for (const auto& k : dataset.kinds) d.kinds.push_back(degrade::kind_from_name(k));
  d.size = dataset.size;
  d.image_size = dataset.image_size;
  d.seed = seed;
  d.clean_dir = dataset.clean_dir;
  d.noise_sigmas = dataset.noise_sigmas;
  return d;
}

restore::RestorerConfig RunConfig::restorer_config() const {
  restore::RestorerConfig r;
  r.base_channels = stage2.base_channels;
  r.blocks = stage2.blocks;
  r.heads = stage2.heads;
  r.ffn_expansion = stage2.ffn_expansion;
  r.width_scale = stage2.width_scale;
  r.validate();
  return r;
}

restore::RestorerConfig RunConfig::proxy_restorer_config() const {
  restore::RestorerConfig r;
  r.base_channels = stage2.base_channels;
  r.blocks = proxy.blocks;
  r.heads = stage2.heads;
  r.ffn_expansion = stage2.ffn_expansion;
  r.width_scale = proxy.width_scale;
  r.validate();
  return r;
}

loss::LossWeights RunConfig::loss_weights() const {
  return {stage2.lambda_cl, stage2.lambda_clip, stage2.lambda_dpl};
}

namespace {
json opt_str(const std::optional<std::string>& v) {
  return v ? json(*v) : json(nullptr);
}
std::optional<std::string> str_opt(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<std::string>();
}
}  // namespace

json to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["dataset"] = {{"kinds", c.dataset.kinds},
                  {"size", c.dataset.size},
                  {"image_size", c.dataset.image_size},
                  {"clean_dir", opt_str(c.dataset.clean_dir)},
                  {"noise_sigmas", c.dataset.noise_sigmas}};
  j["stage1"] = {{"init_mode", c.stage1.init_mode},
                 {"tokens", c.stage1.tokens},
                 {"iters", c.stage1.iters},
                 {"lr", c.stage1.lr},
                 {"batch", c.stage1.batch}};
  j["stage2"] = {{"iters", c.stage2.iters},
                 {"lr", c.stage2.lr},
                 {"batch", c.stage2.batch},
                 {"patch", c.stage2.patch},
                 {"base_channels", c.stage2.base_channels},
                 {"blocks", c.stage2.blocks},
                 {"heads", c.stage2.heads},
                 {"ffn_expansion", c.stage2.ffn_expansion},
                 {"width_scale", c.stage2.width_scale},
                 {"lambda_cl", c.stage2.lambda_cl},
                 {"lambda_clip", c.stage2.lambda_clip},
                 {"lambda_dpl", c.stage2.lambda_dpl},
                 {"tau", c.stage2.tau},
                 {"gamma", c.stage2.gamma},
                 {"easy_weight", c.stage2.easy_weight},
                 {"use_cl", c.stage2.use_cl},
                 {"use_clip", c.stage2.use_clip},
                 {"use_dpl", c.stage2.use_dpl},
                 {"dial_ratios", c.stage2.dial_ratios},
                 {"monitor_size", c.stage2.monitor_size},
                 {"checkpoint_every", c.stage2.checkpoint_every},
                 {"backends",
                  {{"mode", c.stage2.backends.mode},
                   {"vision_language_weights",
                    opt_str(c.stage2.backends.vision_language_weights)},
                   {"semantic_weights", opt_str(c.stage2.backends.semantic_weights)},
                   {"perceptual_weights",
                    opt_str(c.stage2.backends.perceptual_weights)}}}};
  j["proxy"] = {{"iters", c.proxy.iters},
                {"lr", c.proxy.lr},
                {"width_scale", c.proxy.width_scale},
                {"blocks", c.proxy.blocks}};
  j["paths"] = {{"checkpoint_dir", c.paths.checkpoint_dir},
                {"log_dir", c.paths.log_dir}};
  return j;
}

namespace {
void reject_unknown_keys(const json& user, const json& schema, const std::string& at) {
  if (!user.is_object()) return;
  if (!schema.is_object())
    throw ConfigError("config: unexpected object at " + (at.empty() ? "/" : at));
  for (const auto& [key, value] : user.items()) {
    if (!schema.contains(key))
      throw ConfigError("config: unknown key \"" + (at.empty() ? key : at + "." + key) +
                        "\"");
    reject_unknown_keys(value, schema.at(key), at.empty() ? key : at + "." + key);
  }
}

template <class T>
void read_if(const json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) j.at(key).get_to(out);
}
}  // namespace

RunConfig from_json(const json& j) {
  RunConfig c;
  try {
    reject_unknown_keys(j, to_json(c), "");
    read_if(j, "seed", c.seed);
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      read_if(d, "kinds", c.dataset.kinds);
      read_if(d, "size", c.dataset.size);
      read_if(d, "image_size", c.dataset.image_size);
      if (d.contains("clean_dir")) c.dataset.clean_dir = str_opt(d.at("clean_dir"));
      read_if(d, "noise_sigmas", c.dataset.noise_sigmas);
    }
    if (j.contains("stage1")) {
      const auto& s = j.at("stage1");
      read_if(s, "init_mode", c.stage1.init_mode);
      read_if(s, "tokens", c.stage1.tokens);
      read_if(s, "iters", c.stage1.iters);
      read_if(s, "lr", c.stage1.lr);
      read_if(s, "batch", c.stage1.batch);
    }
    if (j.contains("stage2")) {
      const auto& s = j.at("stage2");
      read_if(s, "iters", c.stage2.iters);
      read_if(s, "lr", c.stage2.lr);
      read_if(s, "batch", c.stage2.batch);
      read_if(s, "patch", c.stage2.patch);
      read_if(s, "base_channels", c.stage2.base_channels);
      read_if(s, "blocks", c.stage2.blocks);
      read_if(s, "heads", c.stage2.heads);
      read_if(s, "ffn_expansion", c.stage2.ffn_expansion);
      read_if(s, "width_scale", c.stage2.width_scale);
      read_if(s, "lambda_cl", c.stage2.lambda_cl);
      read_if(s, "lambda_clip", c.stage2.lambda_clip);
      read_if(s, "lambda_dpl", c.stage2.lambda_dpl);
      read_if(s, "tau", c.stage2.tau);
      read_if(s, "gamma", c.stage2.gamma);
      read_if(s, "easy_weight", c.stage2.easy_weight);
      read_if(s, "use_cl", c.stage2.use_cl);
      read_if(s, "use_clip", c.stage2.use_clip);
      read_if(s, "use_dpl", c.stage2.use_dpl);
      read_if(s, "dial_ratios", c.stage2.dial_ratios);
      read_if(s, "monitor_size", c.stage2.monitor_size);
      read_if(s, "checkpoint_every", c.stage2.checkpoint_every);
      if (s.contains("backends")) {
        const auto& b = s.at("backends");
        read_if(b, "mode", c.stage2.backends.mode);
        if (b.contains("vision_language_weights"))
          c.stage2.backends.vision_language_weights =
              str_opt(b.at("vision_language_weights"));
        if (b.contains("semantic_weights"))
          c.stage2.backends.semantic_weights = str_opt(b.at("semantic_weights"));
        if (b.contains("perceptual_weights"))
          c.stage2.backends.perceptual_weights = str_opt(b.at("perceptual_weights"));
      }
    }
    if (j.contains("proxy")) {
      const auto& p = j.at("proxy");
      read_if(p, "iters", c.proxy.iters);
      read_if(p, "lr", c.proxy.lr);
      read_if(p, "width_scale", c.proxy.width_scale);
      read_if(p, "blocks", c.proxy.blocks);
    }
    if (j.contains("paths")) {
      const auto& p = j.at("paths");
      read_if(p, "checkpoint_dir", c.paths.checkpoint_dir);
      read_if(p, "log_dir", c.paths.log_dir);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

namespace {
json parse_override_value(const std::string& text) {
  // JSON literal if it parses, bare string otherwise
  const auto parsed = json::parse(text, nullptr, false);
  if (!parsed.is_discarded()) return parsed;
  return json(text);
}
}  // namespace

RunConfig load(const std::optional<std::string>& path,
               const std::vector<std::string>& overrides, const std::string& preset) {
  RunConfig base;
  if (preset == "desk")
    base = RunConfig::desk_preset();
  else if (preset != "paper")
    throw ConfigError("unknown preset: " + preset + " (expected paper or desk)");

  json doc = to_json(base);
  if (path) {
    std::ifstream is(*path);
    if (!is) throw ConfigError("cannot open config file: " + *path);
    json user;
    try {
      user = json::parse(is);
    } catch (const json::exception& e) {
      throw ConfigError("config parse error in " + *path + ": " + e.what());
    }
    reject_unknown_keys(user, doc, "");
    doc.merge_patch(user);
  }
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw ConfigError("override must look like key.path=value: " + kv);
    std::string pointer = "/" + kv.substr(0, eq);
    for (auto& ch : pointer)
      if (ch == '.') ch = '/';
    const json::json_pointer ptr(pointer);
    if (!doc.contains(ptr))
      throw ConfigError("override targets unknown key: " + kv.substr(0, eq));
    doc[ptr] = parse_override_value(kv.substr(eq + 1));
  }
  return from_json(doc);
}

std::uint64_t config_hash(const RunConfig& c) {
  return fnv1a64(to_json(c).dump());
}

}  // namespace aio::cfg
