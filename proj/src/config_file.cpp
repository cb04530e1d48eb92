#include "bss/config_file.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace bss {

namespace {

using nlohmann::json;

[[noreturn]] void bad_key(const std::string& origin, const std::string& section,
                          const std::string& key) {
  throw ConfigError(origin + ": unknown key '" + section + "." + key + "'");
}

void check_keys(const json& obj, const std::string& origin, const std::string& section,
                const std::set<std::string>& allowed) {
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) bad_key(origin, section, key);
  }
}

template <typename T>
void maybe(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

void maybe_pair(const json& obj, const char* key, double& lo, double& hi) {
  if (obj.contains(key)) {
    const auto arr = obj.at(key);
    if (!arr.is_array() || arr.size() != 2) {
      throw ConfigError(std::string("config: '") + key + "' must be a [lo, hi] pair");
    }
    lo = arr[0].get<double>();
    hi = arr[1].get<double>();
  }
}

void apply_trainer(const json& obj, const std::string& origin, TrainerConfig& t) {
  check_keys(obj, origin, "trainer",
             {"lr", "epochs", "ema_decay", "crop", "seed", "variant", "workers", "optimizer"});
  maybe(obj, "lr", t.lr);
  maybe(obj, "epochs", t.epochs);
  maybe(obj, "ema_decay", t.ema_decay);
  if (obj.contains("crop")) {
    const auto arr = obj.at("crop");
    if (!arr.is_array() || arr.size() != 3) {
      throw ConfigError(origin + ": 'trainer.crop' must be [depth, height, width]");
    }
    t.crop_depth = arr[0].get<index_t>();
    t.crop_height = arr[1].get<index_t>();
    t.crop_width = arr[2].get<index_t>();
  }
  maybe(obj, "seed", t.seed);
  if (obj.contains("variant")) t.variant = parse_variant(obj.at("variant").get<std::string>());
  maybe(obj, "workers", t.workers);
  if (obj.contains("optimizer")) {
    const json& opt = obj.at("optimizer");
    check_keys(opt, origin, "trainer.optimizer", {"beta1", "beta2", "eps", "weight_decay"});
    maybe(opt, "beta1", t.optimizer.beta1);
    maybe(opt, "beta2", t.optimizer.beta2);
    maybe(opt, "eps", t.optimizer.eps);
    maybe(opt, "weight_decay", t.optimizer.weight_decay);
  }
}

void apply_net(const json& obj, const std::string& origin, SegNetConfig& n) {
  check_keys(obj, origin, "net", {"in_channels", "base_channels", "levels", "num_classes"});
  maybe(obj, "in_channels", n.in_channels);
  maybe(obj, "base_channels", n.base_channels);
  maybe(obj, "levels", n.levels);
  maybe(obj, "num_classes", n.num_classes);
}

void apply_nfc(const json& obj, const std::string& origin, NfcConfig& n) {
  check_keys(obj, origin, "nfc",
             {"window_fraction", "window_voxels", "stride", "stack_strategy",
              "noise_insert_prob"});
  maybe(obj, "window_fraction", n.window_fraction);
  maybe(obj, "window_voxels", n.window_voxels);
  maybe(obj, "stride", n.stride);
  if (obj.contains("stack_strategy")) {
    n.stack_strategy = parse_stack_strategy(obj.at("stack_strategy").get<std::string>());
  }
  maybe(obj, "noise_insert_prob", n.noise_insert_prob);
}

void apply_fsx(const json& obj, const std::string& origin, FsxConfig& f) {
  check_keys(obj, origin, "fsx", {"alpha_range", "beta", "cutmix_ratio_range", "blend_mode"});
  maybe_pair(obj, "alpha_range", f.alpha_lo, f.alpha_hi);
  maybe(obj, "beta", f.beta);
  maybe_pair(obj, "cutmix_ratio_range", f.cutmix_ratio_lo, f.cutmix_ratio_hi);
  if (obj.contains("blend_mode")) {
    f.blend_mode = parse_blend_mode(obj.at("blend_mode").get<std::string>());
  }
}

void apply_phantom(const json& obj, const std::string& origin, PhantomConfig& p) {
  check_keys(obj, origin, "phantom",
             {"dims", "blobs", "radius_range", "contrast", "noise_std", "texture_amp",
              "texture_waves", "num_classes"});
  if (obj.contains("dims")) {
    const auto arr = obj.at("dims");
    if (!arr.is_array() || arr.size() != 3) {
      throw ConfigError(origin + ": 'phantom.dims' must be [depth, height, width]");
    }
    p.depth = arr[0].get<index_t>();
    p.height = arr[1].get<index_t>();
    p.width = arr[2].get<index_t>();
  }
  if (obj.contains("blobs")) {
    const auto arr = obj.at("blobs");
    if (!arr.is_array() || arr.size() != 2) {
      throw ConfigError(origin + ": 'phantom.blobs' must be [lo, hi]");
    }
    p.blobs_lo = arr[0].get<index_t>();
    p.blobs_hi = arr[1].get<index_t>();
  }
  maybe_pair(obj, "radius_range", p.radius_lo, p.radius_hi);
  maybe(obj, "contrast", p.contrast);
  maybe(obj, "noise_std", p.noise_std);
  maybe(obj, "texture_amp", p.texture_amp);
  maybe(obj, "texture_waves", p.texture_waves);
  maybe(obj, "num_classes", p.num_classes);
}

void apply_split(const json& obj, const std::string& origin, SplitSpec& s) {
  check_keys(obj, origin, "split",
             {"train_fraction", "val_fraction", "train_count", "val_count", "test_count",
              "labeled_fraction", "slice_policy", "multi_slice"});
  maybe(obj, "train_fraction", s.train_fraction);
  maybe(obj, "val_fraction", s.val_fraction);
  maybe(obj, "train_count", s.train_count);
  maybe(obj, "val_count", s.val_count);
  maybe(obj, "test_count", s.test_count);
  maybe(obj, "labeled_fraction", s.labeled_fraction);
  if (obj.contains("slice_policy")) {
    s.slice_policy = parse_slice_policy(obj.at("slice_policy").get<std::string>());
  }
  maybe(obj, "multi_slice", s.multi_slice);
}

}  // namespace

void apply_config_text(FullConfig& config, const std::string& json_text,
                       const std::string& origin) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  if (!root.is_object()) throw ConfigError(origin + ": top level must be an object");
  check_keys(root, origin, "", {"trainer", "net", "nfc", "fsx", "phantom", "split"});
  try {
    if (root.contains("trainer")) apply_trainer(root.at("trainer"), origin, config.trainer);
    if (root.contains("net")) apply_net(root.at("net"), origin, config.trainer.net);
    if (root.contains("nfc")) apply_nfc(root.at("nfc"), origin, config.trainer.nfc);
    if (root.contains("fsx")) apply_fsx(root.at("fsx"), origin, config.trainer.fsx);
    if (root.contains("phantom")) apply_phantom(root.at("phantom"), origin, config.phantom);
    if (root.contains("split")) apply_split(root.at("split"), origin, config.split);
  } catch (const json::exception& e) {
    throw ConfigError(origin + ": " + e.what());
  }
}

FullConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  FullConfig config;
  apply_config_text(config, buf.str(), path);
  return config;
}

std::string resolved_config_json(const FullConfig& c) {
  json root;
  root["trainer"] = {
      {"lr", c.trainer.lr},
      {"epochs", c.trainer.epochs},
      {"ema_decay", c.trainer.ema_decay},
      {"crop", {c.trainer.crop_depth, c.trainer.crop_height, c.trainer.crop_width}},
      {"seed", c.trainer.seed},
      {"variant", variant_name(c.trainer.variant)},
      {"workers", c.trainer.workers},
      {"optimizer",
       {{"beta1", c.trainer.optimizer.beta1},
        {"beta2", c.trainer.optimizer.beta2},
        {"eps", c.trainer.optimizer.eps},
        {"weight_decay", c.trainer.optimizer.weight_decay}}},
  };
  root["net"] = {
      {"in_channels", c.trainer.net.in_channels},
      {"base_channels", c.trainer.net.base_channels},
      {"levels", c.trainer.net.levels},
      {"num_classes", c.trainer.net.num_classes},
  };
  root["nfc"] = {
      {"window_fraction", c.trainer.nfc.window_fraction},
      {"window_voxels", c.trainer.nfc.window_voxels},
      {"stride", c.trainer.nfc.stride},
      {"stack_strategy", stack_strategy_name(c.trainer.nfc.stack_strategy)},
      {"noise_insert_prob", c.trainer.nfc.noise_insert_prob},
  };
  root["fsx"] = {
      {"alpha_range", {c.trainer.fsx.alpha_lo, c.trainer.fsx.alpha_hi}},
      {"beta", c.trainer.fsx.beta},
      {"cutmix_ratio_range", {c.trainer.fsx.cutmix_ratio_lo, c.trainer.fsx.cutmix_ratio_hi}},
      {"blend_mode", blend_mode_name(c.trainer.fsx.blend_mode)},
  };
  root["phantom"] = {
      {"dims", {c.phantom.depth, c.phantom.height, c.phantom.width}},
      {"blobs", {c.phantom.blobs_lo, c.phantom.blobs_hi}},
      {"radius_range", {c.phantom.radius_lo, c.phantom.radius_hi}},
      {"contrast", c.phantom.contrast},
      {"noise_std", c.phantom.noise_std},
      {"texture_amp", c.phantom.texture_amp},
      {"texture_waves", c.phantom.texture_waves},
      {"num_classes", c.phantom.num_classes},
  };
  root["split"] = {
      {"train_fraction", c.split.train_fraction},
      {"val_fraction", c.split.val_fraction},
      {"train_count", c.split.train_count},
      {"val_count", c.split.val_count},
      {"test_count", c.split.test_count},
      {"labeled_fraction", c.split.labeled_fraction},
      {"slice_policy", slice_policy_name(c.split.slice_policy)},
      {"multi_slice", c.split.multi_slice},
  };
  return root.dump(2) + "\n";
}

}  // namespace bss
