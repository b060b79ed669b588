#include "advmim/training.hpp"

#include <sstream>

namespace advmim {

namespace {
std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}
}  // namespace

std::map<std::string, std::string> TrainConfig::to_kv() const {
  std::map<std::string, std::string> kv;
  kv["mask_ratio"] = fmt_double(mask_ratio);
  kv["lambda_adv"] = fmt_double(lambda_adv);
  kv["lr_init"] = fmt_double(lr_init);
  kv["momentum"] = fmt_double(momentum);
  kv["weight_decay"] = fmt_double(weight_decay);
  kv["disc_lr_scale"] = fmt_double(disc_lr_scale);
  kv["iterations"] = std::to_string(iterations);
  kv["batch_size"] = std::to_string(batch_size);
  kv["labeled_per_batch"] = std::to_string(labeled_per_batch);
  kv["crop_size"] = std::to_string(crop_size);
  kv["seed"] = std::to_string(seed);
  kv["eval_interval"] = std::to_string(eval_interval);
  kv["lr_poly"] = lr_poly ? "1" : "0";
  kv["seg_l_s"] = seg_l_s ? "1" : "0";
  kv["seg_l_c"] = seg_l_c ? "1" : "0";
  kv["seg_u_s"] = seg_u_s ? "1" : "0";
  kv["seg_u_c"] = seg_u_c ? "1" : "0";
  kv["mdl_l_s"] = mdl_l_s ? "1" : "0";
  kv["mdl_l_c"] = mdl_l_c ? "1" : "0";
  kv["mdl_u_s"] = mdl_u_s ? "1" : "0";
  kv["mdl_u_c"] = mdl_u_c ? "1" : "0";
  kv["adv_s"] = adv_s ? "1" : "0";
  kv["adv_c"] = adv_c ? "1" : "0";
  return kv;
}

TrainConfig TrainConfig::from_kv(const std::map<std::string, std::string>& kv) {
  TrainConfig c;
  auto get = [&](const char* key, auto& out) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    std::istringstream is(it->second);
    is >> out;
    if (is.fail()) throw ConfigError(std::string("bad value for ") + key + ": " + it->second);
  };
  auto get_bool = [&](const char* key, bool& out) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    if (it->second == "1" || it->second == "true")
      out = true;
    else if (it->second == "0" || it->second == "false")
      out = false;
    else
      throw ConfigError(std::string("bad boolean for ") + key + ": " + it->second);
  };
  static const char* known[] = {"mask_ratio", "lambda_adv", "lr_init", "momentum",
                                "weight_decay", "disc_lr_scale", "iterations", "batch_size", "labeled_per_batch",
                                "crop_size", "seed", "eval_interval", "lr_poly", "seg_l_s",
                                "seg_l_c", "seg_u_s", "seg_u_c", "mdl_l_s", "mdl_l_c",
                                "mdl_u_s", "mdl_u_c", "adv_s", "adv_c"};
  for (const auto& [k, _] : kv) {
    bool ok = false;
    for (const char* kn : known) ok = ok || k == kn;
    if (!ok) throw ConfigError("unknown config key: " + k);
  }
  get("mask_ratio", c.mask_ratio);
  get("lambda_adv", c.lambda_adv);
  get("lr_init", c.lr_init);
  get("momentum", c.momentum);
  get("weight_decay", c.weight_decay);
  get("disc_lr_scale", c.disc_lr_scale);
  get("iterations", c.iterations);
  get("batch_size", c.batch_size);
  get("labeled_per_batch", c.labeled_per_batch);
  get("crop_size", c.crop_size);
  get("seed", c.seed);
  get("eval_interval", c.eval_interval);
  get_bool("lr_poly", c.lr_poly);
  get_bool("seg_l_s", c.seg_l_s);
  get_bool("seg_l_c", c.seg_l_c);
  get_bool("seg_u_s", c.seg_u_s);
  get_bool("seg_u_c", c.seg_u_c);
  get_bool("mdl_l_s", c.mdl_l_s);
  get_bool("mdl_l_c", c.mdl_l_c);
  get_bool("mdl_u_s", c.mdl_u_s);
  get_bool("mdl_u_c", c.mdl_u_c);
  get_bool("adv_s", c.adv_s);
  get_bool("adv_c", c.adv_c);
  c.validate();
  return c;
}

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  for (const auto& [k, v] : to_kv()) os << k << " = " << v << "\n";
  return os.str();
}

}  // namespace advmim
