// advmim command-line front-end: data generation, training, evaluation, the
// ablation suite, hyperparameter sweeps, bound estimation, and rendering.
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "advmim/bound.hpp"
#include "advmim/io.hpp"
#include "advmim/plot.hpp"
#include "advmim/training.hpp"

namespace fs = std::filesystem;
using namespace advmim;

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return std::string(buf);
}

std::pair<double, double> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {0, 0};
  double m = 0;
  for (double v : xs) m += v;
  m /= static_cast<double>(xs.size());
  double var = 0;
  for (double v : xs) var += (v - m) * (v - m);
  var /= static_cast<double>(xs.size());
  return {m, std::sqrt(var)};
}

TrainConfig load_config(const std::string& path) {
  if (path.empty()) return TrainConfig{};
  return TrainConfig::from_kv(io::read_kv_file(path));
}

// train split partitioned by the labeled flag
struct LoadedData {
  Dataset labeled, unlabeled, test;
};

LoadedData load_train_data(const std::string& dir) {
  Dataset train = load_dataset(dir, "train");
  LoadedData out;
  out.labeled.num_classes = out.unlabeled.num_classes = train.num_classes;
  out.labeled.seed = out.unlabeled.seed = train.seed;
  for (auto& s : train.samples) (s.labeled ? out.labeled : out.unlabeled).samples.push_back(s);
  try {
    out.test = load_dataset(dir, "test");
  } catch (const IoError&) {
    // no test split; evaluation is skipped
  }
  return out;
}

ModelSet<float> restore_models(const io::Checkpoint& ck, const Dataset& any, TrainConfig* cfg) {
  if (any.samples.empty()) throw ConfigError("dataset has no samples");
  TrainConfig c = TrainConfig::from_kv(io::parse_kv_text(ck.config_text));
  auto ms = ModelSet<float>::create(any.num_classes, any.samples[0].height(), c.seed,
                                    any.samples[0].image.dim(2));
  io::checkpoint_to_params(ck, ms.all_params);
  if (cfg) *cfg = c;
  return ms;
}

// Table-1-style flag matrix: rows add cross-teaching, masked-domain learning
// on the transformer, its adversarial term, then both on the CNN as well.
struct AblationRow {
  std::string name;
  void (*apply)(TrainConfig&);
};

const std::vector<AblationRow> kAblationRows = {
    {"labeled_only",
     [](TrainConfig& c) {
       c.seg_l_c = c.seg_u_s = c.seg_u_c = false;
       c.mdl_l_s = c.mdl_l_c = c.mdl_u_s = c.mdl_u_c = false;
       c.adv_s = c.adv_c = false;
     }},
    {"cross_teaching",
     [](TrainConfig& c) {
       c.mdl_l_s = c.mdl_l_c = c.mdl_u_s = c.mdl_u_c = false;
       c.adv_s = c.adv_c = false;
     }},
    {"masked_domain",
     [](TrainConfig& c) {
       c.mdl_l_c = c.mdl_u_c = false;
       c.adv_s = c.adv_c = false;
     }},
    {"adv_masked_domain",
     [](TrainConfig& c) {
       c.mdl_l_c = c.mdl_u_c = false;
       c.adv_c = false;
     }},
    {"full_advmim", [](TrainConfig&) {}},
};

MetricsReport run_one(const TrainConfig& cfg, const LoadedData& data, const std::string& out_dir) {
  auto ms = ModelSet<float>::create(data.labeled.num_classes,
                                    data.labeled.samples.at(0).height(), cfg.seed,
                                    data.labeled.samples.at(0).image.dim(2));
  auto res = train_run(ms, cfg, data.labeled, data.unlabeled, data.test, out_dir);
  return res.final_metrics;
}

int cmd_generate(int n, int test_n, int height, int width, int classes, std::uint64_t seed,
                 double labeled_fraction, const std::string& out) {
  Dataset train = generate_synthetic_dataset(n, height, width, classes, seed);
  auto [lab, unl] = split_dataset(train, labeled_fraction, derive_seed(seed, 0x5917));
  Dataset merged;
  merged.num_classes = train.num_classes;
  merged.seed = seed;
  for (auto& s : lab.samples) merged.samples.push_back(std::move(s));
  for (auto& s : unl.samples) merged.samples.push_back(std::move(s));
  save_dataset(out, merged, "train");
  if (test_n > 0) {
    Dataset test = generate_synthetic_dataset(test_n, height, width, classes,
                                              derive_seed(seed, 0x7e57), kDefaultPatchPx, "t");
    save_dataset(out, test, "test");
  }
  std::printf("wrote %d train (%zu labeled) + %d test samples to %s\n", n, lab.samples.size(),
              test_n, out.c_str());
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir, std::int64_t seed_override) {
  TrainConfig cfg = load_config(config_path);
  if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
  LoadedData data = load_train_data(data_dir);
  MetricsReport r = run_one(cfg, data, out_dir);
  std::printf("final mean_dice=%.4f mean_hd=%.4f (%s)\n", r.mean_dice, r.mean_hd,
              out_dir.c_str());
  return 0;
}

std::vector<std::string> list_mask_ids(const std::string& dir) {
  std::vector<std::string> ids;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::string name = e.path().filename().string();
    const std::string suffix = "_mask.png";
    if (name.size() > suffix.size() &&
        name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0)
      ids.push_back(name.substr(0, name.size() - suffix.size()));
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

int cmd_evaluate(const std::string& pred_dir, const std::string& gt_dir, int classes,
                 const std::string& out) {
  auto ids = list_mask_ids(gt_dir);
  if (ids.empty()) throw IoError("no *_mask.png files in " + gt_dir);
  io::CsvTable t;
  t.header = {"sample_id", "class_id", "dice", "hd", "flags"};
  for (const auto& id : ids) {
    int pw = 0, ph = 0, gw = 0, gh = 0;
    auto pred8 = io::read_png_gray((fs::path(pred_dir) / (id + "_mask.png")).string(), pw, ph);
    auto gt8 = io::read_png_gray((fs::path(gt_dir) / (id + "_mask.png")).string(), gw, gh);
    if (pw != gw || ph != gh) throw ConfigError("pred/gt size mismatch for " + id);
    std::vector<int> pred(pred8.begin(), pred8.end()), gt(gt8.begin(), gt8.end());
    for (int c = 1; c < classes; ++c) {
      bool sentinel = false;
      double d = dice_score(pred, gt, c);
      double hd = hausdorff_masks(pred, gt, gh, gw, c, 100.0, &sentinel);
      t.rows.push_back({id, std::to_string(c), num(d), num(hd),
                        sentinel ? std::string("sentinel") : std::string()});
    }
  }
  io::write_csv(out, t);
  std::printf("wrote %zu rows to %s\n", t.rows.size(), out.c_str());
  return 0;
}

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::string cur;
  for (char c : s + ",") {
    if (c == ',') {
      if (!cur.empty()) out.push_back(std::stoull(cur));
      cur.clear();
    } else
      cur += c;
  }
  if (out.empty()) throw ConfigError("no seeds given");
  return out;
}

int cmd_ablate(const std::string& config_path, const std::string& data_dir,
               const std::string& out_dir, const std::string& seeds_str) {
  TrainConfig base = load_config(config_path);
  auto seeds = parse_seeds(seeds_str);
  LoadedData data = load_train_data(data_dir);
  fs::create_directories(out_dir);

  io::CsvTable t;
  t.header = {"row", "name", "dice_mean", "dice_std", "hd_mean", "hd_std"};
  for (std::size_t r = 0; r < kAblationRows.size(); ++r) {
    std::vector<double> dices, hds;
    for (std::uint64_t seed : seeds) {
      TrainConfig cfg = base;
      cfg.seed = seed;
      kAblationRows[r].apply(cfg);
      std::string run_dir =
          (fs::path(out_dir) / (kAblationRows[r].name + "_seed" + std::to_string(seed)))
              .string();
      MetricsReport m = run_one(cfg, data, run_dir);
      dices.push_back(m.mean_dice);
      hds.push_back(m.mean_hd);
      std::printf("%s seed=%llu dice=%.4f hd=%.4f\n", kAblationRows[r].name.c_str(),
                  static_cast<unsigned long long>(seed), m.mean_dice, m.mean_hd);
      std::fflush(stdout);
    }
    auto [dm, ds] = mean_std(dices);
    auto [hm, hs] = mean_std(hds);
    t.rows.push_back(
        {std::to_string(r + 1), kAblationRows[r].name, num(dm), num(ds), num(hm), num(hs)});
  }
  io::write_csv((fs::path(out_dir) / "ablation.csv").string(), t);
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir, const std::string& variable,
              const std::string& values_str, const std::string& seeds_str) {
  if (variable != "mask_ratio" && variable != "lambda_adv")
    throw ConfigError("sweep variable must be mask_ratio or lambda_adv");
  TrainConfig base = load_config(config_path);
  auto seeds = parse_seeds(seeds_str);
  std::vector<double> values;
  {
    std::string cur;
    for (char c : values_str + ",") {
      if (c == ',') {
        if (!cur.empty()) values.push_back(std::stod(cur));
        cur.clear();
      } else
        cur += c;
    }
  }
  if (values.empty()) throw ConfigError("no sweep values given");
  LoadedData data = load_train_data(data_dir);
  fs::create_directories(out_dir);

  io::CsvTable t;
  t.header = {variable, "dice_mean", "dice_std", "hd_mean", "hd_std"};
  PlotSeries dice_series{"DICE", {}, {}, {0, 130, 200}};
  for (double v : values) {
    std::vector<double> dices, hds;
    for (std::uint64_t seed : seeds) {
      TrainConfig cfg = base;
      cfg.seed = seed;
      if (variable == "mask_ratio")
        cfg.mask_ratio = v;
      else
        cfg.lambda_adv = v;
      std::string run_dir =
          (fs::path(out_dir) / (variable + "_" + num(v) + "_seed" + std::to_string(seed)))
              .string();
      MetricsReport m = run_one(cfg, data, run_dir);
      dices.push_back(m.mean_dice);
      hds.push_back(m.mean_hd);
      std::printf("%s=%s seed=%llu dice=%.4f hd=%.4f\n", variable.c_str(), num(v).c_str(),
                  static_cast<unsigned long long>(seed), m.mean_dice, m.mean_hd);
      std::fflush(stdout);
    }
    auto [dm, ds] = mean_std(dices);
    auto [hm, hs] = mean_std(hds);
    t.rows.push_back({num(v), num(dm), num(ds), num(hm), num(hs)});
    dice_series.x.push_back(v);
    dice_series.y.push_back(dm);
  }
  io::write_csv((fs::path(out_dir) / "sweep.csv").string(), t);
  line_plot_png((fs::path(out_dir) / "sweep.png").string(), {dice_series}, variable,
                "MEAN DICE");
  return 0;
}

int cmd_estimate_bound(const std::vector<std::string>& checkpoints, const std::string& data_dir,
                       const std::string& out) {
  LoadedData data = load_train_data(data_dir);
  io::CsvTable t;
  t.header = {"seed",       "eps_P", "eps_Pp", "eps_Qp", "d_proxy",
              "lambda_hat", "gamma", "rhs",    "margin"};
  for (const auto& path : checkpoints) {
    io::Checkpoint ck = io::load_checkpoint(path);
    TrainConfig cfg;
    ModelSet<float> ms = restore_models(ck, data.labeled, &cfg);
    BoundOptions opt;
    opt.seed = cfg.seed;
    BoundReport rep = check_bound(ms, data.labeled, data.unlabeled, cfg, opt);
    t.rows.push_back({std::to_string(cfg.seed), num(rep.eps_p), num(rep.eps_pp),
                      num(rep.eps_qp), num(rep.d_proxy), num(rep.lambda_hat), num(rep.gamma),
                      num(rep.rhs), num(rep.margin)});
    std::printf("seed=%llu eps_P=%.4f rhs=%.4f margin=%.4f\n",
                static_cast<unsigned long long>(cfg.seed), rep.eps_p, rep.rhs, rep.margin);
  }
  io::write_csv(out, t);
  return 0;
}

int cmd_render(const std::vector<std::string>& variants, const std::string& data_dir,
               const std::string& split, int n, const std::string& out_dir) {
  std::map<std::string, std::string> vc;
  for (const auto& v : variants) {
    auto eq = v.find('=');
    if (eq == std::string::npos) throw ConfigError("--checkpoint expects name=path: " + v);
    vc[v.substr(0, eq)] = v.substr(eq + 1);
  }
  Dataset d = load_dataset(data_dir, split);
  if (n > 0 && static_cast<int>(d.samples.size()) > n) d.samples.resize(std::size_t(n));
  int files = render_qualitative(vc, d, out_dir);
  std::printf("wrote %d files to %s\n", files, out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AdvMIM-style semi-supervised segmentation experiments"};
  app.require_subcommand(1);
  int threads = 1;
  app.add_option("--threads", threads, "worker threads (results are defined for 1)");

  auto* gen = app.add_subcommand("generate-data", "write a synthetic dataset directory");
  int g_n = 200, g_test = 50, g_h = 64, g_w = 64, g_classes = 4;
  std::uint64_t g_seed = 1;
  double g_frac = 0.05;
  std::string g_out;
  gen->add_option("--n", g_n);
  gen->add_option("--test-n", g_test);
  gen->add_option("--height", g_h);
  gen->add_option("--width", g_w);
  gen->add_option("--classes", g_classes);
  gen->add_option("--seed", g_seed);
  gen->add_option("--labeled-fraction", g_frac);
  gen->add_option("--out", g_out)->required();

  auto* tr = app.add_subcommand("train", "run one training configuration");
  std::string t_config, t_data, t_out;
  std::int64_t t_seed = -1;
  tr->add_option("--config", t_config);
  tr->add_option("--data", t_data)->required();
  tr->add_option("--out", t_out)->required();
  tr->add_option("--seed", t_seed, "override the config seed");

  auto* ev = app.add_subcommand("evaluate", "score prediction masks against ground truth");
  std::string e_pred, e_gt, e_out;
  int e_classes = 4;
  ev->add_option("--pred-dir", e_pred)->required();
  ev->add_option("--gt-dir", e_gt)->required();
  ev->add_option("--classes", e_classes);
  ev->add_option("--out", e_out)->required();

  auto* ab = app.add_subcommand("ablate", "run the five-row ablation suite");
  std::string a_config, a_data, a_out, a_seeds = "1,2,3";
  ab->add_option("--config", a_config);
  ab->add_option("--data", a_data)->required();
  ab->add_option("--out", a_out)->required();
  ab->add_option("--seeds", a_seeds, "comma-separated");

  auto* sw = app.add_subcommand("sweep", "sweep mask_ratio or lambda_adv");
  std::string s_config, s_data, s_out, s_var = "mask_ratio", s_values, s_seeds = "1,2,3";
  sw->add_option("--config", s_config);
  sw->add_option("--data", s_data)->required();
  sw->add_option("--out", s_out)->required();
  sw->add_option("--variable", s_var);
  sw->add_option("--values", s_values)->required();
  sw->add_option("--seeds", s_seeds);

  auto* bo = app.add_subcommand("estimate-bound", "measure the bound terms for checkpoints");
  std::vector<std::string> b_ckpts;
  std::string b_data, b_out;
  bo->add_option("--checkpoint", b_ckpts)->required();
  bo->add_option("--data", b_data)->required();
  bo->add_option("--out", b_out)->required();

  auto* re = app.add_subcommand("render", "render qualitative prediction panels");
  std::vector<std::string> r_ckpts;
  std::string r_data, r_split = "test", r_out;
  int r_n = 4;
  re->add_option("--checkpoint", r_ckpts, "name=path, repeatable")->required();
  re->add_option("--data", r_data)->required();
  re->add_option("--split", r_split);
  re->add_option("--n", r_n, "samples to render, 0 = all");
  re->add_option("--out", r_out)->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*gen) return cmd_generate(g_n, g_test, g_h, g_w, g_classes, g_seed, g_frac, g_out);
    if (*tr) return cmd_train(t_config, t_data, t_out, t_seed);
    if (*ev) return cmd_evaluate(e_pred, e_gt, e_classes, e_out);
    if (*ab) return cmd_ablate(a_config, a_data, a_out, a_seeds);
    if (*sw) return cmd_sweep(s_config, s_data, s_out, s_var, s_values, s_seeds);
    if (*bo) return cmd_estimate_bound(b_ckpts, b_data, b_out);
    if (*re) return cmd_render(r_ckpts, r_data, r_split, r_n, r_out);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const ShapeError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 3;
  } catch (const IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 4;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  }
  return 0;
}
