// End-to-end acceptance harness. Runs nine independent checks covering
// gradients, loss oracles, masking, metrics, the ablation ordering, the
// mask-ratio sweep trend, the generalization-bound harness, determinism, and
// an overfit sanity check. Prints one PASS/FAIL line per criterion and exits
// with the number of failures.
#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <functional>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "advmim/bound.hpp"
#include "advmim/losses.hpp"
#include "advmim/masking.hpp"
#include "advmim/metrics.hpp"
#include "advmim/models.hpp"
#include "advmim/training.hpp"
#include "gradcheck.hpp"

namespace fs = std::filesystem;
using namespace advmim;

namespace {

int g_failures = 0;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void report(int idx, const char* name, bool pass, const std::string& detail) {
  std::printf("criterion %d %-18s %s  (%s)\n", idx, name, pass ? "PASS" : "FAIL",
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof(buf), f, ap);
  va_end(ap);
  return std::string(buf);
}

// ---------------------------------------------------------------------------
// 1. gradient suite: losses and all three network types vs central finite
//    differences at float64, 8x8 inputs, rel err < 1e-4, under 2 minutes

double gradcheck_losses() {
  double worst = 0;
  Rng rng(101);
  const int h = 8, w = 8, m = 3;
  Tensor<double> logits({h, w, m});
  for (auto& v : logits.v) v = rng.normal();
  std::vector<int> target(h * w);
  for (auto& t : target) t = rng.uniform_int(m);
  std::vector<double> cert(h * w);
  for (auto& c : cert) c = rng.uniform();

  auto make_pred = [&]() {
    Prediction<double> p;
    p.logits = logits;
    Tensor<double> flat = logits;
    flat.shape = {h * w, m};
    p.probs = nn::softmax_rows(flat);
    p.probs.shape = {h, w, m};
    return p;
  };
  struct LossCase {
    const char* name;
    std::function<double(const Prediction<double>&, Tensor<double>*)> fn;
  };
  std::vector<LossCase> cases = {
      {"ce", [&](const Prediction<double>& p, Tensor<double>* d) {
         std::vector<double> ones(h * w, 1.0);
         return weighted_pixel_ce(target, p.probs, ones, d);
       }},
      {"dice", [&](const Prediction<double>& p, Tensor<double>* d) {
         return dice_loss(target, p.probs, d);
       }},
      {"supervised", [&](const Prediction<double>& p, Tensor<double>* d) {
         return supervised_seg_loss(target, p, d);
       }},
      {"pseudo", [&](const Prediction<double>& p, Tensor<double>* d) {
         return pseudo_seg_loss(target, cert, p, d);
       }},
  };
  for (auto& c : cases) {
    Prediction<double> pred = make_pred();
    Tensor<double> d_probs(pred.probs.shape);
    c.fn(pred, &d_probs);
    Tensor<double> d_logits = probs_grad_to_logits(pred, d_probs);
    auto loss = [&]() {
      Prediction<double> p = make_pred();
      return c.fn(p, nullptr);
    };
    Rng pick(7);
    worst = std::max(worst, advtest::max_tensor_grad_err(logits, d_logits, loss, 60, pick));
  }
  return worst;
}

double gradcheck_transformer() {
  TransformerConfig tc;
  tc.patch = 4;
  tc.dim = 16;
  tc.blocks = 2;
  tc.heads = 2;
  tc.mlp_ratio = 2;
  tc.classes = 3;
  tc.max_grid_h = 2;
  tc.max_grid_w = 2;
  Rng rng(102);
  TransformerSegmenter<double> s(tc, rng);
  nn::ParamList<double> ps;
  s.params(ps);
  Rng wr(103);
  for (auto* p : ps)
    if (p->name == "S.decoder.w" || p->name == "S.decoder.b")
      for (auto& v : p->w.v) v = wr.normal() * 0.05;
  Tensor<double> img({8, 8, 1});
  Rng ir(104);
  for (auto& v : img.v) v = ir.uniform();
  std::vector<int> target(64);
  for (auto& t : target) t = ir.uniform_int(3);

  double worst = 0;
  for (int masked = 0; masked < 2; ++masked) {
    std::optional<PatchMask> pm;
    if (masked) pm = sample_patch_mask(2, 2, 0.5, 105);
    for (auto* p : ps) p->g.zero();
    TransformerSegmenter<double>::Cache c;
    Prediction<double> pred = s.forward(img, c, pm);
    Tensor<double> d_probs(pred.probs.shape);
    supervised_seg_loss(target, pred, &d_probs);
    s.backward(probs_grad_to_logits(pred, d_probs), c);
    auto loss = [&]() {
      TransformerSegmenter<double>::Cache cc;
      return supervised_seg_loss(target, s.forward(img, cc, pm));
    };
    Rng pick(106);
    worst = std::max(worst, advtest::max_param_grad_err(ps, loss, 10, pick));
  }
  return worst;
}

double gradcheck_cnn() {
  CnnConfig cc;
  cc.base = 4;
  cc.classes = 3;
  Rng rng(107);
  CnnSegmenter<double> net(cc, rng);
  nn::ParamList<double> ps;
  net.params(ps);
  Rng wr(108);
  for (auto* p : ps)
    if (p->name == "C.head.w" || p->name == "C.head.b")
      for (auto& v : p->w.v) v = wr.normal() * 0.05;
  Tensor<double> img({8, 8, 1});
  Rng ir(109);
  for (auto& v : img.v) v = ir.uniform();
  std::vector<int> target(64);
  for (auto& t : target) t = ir.uniform_int(3);
  PatchMask pm = sample_patch_mask(2, 2, 0.5, 110);

  for (auto* p : ps) p->g.zero();
  Tensor<double> masked = mask_image_fill(img, pm, net.mask_fill()->w, 4);
  CnnSegmenter<double>::Cache c;
  Prediction<double> pred = net.forward(masked, c);
  Tensor<double> d_probs(pred.probs.shape);
  supervised_seg_loss(target, pred, &d_probs);
  net.backward(probs_grad_to_logits(pred, d_probs), c);
  Tensor<double> dimg = net.input_grad_hwc();
  mask_image_fill_backward(dimg, pm, 4, net.mask_fill()->g);
  auto loss = [&]() {
    Tensor<double> m = mask_image_fill(img, pm, net.mask_fill()->w, 4);
    CnnSegmenter<double>::Cache cc2;
    return supervised_seg_loss(target, net.forward(m, cc2));
  };
  Rng pick(111);
  // 1e-4 step: deep-encoder gradients are ~1e-7 and a smaller step loses the
  // difference to float64 roundoff
  return advtest::max_param_grad_err(ps, loss, 10, pick, 1e-4);
}

double gradcheck_discriminator() {
  DiscriminatorConfig dc;
  dc.in_ch = 3;
  Rng rng(112);
  Discriminator<double> d("D", dc, rng);
  nn::ParamList<double> ps;
  d.params(ps);
  Rng wr(113);
  for (auto* p : ps)
    for (auto& v : p->w.v) v = wr.normal() * 0.1;
  Tensor<double> probs({8, 8, 3});
  Rng ir(114);
  for (auto& v : probs.v) v = ir.uniform();

  for (auto* p : ps) p->g.zero();
  Discriminator<double>::Cache c;
  double out = d.forward(probs, c);
  Tensor<double> din = d.backward(2.0 * (out - 1.0), c);
  auto loss = [&]() {
    Discriminator<double>::Cache cc;
    double o = d.forward(probs, cc);
    return (o - 1.0) * (o - 1.0);
  };
  Rng pick(115);
  double worst = advtest::max_tensor_grad_err(probs, din, loss, 40, pick);
  return std::max(worst, advtest::max_param_grad_err(ps, loss, 15, pick));
}

void criterion_gradients() {
  auto t0 = std::chrono::steady_clock::now();
  double worst = gradcheck_losses();
  worst = std::max(worst, gradcheck_transformer());
  worst = std::max(worst, gradcheck_cnn());
  worst = std::max(worst, gradcheck_discriminator());
  double dt = seconds_since(t0);
  report(1, "gradients", worst < 1e-4 && dt < 120.0,
         fmt("max rel err %.3g, %.1fs", worst, dt));
}

// ---------------------------------------------------------------------------
// 2. loss oracles: ln 2, the 2/3-Dice case, LSGAN zeros, to 1e-6

void criterion_loss_oracles() {
  double worst = 0;
  // CE on a uniform binary prediction: -log(1/2) = ln 2
  Tensor<double> probs({1, 1, 2});
  probs.v = {0.5, 0.5};
  std::vector<double> one(1, 1.0);
  worst = std::max(worst, std::abs(weighted_pixel_ce<double>({0}, probs, one, nullptr) -
                                   std::log(2.0)));

  // Dice 2/3 case: prediction covers 1 of 2 gt pixels in a 3-pixel image,
  // single foreground class -> dice coefficient 2*1/(1+2) = 2/3
  Tensor<double> p({1, 3, 1});
  p.v = {1.0, 0.0, 0.0};
  std::vector<int> gt = {0, 0, 1};  // class 0 on pixels 0,1 (others class 1)
  // class-0 channel of a one-channel "probs" tensor: loss for that class only
  double inter = 1.0, psum = 1.0, gsum = 2.0;
  double expected = 1.0 - (2.0 * inter + kDiceEps) / (psum + gsum + kDiceEps);
  worst = std::max(worst, std::abs(dice_loss(gt, p, static_cast<Tensor<double>*>(nullptr)) -
                                   expected));
  // the eps-exact expectation must sit within 1e-5 of the ideal 1/3
  if (std::abs(expected - (1.0 - 2.0 / 3.0)) > 1e-5) worst = 1.0;

  // LSGAN at its optima
  worst = std::max(worst, std::abs(lsgan_d_loss({1.0, 1.0}, {0.0, 0.0})));
  worst = std::max(worst, std::abs(lsgan_g_loss({1.0, 1.0, 1.0})));
  report(2, "loss-oracles", worst < 1e-6, fmt("max deviation %.3g", worst));
}

// ---------------------------------------------------------------------------
// 3. masking exactness and bit-independence of hidden pixels

void criterion_masking() {
  bool ok = true;
  std::string detail = "counts exact, hidden pixels ignored";
  for (int r10 = 0; r10 <= 10 && ok; ++r10) {
    double ratio = r10 / 10.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      PatchMask pm = sample_patch_mask(8, 8, ratio, seed);
      if (pm.masked_count() != round_half_away(ratio * 64)) {
        ok = false;
        detail = fmt("count mismatch at ratio %.1f seed %llu", ratio,
                     static_cast<unsigned long long>(seed));
        break;
      }
    }
  }
  if (ok) {
    TransformerConfig tc;
    tc.patch = 4;
    tc.dim = 16;
    tc.blocks = 2;
    tc.heads = 2;
    tc.mlp_ratio = 2;
    tc.classes = 3;
    tc.max_grid_h = 2;
    tc.max_grid_w = 2;
    Rng rng(301);
    TransformerSegmenter<double> s(tc, rng);
    nn::ParamList<double> ps;
    s.params(ps);
    Rng wr(302);
    for (auto* p : ps)
      if (p->name == "S.decoder.w")
        for (auto& v : p->w.v) v = wr.normal() * 0.05;
    PatchMask pm = PatchMask::none(2, 2);
    pm.masked[0] = pm.masked[3] = 1;
    Tensor<double> a({8, 8, 1});
    Rng ir(303);
    for (auto& v : a.v) v = ir.uniform();
    Tensor<double> b = a;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) b.at(i, j, 0) += 5.0;  // inside masked patch 0
    for (int i = 4; i < 8; ++i)
      for (int j = 4; j < 8; ++j) b.at(i, j, 0) -= 3.0;  // inside masked patch 3
    TransformerSegmenter<double>::Cache c1, c2;
    if (s.forward(a, c1, pm).logits.v != s.forward(b, c2, pm).logits.v) {
      ok = false;
      detail = "masked forward depends on hidden pixels";
    }
  }
  report(3, "masking", ok, detail);
}

// ---------------------------------------------------------------------------
// 4. metrics: exact Hausdorff vs O(n^2) brute force; Dice closed forms

double brute_hausdorff(const std::vector<std::pair<int, int>>& a,
                       const std::vector<std::pair<int, int>>& b) {
  auto directed = [](const std::vector<std::pair<int, int>>& p,
                     const std::vector<std::pair<int, int>>& q) {
    double worst = 0;
    for (auto& u : p) {
      double best = std::numeric_limits<double>::infinity();
      for (auto& v : q) {
        double dx = u.first - v.first, dy = u.second - v.second;
        best = std::min(best, std::sqrt(dx * dx + dy * dy));
      }
      worst = std::max(worst, best);
    }
    return worst;
  };
  return std::max(directed(a, b), directed(b, a));
}

void criterion_metrics() {
  bool ok = true;
  std::string detail = "100 point-set pairs exact; dice closed forms exact";
  Rng rng(401);
  for (int t = 0; t < 100 && ok; ++t) {
    auto make_set = [&](int n) {
      std::vector<std::pair<int, int>> s;
      for (int i = 0; i < n; ++i) s.emplace_back(rng.uniform_int(40), rng.uniform_int(40));
      return s;
    };
    auto a = make_set(1 + rng.uniform_int(50));
    auto b = make_set(1 + rng.uniform_int(50));
    if (hausdorff_distance(a, b) != brute_hausdorff(a, b)) {
      ok = false;
      detail = fmt("hausdorff mismatch on trial %d", t);
    }
    // the mask-based path must agree exactly as well
    std::vector<int> ma(40 * 40, 0), mb(40 * 40, 0);
    for (auto& p : a) ma[std::size_t(p.first * 40 + p.second)] = 1;
    for (auto& p : b) mb[std::size_t(p.first * 40 + p.second)] = 1;
    std::vector<std::pair<int, int>> ua, ub;  // dedup via the mask itself
    for (int i = 0; i < 40; ++i)
      for (int j = 0; j < 40; ++j) {
        if (ma[std::size_t(i * 40 + j)]) ua.emplace_back(i, j);
        if (mb[std::size_t(i * 40 + j)]) ub.emplace_back(i, j);
      }
    if (hausdorff_masks(ma, mb, 40, 40, 1) != brute_hausdorff(ua, ub)) {
      ok = false;
      detail = fmt("mask hausdorff mismatch on trial %d", t);
    }
  }
  if (ok) {
    // dice 2|P∩G|/(|P|+|G|): 2*1/(1+2) exactly
    std::vector<int> pred = {1, 0, 0}, gt = {1, 1, 0};
    if (dice_score(pred, gt, 1) != 2.0 / 3.0 || dice_score({0, 0}, {0, 0}, 1) != 1.0 ||
        dice_score({1, 0}, {0, 0}, 1) != 0.0) {
      ok = false;
      detail = "dice closed form mismatch";
    }
  }
  report(4, "metrics", ok, detail);
}

// ---------------------------------------------------------------------------
// experiment harness shared by criteria 5-7: the default dataset and full runs

struct ExperimentData {
  Dataset labeled, unlabeled, test;
};

ExperimentData default_dataset(const fs::path& work) {
  Dataset train = generate_synthetic_dataset(200, 64, 64, 4, 1);
  auto [lab, unl] = split_dataset(train, 0.05, derive_seed(1, 0x5917));
  Dataset merged;
  merged.num_classes = train.num_classes;
  merged.seed = 1;
  for (auto& s : lab.samples) merged.samples.push_back(std::move(s));
  for (auto& s : unl.samples) merged.samples.push_back(std::move(s));
  fs::create_directories(work);
  save_dataset(work.string(), merged, "train");
  Dataset test = generate_synthetic_dataset(50, 64, 64, 4, derive_seed(1, 0x7e57),
                                            kDefaultPatchPx, "t");
  save_dataset(work.string(), test, "test");

  // round-trip through disk so results match the command-line pipeline exactly
  Dataset back = load_dataset(work.string(), "train");
  ExperimentData out;
  out.labeled.num_classes = out.unlabeled.num_classes = back.num_classes;
  for (auto& s : back.samples) (s.labeled ? out.labeled : out.unlabeled).samples.push_back(s);
  out.test = load_dataset(work.string(), "test");
  return out;
}

struct AblationRow {
  const char* name;
  void (*apply)(TrainConfig&);
};

const std::vector<AblationRow> kRows = {
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

struct TrainedRun {
  ModelSet<float> ms;
  TrainConfig cfg;
  double dice = 0;
};

TrainedRun run_config(const ExperimentData& data, TrainConfig cfg) {
  TrainedRun r;
  r.cfg = cfg;
  r.ms = ModelSet<float>::create(data.labeled.num_classes, data.labeled.samples[0].height(),
                                 cfg.seed, data.labeled.samples[0].image.dim(2));
  auto res = train_run(r.ms, cfg, data.labeled, data.unlabeled, data.test);
  r.dice = res.final_metrics.mean_dice;
  return r;
}

// ---------------------------------------------------------------------------

int main_impl() {
  criterion_gradients();
  criterion_loss_oracles();
  criterion_masking();
  criterion_metrics();

  // 9 and 8 are cheap; run them before the long experiments
  {
    // 9. overfit sanity: labeled-only on one fixed batch
    TrainConfig cfg;
    cfg.iterations = 200;
    cfg.crop_size = 8;
    cfg.batch_size = 2;
    cfg.labeled_per_batch = 1;
    cfg.seg_l_c = cfg.seg_u_s = cfg.seg_u_c = false;
    cfg.mdl_l_s = cfg.mdl_l_c = cfg.mdl_u_s = cfg.mdl_u_c = false;
    cfg.adv_s = cfg.adv_c = false;
    auto ms = ModelSet<float>::create(4, 8, 9);
    BatchItem<float> item;
    {
      Rng rng(21);
      item.view.id = "overfit";
      item.view.image = TensorF({8, 8, 1});
      std::vector<int> mask(64, 0);
      for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) {
          int cls = (i < 4) ? (j < 4 ? 0 : 1) : (j < 4 ? 2 : 3);
          mask[std::size_t(i * 8 + j)] = cls;
          item.view.image.at(i, j, 0) =
              static_cast<float>(0.2 + 0.2 * cls + 0.02 * rng.normal());
        }
      item.view.mask = std::move(mask);
      item.pmask = PatchMask::none(1, 1);
    }
    std::vector<BatchItem<float>> bl = {item}, bu;
    double best = 1e9;
    int at = -1;
    for (int it = 0; it < cfg.iterations; ++it) {
      double l = train_iteration(ms, bl, bu, cfg, it).seg_l_s;
      if (l < best) {
        best = l;
        at = it;
      }
    }
    report(9, "overfit-sanity", best < 0.1, fmt("best loss %.4f at iter %d", best, at));
  }

  auto t_exp = std::chrono::steady_clock::now();
  fs::path work = fs::temp_directory_path() / "advmim_acceptance";
  fs::remove_all(work);
  ExperimentData data = default_dataset(work / "data");
  std::printf("dataset ready: %zu labeled / %zu unlabeled / %zu test (%.1fs)\n",
              data.labeled.samples.size(), data.unlabeled.samples.size(),
              data.test.samples.size(), seconds_since(t_exp));
  std::fflush(stdout);

  {
    // 8. determinism over the first 10 iterations + final metrics
    TrainConfig cfg;
    cfg.iterations = 10;
    cfg.eval_interval = 0;
    auto a = ModelSet<float>::create(4, 64, cfg.seed);
    auto b = ModelSet<float>::create(4, 64, cfg.seed);
    auto ra = train_run(a, cfg, data.labeled, data.unlabeled, data.test);
    auto rb = train_run(b, cfg, data.labeled, data.unlabeled, data.test);
    bool ok = ra.log.size() == 10 && rb.log.size() == 10;
    for (std::size_t i = 0; ok && i < 10; ++i) {
      const LossBreakdown &x = ra.log[i].bd, &y = rb.log[i].bd;
      ok = x.total == y.total && x.seg_l_s == y.seg_l_s && x.seg_u_s == y.seg_u_s &&
           x.mdl_l_s == y.mdl_l_s && x.mdl_u_s == y.mdl_u_s && x.adv_s == y.adv_s &&
           x.d_s == y.d_s && x.seg_l_c == y.seg_l_c && x.seg_u_c == y.seg_u_c &&
           x.mdl_l_c == y.mdl_l_c && x.mdl_u_c == y.mdl_u_c && x.adv_c == y.adv_c &&
           x.d_c == y.d_c;
    }
    ok = ok && ra.final_metrics.mean_dice == rb.final_metrics.mean_dice &&
         ra.final_metrics.mean_hd == rb.final_metrics.mean_hd;
    report(8, "determinism", ok,
           ok ? "identical logs and final metrics" : "runs diverged");
  }

  // 5. ablation ordering over 3 seeds
  const std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::map<std::string, std::map<std::uint64_t, double>> dice;  // row -> seed -> dice
  std::vector<TrainedRun> full_runs;  // kept for criteria 6 and 7
  auto t5 = std::chrono::steady_clock::now();
  for (const auto& row : kRows) {
    for (std::uint64_t seed : seeds) {
      TrainConfig cfg;
      cfg.seed = seed;
      row.apply(cfg);
      TrainedRun r = run_config(data, cfg);
      dice[row.name][seed] = r.dice;
      std::printf("  %s seed=%llu dice=%.4f\n", row.name,
                  static_cast<unsigned long long>(seed), r.dice);
      std::fflush(stdout);
      if (std::string(row.name) == "full_advmim") full_runs.push_back(std::move(r));
    }
  }
  double t5s = seconds_since(t5);
  {
    int good = 0;
    for (std::uint64_t s : seeds) {
      double v1 = dice["labeled_only"][s], v2 = dice["cross_teaching"][s],
             v3 = dice["masked_domain"][s], v4 = dice["adv_masked_domain"][s],
             v5 = dice["full_advmim"][s];
      if (v1 < v2 && v2 <= v3 && v3 <= v4 && v4 <= v5 && v5 - v1 >= 0.05) ++good;
    }
    report(5, "ablation-ordering", good >= 2 && t5s <= 3600.0,
           fmt("ordering+gap in %d/3 seeds, %.0fs", good, t5s));
  }

  // 6. mask-ratio trend: rho=0.9 worst of {0.5, 0.7, 0.9}; the 0.7 point is
  //    the full-config run above
  {
    int good = 0;
    for (std::size_t k = 0; k < seeds.size(); ++k) {
      std::uint64_t s = seeds[k];
      std::map<double, double> by_rho;
      by_rho[0.7] = dice["full_advmim"][s];
      for (double rho : {0.5, 0.9}) {
        TrainConfig cfg;
        cfg.seed = s;
        cfg.mask_ratio = rho;
        by_rho[rho] = run_config(data, cfg).dice;
      }
      std::printf("  rho sweep seed=%llu: 0.5=%.4f 0.7=%.4f 0.9=%.4f\n",
                  static_cast<unsigned long long>(s), by_rho[0.5], by_rho[0.7], by_rho[0.9]);
      std::fflush(stdout);
      if (by_rho[0.9] < by_rho[0.5] && by_rho[0.9] < by_rho[0.7]) ++good;
    }
    report(6, "mask-ratio-trend", good >= 2, fmt("rho=0.9 worst in %d/3 seeds", good));
  }

  // 7. bound harness: margin >= 0 on each full run; rho=0 permutation test
  {
    bool ok = true;
    std::string detail;
    for (auto& r : full_runs) {
      BoundOptions opt;
      opt.seed = r.cfg.seed;
      BoundReport rep = check_bound(r.ms, data.labeled, data.unlabeled, r.cfg, opt);
      std::printf("  bound seed=%llu eps_P=%.4f rhs=%.4f margin=%.4f\n",
                  static_cast<unsigned long long>(r.cfg.seed), rep.eps_p, rep.rhs, rep.margin);
      std::fflush(stdout);
      detail += fmt("m%llu=%.3f ", static_cast<unsigned long long>(r.cfg.seed), rep.margin);
      if (rep.margin < 0) ok = false;
    }
    // rho=0 masking is the identity, so its "masked domain" must be
    // indistinguishable from the original domain
    {
      ModelSet<float>& ms = full_runs.front().ms;
      const int patch = ms.S->cfg.patch;
      std::vector<std::vector<double>> fa, fb;
      for (const auto& s : data.unlabeled.samples) {
        int gh = s.height() / patch, gw = s.width() / patch;
        TransformerSegmenter<float>::Cache c1, c2;
        Prediction<float> orig = ms.S->forward(s.image, c1);
        PatchMask pm = sample_patch_mask(gh, gw, 0.0, derive_seed(7, s.id.size()));
        Prediction<float> masked = ms.S->forward(s.image, c2, pm);
        fa.push_back(pool_probs_feature(orig.probs));
        fb.push_back(pool_probs_feature(masked.probs));
      }
      double observed = 0;
      double p = a_distance_permutation_pvalue(fa, fb, 99, 7, &observed);
      std::printf("  rho=0 permutation: d=%.4f p=%.3f\n", observed, p);
      detail += fmt("p0=%.3f", p);
      if (p <= 0.05) ok = false;
    }
    report(7, "bound-harness", ok, detail);
  }

  std::printf("%s: %d criterion(s) failed\n", g_failures ? "FAIL" : "OK", g_failures);
  return g_failures;
}

}  // namespace

int main() {
  try {
    return main_impl();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "acceptance aborted: %s\n", e.what());
    return 99;
  }
}
