// Training orchestration: batch assembly, cross-teaching pseudo-labels,
// original + masked-domain forwards, the combined segmenter update and the
// discriminator update, SGD with poly learning-rate decay, and evaluation.
#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "advmim/datagen.hpp"
#include "advmim/io.hpp"
#include "advmim/losses.hpp"
#include "advmim/masking.hpp"
#include "advmim/metrics.hpp"
#include "advmim/models.hpp"

namespace advmim {

struct TrainConfig {
  double mask_ratio = 0.7;
  double lambda_adv = 0.001;
  double lr_init = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  // The LSGAN discriminator (linear output, quadratic loss) diverges at the
  // segmenter's lr with momentum 0.9; its lr is scaled down by this factor.
  double disc_lr_scale = 0.02;
  int iterations = 2000;
  int batch_size = 8;
  int labeled_per_batch = 4;
  int crop_size = 64;
  std::uint64_t seed = 1;
  int eval_interval = 200;
  bool lr_poly = true;  // poly decay power 0.9; false = constant lr
  // ablation flags, per network
  bool seg_l_s = true, seg_l_c = true;
  bool seg_u_s = true, seg_u_c = true;
  bool mdl_l_s = true, mdl_l_c = true;
  bool mdl_u_s = true, mdl_u_c = true;
  bool adv_s = true, adv_c = true;

  void validate() const {
    if (lr_init <= 0 || momentum < 0 || weight_decay < 0 || batch_size <= 0 || iterations < 0 ||
        disc_lr_scale <= 0)
      throw ConfigError("rates and sizes must be positive");
    if (labeled_per_batch != batch_size / 2)
      throw ConfigError("labeled_per_batch must equal batch_size/2");
    if (mask_ratio < 0 || mask_ratio > 1) throw ConfigError("mask_ratio must lie in [0,1]");
  }

  double lr_at(int iter) const {
    if (!lr_poly || iterations == 0) return lr_init;
    return lr_init * std::pow(1.0 - static_cast<double>(iter) / iterations, 0.9);
  }

  std::map<std::string, std::string> to_kv() const;
  static TrainConfig from_kv(const std::map<std::string, std::string>& kv);
  std::string to_text() const;
};

template <typename T>
struct PseudoLabel {
  std::vector<int> labels;
  std::vector<T> certainty;
  char teacher = '?';  // 'S' or 'C'
};

// per-pixel argmax + max probability, lowest-index tie-break
template <typename T>
PseudoLabel<T> make_pseudo_label(const Prediction<T>& teacher_pred, char teacher) {
  int h = teacher_pred.probs.dim(0), w = teacher_pred.probs.dim(1), m = teacher_pred.probs.dim(2);
  PseudoLabel<T> pl;
  pl.teacher = teacher;
  std::size_t npix = static_cast<std::size_t>(h) * w;
  pl.labels.resize(npix);
  pl.certainty.resize(npix);
  for (std::size_t i = 0; i < npix; ++i) {
    const T* p = teacher_pred.probs.data() + i * m;
    int best = 0;
    for (int c = 1; c < m; ++c)
      if (p[c] > p[best]) best = c;
    pl.labels[i] = best;
    pl.certainty[i] = p[best];
  }
  return pl;
}

// ---------------------------------------------------------------------------

template <typename T>
struct ModelSet {
  std::unique_ptr<TransformerSegmenter<T>> S;
  std::unique_ptr<CnnSegmenter<T>> C;
  std::unique_ptr<Discriminator<T>> Ds, Dc;
  nn::ParamList<T> seg_params;   // S + C
  nn::ParamList<T> disc_params;  // Ds + Dc
  nn::ParamList<T> all_params;

  static ModelSet create(int num_classes, int image_px, std::uint64_t seed, int in_ch = 1) {
    ModelSet ms;
    Rng rng(derive_seed(seed, 0x1217));
    TransformerConfig tc;
    tc.in_ch = in_ch;
    tc.classes = num_classes;
    tc.max_grid_h = image_px / tc.patch;
    tc.max_grid_w = image_px / tc.patch;
    ms.S = std::make_unique<TransformerSegmenter<T>>(tc, rng);
    CnnConfig cc;
    cc.in_ch = in_ch;
    cc.classes = num_classes;
    ms.C = std::make_unique<CnnSegmenter<T>>(cc, rng);
    DiscriminatorConfig dc;
    dc.in_ch = num_classes;
    ms.Ds = std::make_unique<Discriminator<T>>("Ds", dc, rng);
    ms.Dc = std::make_unique<Discriminator<T>>("Dc", dc, rng);
    ms.S->params(ms.seg_params);
    ms.C->params(ms.seg_params);
    ms.Ds->params(ms.disc_params);
    ms.Dc->params(ms.disc_params);
    ms.all_params = ms.seg_params;
    ms.all_params.insert(ms.all_params.end(), ms.disc_params.begin(), ms.disc_params.end());
    return ms;
  }
};

template <typename T>
void zero_grads(const nn::ParamList<T>& params) {
  for (auto* p : params) p->g.zero();
}

// SGD with momentum; weight decay folded into the gradient for decaying params
template <typename T>
void sgd_step(const nn::ParamList<T>& params, double lr, double momentum, double weight_decay) {
  for (auto* p : params) {
    for (std::size_t i = 0; i < p->w.v.size(); ++i) {
      T g = p->g.v[i];
      if (p->decay) g += static_cast<T>(weight_decay) * p->w.v[i];
      p->m.v[i] = static_cast<T>(momentum) * p->m.v[i] + g;
      p->w.v[i] -= static_cast<T>(lr) * p->m.v[i];
    }
  }
}

// ---------------------------------------------------------------------------
// one training iteration

template <typename T>
struct BatchItem {
  ImageSample view;  // augmented + cropped
  int patch_row0 = 0, patch_col0 = 0;
  PatchMask pmask;
};

template <typename T>
std::pair<std::vector<BatchItem<T>>, std::vector<BatchItem<T>>> assemble_batch(
    const Dataset& labeled, const Dataset& unlabeled, const TrainConfig& cfg, int iter,
    int patch_px) {
  Rng rng(derive_seed(cfg.seed, 0xba7c, static_cast<std::uint64_t>(iter)));
  auto pick = [&](const Dataset& d, int count) {
    std::vector<BatchItem<T>> out;
    int n = static_cast<int>(d.samples.size());
    if (n == 0) return out;
    std::vector<int> idx;
    if (count <= n) {
      idx = rng.choose(n, count);
    } else {
      idx.resize(static_cast<std::size_t>(count));
      for (auto& v : idx) v = rng.uniform_int(n);
    }
    for (int k = 0; k < count; ++k) {
      const ImageSample& s = d.samples[static_cast<std::size_t>(idx[std::size_t(k)])];
      std::uint64_t s_seed = derive_seed_str(cfg.seed, s.id, static_cast<std::uint64_t>(iter));
      BatchItem<T> item;
      ImageSample aug = augment_sample(s, derive_seed(s_seed, 1));
      int oi = 0, oj = 0;
      item.view = crop_patch(aug, std::min(cfg.crop_size, aug.height()), derive_seed(s_seed, 2),
                             patch_px, &oi, &oj);
      item.patch_row0 = oi / patch_px;
      item.patch_col0 = oj / patch_px;
      int gh = item.view.height() / patch_px, gw = item.view.width() / patch_px;
      item.pmask = sample_patch_mask(gh, gw, cfg.mask_ratio, derive_seed(s_seed, 3));
      out.push_back(std::move(item));
    }
    return out;
  };
  return {pick(labeled, cfg.labeled_per_batch),
          pick(unlabeled, cfg.batch_size - cfg.labeled_per_batch)};
}

// Runs one segmenter update followed by one discriminator update. Throws
// NumericError with a diagnostic dump if any loss goes non-finite.
template <typename T>
LossBreakdown train_iteration(ModelSet<T>& ms, const std::vector<BatchItem<T>>& labeled,
                              const std::vector<BatchItem<T>>& unlabeled,
                              const TrainConfig& cfg, int iter) {
  using TS = TransformerSegmenter<T>;
  using CS = CnnSegmenter<T>;
  using DS = Discriminator<T>;
  const int patch_px = ms.S->cfg.patch;
  LossBreakdown bd;

  std::size_t nl = labeled.size(), nu = unlabeled.size();
  double inv_nl = nl ? 1.0 / static_cast<double>(nl) : 0.0;
  double inv_nu = nu ? 1.0 / static_cast<double>(nu) : 0.0;

  // which forwards are needed
  bool need_s_orig_l = cfg.seg_l_s || cfg.adv_s;
  bool need_c_orig_l = cfg.seg_l_c || cfg.adv_c;
  bool need_s_orig_u = cfg.seg_u_s || cfg.seg_u_c || cfg.mdl_u_c;  // S also teaches C
  bool need_c_orig_u = cfg.seg_u_c || cfg.seg_u_s || cfg.mdl_u_s;  // C also teaches S
  bool need_s_mask_l = cfg.mdl_l_s;
  bool need_c_mask_l = cfg.mdl_l_c;
  bool need_s_mask_u = cfg.mdl_u_s || cfg.adv_s;
  bool need_c_mask_u = cfg.mdl_u_c || cfg.adv_c;

  struct SFwd {
    typename TS::Cache cache;
    Prediction<T> pred;
    bool used = false;
  };
  struct CFwd {
    typename CS::Cache cache;
    Prediction<T> pred;
    std::optional<PatchMask> fill_mask;  // set when input was mask-filled
    bool used = false;
  };
  std::vector<SFwd> s_ol(nl), s_ou(nu), s_ml(nl), s_mu(nu);
  std::vector<CFwd> c_ol(nl), c_ou(nu), c_ml(nl), c_mu(nu);

  auto s_forward = [&](SFwd& f, const BatchItem<T>& it, bool masked) {
    f.pred = ms.S->forward(it.view.image.template cast<T>(), f.cache,
                           masked ? std::optional<PatchMask>(it.pmask) : std::nullopt,
                           it.patch_row0, it.patch_col0);
    f.used = true;
  };
  auto c_forward = [&](CFwd& f, const BatchItem<T>& it, bool masked) {
    Tensor<T> img = it.view.image.template cast<T>();
    if (masked) {
      img = mask_image_fill(img, it.pmask, ms.C->mask_fill()->w, patch_px);
      f.fill_mask = it.pmask;
    }
    f.pred = ms.C->forward(img, f.cache);
    f.used = true;
  };

  for (std::size_t i = 0; i < nl; ++i) {
    if (need_s_orig_l) s_forward(s_ol[i], labeled[i], false);
    if (need_c_orig_l) c_forward(c_ol[i], labeled[i], false);
    if (need_s_mask_l) s_forward(s_ml[i], labeled[i], true);
    if (need_c_mask_l) c_forward(c_ml[i], labeled[i], true);
  }
  for (std::size_t i = 0; i < nu; ++i) {
    if (need_s_orig_u) s_forward(s_ou[i], unlabeled[i], false);
    if (need_c_orig_u) c_forward(c_ou[i], unlabeled[i], false);
    if (need_s_mask_u) s_forward(s_mu[i], unlabeled[i], true);
    if (need_c_mask_u) c_forward(c_mu[i], unlabeled[i], true);
  }

  // cross-teaching pseudo-labels from the peer's original-domain forwards,
  // gradient-detached by construction (plain value copies)
  std::vector<PseudoLabel<T>> from_c(nu), from_s(nu);
  for (std::size_t i = 0; i < nu; ++i) {
    if (need_c_orig_u) from_c[i] = make_pseudo_label(c_ou[i].pred, 'C');
    if (need_s_orig_u) from_s[i] = make_pseudo_label(s_ou[i].pred, 'S');
  }

  // ---- segmenter phase ----
  zero_grads(ms.all_params);

  struct PendingGrad {
    Tensor<T> d_probs;
    bool any = false;
  };
  auto ensure = [&](PendingGrad& pg, const Prediction<T>& pred) {
    if (!pg.any) {
      pg.d_probs = Tensor<T>(pred.probs.shape);
      pg.any = true;
    }
  };
  // accumulates scale * loss into both the gradient buffer and the breakdown
  auto add_term = [&](PendingGrad& pg, const Prediction<T>& pred, double scale, double& slot,
                      auto&& loss_fn) {
    ensure(pg, pred);
    Tensor<T> tmp(pred.probs.shape);
    double l = loss_fn(&tmp);
    slot += l * scale;
    for (std::size_t j = 0; j < tmp.v.size(); ++j)
      pg.d_probs.v[j] += tmp.v[j] * static_cast<T>(scale);
  };

  std::vector<PendingGrad> g_s_ol(nl), g_s_ou(nu), g_s_ml(nl), g_s_mu(nu);
  std::vector<PendingGrad> g_c_ol(nl), g_c_ou(nu), g_c_ml(nl), g_c_mu(nu);

  for (std::size_t i = 0; i < nl; ++i) {
    const std::vector<int>& y = *labeled[i].view.mask;
    if (cfg.seg_l_s)
      add_term(g_s_ol[i], s_ol[i].pred, inv_nl, bd.seg_l_s,
               [&](Tensor<T>* d) { return supervised_seg_loss(y, s_ol[i].pred, d); });
    if (cfg.seg_l_c)
      add_term(g_c_ol[i], c_ol[i].pred, inv_nl, bd.seg_l_c,
               [&](Tensor<T>* d) { return supervised_seg_loss(y, c_ol[i].pred, d); });
    if (cfg.mdl_l_s)
      add_term(g_s_ml[i], s_ml[i].pred, inv_nl, bd.mdl_l_s,
               [&](Tensor<T>* d) { return supervised_seg_loss(y, s_ml[i].pred, d); });
    if (cfg.mdl_l_c)
      add_term(g_c_ml[i], c_ml[i].pred, inv_nl, bd.mdl_l_c,
               [&](Tensor<T>* d) { return supervised_seg_loss(y, c_ml[i].pred, d); });
  }
  for (std::size_t i = 0; i < nu; ++i) {
    if (cfg.seg_u_s)
      add_term(g_s_ou[i], s_ou[i].pred, inv_nu, bd.seg_u_s, [&](Tensor<T>* d) {
        return pseudo_seg_loss(from_c[i].labels, from_c[i].certainty, s_ou[i].pred, d);
      });
    if (cfg.seg_u_c)
      add_term(g_c_ou[i], c_ou[i].pred, inv_nu, bd.seg_u_c, [&](Tensor<T>* d) {
        return pseudo_seg_loss(from_s[i].labels, from_s[i].certainty, c_ou[i].pred, d);
      });
    if (cfg.mdl_u_s)
      add_term(g_s_mu[i], s_mu[i].pred, inv_nu, bd.mdl_u_s, [&](Tensor<T>* d) {
        return pseudo_seg_loss(from_c[i].labels, from_c[i].certainty, s_mu[i].pred, d);
      });
    if (cfg.mdl_u_c)
      add_term(g_c_mu[i], c_mu[i].pred, inv_nu, bd.mdl_u_c, [&](Tensor<T>* d) {
        return pseudo_seg_loss(from_s[i].labels, from_s[i].certainty, c_mu[i].pred, d);
      });
  }

  // adversarial term (Eq. 6): gradients flow through the discriminator into
  // the segmenter probabilities; discriminator grads collected here are junk
  // and get zeroed before the discriminator phase.
  std::vector<typename DS::Cache> ds_fake(nu), dc_fake(nu), ds_real(nl), dc_real(nl);
  std::vector<double> ds_fake_val(nu), dc_fake_val(nu), ds_real_val(nl), dc_real_val(nl);
  for (std::size_t i = 0; i < nu; ++i) {
    if (cfg.adv_s) {
      double d = static_cast<double>(ms.Ds->forward(s_mu[i].pred.probs, ds_fake[i]));
      ds_fake_val[i] = d;
      bd.adv_s += (d - 1.0) * (d - 1.0) * inv_nu;
      ensure(g_s_mu[i], s_mu[i].pred);
      Tensor<T> din = ms.Ds->backward(
          static_cast<T>(2.0 * (d - 1.0) * cfg.lambda_adv * inv_nu), ds_fake[i]);
      for (std::size_t j = 0; j < din.v.size(); ++j) g_s_mu[i].d_probs.v[j] += din.v[j];
    }
    if (cfg.adv_c) {
      double d = static_cast<double>(ms.Dc->forward(c_mu[i].pred.probs, dc_fake[i]));
      dc_fake_val[i] = d;
      bd.adv_c += (d - 1.0) * (d - 1.0) * inv_nu;
      ensure(g_c_mu[i], c_mu[i].pred);
      Tensor<T> din = ms.Dc->backward(
          static_cast<T>(2.0 * (d - 1.0) * cfg.lambda_adv * inv_nu), dc_fake[i]);
      for (std::size_t j = 0; j < din.v.size(); ++j) g_c_mu[i].d_probs.v[j] += din.v[j];
    }
  }
  // real-side discriminator forwards (cached for the discriminator phase)
  for (std::size_t i = 0; i < nl; ++i) {
    if (cfg.adv_s) ds_real_val[i] = static_cast<double>(ms.Ds->forward(s_ol[i].pred.probs, ds_real[i]));
    if (cfg.adv_c) dc_real_val[i] = static_cast<double>(ms.Dc->forward(c_ol[i].pred.probs, dc_real[i]));
  }

  auto backprop_s = [&](PendingGrad& pg, SFwd& f) {
    if (!pg.any) return;
    Tensor<T> dl = probs_grad_to_logits(f.pred, pg.d_probs);
    ms.S->backward(dl, f.cache);
  };
  auto backprop_c = [&](PendingGrad& pg, CFwd& f) {
    if (!pg.any) return;
    Tensor<T> dl = probs_grad_to_logits(f.pred, pg.d_probs);
    ms.C->backward(dl, f.cache);
    if (f.fill_mask && f.fill_mask->any()) {
      Tensor<T> dimg = ms.C->input_grad_hwc();
      mask_image_fill_backward(dimg, *f.fill_mask, patch_px, ms.C->mask_fill()->g);
    }
  };

  for (std::size_t i = 0; i < nl; ++i) {
    backprop_s(g_s_ol[i], s_ol[i]);
    backprop_s(g_s_ml[i], s_ml[i]);
    backprop_c(g_c_ol[i], c_ol[i]);
    backprop_c(g_c_ml[i], c_ml[i]);
  }
  for (std::size_t i = 0; i < nu; ++i) {
    backprop_s(g_s_ou[i], s_ou[i]);
    backprop_s(g_s_mu[i], s_mu[i]);
    backprop_c(g_c_ou[i], c_ou[i]);
    backprop_c(g_c_mu[i], c_mu[i]);
  }

  bd.d_s = cfg.adv_s ? lsgan_d_loss(ds_real_val, ds_fake_val) : 0.0;
  bd.d_c = cfg.adv_c ? lsgan_d_loss(dc_real_val, dc_fake_val) : 0.0;
  auto [seg_total, disc_total] = combine_objective(bd, cfg.lambda_adv);
  bd.total = seg_total;

  if (!bd.finite()) throw NumericError("non-finite loss at iteration " + std::to_string(iter));

  double lr = cfg.lr_at(iter);
  sgd_step(ms.seg_params, lr, cfg.momentum, cfg.weight_decay);

  // ---- discriminator phase (detached segmenter outputs, pre-update) ----
  zero_grads(ms.all_params);
  if (cfg.adv_s) {
    for (std::size_t i = 0; i < nl; ++i)
      ms.Ds->backward(static_cast<T>(2.0 * (ds_real_val[i] - 1.0) * inv_nl), ds_real[i]);
    for (std::size_t i = 0; i < nu; ++i)
      ms.Ds->backward(static_cast<T>(2.0 * ds_fake_val[i] * inv_nu), ds_fake[i]);
  }
  if (cfg.adv_c) {
    for (std::size_t i = 0; i < nl; ++i)
      ms.Dc->backward(static_cast<T>(2.0 * (dc_real_val[i] - 1.0) * inv_nl), dc_real[i]);
    for (std::size_t i = 0; i < nu; ++i)
      ms.Dc->backward(static_cast<T>(2.0 * dc_fake_val[i] * inv_nu), dc_fake[i]);
  }
  sgd_step(ms.disc_params, lr * cfg.disc_lr_scale, cfg.momentum, cfg.weight_decay);
  (void)disc_total;
  return bd;
}

// ---------------------------------------------------------------------------

// Sliding-window probability map: the transformer is applied at its training
// window size (patch-aligned positions, half-window stride) and overlapping
// probabilities are averaged. window <= 0 or >= the image runs one forward.
template <typename T>
Tensor<T> predict_probs_windowed(TransformerSegmenter<T>& S, const Tensor<T>& img, int window) {
  int h = img.dim(0), w = img.dim(1);
  if (window <= 0 || (window >= h && window >= w)) {
    typename TransformerSegmenter<T>::Cache cache;
    return S.forward(img, cache).probs;
  }
  const int patch = S.cfg.patch;
  if (window % patch != 0) throw ConfigError("window must be a multiple of the patch size");
  int stride = std::max(patch, window / 2 / patch * patch);
  Tensor<T> acc({h, w, S.cfg.classes});
  Tensor<T> hits({h, w, 1});
  auto offsets = [&](int extent) {
    std::vector<int> off;
    for (int o = 0;; o += stride) {
      if (o + window >= extent) {
        off.push_back(extent - window);
        break;
      }
      off.push_back(o);
    }
    return off;
  };
  Tensor<T> crop({window, window, img.dim(2)});
  for (int oi : offsets(h))
    for (int oj : offsets(w)) {
      for (int i = 0; i < window; ++i)
        for (int j = 0; j < window; ++j)
          for (int c = 0; c < img.dim(2); ++c) crop.at(i, j, c) = img.at(oi + i, oj + j, c);
      typename TransformerSegmenter<T>::Cache cache;
      Prediction<T> p = S.forward(crop, cache, std::nullopt, oi / patch, oj / patch);
      for (int i = 0; i < window; ++i)
        for (int j = 0; j < window; ++j) {
          for (int c = 0; c < S.cfg.classes; ++c)
            acc.at(oi + i, oj + j, c) += p.probs.at(i, j, c);
          hits.at(oi + i, oj + j, 0) += T(1);
        }
    }
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      for (int c = 0; c < S.cfg.classes; ++c) acc.at(i, j, c) /= hits.at(i, j, 0);
  return acc;
}

template <typename T>
MetricsReport evaluate_model(ModelSet<T>& ms, const Dataset& test, double hd_percentile = 100.0,
                             int window = 0) {
  if (test.samples.empty()) throw ConfigError("empty evaluation dataset");
  std::vector<std::vector<int>> preds, gts;
  int h = 0, w = 0;
  for (const auto& s : test.samples) {
    if (!s.mask) throw ConfigError("evaluation sample lacks ground truth");
    Prediction<T> p;
    p.probs = predict_probs_windowed(*ms.S, s.image.template cast<T>(), window);
    PseudoLabel<T> hard = make_pseudo_label(p, 'S');
    preds.push_back(std::move(hard.labels));
    gts.push_back(*s.mask);
    h = s.height();
    w = s.width();
  }
  return metrics_report(preds, gts, h, w, test.num_classes, hd_percentile);
}

struct TrainLogRow {
  int iter = 0;
  LossBreakdown bd;
};

struct EvalSnapshot {
  int iter = 0;
  double mean_dice = 0;
  double mean_hd = 0;
};

template <typename T>
struct TrainResult {
  std::vector<TrainLogRow> log;
  std::vector<EvalSnapshot> snapshots;
  MetricsReport final_metrics;
};

template <typename T>
TrainResult<T> train_run(ModelSet<T>& ms, const TrainConfig& cfg, const Dataset& labeled,
                         const Dataset& unlabeled, const Dataset& test,
                         const std::string& out_dir = "") {
  cfg.validate();
  if (labeled.samples.empty()) throw ConfigError("no labeled samples");
  TrainResult<T> res;
  const int patch_px = ms.S->cfg.patch;
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    auto [bl, bu] = assemble_batch<T>(labeled, unlabeled, cfg, iter, patch_px);
    LossBreakdown bd = train_iteration(ms, bl, bu, cfg, iter);
    res.log.push_back({iter, bd});
    if (cfg.eval_interval > 0 && (iter + 1) % cfg.eval_interval == 0 && !test.samples.empty()) {
      MetricsReport r = evaluate_model(ms, test, 100.0, cfg.crop_size);
      res.snapshots.push_back({iter + 1, r.mean_dice, r.mean_hd});
    }
  }
  if (!test.samples.empty()) {
    res.final_metrics = evaluate_model(ms, test, 100.0, cfg.crop_size);
    // Report the plateau average rather than a single evaluation point: the
    // final metric is the mean of the last three periodic snapshots (the
    // closing eval is always one of them), which damps eval-point jitter.
    if (!res.snapshots.empty() && res.snapshots.back().iter == cfg.iterations) {
      double d = 0, h = 0;
      int k = 0;
      for (std::size_t i = res.snapshots.size(); i-- > 0 && k < 3; ++k) {
        d += res.snapshots[i].mean_dice;
        h += res.snapshots[i].mean_hd;
      }
      res.final_metrics.mean_dice = d / k;
      res.final_metrics.mean_hd = h / k;
    }
  }

  if (!out_dir.empty()) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    io::CsvTable log;
    log.header = {"iter",    "seg_l_S", "seg_u_S", "mdl_l_S", "mdl_u_S", "adv_S", "d_S",
                  "seg_l_C", "seg_u_C", "mdl_l_C", "mdl_u_C", "adv_C",   "d_C",   "total"};
    auto num = [](double v) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.9g", v);
      return std::string(buf);
    };
    for (const auto& row : res.log)
      log.rows.push_back({std::to_string(row.iter), num(row.bd.seg_l_s), num(row.bd.seg_u_s),
                          num(row.bd.mdl_l_s), num(row.bd.mdl_u_s), num(row.bd.adv_s),
                          num(row.bd.d_s), num(row.bd.seg_l_c), num(row.bd.seg_u_c),
                          num(row.bd.mdl_l_c), num(row.bd.mdl_u_c), num(row.bd.adv_c),
                          num(row.bd.d_c), num(row.bd.total)});
    io::write_csv((fs::path(out_dir) / "log.csv").string(), log);

    io::Checkpoint ck;
    ck.config_text = cfg.to_text();
    io::params_to_checkpoint(ms.all_params, ck);
    io::save_checkpoint((fs::path(out_dir) / "checkpoint.bin").string(), ck);

    io::CsvTable met;
    met.header = {"iter", "mean_dice", "mean_hd"};
    for (const auto& s : res.snapshots)
      met.rows.push_back({std::to_string(s.iter), num(s.mean_dice), num(s.mean_hd)});
    if (!test.samples.empty())
      met.rows.push_back({"final", num(res.final_metrics.mean_dice),
                          num(res.final_metrics.mean_hd)});
    io::write_csv((fs::path(out_dir) / "metrics.csv").string(), met);
  }
  return res;
}

}  // namespace advmim
