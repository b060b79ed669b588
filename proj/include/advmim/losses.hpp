// Segmentation and adversarial losses: certainty-weighted cross-entropy, soft
// Dice, the least-squares GAN pair, and the overall objective combination.
// Every loss can also emit dL/dprobs; chain through softmax_rows_backward to
// reach logits.
#pragma once

#include <vector>

#include "advmim/models.hpp"
#include "advmim/nn.hpp"
#include "advmim/tensor.hpp"

namespace advmim {

constexpr double kProbClamp = 1e-12;
constexpr double kDiceEps = 1e-5;

// Per-iteration loss record, one set of components per segmenter.
struct LossBreakdown {
  double seg_l_s = 0, seg_u_s = 0, mdl_l_s = 0, mdl_u_s = 0, adv_s = 0, d_s = 0;
  double seg_l_c = 0, seg_u_c = 0, mdl_l_c = 0, mdl_u_c = 0, adv_c = 0, d_c = 0;
  double total = 0;

  bool finite() const {
    for (double v : {seg_l_s, seg_u_s, mdl_l_s, mdl_u_s, adv_s, d_s, seg_l_c, seg_u_c, mdl_l_c,
                     mdl_u_c, adv_c, d_c, total})
      if (!std::isfinite(v)) return false;
    return true;
  }
};

// mean over pixels of weight * (-log probs[target]); probs clamped at 1e-12.
// If d_probs is non-null, accumulates the gradient into it.
template <typename T>
double weighted_pixel_ce(const std::vector<int>& target, const Tensor<T>& probs,
                         const std::vector<T>& weight, Tensor<T>* d_probs = nullptr) {
  int h = probs.dim(0), w = probs.dim(1), m = probs.dim(2);
  std::size_t npix = static_cast<std::size_t>(h) * w;
  double acc = 0;
  for (std::size_t i = 0; i < npix; ++i) {
    int t = target[i];
    if (t < 0 || t >= m) throw ShapeError("target class out of range");
    double p = static_cast<double>(probs.v[i * m + static_cast<std::size_t>(t)]);
    double pc = std::max(p, kProbClamp);
    acc += static_cast<double>(weight[i]) * -std::log(pc);
    if (d_probs && p > kProbClamp)
      d_probs->v[i * m + static_cast<std::size_t>(t)] +=
          static_cast<T>(-static_cast<double>(weight[i]) / (pc * static_cast<double>(npix)));
  }
  return acc / static_cast<double>(npix);
}

// mean over all M classes of 1 - (2*sum(p*g)+eps)/(sum(p)+sum(g)+eps)
template <typename T>
double dice_loss(const std::vector<int>& target, const Tensor<T>& probs,
                 Tensor<T>* d_probs = nullptr) {
  int h = probs.dim(0), w = probs.dim(1), m = probs.dim(2);
  std::size_t npix = static_cast<std::size_t>(h) * w;
  double loss = 0;
  for (int c = 0; c < m; ++c) {
    double inter = 0, psum = 0, gsum = 0;
    for (std::size_t i = 0; i < npix; ++i) {
      double p = static_cast<double>(probs.v[i * m + static_cast<std::size_t>(c)]);
      double g = target[i] == c ? 1.0 : 0.0;
      inter += p * g;
      psum += p;
      gsum += g;
    }
    double num = 2.0 * inter + kDiceEps;
    double den = psum + gsum + kDiceEps;
    loss += 1.0 - num / den;
    if (d_probs) {
      for (std::size_t i = 0; i < npix; ++i) {
        double g = target[i] == c ? 1.0 : 0.0;
        // d/dp of -(2*inter+eps)/den, with den also depending on p
        double grad = -(2.0 * g * den - num) / (den * den) / static_cast<double>(m);
        d_probs->v[i * m + static_cast<std::size_t>(c)] += static_cast<T>(grad);
      }
    }
  }
  return loss / static_cast<double>(m);
}

// Eq. 1 (and Eq. 3 with masked inputs): unit-weight CE + Dice.
template <typename T>
double supervised_seg_loss(const std::vector<int>& target, const Prediction<T>& pred,
                           Tensor<T>* d_probs = nullptr) {
  std::size_t npix = static_cast<std::size_t>(pred.probs.dim(0)) * pred.probs.dim(1);
  std::vector<T> ones(npix, T(1));
  return weighted_pixel_ce(target, pred.probs, ones, d_probs) +
         dice_loss(target, pred.probs, d_probs);
}

// Eq. 2 (and Eq. 4): certainty-weighted CE + unweighted Dice. The weight map
// multiplies only the cross-entropy term.
template <typename T>
double pseudo_seg_loss(const std::vector<int>& pseudo, const std::vector<T>& certainty,
                       const Prediction<T>& pred, Tensor<T>* d_probs = nullptr) {
  return weighted_pixel_ce(pseudo, pred.probs, certainty, d_probs) +
         dice_loss(pseudo, pred.probs, d_probs);
}

// Eq. 5: discriminator target is 1 on original labeled predictions, 0 on
// masked unlabeled predictions.
inline double lsgan_d_loss(const std::vector<double>& d_on_labeled,
                           const std::vector<double>& d_on_masked_unlabeled) {
  double a = 0, b = 0;
  for (double d : d_on_labeled) a += (d - 1.0) * (d - 1.0);
  for (double d : d_on_masked_unlabeled) b += d * d;
  if (!d_on_labeled.empty()) a /= static_cast<double>(d_on_labeled.size());
  if (!d_on_masked_unlabeled.empty()) b /= static_cast<double>(d_on_masked_unlabeled.size());
  return a + b;
}

// Eq. 6: generator wants masked unlabeled predictions scored as 1.
inline double lsgan_g_loss(const std::vector<double>& d_on_masked_unlabeled) {
  if (d_on_masked_unlabeled.empty()) return 0.0;
  double a = 0;
  for (double d : d_on_masked_unlabeled) a += (d - 1.0) * (d - 1.0);
  return a / static_cast<double>(d_on_masked_unlabeled.size());
}

// Eq. 7: segmenter objective sums both networks' terms; discriminators are
// optimized separately on their own loss.
inline std::pair<double, double> combine_objective(const LossBreakdown& b, double lambda_adv) {
  double seg = b.seg_l_s + b.seg_u_s + b.mdl_l_s + b.mdl_u_s + lambda_adv * b.adv_s +
               b.seg_l_c + b.seg_u_c + b.mdl_l_c + b.mdl_u_c + lambda_adv * b.adv_c;
  double disc = b.d_s + b.d_c;
  return {seg, disc};
}

// dL/dlogits for a loss expressed via dL/dprobs
template <typename T>
Tensor<T> probs_grad_to_logits(const Prediction<T>& pred, const Tensor<T>& d_probs) {
  int h = pred.probs.dim(0), w = pred.probs.dim(1), m = pred.probs.dim(2);
  Tensor<T> pf = pred.probs;
  pf.shape = {h * w, m};
  Tensor<T> df = d_probs;
  df.shape = {h * w, m};
  Tensor<T> dl = nn::softmax_rows_backward(pf, df);
  dl.shape = {h, w, m};
  return dl;
}

}  // namespace advmim
