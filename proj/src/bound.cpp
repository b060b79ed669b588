#include "advmim/bound.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "advmim/losses.hpp"
#include "advmim/masking.hpp"

namespace advmim {

double estimate_pseudo_noise_ratio(const std::vector<std::vector<int>>& pseudo_labels,
                                   const std::vector<std::vector<int>>& true_labels) {
  if (pseudo_labels.size() != true_labels.size() || pseudo_labels.empty())
    throw ConfigError("pseudo/true label lists must be non-empty and equal-sized");
  double acc = 0;
  for (std::size_t i = 0; i < pseudo_labels.size(); ++i) {
    const auto& p = pseudo_labels[i];
    const auto& t = true_labels[i];
    if (p.size() != t.size() || p.empty()) throw ConfigError("label size mismatch");
    std::size_t bad = 0;
    for (std::size_t j = 0; j < p.size(); ++j) bad += (p[j] != t[j]);
    acc += static_cast<double>(bad) / static_cast<double>(p.size());
  }
  return acc / static_cast<double>(pseudo_labels.size());
}

namespace {

// balanced heldout error of a two-layer logistic domain classifier
double domain_classifier_error(const std::vector<std::vector<double>>& domain_a,
                               const std::vector<std::vector<double>>& domain_b,
                               std::uint64_t seed) {
  const int na = static_cast<int>(domain_a.size()), nb = static_cast<int>(domain_b.size());
  if (na < 20 || nb < 20) throw ConfigError("A-distance needs >= 20 samples per domain");
  const int dim = static_cast<int>(domain_a[0].size());
  for (const auto& f : domain_a)
    if (static_cast<int>(f.size()) != dim) throw ShapeError("feature dim mismatch");
  for (const auto& f : domain_b)
    if (static_cast<int>(f.size()) != dim) throw ShapeError("feature dim mismatch");

  Rng rng(derive_seed(seed, 0xad15));
  std::vector<int> ia(na), ib(nb);
  for (int i = 0; i < na; ++i) ia[static_cast<std::size_t>(i)] = i;
  for (int i = 0; i < nb; ++i) ib[static_cast<std::size_t>(i)] = i;
  rng.shuffle(ia);
  rng.shuffle(ib);
  const int ta = na / 2, tb = nb / 2;  // first half trains, rest is heldout

  const int ntr = ta + tb;
  Eigen::MatrixXd x(ntr, dim);
  Eigen::VectorXd y(ntr);
  int r = 0;
  for (int i = 0; i < ta; ++i, ++r) {
    const auto& f = domain_a[static_cast<std::size_t>(ia[static_cast<std::size_t>(i)])];
    for (int j = 0; j < dim; ++j) x(r, j) = f[static_cast<std::size_t>(j)];
    y(r) = 0.0;
  }
  for (int i = 0; i < tb; ++i, ++r) {
    const auto& f = domain_b[static_cast<std::size_t>(ib[static_cast<std::size_t>(i)])];
    for (int j = 0; j < dim; ++j) x(r, j) = f[static_cast<std::size_t>(j)];
    y(r) = 1.0;
  }

  // standardize with training statistics
  Eigen::RowVectorXd mu = x.colwise().mean();
  Eigen::RowVectorXd sd =
      ((x.rowwise() - mu).array().square().colwise().mean() + 1e-8).sqrt();
  x = (x.rowwise() - mu).array().rowwise() / sd.array();

  const int hidden = 32;
  Eigen::MatrixXd w1(dim, hidden);
  Eigen::RowVectorXd b1 = Eigen::RowVectorXd::Zero(hidden);
  Eigen::VectorXd w2(hidden);
  double b2 = 0;
  const double w1_scale = 1.0 / std::sqrt(static_cast<double>(dim));
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < hidden; ++j) w1(i, j) = rng.normal() * w1_scale;
  for (int j = 0; j < hidden; ++j) w2(j) = rng.normal() / std::sqrt(double(hidden));

  Eigen::MatrixXd m_w1 = Eigen::MatrixXd::Zero(dim, hidden);
  Eigen::RowVectorXd m_b1 = Eigen::RowVectorXd::Zero(hidden);
  Eigen::VectorXd m_w2 = Eigen::VectorXd::Zero(hidden);
  double m_b2 = 0;

  const double lr = 0.1, momentum = 0.9;
  const int steps = 300;
  for (int s = 0; s < steps; ++s) {
    Eigen::MatrixXd h = ((x * w1).rowwise() + b1).cwiseMax(0.0);
    Eigen::VectorXd z = (h * w2).array() + b2;
    Eigen::VectorXd p = 1.0 / (1.0 + (-z.array()).exp());
    Eigen::VectorXd dz = (p - y) / static_cast<double>(ntr);
    Eigen::VectorXd g_w2 = h.transpose() * dz;
    double g_b2 = dz.sum();
    Eigen::MatrixXd dh =
        (dz * w2.transpose()).array() * (h.array() > 0.0).cast<double>();
    Eigen::MatrixXd g_w1 = x.transpose() * dh;
    Eigen::RowVectorXd g_b1 = dh.colwise().sum();
    m_w1 = momentum * m_w1 + g_w1;
    m_b1 = momentum * m_b1 + g_b1;
    m_w2 = momentum * m_w2 + g_w2;
    m_b2 = momentum * m_b2 + g_b2;
    w1 -= lr * m_w1;
    b1 -= lr * m_b1;
    w2 -= lr * m_w2;
    b2 -= lr * m_b2;
  }

  auto heldout_error = [&](const std::vector<std::vector<double>>& dom,
                           const std::vector<int>& order, int start, double label) {
    int n = static_cast<int>(order.size()) - start;
    int bad = 0;
    for (int i = start; i < static_cast<int>(order.size()); ++i) {
      const auto& f = dom[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
      Eigen::RowVectorXd v(dim);
      for (int j = 0; j < dim; ++j) v(j) = f[static_cast<std::size_t>(j)];
      v = (v - mu).array() / sd.array();
      Eigen::RowVectorXd h = (v * w1 + b1).cwiseMax(0.0);
      double z = h * w2 + b2;
      double pred = z > 0.0 ? 1.0 : 0.0;
      bad += (pred != label);
    }
    return static_cast<double>(bad) / std::max(1, n);
  };
  double err_a = heldout_error(domain_a, ia, ta, 0.0);
  double err_b = heldout_error(domain_b, ib, tb, 1.0);
  return 0.5 * (err_a + err_b);
}

}  // namespace

double estimate_a_distance(const std::vector<std::vector<double>>& domain_a,
                           const std::vector<std::vector<double>>& domain_b, std::uint64_t seed,
                           double* heldout_err) {
  double err = domain_classifier_error(domain_a, domain_b, seed);
  if (heldout_err) *heldout_err = err;
  return std::clamp(2.0 * (1.0 - 2.0 * err), 0.0, 2.0);
}

double a_distance_permutation_pvalue(const std::vector<std::vector<double>>& domain_a,
                                     const std::vector<std::vector<double>>& domain_b,
                                     int n_permutations, std::uint64_t seed, double* observed) {
  if (n_permutations <= 0) throw ConfigError("need at least one permutation");
  double d_obs = estimate_a_distance(domain_a, domain_b, seed);
  if (observed) *observed = d_obs;

  std::vector<std::vector<double>> pool = domain_a;
  pool.insert(pool.end(), domain_b.begin(), domain_b.end());
  const int na = static_cast<int>(domain_a.size());
  const int n = static_cast<int>(pool.size());
  int at_least = 0;
  for (int k = 0; k < n_permutations; ++k) {
    Rng rng(derive_seed(seed, 0x9e37, static_cast<std::uint64_t>(k)));
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    rng.shuffle(idx);
    std::vector<std::vector<double>> a, b;
    a.reserve(static_cast<std::size_t>(na));
    for (int i = 0; i < n; ++i) {
      const auto& f = pool[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
      (i < na ? a : b).push_back(f);
    }
    double d = estimate_a_distance(a, b, derive_seed(seed, 0x51ab, static_cast<std::uint64_t>(k)));
    if (d >= d_obs) ++at_least;
  }
  return (1.0 + at_least) / (1.0 + n_permutations);
}

std::vector<double> pool_probs_feature(const TensorF& probs, int pooled) {
  const int h = probs.dim(0), w = probs.dim(1), m = probs.dim(2);
  const int gh = std::min(pooled, h), gw = std::min(pooled, w);
  std::vector<double> feat(static_cast<std::size_t>(gh) * gw * m, 0.0);
  std::vector<int> counts(static_cast<std::size_t>(gh) * gw, 0);
  for (int i = 0; i < h; ++i) {
    int ci = i * gh / h;
    for (int j = 0; j < w; ++j) {
      int cj = j * gw / w;
      std::size_t cell = static_cast<std::size_t>(ci) * gw + cj;
      ++counts[cell];
      for (int c = 0; c < m; ++c)
        feat[cell * static_cast<std::size_t>(m) + c] += probs.at(i, j, c);
    }
  }
  for (std::size_t cell = 0; cell < counts.size(); ++cell)
    for (int c = 0; c < m; ++c)
      feat[cell * static_cast<std::size_t>(m) + c] /= std::max(1, counts[cell]);
  return feat;
}

namespace {

double pixel_error(const std::vector<int>& a, const std::vector<int>& b) {
  std::size_t bad = 0;
  for (std::size_t i = 0; i < a.size(); ++i) bad += (a[i] != b[i]);
  return static_cast<double>(bad) / static_cast<double>(a.size());
}

// joint best-hypothesis error: fit a fresh small segmenter on the union of the
// true-labeled original and masked domains, return eps_P(h) + eps_Q(h)
double estimate_lambda(const Dataset& labeled, const TrainConfig& cfg, int patch_px,
                       const BoundOptions& opt) {
  CnnConfig cc;
  cc.base = 8;
  cc.in_ch = labeled.samples[0].image.dim(2);
  cc.classes = labeled.num_classes;
  Rng init_rng(derive_seed(opt.seed, 0x1a3b));
  CnnSegmenter<float> net(cc, init_rng);
  nn::ParamList<float> params;
  net.params(params);

  struct Item {
    TensorF image;
    const std::vector<int>* y;
    bool masked;
  };
  std::vector<Item> pool;
  for (std::size_t i = 0; i < labeled.samples.size(); ++i) {
    const ImageSample& s = labeled.samples[i];
    if (!s.mask) throw ConfigError("lambda estimate needs labeled samples");
    pool.push_back({s.image, &*s.mask, false});
    PatchMask pm = sample_patch_mask(s.height() / patch_px, s.width() / patch_px,
                                     cfg.mask_ratio, derive_seed(opt.seed, 0x7e11, i));
    // fill masked patches with the network's fill value so the masked-domain
    // inputs match what the main trainer sees
    TensorF masked = mask_image_fill(s.image, pm, net.mask_fill()->w, patch_px);
    pool.push_back({std::move(masked), &*s.mask, true});
  }

  for (int iter = 0; iter < opt.lambda_iterations; ++iter) {
    Rng rng(derive_seed(opt.seed, 0x4a2d, static_cast<std::uint64_t>(iter)));
    zero_grads(params);
    double inv = 1.0 / opt.lambda_batch;
    for (int k = 0; k < opt.lambda_batch; ++k) {
      const Item& it = pool[static_cast<std::size_t>(rng.uniform_int(int(pool.size())))];
      typename CnnSegmenter<float>::Cache cache;
      Prediction<float> pred = net.forward(it.image, cache);
      Tensor<float> d_probs(pred.probs.shape);
      supervised_seg_loss(*it.y, pred, &d_probs);
      for (auto& v : d_probs.v) v *= static_cast<float>(inv);
      Tensor<float> dl = probs_grad_to_logits(pred, d_probs);
      net.backward(dl, cache);
    }
    sgd_step(params, opt.lambda_lr, 0.9, 1e-4);
  }

  double err_p = 0, err_q = 0;
  int np = 0, nq = 0;
  for (const Item& it : pool) {
    typename CnnSegmenter<float>::Cache cache;
    Prediction<float> pred = net.forward(it.image, cache);
    PseudoLabel<float> hard = make_pseudo_label(pred, 'C');
    double e = pixel_error(hard.labels, *it.y);
    if (it.masked) {
      err_q += e;
      ++nq;
    } else {
      err_p += e;
      ++np;
    }
  }
  return err_p / std::max(1, np) + err_q / std::max(1, nq);
}

}  // namespace

BoundReport check_bound(ModelSet<float>& ms, const Dataset& labeled, const Dataset& unlabeled,
                        const TrainConfig& cfg, const BoundOptions& opt) {
  if (labeled.samples.empty() || unlabeled.samples.empty())
    throw ConfigError("bound check needs both labeled and unlabeled samples");
  const int patch_px = ms.S->cfg.patch;
  BoundReport rep;

  std::vector<std::vector<int>> s_orig, s_masked, pseudo, truth;
  std::vector<std::vector<double>> feat_orig, feat_masked;
  for (std::size_t i = 0; i < unlabeled.samples.size(); ++i) {
    const ImageSample& s = unlabeled.samples[i];
    const std::vector<int>* gt = s.withheld_mask ? &*s.withheld_mask : (s.mask ? &*s.mask : nullptr);
    if (!gt) throw ConfigError("bound check needs ground truth for unlabeled samples");

    typename TransformerSegmenter<float>::Cache c1, c2;
    Prediction<float> p_orig = ms.S->forward(s.image, c1);
    PatchMask pm = sample_patch_mask(s.height() / patch_px, s.width() / patch_px, cfg.mask_ratio,
                                     derive_seed(opt.seed, 0xb0cd, i));
    Prediction<float> p_masked = ms.S->forward(s.image, c2, pm);

    typename CnnSegmenter<float>::Cache c3;
    Prediction<float> p_teacher = ms.C->forward(s.image, c3);

    s_orig.push_back(make_pseudo_label(p_orig, 'S').labels);
    s_masked.push_back(make_pseudo_label(p_masked, 'S').labels);
    pseudo.push_back(make_pseudo_label(p_teacher, 'C').labels);
    truth.push_back(*gt);
    feat_orig.push_back(pool_probs_feature(p_orig.probs));
    feat_masked.push_back(pool_probs_feature(p_masked.probs));
  }

  rep.eps_p = estimate_pseudo_noise_ratio(s_orig, truth);
  rep.eps_pp = estimate_pseudo_noise_ratio(s_orig, pseudo);
  rep.eps_qp = estimate_pseudo_noise_ratio(s_masked, pseudo);
  rep.gamma = estimate_pseudo_noise_ratio(pseudo, truth);
  rep.d_proxy = estimate_a_distance(feat_orig, feat_masked, derive_seed(opt.seed, 0xd157));
  rep.lambda_hat = estimate_lambda(labeled, cfg, patch_px, opt);
  rep.finalize();
  return rep;
}

}  // namespace advmim
