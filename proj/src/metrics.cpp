#include "advmim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace advmim {

double dice_score(const std::vector<int>& pred_mask, const std::vector<int>& gt_mask,
                  int class_id) {
  std::size_t inter = 0, np = 0, ng = 0;
  for (std::size_t i = 0; i < pred_mask.size(); ++i) {
    bool p = pred_mask[i] == class_id;
    bool g = gt_mask[i] == class_id;
    inter += (p && g) ? 1 : 0;
    np += p ? 1 : 0;
    ng += g ? 1 : 0;
  }
  if (np == 0 && ng == 0) return 1.0;
  if (np == 0 || ng == 0) return 0.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(np + ng);
}

double hausdorff_distance(const std::vector<std::pair<int, int>>& pred_set,
                          const std::vector<std::pair<int, int>>& gt_set) {
  if (pred_set.empty() && gt_set.empty()) return 0.0;
  if (pred_set.empty() || gt_set.empty())
    return std::numeric_limits<double>::infinity();
  auto directed = [](const std::vector<std::pair<int, int>>& a,
                     const std::vector<std::pair<int, int>>& b) {
    double worst = 0.0;
    for (const auto& p : a) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : b) {
        double dy = p.first - q.first, dx = p.second - q.second;
        best = std::min(best, dy * dy + dx * dx);
      }
      worst = std::max(worst, best);
    }
    return worst;
  };
  return std::sqrt(std::max(directed(pred_set, gt_set), directed(gt_set, pred_set)));
}

namespace {

// Felzenszwalb-Huttenlocher 1-d squared distance transform
void edt_1d(const std::vector<double>& f, std::vector<double>& d, int n,
            std::vector<int>& v, std::vector<double>& z) {
  int k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  for (int q = 1; q < n; ++q) {
    double s;
    while (true) {
      int p = v[static_cast<std::size_t>(k)];
      s = ((f[std::size_t(q)] + q * q) - (f[std::size_t(p)] + p * p)) / (2.0 * q - 2.0 * p);
      if (s > z[static_cast<std::size_t>(k)]) break;
      --k;
    }
    ++k;
    v[static_cast<std::size_t>(k)] = q;
    z[static_cast<std::size_t>(k)] = s;
    z[static_cast<std::size_t>(k) + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[static_cast<std::size_t>(k) + 1] < q) ++k;
    int p = v[static_cast<std::size_t>(k)];
    d[static_cast<std::size_t>(q)] = (q - p) * (q - p) + f[static_cast<std::size_t>(p)];
  }
}

}  // namespace

std::vector<double> squared_edt(const std::vector<std::uint8_t>& feature, int h, int w) {
  constexpr double kInf = 1e18;
  std::vector<double> d(static_cast<std::size_t>(h) * w);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = feature[i] ? 0.0 : kInf;
  int n = std::max(h, w);
  std::vector<double> f(static_cast<std::size_t>(n)), out(static_cast<std::size_t>(n));
  std::vector<int> v(static_cast<std::size_t>(n));
  std::vector<double> z(static_cast<std::size_t>(n) + 1);
  // columns then rows
  for (int j = 0; j < w; ++j) {
    for (int i = 0; i < h; ++i) f[static_cast<std::size_t>(i)] = d[static_cast<std::size_t>(i) * w + j];
    edt_1d(f, out, h, v, z);
    for (int i = 0; i < h; ++i) d[static_cast<std::size_t>(i) * w + j] = out[static_cast<std::size_t>(i)];
  }
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) f[static_cast<std::size_t>(j)] = d[static_cast<std::size_t>(i) * w + j];
    edt_1d(f, out, w, v, z);
    for (int j = 0; j < w; ++j) d[static_cast<std::size_t>(i) * w + j] = out[static_cast<std::size_t>(j)];
  }
  return d;
}

double hausdorff_masks(const std::vector<int>& pred_mask, const std::vector<int>& gt_mask,
                       int h, int w, int class_id, double percentile, bool* used_sentinel) {
  if (used_sentinel) *used_sentinel = false;
  std::vector<std::uint8_t> p(static_cast<std::size_t>(h) * w), g(p.size());
  std::size_t np = 0, ng = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = pred_mask[i] == class_id ? 1 : 0;
    g[i] = gt_mask[i] == class_id ? 1 : 0;
    np += p[i];
    ng += g[i];
  }
  if (np == 0 && ng == 0) return 0.0;
  if (np == 0 || ng == 0) {
    if (used_sentinel) *used_sentinel = true;
    return std::sqrt(static_cast<double>(h - 1) * (h - 1) + static_cast<double>(w - 1) * (w - 1));
  }
  auto directed = [&](const std::vector<std::uint8_t>& from, const std::vector<std::uint8_t>& to,
                      std::size_t nfrom) {
    std::vector<double> dt = squared_edt(to, h, w);
    std::vector<double> dists;
    dists.reserve(nfrom);
    for (std::size_t i = 0; i < from.size(); ++i)
      if (from[i]) dists.push_back(dt[i]);
    std::sort(dists.begin(), dists.end());
    std::size_t idx = static_cast<std::size_t>(
        std::ceil(percentile / 100.0 * static_cast<double>(dists.size())));
    idx = std::min(std::max<std::size_t>(idx, 1), dists.size());
    return dists[idx - 1];
  };
  return std::sqrt(std::max(directed(p, g, np), directed(g, p, ng)));
}

MetricsReport metrics_report(const std::vector<std::vector<int>>& predictions,
                             const std::vector<std::vector<int>>& ground_truths, int h, int w,
                             int num_classes, double hd_percentile) {
  if (predictions.size() != ground_truths.size())
    throw ConfigError("prediction / ground-truth count mismatch");
  if (predictions.empty()) throw ConfigError("empty evaluation set");
  MetricsReport r;
  r.n_samples = static_cast<int>(predictions.size());
  for (int c = 1; c < num_classes; ++c) {
    double dsum = 0, hsum = 0;
    int flags = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
      dsum += dice_score(predictions[i], ground_truths[i], c);
      bool sentinel = false;
      hsum += hausdorff_masks(predictions[i], ground_truths[i], h, w, c, hd_percentile,
                              &sentinel);
      flags += sentinel ? 1 : 0;
    }
    r.per_class_dice.push_back(dsum / r.n_samples);
    r.per_class_hd.push_back(hsum / r.n_samples);
    r.sentinel_flags.push_back(flags);
  }
  for (double v : r.per_class_dice) r.mean_dice += v;
  for (double v : r.per_class_hd) r.mean_hd += v;
  r.mean_dice /= static_cast<double>(r.per_class_dice.size());
  r.mean_hd /= static_cast<double>(r.per_class_hd.size());
  return r;
}

}  // namespace advmim
