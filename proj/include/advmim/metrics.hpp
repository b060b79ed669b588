// Evaluation metrics: per-class Dice coefficient and exact symmetric Hausdorff
// distance (Euclidean, pixels). Mask-based Hausdorff runs through an exact
// distance transform; the point-set overload is the direct definition.
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "advmim/tensor.hpp"

namespace advmim {

struct MetricsReport {
  std::vector<double> per_class_dice;  // foreground classes 1..M-1
  std::vector<double> per_class_hd;
  double mean_dice = 0;
  double mean_hd = 0;
  int n_samples = 0;
  // classes where the empty-set sentinel (image diagonal) was used
  std::vector<int> sentinel_flags;
};

// 2|P∩G| / (|P|+|G|); 1 if both empty, 0 if exactly one empty
double dice_score(const std::vector<int>& pred_mask, const std::vector<int>& gt_mask,
                  int class_id);

// exact symmetric Hausdorff over explicit coordinate sets
double hausdorff_distance(const std::vector<std::pair<int, int>>& pred_set,
                          const std::vector<std::pair<int, int>>& gt_set);

// mask-based variant; sentinel (image diagonal) when exactly one set is empty.
// percentile = 100 gives the exact Hausdorff distance; 95 gives HD95.
double hausdorff_masks(const std::vector<int>& pred_mask, const std::vector<int>& gt_mask,
                       int h, int w, int class_id, double percentile = 100.0,
                       bool* used_sentinel = nullptr);

// exact squared Euclidean distance transform; input: 1 where feature pixels
// are, output: squared distance to the nearest feature pixel
std::vector<double> squared_edt(const std::vector<std::uint8_t>& feature, int h, int w);

// foreground classes only; per class averaged over samples, then over classes
MetricsReport metrics_report(const std::vector<std::vector<int>>& predictions,
                             const std::vector<std::vector<int>>& ground_truths, int h, int w,
                             int num_classes, double hd_percentile = 100.0);

}  // namespace advmim
