// Seeded synthetic multi-class segmentation data: textured backgrounds with
// one randomized geometric primitive per foreground class, labeled/unlabeled
// splits, flip/rot augmentation and seeded cropping.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "advmim/tensor.hpp"

namespace advmim {

struct ImageSample {
  TensorF image;                          // (H, W, C), values in [0,1]
  std::optional<std::vector<int>> mask;   // (H*W) class ids, present iff usable for training
  bool labeled = true;
  std::string id;
  // Ground truth withheld from the trainer after an unlabeled split; only the
  // bound harness reads this.
  std::optional<std::vector<int>> withheld_mask;

  int height() const { return image.dim(0); }
  int width() const { return image.dim(1); }
};

struct Dataset {
  std::vector<ImageSample> samples;
  int num_classes = 0;
  std::uint64_t seed = 0;
};

constexpr int kDefaultPatchPx = 8;

// id_prefix keeps sample ids from different splits distinct when they are
// saved into one dataset directory
Dataset generate_synthetic_dataset(int n, int height, int width, int num_classes,
                                   std::uint64_t seed, int patch_px = kDefaultPatchPx,
                                   const std::string& id_prefix = "s");

// labeled count = max(1, round(fraction * n)); unlabeled samples keep their
// ground truth only in withheld_mask.
std::pair<Dataset, Dataset> split_dataset(const Dataset& d, double labeled_fraction,
                                          std::uint64_t seed);

// deterministic elementary transforms, applied jointly to image and masks
ImageSample flip_horizontal(const ImageSample& s);
ImageSample flip_vertical(const ImageSample& s);
ImageSample rot90(const ImageSample& s);  // counter-clockwise

// random flip + rotation by a multiple of 90 degrees
ImageSample augment_sample(const ImageSample& s, std::uint64_t seed);

// seeded square crop; offsets are multiples of `align` so patch-grid positions
// stay aligned with the full image. Reports the chosen offset when requested.
ImageSample crop_patch(const ImageSample& s, int size, std::uint64_t seed, int align = 1,
                       int* off_i = nullptr, int* off_j = nullptr);

// on-disk dataset directory: <id>_img.png / <id>_mask.png plus manifest.json
void save_dataset(const std::string& dir, const Dataset& d,
                  const std::string& split_name = "train");
Dataset load_dataset(const std::string& dir, const std::string& split_name = "");

}  // namespace advmim
