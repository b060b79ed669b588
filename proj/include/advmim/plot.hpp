// Minimal raster output: class color maps, mask/image rendering, and simple
// PNG line plots for the sweep tables.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "advmim/datagen.hpp"

namespace advmim {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb& o) const { return r == o.r && g == o.g && b == o.b; }
};

constexpr int kMaxRenderClasses = 16;

// distinct color per class id; inverse returns -1 for unknown colors
Rgb class_color(int class_id);
int class_from_color(const Rgb& c);

void render_mask_png(const std::string& path, const std::vector<int>& labels, int h, int w);
void render_gray_png(const std::string& path, const TensorF& image_hwc);

struct PlotSeries {
  std::string name;
  std::vector<double> x, y;
  Rgb color;
};

// line plot with axes, tick labels, and a legend strip
void line_plot_png(const std::string& path, const std::vector<PlotSeries>& series,
                   const std::string& x_label, const std::string& y_label, int width = 640,
                   int height = 480);

// Writes <id>_input.png and <id>_gt.png per sample plus <id>_<variant>_pred.png
// per (sample, variant checkpoint). Returns the number of files written.
int render_qualitative(const std::map<std::string, std::string>& variant_checkpoints,
                       const Dataset& samples, const std::string& out_dir);

}  // namespace advmim
