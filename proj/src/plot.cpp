#include "advmim/plot.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "advmim/io.hpp"
#include "advmim/training.hpp"

namespace advmim {

namespace {

constexpr std::array<Rgb, kMaxRenderClasses> kPalette = {{
    {0, 0, 0},       {230, 25, 75},   {60, 180, 75},   {255, 225, 25},
    {0, 130, 200},   {245, 130, 48},  {145, 30, 180},  {70, 240, 240},
    {240, 50, 230},  {210, 245, 60},  {250, 190, 190}, {0, 128, 128},
    {170, 110, 40},  {128, 0, 0},     {170, 255, 195}, {128, 128, 0},
}};

}  // namespace

Rgb class_color(int class_id) {
  if (class_id < 0 || class_id >= kMaxRenderClasses)
    throw ConfigError("class id out of palette range");
  return kPalette[static_cast<std::size_t>(class_id)];
}

int class_from_color(const Rgb& c) {
  for (int i = 0; i < kMaxRenderClasses; ++i)
    if (kPalette[static_cast<std::size_t>(i)] == c) return i;
  return -1;
}

void render_mask_png(const std::string& path, const std::vector<int>& labels, int h, int w) {
  if (static_cast<std::size_t>(h) * w != labels.size()) throw ShapeError("label size mismatch");
  std::vector<std::uint8_t> px(labels.size() * 3);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    Rgb c = class_color(labels[i]);
    px[i * 3] = c.r;
    px[i * 3 + 1] = c.g;
    px[i * 3 + 2] = c.b;
  }
  io::write_png_rgb(path, px, w, h);
}

void render_gray_png(const std::string& path, const TensorF& image_hwc) {
  int h = image_hwc.dim(0), w = image_hwc.dim(1), ch = image_hwc.dim(2);
  std::vector<std::uint8_t> px(static_cast<std::size_t>(h) * w);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      double v = 0;
      for (int c = 0; c < ch; ++c) v += image_hwc.at(i, j, c);
      v /= ch;
      px[static_cast<std::size_t>(i) * w + j] =
          static_cast<std::uint8_t>(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
    }
  io::write_png_gray(path, px, w, h);
}

// ---------------------------------------------------------------------------
// tiny raster canvas with a 5x7 uppercase font

namespace {

struct Canvas {
  int w, h;
  std::vector<std::uint8_t> px;  // rgb
  Canvas(int w_, int h_) : w(w_), h(h_), px(static_cast<std::size_t>(w_) * h_ * 3, 255) {}
  void set(int x, int y, Rgb c) {
    if (x < 0 || y < 0 || x >= w || y >= h) return;
    std::size_t i = (static_cast<std::size_t>(y) * w + x) * 3;
    px[i] = c.r;
    px[i + 1] = c.g;
    px[i + 2] = c.b;
  }
  void line(int x0, int y0, int x1, int y1, Rgb c) {
    int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1, err = dx + dy;
    for (;;) {
      set(x0, y0, c);
      if (x0 == x1 && y0 == y1) break;
      int e2 = 2 * err;
      if (e2 >= dy) { err += dy; x0 += sx; }
      if (e2 <= dx) { err += dx; y0 += sy; }
    }
  }
  void rect(int x0, int y0, int x1, int y1, Rgb c) {
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) set(x, y, c);
  }
};

// glyph rows, top to bottom, '1' bits left-aligned in 5 columns
const char* glyph(char ch) {
  switch (std::toupper(static_cast<unsigned char>(ch))) {
    case '0': return "01110100011001110101110011000101110";
    case '1': return "00100011000010000100001000010001110";
    case '2': return "01110100010000100110010001000011111";
    case '3': return "11111000100010000010000011000101110";
    case '4': return "00010001100101010010111110001000010";
    case '5': return "11111100001111000001000011000101110";
    case '6': return "00110010001000011110100011000101110";
    case '7': return "11111000010001000100010001000010000";
    case '8': return "01110100010001101110100011000101110";
    case '9': return "01110100011000101111000010001001100";
    case '.': return "00000000000000000000000000110001100";
    case '-': return "00000000000000011111000000000000000";
    case '+': return "00000001000010011111001000010000000";
    case '_': return "00000000000000000000000000000011111";
    case '=': return "00000000001111100000111110000000000";
    case 'A': return "01110100011000111111100011000110001";
    case 'B': return "11110100011000111110100011000111110";
    case 'C': return "01110100011000010000100001000101110";
    case 'D': return "11100100101000110001100011001011100";
    case 'E': return "11111100001000011110100001000011111";
    case 'F': return "11111100001000011110100001000010000";
    case 'G': return "01110100011000010111100011000101111";
    case 'H': return "10001100011000111111100011000110001";
    case 'I': return "01110001000010000100001000010001110";
    case 'J': return "00111000100001000010000101001001100";
    case 'K': return "10001100101010011000101001001010001";
    case 'L': return "10000100001000010000100001000011111";
    case 'M': return "10001110111010110101100011000110001";
    case 'N': return "10001110011010110011100011000110001";
    case 'O': return "01110100011000110001100011000101110";
    case 'P': return "11110100011000111110100001000010000";
    case 'Q': return "01110100011000110001101011001001101";
    case 'R': return "11110100011000111110101001001010001";
    case 'S': return "01111100001000001110000010000111110";
    case 'T': return "11111001000010000100001000010000100";
    case 'U': return "10001100011000110001100011000101110";
    case 'V': return "10001100011000110001100010101000100";
    case 'W': return "10001100011000110101101011101110001";
    case 'X': return "10001100010101000100010101000110001";
    case 'Y': return "10001100010101000100001000010000100";
    case 'Z': return "11111000010001000100010001000011111";
    default: return nullptr;  // rendered as blank
  }
}

void draw_text(Canvas& cv, int x, int y, const std::string& text, Rgb c) {
  for (char ch : text) {
    const char* g = glyph(ch);
    if (g)
      for (int r = 0; r < 7; ++r)
        for (int col = 0; col < 5; ++col)
          if (g[r * 5 + col] == '1') cv.set(x + col, y + r, c);
    x += 6;
  }
}

std::string fmt_tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return std::string(buf);
}

}  // namespace

void line_plot_png(const std::string& path, const std::vector<PlotSeries>& series,
                   const std::string& x_label, const std::string& y_label, int width,
                   int height) {
  if (series.empty()) throw ConfigError("line plot needs at least one series");
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size() || s.x.empty()) throw ShapeError("series x/y size mismatch");
    for (double v : s.x) { xmin = std::min(xmin, v); xmax = std::max(xmax, v); }
    for (double v : s.y) { ymin = std::min(ymin, v); ymax = std::max(ymax, v); }
  }
  if (xmax <= xmin) { xmax = xmin + 1; }
  double pad = (ymax - ymin) * 0.08;
  if (pad <= 0) pad = std::max(1e-6, std::abs(ymax) * 0.1 + 0.1);
  ymin -= pad;
  ymax += pad;

  Canvas cv(width, height);
  const int ml = 64, mr = 16, mt = 28, mb = 44;
  const int x0 = ml, x1 = width - mr, y0 = height - mb, y1 = mt;
  Rgb black{0, 0, 0}, gray{200, 200, 200};
  auto px = [&](double x) {
    return x0 + static_cast<int>((x - xmin) / (xmax - xmin) * (x1 - x0) + 0.5);
  };
  auto py = [&](double y) {
    return y0 - static_cast<int>((y - ymin) / (ymax - ymin) * (y0 - y1) + 0.5);
  };

  const int nticks = 5;
  for (int t = 0; t <= nticks; ++t) {
    double fy = ymin + (ymax - ymin) * t / nticks;
    int yy = py(fy);
    cv.line(x0, yy, x1, yy, gray);
    draw_text(cv, 4, yy - 3, fmt_tick(fy), black);
    double fx = xmin + (xmax - xmin) * t / nticks;
    int xx = px(fx);
    cv.line(xx, y0, xx, y0 + 4, black);
    draw_text(cv, xx - 10, y0 + 8, fmt_tick(fx), black);
  }
  cv.line(x0, y0, x1, y0, black);
  cv.line(x0, y0, x0, y1, black);
  draw_text(cv, (x0 + x1) / 2 - 3 * static_cast<int>(x_label.size()), height - 12, x_label,
            black);
  draw_text(cv, 4, 8, y_label, black);

  int lx = x0 + 8;
  for (const auto& s : series) {
    for (std::size_t i = 1; i < s.x.size(); ++i)
      cv.line(px(s.x[i - 1]), py(s.y[i - 1]), px(s.x[i]), py(s.y[i]), s.color);
    for (std::size_t i = 0; i < s.x.size(); ++i)
      cv.rect(px(s.x[i]) - 1, py(s.y[i]) - 1, px(s.x[i]) + 1, py(s.y[i]) + 1, s.color);
    cv.rect(lx, y1 - 14, lx + 8, y1 - 6, s.color);
    draw_text(cv, lx + 12, y1 - 14, s.name, black);
    lx += 24 + 6 * static_cast<int>(s.name.size());
  }
  io::write_png_rgb(path, cv.px, width, height);
}

// ---------------------------------------------------------------------------

int render_qualitative(const std::map<std::string, std::string>& variant_checkpoints,
                       const Dataset& samples, const std::string& out_dir) {
  namespace fs = std::filesystem;
  if (samples.samples.empty()) throw ConfigError("no samples to render");
  fs::create_directories(out_dir);
  int files = 0;
  for (const auto& s : samples.samples) {
    render_gray_png((fs::path(out_dir) / (s.id + "_input.png")).string(), s.image);
    ++files;
    const std::vector<int>* gt =
        s.mask ? &*s.mask : (s.withheld_mask ? &*s.withheld_mask : nullptr);
    if (!gt) throw ConfigError("render sample lacks ground truth: " + s.id);
    render_mask_png((fs::path(out_dir) / (s.id + "_gt.png")).string(), *gt, s.height(),
                    s.width());
    ++files;
  }
  for (const auto& [variant, ck_path] : variant_checkpoints) {
    io::Checkpoint ck = io::load_checkpoint(ck_path);
    const ImageSample& first = samples.samples[0];
    auto ms = ModelSet<float>::create(samples.num_classes, first.height(), 0,
                                      first.image.dim(2));
    io::checkpoint_to_params(ck, ms.all_params);
    TrainConfig ck_cfg = TrainConfig::from_kv(io::parse_kv_text(ck.config_text));
    for (const auto& s : samples.samples) {
      Prediction<float> p;
      p.probs = predict_probs_windowed(*ms.S, s.image, ck_cfg.crop_size);
      PseudoLabel<float> hard = make_pseudo_label(p, 'S');
      render_mask_png((fs::path(out_dir) / (s.id + "_" + variant + "_pred.png")).string(),
                      hard.labels, s.height(), s.width());
      ++files;
    }
  }
  return files;
}

}  // namespace advmim
