#include "advmim/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "advmim/io.hpp"

namespace advmim {

namespace {

// value noise: coarse random grid, bilinearly upsampled
void add_value_noise(TensorF& img, Rng& rng, double amp, int cells) {
  int h = img.dim(0), w = img.dim(1);
  std::vector<double> grid(static_cast<std::size_t>((cells + 1) * (cells + 1)));
  for (auto& g : grid) g = rng.uniform(-amp, amp);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      double fy = static_cast<double>(i) / h * cells;
      double fx = static_cast<double>(j) / w * cells;
      int y0 = static_cast<int>(fy), x0 = static_cast<int>(fx);
      double ty = fy - y0, tx = fx - x0;
      auto g = [&](int y, int x) { return grid[static_cast<std::size_t>(y * (cells + 1) + x)]; };
      double v = (1 - ty) * ((1 - tx) * g(y0, x0) + tx * g(y0, x0 + 1)) +
                 ty * ((1 - tx) * g(y0 + 1, x0) + tx * g(y0 + 1, x0 + 1));
      for (int c = 0; c < img.dim(2); ++c) img.at(i, j, c) += static_cast<float>(v);
    }
}

enum class Primitive { kEllipse, kRectangle, kAnnulus };

struct Shape {
  Primitive kind;
  double cy, cx;       // center
  double ry, rx;       // half extents / radii
  double angle;        // rotation
  double inner_frac;   // annulus inner radius as a fraction of outer
  double intensity;
};

bool inside(const Shape& s, double y, double x) {
  double dy = y - s.cy, dx = x - s.cx;
  double ca = std::cos(s.angle), sa = std::sin(s.angle);
  double u = ca * dx + sa * dy;
  double v = -sa * dx + ca * dy;
  switch (s.kind) {
    case Primitive::kEllipse: {
      double q = (u / s.rx) * (u / s.rx) + (v / s.ry) * (v / s.ry);
      return q <= 1.0;
    }
    case Primitive::kRectangle:
      return std::abs(u) <= s.rx && std::abs(v) <= s.ry;
    case Primitive::kAnnulus: {
      double q = (u / s.rx) * (u / s.rx) + (v / s.ry) * (v / s.ry);
      return q <= 1.0 && q >= s.inner_frac * s.inner_frac;
    }
  }
  return false;
}

ImageSample make_sample(int height, int width, int num_classes, std::uint64_t sample_seed,
                        const std::string& id) {
  Rng rng(sample_seed);
  ImageSample s;
  s.id = id;
  s.labeled = true;
  s.image = TensorF({height, width, 1});
  std::vector<int> mask(static_cast<std::size_t>(height) * width, 0);

  // Per-image foreground brightness shift. Class identity is the intensity
  // *rank* of a shape within its image; the absolute gray level of every
  // class slides with delta from image to image, so a model fit to a handful
  // of labeled images cannot rely on the raw gray value alone — covering the
  // delta range requires the unlabeled pool.
  double delta = rng.uniform(-0.18, 0.18);

  float bg = static_cast<float>(rng.uniform(0.2, 0.35));
  for (auto& v : s.image.v) v = bg;
  add_value_noise(s.image, rng, 0.07, 8);

  // one primitive per foreground class, drawn in class order (later classes
  // overwrite earlier ones where they overlap)
  double min_ext = 0.14 * std::min(height, width);
  double max_ext = 0.30 * std::min(height, width);
  for (int c = 1; c < num_classes; ++c) {
    Shape sh;
    int kind = rng.uniform_int(3);
    sh.kind = kind == 0 ? Primitive::kEllipse
                        : (kind == 1 ? Primitive::kRectangle : Primitive::kAnnulus);
    sh.cy = rng.uniform(0.22, 0.78) * height;
    sh.cx = rng.uniform(0.22, 0.78) * width;
    sh.ry = rng.uniform(min_ext, max_ext);
    sh.rx = rng.uniform(min_ext, max_ext);
    sh.angle = rng.uniform(0.0, M_PI);
    sh.inner_frac = rng.uniform(0.5, 0.65);
    // evenly spaced class bands, shifted per image and jittered per shape
    double base = num_classes > 2 ? 0.48 + 0.42 * (c - 1) / (num_classes - 2) : 0.7;
    sh.intensity = std::clamp(base + delta + rng.uniform(-0.04, 0.04), 0.05, 1.0);
    for (int i = 0; i < height; ++i)
      for (int j = 0; j < width; ++j)
        if (inside(sh, i + 0.5, j + 0.5)) {
          mask[static_cast<std::size_t>(i) * width + j] = c;
          s.image.at(i, j, 0) = static_cast<float>(sh.intensity);
        }
  }

  // Occluder artifacts: flat gray blobs overwrite the image but leave the
  // label map untouched, so the class under an occluder must be inferred
  // from the surrounding structure (amodal completion). This is the same
  // skill the masked-domain losses train, and it cannot be learned from the
  // raw gray value of a pixel.
  int n_occ = 3 + rng.uniform_int(3);
  for (int k = 0; k < n_occ; ++k) {
    Shape occ;
    occ.kind = Primitive::kEllipse;
    occ.cy = rng.uniform(0.15, 0.85) * height;
    occ.cx = rng.uniform(0.15, 0.85) * width;
    occ.ry = rng.uniform(0.10, 0.20) * std::min(height, width);
    occ.rx = rng.uniform(0.10, 0.20) * std::min(height, width);
    occ.angle = rng.uniform(0.0, M_PI);
    occ.inner_frac = 0.0;
    // gray levels span the class intensity bands, so occluded pixels cannot
    // be resolved from intensity alone — only from the surrounding shapes
    float g = static_cast<float>(rng.uniform(0.15, 0.85));
    for (int i = 0; i < height; ++i)
      for (int j = 0; j < width; ++j)
        if (inside(occ, i + 0.5, j + 0.5)) s.image.at(i, j, 0) = g;
  }

  // pixel noise over everything
  for (auto& v : s.image.v) {
    v += static_cast<float>(rng.normal() * 0.05);
    v = std::min(1.0f, std::max(0.0f, v));
  }
  s.mask = std::move(mask);
  return s;
}

bool has_all_classes(const ImageSample& s, int num_classes) {
  std::vector<char> seen(static_cast<std::size_t>(num_classes), 0);
  for (int v : *s.mask) seen[static_cast<std::size_t>(v)] = 1;
  for (int c = 1; c < num_classes; ++c)
    if (!seen[static_cast<std::size_t>(c)]) return false;
  return true;
}

}  // namespace

Dataset generate_synthetic_dataset(int n, int height, int width, int num_classes,
                                   std::uint64_t seed, int patch_px,
                                   const std::string& id_prefix) {
  if (n < 1 || num_classes < 2) throw ConfigError("need n >= 1 and at least 2 classes");
  if (height % patch_px != 0 || width % patch_px != 0)
    throw ConfigError("image dims must be divisible by the patch size");
  Dataset d;
  d.num_classes = num_classes;
  d.seed = seed;
  d.samples.reserve(static_cast<std::size_t>(n));
  char idbuf[48];
  for (int i = 0; i < n; ++i) {
    std::snprintf(idbuf, sizeof(idbuf), "%s%05d", id_prefix.c_str(), i);
    // redraw occluded-away classes so every class stays represented
    for (int attempt = 0;; ++attempt) {
      ImageSample s = make_sample(height, width, num_classes,
                                  derive_seed(seed, static_cast<std::uint64_t>(i), attempt),
                                  idbuf);
      if (attempt >= 16 || has_all_classes(s, num_classes)) {
        d.samples.push_back(std::move(s));
        break;
      }
    }
  }
  return d;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& d, double labeled_fraction,
                                          std::uint64_t seed) {
  if (labeled_fraction <= 0.0 || labeled_fraction >= 1.0)
    throw ConfigError("labeled fraction must lie in (0,1)");
  int n = static_cast<int>(d.samples.size());
  int n_labeled = std::max(1, round_half_away(labeled_fraction * n));
  Rng rng(derive_seed(seed, 0xf17e));
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::vector<char> is_labeled(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < n_labeled; ++i) is_labeled[static_cast<std::size_t>(order[std::size_t(i)])] = 1;
  Dataset labeled, unlabeled;
  labeled.num_classes = unlabeled.num_classes = d.num_classes;
  labeled.seed = unlabeled.seed = d.seed;
  for (int i = 0; i < n; ++i) {
    ImageSample s = d.samples[static_cast<std::size_t>(i)];
    if (is_labeled[static_cast<std::size_t>(i)]) {
      s.labeled = true;
      labeled.samples.push_back(std::move(s));
    } else {
      s.labeled = false;
      s.withheld_mask = std::move(s.mask);
      s.mask.reset();
      unlabeled.samples.push_back(std::move(s));
    }
  }
  return {std::move(labeled), std::move(unlabeled)};
}

namespace {

template <typename F>
ImageSample transform(const ImageSample& s, int oh, int ow, F&& src_of) {
  ImageSample out;
  out.labeled = s.labeled;
  out.id = s.id;
  int c = s.image.dim(2);
  out.image = TensorF({oh, ow, c});
  if (s.mask) out.mask = std::vector<int>(static_cast<std::size_t>(oh) * ow);
  if (s.withheld_mask) out.withheld_mask = std::vector<int>(static_cast<std::size_t>(oh) * ow);
  int w = s.width();
  for (int i = 0; i < oh; ++i)
    for (int j = 0; j < ow; ++j) {
      auto [si, sj] = src_of(i, j);
      for (int ch = 0; ch < c; ++ch) out.image.at(i, j, ch) = s.image.at(si, sj, ch);
      std::size_t dst = static_cast<std::size_t>(i) * ow + j;
      std::size_t srcp = static_cast<std::size_t>(si) * w + sj;
      if (s.mask) (*out.mask)[dst] = (*s.mask)[srcp];
      if (s.withheld_mask) (*out.withheld_mask)[dst] = (*s.withheld_mask)[srcp];
    }
  return out;
}

}  // namespace

ImageSample flip_horizontal(const ImageSample& s) {
  int h = s.height(), w = s.width();
  return transform(s, h, w, [w](int i, int j) { return std::pair(i, w - 1 - j); });
}

ImageSample flip_vertical(const ImageSample& s) {
  int h = s.height(), w = s.width();
  return transform(s, h, w, [h](int i, int j) { return std::pair(h - 1 - i, j); });
}

ImageSample rot90(const ImageSample& s) {
  int h = s.height(), w = s.width();
  // out(i,j) = in(j, w-1-i) rotates counter-clockwise; output is (w, h)
  return transform(s, w, h, [w](int i, int j) { return std::pair(j, w - 1 - i); });
}

ImageSample augment_sample(const ImageSample& s, std::uint64_t seed) {
  Rng rng(seed);
  ImageSample out = s;
  if (rng.uniform() < 0.5) out = flip_horizontal(out);
  if (rng.uniform() < 0.5) out = flip_vertical(out);
  int k = rng.uniform_int(4);
  for (int i = 0; i < k; ++i) out = rot90(out);
  return out;
}

ImageSample crop_patch(const ImageSample& s, int size, std::uint64_t seed, int align, int* off_i,
                       int* off_j) {
  int h = s.height(), w = s.width();
  if (size > h || size > w) throw ConfigError("crop size exceeds image");
  if (size % align != 0 || h % align != 0 || w % align != 0)
    throw ConfigError("crop size and image dims must be multiples of the alignment");
  Rng rng(seed);
  int oi = align * rng.uniform_int((h - size) / align + 1);
  int oj = align * rng.uniform_int((w - size) / align + 1);
  if (off_i) *off_i = oi;
  if (off_j) *off_j = oj;
  return transform(s, size, size, [oi, oj](int i, int j) { return std::pair(oi + i, oj + j); });
}

// ---------------------------------------------------------------------------

void save_dataset(const std::string& dir, const Dataset& d, const std::string& split_name) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json manifest;
  fs::path mpath = fs::path(dir) / "manifest.json";
  if (fs::exists(mpath)) {
    std::ifstream is(mpath);
    is >> manifest;
  } else {
    manifest["num_classes"] = d.num_classes;
    manifest["seed"] = d.seed;
    manifest["samples"] = nlohmann::json::array();
  }
  // ids are file names: a collision across splits would silently overwrite
  for (const auto& e : manifest["samples"])
    for (const auto& s : d.samples)
      if (e["id"] == s.id)
        throw ConfigError("duplicate sample id in dataset directory: " + s.id);
  for (const auto& s : d.samples) {
    int h = s.height(), w = s.width();
    std::vector<std::uint8_t> img(static_cast<std::size_t>(h) * w);
    for (std::size_t i = 0; i < img.size(); ++i)
      img[i] = static_cast<std::uint8_t>(std::lround(s.image.v[i] * 255.0f));
    io::write_png_gray((fs::path(dir) / (s.id + "_img.png")).string(), img, w, h);
    const std::vector<int>* mask = s.mask ? &*s.mask : (s.withheld_mask ? &*s.withheld_mask : nullptr);
    if (mask) {
      std::vector<std::uint8_t> mk(mask->size());
      for (std::size_t i = 0; i < mk.size(); ++i) mk[i] = static_cast<std::uint8_t>((*mask)[i]);
      io::write_png_gray((fs::path(dir) / (s.id + "_mask.png")).string(), mk, w, h);
    }
    manifest["samples"].push_back(
        {{"id", s.id}, {"labeled", s.labeled}, {"split", split_name}});
  }
  std::ofstream os(mpath);
  os << manifest.dump(2) << "\n";
}

Dataset load_dataset(const std::string& dir, const std::string& split_name) {
  namespace fs = std::filesystem;
  fs::path mpath = fs::path(dir) / "manifest.json";
  std::ifstream is(mpath);
  if (!is) throw IoError("missing manifest: " + mpath.string());
  nlohmann::json manifest;
  is >> manifest;
  Dataset d;
  d.num_classes = manifest["num_classes"];
  d.seed = manifest.value("seed", 0);
  for (const auto& e : manifest["samples"]) {
    if (!split_name.empty() && e["split"] != split_name) continue;
    ImageSample s;
    s.id = e["id"];
    s.labeled = e["labeled"];
    int w = 0, h = 0;
    auto img = io::read_png_gray((fs::path(dir) / (s.id + "_img.png")).string(), w, h);
    s.image = TensorF({h, w, 1});
    for (std::size_t i = 0; i < img.size(); ++i)
      s.image.v[i] = static_cast<float>(img[i]) / 255.0f;
    fs::path mp = fs::path(dir) / (s.id + "_mask.png");
    if (fs::exists(mp)) {
      int mw = 0, mh = 0;
      auto mk = io::read_png_gray(mp.string(), mw, mh);
      std::vector<int> mask(mk.begin(), mk.end());
      if (s.labeled)
        s.mask = std::move(mask);
      else
        s.withheld_mask = std::move(mask);  // not visible to the trainer
    }
    d.samples.push_back(std::move(s));
  }
  return d;
}

}  // namespace advmim
