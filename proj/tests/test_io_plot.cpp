#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "advmim/io.hpp"
#include "advmim/plot.hpp"
#include "advmim/training.hpp"

using namespace advmim;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("advmim_test_" + std::to_string(::getpid()) + "_" +
                                        std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("kv config files round-trip with comments") {
  TempDir td;
  std::ofstream os(td.file("cfg.txt"));
  os << "# comment line\n"
     << "mask_ratio = 0.5\n"
     << "\n"
     << "iterations = 42\n";
  os.close();
  auto kv = io::read_kv_file(td.file("cfg.txt"));
  CHECK(kv.at("mask_ratio") == "0.5");
  CHECK(kv.at("iterations") == "42");
  io::write_kv_file(td.file("out.txt"), kv);
  CHECK(io::read_kv_file(td.file("out.txt")) == kv);
  CHECK_THROWS_AS(io::read_kv_file(td.file("missing.txt")), IoError);
}

TEST_CASE("png gray round-trip") {
  TempDir td;
  std::vector<std::uint8_t> px(32 * 16);
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<std::uint8_t>(i * 7);
  io::write_png_gray(td.file("a.png"), px, 32, 16);
  int w = 0, h = 0;
  auto back = io::read_png_gray(td.file("a.png"), w, h);
  CHECK(w == 32);
  CHECK(h == 16);
  CHECK(back == px);
}

TEST_CASE("csv round-trip") {
  TempDir td;
  io::CsvTable t;
  t.header = {"iter", "loss", "name"};
  t.rows = {{"0", "1.5", "a"}, {"1", "0.25", "b"}};
  io::write_csv(td.file("t.csv"), t);
  io::CsvTable back = io::read_csv(td.file("t.csv"));
  CHECK(back.header == t.header);
  CHECK(back.rows == t.rows);
}

TEST_CASE("checkpoint round-trips parameters and config text") {
  TempDir td;
  auto ms = ModelSet<float>::create(4, 32, 17);
  TrainConfig cfg;
  cfg.iterations = 5;
  io::Checkpoint ck;
  ck.config_text = cfg.to_text();
  io::params_to_checkpoint(ms.all_params, ck);
  io::save_checkpoint(td.file("ck.bin"), ck);

  io::Checkpoint back = io::load_checkpoint(td.file("ck.bin"));
  CHECK(back.config_text == ck.config_text);
  TrainConfig cfg2 = TrainConfig::from_kv(io::parse_kv_text(back.config_text));
  CHECK(cfg2.iterations == 5);

  auto ms2 = ModelSet<float>::create(4, 32, 99);
  io::checkpoint_to_params(back, ms2.all_params);
  for (std::size_t i = 0; i < ms.all_params.size(); ++i)
    CHECK(ms2.all_params[i]->w.v == ms.all_params[i]->w.v);

  CHECK_THROWS_AS(io::load_checkpoint(td.file("none.bin")), IoError);
}

TEST_CASE("dataset directory round-trip") {
  TempDir td;
  Dataset d = generate_synthetic_dataset(3, 32, 32, 4, 23);
  auto [lab, unl] = split_dataset(d, 0.4, 2);
  Dataset merged;
  merged.num_classes = 4;
  merged.seed = 23;
  for (auto& s : lab.samples) merged.samples.push_back(s);
  for (auto& s : unl.samples) merged.samples.push_back(s);
  save_dataset(td.path.string(), merged, "train");
  Dataset back = load_dataset(td.path.string(), "train");
  CHECK(back.num_classes == 4);
  REQUIRE(back.samples.size() == 3);
  int n_lab = 0;
  for (const auto& s : back.samples) {
    if (s.labeled) {
      ++n_lab;
      CHECK(s.mask.has_value());
    } else {
      CHECK(!s.mask.has_value());
      CHECK(s.withheld_mask.has_value());
    }
  }
  CHECK(n_lab == 1);
  // masks survive the 8-bit round trip exactly
  const ImageSample& orig = merged.samples[0];
  for (const auto& s : back.samples)
    if (s.id == orig.id) CHECK(*s.mask == *orig.mask);
}

TEST_CASE("class color map is bijective") {
  for (int c = 0; c < kMaxRenderClasses; ++c)
    CHECK(class_from_color(class_color(c)) == c);
  CHECK(class_from_color(Rgb{1, 2, 3}) == -1);
  CHECK_THROWS_AS(class_color(-1), ConfigError);
  CHECK_THROWS_AS(class_color(kMaxRenderClasses), ConfigError);
}

TEST_CASE("line plot and mask render produce non-empty PNGs") {
  TempDir td;
  PlotSeries s{"DICE", {0.1, 0.3, 0.5}, {0.6, 0.8, 0.7}, {0, 130, 200}};
  line_plot_png(td.file("p.png"), {s}, "MASK RATIO", "MEAN DICE");
  CHECK(fs::file_size(td.file("p.png")) > 100);

  std::vector<int> labels(16 * 16, 0);
  labels[5] = 1;
  labels[6] = 3;
  render_mask_png(td.file("m.png"), labels, 16, 16);
  CHECK(fs::file_size(td.file("m.png")) > 50);
  CHECK_THROWS_AS(line_plot_png(td.file("q.png"), {}, "X", "Y"), ConfigError);
}

TEST_CASE("render_qualitative writes samples x variants + samples x 2 files") {
  TempDir td;
  Dataset d = generate_synthetic_dataset(2, 32, 32, 4, 29);
  // train nothing; just save an untrained checkpoint to render from
  auto ms = ModelSet<float>::create(4, 32, 3);
  TrainConfig cfg;
  io::Checkpoint ck;
  ck.config_text = cfg.to_text();
  io::params_to_checkpoint(ms.all_params, ck);
  io::save_checkpoint(td.file("ck.bin"), ck);

  int files = render_qualitative({{"base", td.file("ck.bin")}, {"full", td.file("ck.bin")}}, d,
                                 td.file("out"));
  CHECK(files == 2 * 2 + 2 * 2);  // 2 samples x 2 variants + 2 samples x 2
  CHECK(fs::exists(td.path / "out" / (d.samples[0].id + "_input.png")));
  CHECK(fs::exists(td.path / "out" / (d.samples[0].id + "_gt.png")));
  CHECK(fs::exists(td.path / "out" / (d.samples[1].id + "_full_pred.png")));

  CHECK_THROWS_AS(render_qualitative({{"x", td.file("nope.bin")}}, d, td.file("out2")),
                  IoError);
}
