// Python bindings for the core operations: synthetic data generation,
// training, masking, losses, metrics, inference from checkpoints, and the
// generalization-bound harness.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <map>
#include <string>
#include <vector>

#include "advmim/bound.hpp"
#include "advmim/io.hpp"
#include "advmim/losses.hpp"
#include "advmim/masking.hpp"
#include "advmim/metrics.hpp"
#include "advmim/training.hpp"

namespace py = pybind11;
using namespace advmim;

namespace {

using IntArray = py::array_t<int, py::array::c_style | py::array::forcecast>;
using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

std::vector<int> flat_ivec(const IntArray& a) {
  std::vector<int> out(static_cast<std::size_t>(a.size()));
  std::copy(a.data(), a.data() + a.size(), out.begin());
  return out;
}

// (H, W) or (H, W, C) float image -> tensor
TensorF image_tensor(const FloatArray& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw ShapeError("image must be 2-D or 3-D");
  int h = static_cast<int>(a.shape(0));
  int w = static_cast<int>(a.shape(1));
  int c = a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1;
  TensorF t({h, w, c});
  std::copy(a.data(), a.data() + a.size(), t.v.begin());
  return t;
}

TrainConfig config_from_dict(const std::map<std::string, std::string>& kv) {
  return TrainConfig::from_kv(kv);
}

struct LoadedData {
  Dataset labeled, unlabeled, test;
};

LoadedData load_train_data(const std::string& dir) {
  Dataset train = load_dataset(dir, "train");
  LoadedData out;
  out.labeled.num_classes = out.unlabeled.num_classes = train.num_classes;
  for (auto& s : train.samples) (s.labeled ? out.labeled : out.unlabeled).samples.push_back(s);
  try {
    out.test = load_dataset(dir, "test");
  } catch (const IoError&) {
  }
  return out;
}

py::dict metrics_dict(const MetricsReport& r) {
  py::dict d;
  d["mean_dice"] = r.mean_dice;
  d["mean_hd"] = r.mean_hd;
  d["per_class_dice"] = r.per_class_dice;
  d["per_class_hd"] = r.per_class_hd;
  d["n_samples"] = r.n_samples;
  return d;
}

py::dict bound_dict(const BoundReport& r) {
  py::dict d;
  d["eps_p"] = r.eps_p;
  d["eps_pp"] = r.eps_pp;
  d["eps_qp"] = r.eps_qp;
  d["d_proxy"] = r.d_proxy;
  d["lambda_hat"] = r.lambda_hat;
  d["gamma"] = r.gamma;
  d["rhs"] = r.rhs;
  d["margin"] = r.margin;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "adversarial masked-image-modeling semi-supervised segmentation core";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.def(
      "generate_data",
      [](const std::string& out_dir, int n, int test_n, int height, int width, int classes,
         std::uint64_t seed, double labeled_fraction) {
        Dataset train = generate_synthetic_dataset(n, height, width, classes, seed);
        auto [lab, unl] = split_dataset(train, labeled_fraction, derive_seed(seed, 0x5917));
        Dataset merged;
        merged.num_classes = train.num_classes;
        merged.seed = seed;
        for (auto& s : lab.samples) merged.samples.push_back(std::move(s));
        for (auto& s : unl.samples) merged.samples.push_back(std::move(s));
        save_dataset(out_dir, merged, "train");
        if (test_n > 0)
          save_dataset(out_dir,
                       generate_synthetic_dataset(test_n, height, width, classes,
                                                  derive_seed(seed, 0x7e57), kDefaultPatchPx,
                                                  "t"),
                       "test");
        return static_cast<int>(lab.samples.size());
      },
      py::arg("out_dir"), py::arg("n") = 200, py::arg("test_n") = 50, py::arg("height") = 64,
      py::arg("width") = 64, py::arg("classes") = 4, py::arg("seed") = 1,
      py::arg("labeled_fraction") = 0.05,
      "Write a synthetic dataset directory; returns the labeled-sample count.");

  m.def(
      "train",
      [](const std::string& data_dir, const std::string& out_dir,
         const std::map<std::string, std::string>& config) {
        TrainConfig cfg = config_from_dict(config);
        LoadedData data = load_train_data(data_dir);
        auto ms = ModelSet<float>::create(data.labeled.num_classes,
                                          data.labeled.samples.at(0).height(), cfg.seed,
                                          data.labeled.samples.at(0).image.dim(2));
        auto res = train_run(ms, cfg, data.labeled, data.unlabeled, data.test, out_dir);
        return metrics_dict(res.final_metrics);
      },
      py::arg("data_dir"), py::arg("out_dir"), py::arg("config") = std::map<std::string, std::string>{},
      "Train on a dataset directory; writes log.csv/checkpoint.bin/metrics.csv and returns "
      "final test metrics.");

  m.def(
      "segment",
      [](const std::string& checkpoint_path, const FloatArray& image) {
        io::Checkpoint ck = io::load_checkpoint(checkpoint_path);
        TrainConfig cfg = TrainConfig::from_kv(io::parse_kv_text(ck.config_text));
        TensorF img = image_tensor(image);
        // the CNN head bias length fixes the class count
        const io::NamedArray* head = ck.find("C.head.b");
        if (!head) throw IoError("checkpoint missing array: C.head.b");
        int classes = static_cast<int>(head->data.size());
        auto ms = ModelSet<float>::create(classes, img.dim(0), cfg.seed, img.dim(2));
        io::checkpoint_to_params(ck, ms.all_params);
        Prediction<float> p;
        p.probs = predict_probs_windowed(*ms.S, img, cfg.crop_size);
        auto hard = make_pseudo_label(p, 'S');
        py::array_t<int> out({img.dim(0), img.dim(1)});
        std::copy(hard.labels.begin(), hard.labels.end(), out.mutable_data());
        return out;
      },
      py::arg("checkpoint"), py::arg("image"),
      "Run the transformer segmenter from a checkpoint on one image; returns the label map.");

  m.def(
      "sample_patch_mask",
      [](int grid_h, int grid_w, double ratio, std::uint64_t seed) {
        PatchMask pm = sample_patch_mask(grid_h, grid_w, ratio, seed);
        py::array_t<std::uint8_t> out({grid_h, grid_w});
        std::copy(pm.masked.begin(), pm.masked.end(), out.mutable_data());
        return out;
      },
      py::arg("grid_h"), py::arg("grid_w"), py::arg("ratio"), py::arg("seed"),
      "Sample a patch mask with exactly round(ratio * G) masked patches.");

  m.def(
      "dice_score",
      [](const IntArray& pred, const IntArray& gt, int class_id) {
        return dice_score(flat_ivec(pred), flat_ivec(gt), class_id);
      },
      py::arg("pred"), py::arg("gt"), py::arg("class_id"));

  m.def(
      "hausdorff",
      [](const IntArray& pred, const IntArray& gt, int class_id, double percentile) {
        if (pred.ndim() != 2 || gt.ndim() != 2) throw ShapeError("masks must be 2-D");
        if (pred.shape(0) != gt.shape(0) || pred.shape(1) != gt.shape(1))
          throw ShapeError("mask shapes differ");
        return hausdorff_masks(flat_ivec(pred), flat_ivec(gt), static_cast<int>(pred.shape(0)),
                               static_cast<int>(pred.shape(1)), class_id, percentile);
      },
      py::arg("pred"), py::arg("gt"), py::arg("class_id"), py::arg("percentile") = 100.0);

  m.def(
      "evaluate",
      [](const std::vector<IntArray>& preds, const std::vector<IntArray>& gts, int h, int w,
         int classes) {
        std::vector<std::vector<int>> p, g;
        for (const auto& a : preds) p.push_back(flat_ivec(a));
        for (const auto& a : gts) g.push_back(flat_ivec(a));
        return metrics_dict(metrics_report(p, g, h, w, classes));
      },
      py::arg("preds"), py::arg("gts"), py::arg("h"), py::arg("w"), py::arg("classes"));

  m.def(
      "supervised_loss",
      [](const IntArray& target, const FloatArray& probs) {
        Prediction<float> p;
        p.probs = image_tensor(probs);
        return supervised_seg_loss(flat_ivec(target), p);
      },
      py::arg("target"), py::arg("probs"),
      "Cross-entropy + Dice of a probability map against integer targets.");

  m.def(
      "estimate_bound",
      [](const std::string& checkpoint_path, const std::string& data_dir) {
        LoadedData data = load_train_data(data_dir);
        io::Checkpoint ck = io::load_checkpoint(checkpoint_path);
        TrainConfig cfg = TrainConfig::from_kv(io::parse_kv_text(ck.config_text));
        auto ms = ModelSet<float>::create(data.labeled.num_classes,
                                          data.labeled.samples.at(0).height(), cfg.seed,
                                          data.labeled.samples.at(0).image.dim(2));
        io::checkpoint_to_params(ck, ms.all_params);
        BoundOptions opt;
        opt.seed = cfg.seed;
        return bound_dict(check_bound(ms, data.labeled, data.unlabeled, cfg, opt));
      },
      py::arg("checkpoint"), py::arg("data_dir"),
      "Measure the adaptation-bound terms of a trained checkpoint on a dataset directory.");

  m.def("default_config", []() { return TrainConfig{}.to_kv(); },
        "The default training configuration as a string-to-string dict.");
}
