// File I/O: 8-bit PNG images, the named-array checkpoint container, CSV
// tables, and the flat key=value config format.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "advmim/nn.hpp"
#include "advmim/tensor.hpp"

namespace advmim::io {

// grayscale 8-bit
void write_png_gray(const std::string& path, const std::vector<std::uint8_t>& pixels, int w,
                    int h);
std::vector<std::uint8_t> read_png_gray(const std::string& path, int& w, int& h);

// RGB 8-bit, interleaved
void write_png_rgb(const std::string& path, const std::vector<std::uint8_t>& pixels, int w,
                   int h);

// ---------------------------------------------------------------------------
// checkpoint: named float arrays plus the config text that produced them

struct NamedArray {
  std::string name;
  std::vector<int> shape;
  std::vector<float> data;
};

struct Checkpoint {
  std::string config_text;
  std::vector<NamedArray> arrays;

  const NamedArray* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

template <typename T>
void params_to_checkpoint(const nn::ParamList<T>& params, Checkpoint& ck) {
  for (const auto* p : params) {
    NamedArray a;
    a.name = p->name;
    a.shape = p->w.shape;
    a.data.reserve(p->w.numel());
    for (const T& v : p->w.v) a.data.push_back(static_cast<float>(v));
    ck.arrays.push_back(std::move(a));
  }
}

template <typename T>
void checkpoint_to_params(const Checkpoint& ck, const nn::ParamList<T>& params) {
  for (auto* p : params) {
    const NamedArray* a = ck.find(p->name);
    if (!a) throw IoError("checkpoint missing array: " + p->name);
    if (a->shape != p->w.shape) throw IoError("checkpoint shape mismatch for " + p->name);
    for (std::size_t i = 0; i < a->data.size(); ++i) p->w.v[i] = static_cast<T>(a->data[i]);
  }
}

// ---------------------------------------------------------------------------
// CSV (no quoting; our fields are ids and numbers)

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

void write_csv(const std::string& path, const CsvTable& t);
CsvTable read_csv(const std::string& path);

// ---------------------------------------------------------------------------
// flat key=value config files; '#' starts a comment line

std::map<std::string, std::string> read_kv_file(const std::string& path);
std::map<std::string, std::string> parse_kv_text(const std::string& text);
void write_kv_file(const std::string& path, const std::map<std::string, std::string>& kv);

}  // namespace advmim::io
