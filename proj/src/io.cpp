#include "advmim/io.hpp"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace advmim::io {

namespace {

struct FileCloser {
  std::FILE* f;
  ~FileCloser() {
    if (f) std::fclose(f);
  }
};

void write_png_impl(const std::string& path, const std::vector<std::uint8_t>& pixels, int w,
                    int h, int channels) {
  std::FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw IoError("cannot open for writing: " + path);
  FileCloser closer{fp};
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("png write failed: " + path);
  }
  png_init_io(png, fp);
  int color = channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8, color,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(static_cast<std::size_t>(h));
  for (int i = 0; i < h; ++i)
    rows[static_cast<std::size_t>(i)] =
        const_cast<png_bytep>(pixels.data() + static_cast<std::size_t>(i) * w * channels);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

void write_png_gray(const std::string& path, const std::vector<std::uint8_t>& pixels, int w,
                    int h) {
  write_png_impl(path, pixels, w, h, 1);
}

void write_png_rgb(const std::string& path, const std::vector<std::uint8_t>& pixels, int w,
                   int h) {
  write_png_impl(path, pixels, w, h, 3);
}

std::vector<std::uint8_t> read_png_gray(const std::string& path, int& w, int& h) {
  std::FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw IoError("cannot open: " + path);
  FileCloser closer{fp};
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("png read failed: " + path);
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  png_uint_32 pw, ph;
  int bit_depth, color_type;
  png_get_IHDR(png, info, &pw, &ph, &bit_depth, &color_type, nullptr, nullptr, nullptr);
  // normalize anything to 8-bit gray
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (bit_depth == 16) png_set_strip_16(png);
  if (color_type & PNG_COLOR_MASK_COLOR) png_set_rgb_to_gray(png, 1, -1.0, -1.0);
  if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);
  w = static_cast<int>(pw);
  h = static_cast<int>(ph);
  std::vector<std::uint8_t> pixels(static_cast<std::size_t>(w) * h);
  std::vector<png_bytep> rows(static_cast<std::size_t>(h));
  for (int i = 0; i < h; ++i)
    rows[static_cast<std::size_t>(i)] = pixels.data() + static_cast<std::size_t>(i) * w;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  return pixels;
}

// ---------------------------------------------------------------------------

const NamedArray* Checkpoint::find(const std::string& name) const {
  for (const auto& a : arrays)
    if (a.name == name) return &a;
  return nullptr;
}

namespace {
constexpr char kMagic[8] = {'A', 'D', 'V', 'M', 'C', 'K', '0', '1'};

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
void read_pod(std::istream& is, T& v) {
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
}
void write_str(std::ostream& os, const std::string& s) {
  write_pod(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
std::string read_str(std::istream& is) {
  std::uint32_t n = 0;
  read_pod(is, n);
  std::string s(n, '\0');
  is.read(s.data(), n);
  return s;
}
}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  os.write(kMagic, 8);
  write_str(os, ck.config_text);
  write_pod(os, static_cast<std::uint32_t>(ck.arrays.size()));
  for (const auto& a : ck.arrays) {
    write_str(os, a.name);
    write_pod(os, static_cast<std::uint32_t>(a.shape.size()));
    for (int d : a.shape) write_pod(os, static_cast<std::int32_t>(d));
    write_pod(os, static_cast<std::uint64_t>(a.data.size()));
    os.write(reinterpret_cast<const char*>(a.data.data()),
             static_cast<std::streamsize>(a.data.size() * sizeof(float)));
  }
  if (!os) throw IoError("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  char magic[8];
  is.read(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0) throw IoError("bad checkpoint magic: " + path);
  Checkpoint ck;
  ck.config_text = read_str(is);
  std::uint32_t n = 0;
  read_pod(is, n);
  ck.arrays.resize(n);
  for (auto& a : ck.arrays) {
    a.name = read_str(is);
    std::uint32_t nd = 0;
    read_pod(is, nd);
    a.shape.resize(nd);
    for (auto& d : a.shape) {
      std::int32_t x;
      read_pod(is, x);
      d = x;
    }
    std::uint64_t sz = 0;
    read_pod(is, sz);
    a.data.resize(sz);
    is.read(reinterpret_cast<char*>(a.data.data()),
            static_cast<std::streamsize>(sz * sizeof(float)));
  }
  if (!is) throw IoError("truncated checkpoint: " + path);
  return ck;
}

// ---------------------------------------------------------------------------

void write_csv(const std::string& path, const CsvTable& t) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path);
  for (std::size_t i = 0; i < t.header.size(); ++i)
    os << t.header[i] << (i + 1 < t.header.size() ? "," : "");
  os << "\n";
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i)
      os << row[i] << (i + 1 < row.size() ? "," : "");
    os << "\n";
  }
  if (!os) throw IoError("write failed: " + path);
}

namespace {
std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}
}  // namespace

CsvTable read_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open: " + path);
  CsvTable t;
  std::string line;
  if (std::getline(is, line)) t.header = split_commas(line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    t.rows.push_back(split_commas(line));
  }
  return t;
}

// ---------------------------------------------------------------------------

std::map<std::string, std::string> parse_kv_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto strip = [](std::string s) {
      std::size_t a = s.find_first_not_of(" \t");
      if (a == std::string::npos) return std::string();
      std::size_t b = s.find_last_not_of(" \t");
      return s.substr(a, b - a + 1);
    };
    std::string stripped = strip(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    std::size_t eq = stripped.find('=');
    if (eq == std::string::npos) throw ConfigError("bad config line: " + line);
    kv[strip(stripped.substr(0, eq))] = strip(stripped.substr(eq + 1));
  }
  return kv;
}

std::map<std::string, std::string> read_kv_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_kv_text(ss.str());
}

void write_kv_file(const std::string& path, const std::map<std::string, std::string>& kv) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path);
  for (const auto& [k, v] : kv) os << k << " = " << v << "\n";
}

}  // namespace advmim::io
