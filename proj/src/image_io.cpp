#include "pvg/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <vector>

namespace pvg {

namespace {

static_assert(std::endian::native == std::endian::little, "raw channel dumps assume a little-endian host");

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  return f;
}

std::uint8_t quantize(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

[[noreturn]] void png_error_fn(png_structp png, png_const_charp msg) {
  auto* what = static_cast<std::string*>(png_get_error_ptr(png));
  if (what) *what = msg;
  png_longjmp(png, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

}  // namespace

float srgb_encode(float linear) {
  const float x = std::clamp(linear, 0.0f, 1.0f);
  return x <= 0.0031308f ? 12.92f * x : 1.055f * std::pow(x, 1.0f / 2.4f) - 0.055f;
}

float srgb_decode(float encoded) {
  const float x = std::clamp(encoded, 0.0f, 1.0f);
  return x <= 0.04045f ? x / 12.92f : std::pow((x + 0.055f) / 1.055f, 2.4f);
}

void write_png(const std::filesystem::path& path, const ImageF& linear) {
  const int channels = linear.channels();
  if (channels != 1 && channels != 3) throw IoError("write_png: expected 1 or 3 channels");
  std::vector<std::uint8_t> rows(linear.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = quantize(srgb_encode(linear.values()[i]));

  auto file = open_file(path, "wb");
  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("write_png: libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("write_png '" + path.string() + "': " + err);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, linear.width(), linear.height(), 8, channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_sRGB(png, info, PNG_sRGB_INTENT_PERCEPTUAL);
  png_write_info(png, info);
  const std::size_t stride = static_cast<std::size_t>(linear.width()) * channels;
  for (int y = 0; y < linear.height(); ++y) png_write_row(png, rows.data() + y * stride);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

namespace {

ImageF read_png_raw(const std::filesystem::path& path, bool gray) {
  auto file = open_file(path, "rb");
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("read_png: libpng initialization failed");
  }
  std::vector<std::uint8_t> buffer;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("read_png '" + path.string() + "': " + err);
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  const int color_type = png_get_color_type(png, info);
  if (gray) {
    if (color_type & PNG_COLOR_MASK_COLOR) png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  } else if (!(color_type & PNG_COLOR_MASK_COLOR)) {
    png_set_gray_to_rgb(png);
  }
  png_read_update_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int channels = png_get_channels(png, info);
  buffer.resize(static_cast<std::size_t>(w) * h * channels);
  rows.resize(h);
  for (int y = 0; y < h; ++y) rows[y] = buffer.data() + static_cast<std::size_t>(y) * w * channels;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  ImageF img(h, w, channels);
  for (std::size_t i = 0; i < buffer.size(); ++i) img.values()[i] = buffer[i] / 255.0f;
  return img;
}

}  // namespace

ImageF read_png(const std::filesystem::path& path, bool decode_srgb) {
  ImageF img = read_png_raw(path, false);
  if (decode_srgb)
    for (float& v : img.values()) v = srgb_decode(v);
  return img;
}

ImageF read_png_gray(const std::filesystem::path& path) { return read_png_raw(path, true); }

void write_ppm(const std::filesystem::path& path, const ImageF& linear) {
  if (linear.channels() != 3) throw IoError("write_ppm: expected 3 channels");
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "'");
  out << "P3\n" << linear.width() << ' ' << linear.height() << "\n255\n";
  for (int y = 0; y < linear.height(); ++y) {
    for (int x = 0; x < linear.width(); ++x)
      for (int c = 0; c < 3; ++c) out << int(quantize(srgb_encode(linear.at(y, x, c)))) << (x + 1 == linear.width() && c == 2 ? '\n' : ' ');
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

ImageF read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  auto next_token = [&]() {
    std::string tok;
    while (in >> tok) {
      if (tok[0] != '#') return tok;
      std::string rest;
      std::getline(in, rest);
    }
    throw IoError("truncated PPM '" + path.string() + "'");
  };
  if (next_token() != "P3") throw IoError("'" + path.string() + "' is not an ASCII PPM");
  const int w = std::stoi(next_token());
  const int h = std::stoi(next_token());
  const int maxval = std::stoi(next_token());
  if (w <= 0 || h <= 0 || maxval <= 0) throw IoError("bad PPM header in '" + path.string() + "'");
  ImageF img(h, w, 3);
  for (float& v : img.values()) v = srgb_decode(std::stof(next_token()) / maxval);
  return img;
}

void write_channels(const std::filesystem::path& path, const ImageF& img) {
  auto f = open_file(path, "wb");
  const std::uint32_t header[3] = {static_cast<std::uint32_t>(img.height()), static_cast<std::uint32_t>(img.width()),
                                   static_cast<std::uint32_t>(img.channels())};
  if (std::fwrite("PVGC", 1, 4, f.get()) != 4 || std::fwrite(header, 4, 3, f.get()) != 3 ||
      std::fwrite(img.data(), sizeof(float), img.size(), f.get()) != img.size())
    throw IoError("write failed for '" + path.string() + "'");
}

ImageF read_channels(const std::filesystem::path& path) {
  auto f = open_file(path, "rb");
  char magic[4];
  std::uint32_t header[3];
  if (std::fread(magic, 1, 4, f.get()) != 4 || std::memcmp(magic, "PVGC", 4) != 0)
    throw IoError("'" + path.string() + "' is not a PVGC channel dump");
  if (std::fread(header, 4, 3, f.get()) != 3) throw IoError("truncated PVGC header in '" + path.string() + "'");
  ImageF img(static_cast<int>(header[0]), static_cast<int>(header[1]), static_cast<int>(header[2]));
  if (std::fread(img.data(), sizeof(float), img.size(), f.get()) != img.size())
    throw IoError("truncated PVGC data in '" + path.string() + "'");
  return img;
}

ImageF read_image(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".png") return read_png(path);
  if (ext == ".ppm") return read_ppm(path);
  if (ext == ".pvgc") return read_channels(path);
  throw IoError("unsupported image format '" + path.string() + "'");
}

void write_image(const std::filesystem::path& path, const ImageF& linear) {
  const auto ext = path.extension().string();
  if (ext == ".png") return write_png(path, linear);
  if (ext == ".ppm") return write_ppm(path, linear);
  if (ext == ".pvgc") return write_channels(path, linear);
  throw IoError("unsupported image format '" + path.string() + "'");
}

}  // namespace pvg
