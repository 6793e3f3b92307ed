#pragma once

#include <png.h>

#include <cstdio>

#include "mat/image.hpp"

// PNG I/O. Images are 8-bit RGB externally and [-1,1] float internally;
// masks are 8-bit grayscale with 255 = valid (visible) and 0 = invalid.
// The u8 -> float -> u8 round trip is exact, so visible pixels survive
// inpainting bit-for-bit.

namespace mat {

namespace pngdetail {

struct Reader {
  FILE* fp = nullptr;
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~Reader() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    if (fp) std::fclose(fp);
  }
};

struct Writer {
  FILE* fp = nullptr;
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~Writer() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    if (fp) std::fclose(fp);
  }
};

inline void read_rows(const std::string& path, int64_t& h, int64_t& w, int channels,
                      std::vector<uint8_t>& out) {
  Reader r;
  r.fp = std::fopen(path.c_str(), "rb");
  if (!r.fp) throw IoError("cannot open: " + path);
  r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  r.info = png_create_info_struct(r.png);
  if (!r.png || !r.info) throw IoError("libpng init failed for " + path);
  if (setjmp(png_jmpbuf(r.png))) throw IoError("failed to decode " + path);
  png_init_io(r.png, r.fp);
  png_read_info(r.png, r.info);
  png_set_expand(r.png);
  png_set_strip_16(r.png);
  png_set_strip_alpha(r.png);
  if (channels == 3)
    png_set_gray_to_rgb(r.png);
  else if (png_get_color_type(r.png, r.info) & PNG_COLOR_MASK_COLOR)
    png_set_rgb_to_gray_fixed(r.png, 1, -1, -1);
  png_read_update_info(r.png, r.info);
  h = png_get_image_height(r.png, r.info);
  w = png_get_image_width(r.png, r.info);
  check(static_cast<int>(png_get_channels(r.png, r.info)) == channels,
        path + ": unexpected channel count after conversion");
  out.resize(static_cast<size_t>(h * w * channels));
  std::vector<png_bytep> rows(static_cast<size_t>(h));
  for (int64_t y = 0; y < h; ++y) rows[static_cast<size_t>(y)] = out.data() + y * w * channels;
  png_read_image(r.png, rows.data());
  png_read_end(r.png, nullptr);
}

inline void write_rows(const std::string& path, int64_t h, int64_t w, int channels,
                       const std::vector<uint8_t>& data) {
  Writer wr;
  wr.fp = std::fopen(path.c_str(), "wb");
  if (!wr.fp) throw IoError("cannot open for writing: " + path);
  wr.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  wr.info = png_create_info_struct(wr.png);
  if (!wr.png || !wr.info) throw IoError("libpng init failed for " + path);
  if (setjmp(png_jmpbuf(wr.png))) throw IoError("failed to encode " + path);
  png_init_io(wr.png, wr.fp);
  png_set_IHDR(wr.png, wr.info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(wr.png, wr.info);
  std::vector<png_bytep> rows(static_cast<size_t>(h));
  for (int64_t y = 0; y < h; ++y)
    rows[static_cast<size_t>(y)] = const_cast<png_bytep>(data.data() + y * w * channels);
  png_write_image(wr.png, rows.data());
  png_write_end(wr.png, nullptr);
}

}  // namespace pngdetail

inline uint8_t float_to_u8(float v) {
  const float scaled = (v + 1.0f) * 127.5f;
  const long r = std::lround(scaled);
  return static_cast<uint8_t>(std::min(255L, std::max(0L, r)));
}

inline float u8_to_float(uint8_t v) { return static_cast<float>(v) / 127.5f - 1.0f; }

inline ImageF read_image_png(const std::string& path) {
  int64_t h, w;
  std::vector<uint8_t> rows;
  pngdetail::read_rows(path, h, w, 3, rows);
  ImageF img(3, h, w);
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x)
      for (int64_t c = 0; c < 3; ++c)
        img.at(c, y, x) = u8_to_float(rows[static_cast<size_t>((y * w + x) * 3 + c)]);
  return img;
}

inline void write_image_png(const std::string& path, const ImageF& img) {
  check(img.channels == 3, "write_image_png: need 3 channels, got " +
                               std::to_string(img.channels));
  std::vector<uint8_t> rows(static_cast<size_t>(img.height * img.width * 3));
  for (int64_t y = 0; y < img.height; ++y)
    for (int64_t x = 0; x < img.width; ++x)
      for (int64_t c = 0; c < 3; ++c)
        rows[static_cast<size_t>((y * img.width + x) * 3 + c)] = float_to_u8(img.at(c, y, x));
  pngdetail::write_rows(path, img.height, img.width, 3, rows);
}

inline BinaryMask read_mask_png(const std::string& path) {
  int64_t h, w;
  std::vector<uint8_t> rows;
  pngdetail::read_rows(path, h, w, 1, rows);
  BinaryMask m(h, w, 0);
  for (size_t i = 0; i < rows.size(); ++i) m.valid[i] = rows[i] >= 128 ? 1 : 0;
  return m;
}

inline void write_mask_png(const std::string& path, const BinaryMask& m) {
  std::vector<uint8_t> rows(m.valid.size());
  for (size_t i = 0; i < rows.size(); ++i) rows[i] = m.valid[i] ? 255 : 0;
  pngdetail::write_rows(path, m.height, m.width, 1, rows);
}

}  // namespace mat
