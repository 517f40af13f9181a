#pragma once

#include <png.h>

#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "chronolens/core/error.hpp"
#include "chronolens/scene/frames.hpp"

namespace chronolens::scene {

/// Decoded PNG samples. 16-bit samples are stored host-endian in `samples16`.
struct PngImage {
  int width = 0;
  int height = 0;
  int channels = 0;   // 1 (gray) or 3 (rgb)
  int bit_depth = 0;  // 8 or 16
  std::vector<std::uint8_t> samples8;
  std::vector<std::uint16_t> samples16;
};

namespace detail {

struct PngBuffer {
  std::span<const std::uint8_t> data;
  std::size_t offset = 0;
};

inline void png_read_from_buffer(png_structp png, png_bytep out, png_size_t len) {
  auto* buf = static_cast<PngBuffer*>(png_get_io_ptr(png));
  if (buf->offset + len > buf->data.size()) png_error(png, "truncated png");
  std::memcpy(out, buf->data.data() + buf->offset, len);
  buf->offset += len;
}

inline void png_write_to_vector(png_structp png, png_bytep in, png_size_t len) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), in, in + len);
}

inline void png_flush_noop(png_structp) {}

inline void png_throw_error(png_structp png, png_const_charp msg) {
  auto* what = static_cast<std::string*>(png_get_error_ptr(png));
  if (what) *what = msg;
  png_longjmp(png, 1);
}

inline void png_ignore_warning(png_structp, png_const_charp) {}

}  // namespace detail

inline PngImage decode_png(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    throw DataError("png: not a PNG stream");
  }
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, detail::png_throw_error,
                                           detail::png_ignore_warning);
  png_infop info = png_create_info_struct(png);
  PngImage img;
  std::vector<png_bytep> rows;
  std::vector<std::uint8_t> raw;
  detail::PngBuffer buf{bytes, 0};
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("png: decode failed: " + err);
  }
  png_set_read_fn(png, &buf, detail::png_read_from_buffer);
  png_read_info(png, info);

  const int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (depth == 16) png_set_swap(png);  // network order -> little endian host
  png_read_update_info(png, info);

  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  img.channels = png_get_channels(png, info);
  img.bit_depth = png_get_bit_depth(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  raw.resize(rowbytes * img.height);
  rows.resize(img.height);
  for (int y = 0; y < img.height; ++y) rows[y] = raw.data() + rowbytes * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  if (img.bit_depth == 16) {
    img.samples16.resize(raw.size() / 2);
    std::memcpy(img.samples16.data(), raw.data(), raw.size());
  } else {
    img.samples8 = std::move(raw);
  }
  return img;
}

inline std::vector<std::uint8_t> encode_png(int width, int height, int channels, int bit_depth,
                                            const void* samples) {
  std::vector<std::uint8_t> out;
  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, detail::png_throw_error,
                                            detail::png_ignore_warning);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("png: encode failed: " + err);
  }
  png_set_write_fn(png, &out, detail::png_write_to_vector, detail::png_flush_noop);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
               bit_depth, channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bit_depth == 16) png_set_swap(png);
  const std::size_t rowbytes = static_cast<std::size_t>(width) * channels * (bit_depth / 8);
  const auto* base = static_cast<const std::uint8_t*>(samples);
  for (int y = 0; y < height; ++y) {
    png_write_row(png, const_cast<png_bytep>(base + rowbytes * y));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write file: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

inline std::vector<std::uint8_t> encode_rgb_png(const RgbFrame& frame) {
  return encode_png(frame.width(), frame.height(), 3, 8, frame.bytes().data());
}

inline RgbFrame decode_rgb_png(std::span<const std::uint8_t> bytes, double capture_time_s = 0.0) {
  PngImage img = decode_png(bytes);
  if (img.bit_depth != 8) throw DataError("rgb png: expected 8-bit samples");
  if (img.channels == 1) {
    std::vector<std::uint8_t> rgb(img.samples8.size() * 3);
    for (std::size_t i = 0; i < img.samples8.size(); ++i) {
      rgb[3 * i] = rgb[3 * i + 1] = rgb[3 * i + 2] = img.samples8[i];
    }
    return RgbFrame(img.width, img.height, std::move(rgb), capture_time_s);
  }
  if (img.channels != 3) throw DataError("rgb png: unsupported channel count");
  return RgbFrame(img.width, img.height, std::move(img.samples8), capture_time_s);
}

inline RgbFrame read_rgb_png(const std::filesystem::path& path, double capture_time_s = 0.0) {
  try {
    return decode_rgb_png(read_file_bytes(path), capture_time_s);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

inline void write_rgb_png(const std::filesystem::path& path, const RgbFrame& frame) {
  write_file_bytes(path, encode_rgb_png(frame));
}

}  // namespace chronolens::scene
