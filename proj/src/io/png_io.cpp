#include "celldet/io/png_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>

namespace celldet {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void fail(const std::string& path, const char* what) {
  throw std::runtime_error("png: " + std::string(what) + ": " + path);
}

}  // namespace

PngImage read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) fail(path, "cannot open");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail(path, "create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    fail(path, "create_info_struct failed");
  }
  std::vector<png_bytep> rows;
  PngImage img;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(path, "decode error");
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  const int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);
  img.h = static_cast<int>(png_get_image_height(png, info));
  img.w = static_cast<int>(png_get_image_width(png, info));

  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  if (depth == 16 && color != PNG_COLOR_TYPE_GRAY) png_set_strip_16(png);
  png_read_update_info(png, info);

  depth = png_get_bit_depth(png, info);
  const int channels = static_cast<int>(png_get_channels(png, info));
  img.bit_depth = depth;
  img.channels = channels;

  const std::size_t row_bytes = png_get_rowbytes(png, info);
  std::vector<std::uint8_t> raw(static_cast<std::size_t>(img.h) * row_bytes);
  rows.resize(static_cast<std::size_t>(img.h));
  for (int y = 0; y < img.h; ++y) rows[static_cast<std::size_t>(y)] = raw.data() + static_cast<std::size_t>(y) * row_bytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  if (depth == 16) {
    // Big-endian in the file.
    img.pix16.resize(static_cast<std::size_t>(img.h) * img.w);
    for (std::size_t i = 0; i < img.pix16.size(); ++i) {
      img.pix16[i] = static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);
    }
  } else {
    img.pix8 = std::move(raw);
    img.pix8.resize(static_cast<std::size_t>(img.h) * img.w * channels);
  }
  return img;
}

namespace {

void write_png_impl(const std::string& path, int h, int w, int color_type, int depth,
                    const std::uint8_t* data, std::size_t row_bytes) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) fail(path, "cannot open for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail(path, "create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    fail(path, "create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(path, "encode error");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), depth,
               color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(static_cast<std::size_t>(h));
  for (int y = 0; y < h; ++y) {
    rows[static_cast<std::size_t>(y)] = const_cast<png_bytep>(data + static_cast<std::size_t>(y) * row_bytes);
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

void write_png_gray8(const std::string& path, int h, int w, const std::vector<std::uint8_t>& pix) {
  write_png_impl(path, h, w, PNG_COLOR_TYPE_GRAY, 8, pix.data(), static_cast<std::size_t>(w));
}

void write_png_rgb8(const std::string& path, int h, int w, const std::vector<std::uint8_t>& pix) {
  write_png_impl(path, h, w, PNG_COLOR_TYPE_RGB, 8, pix.data(), static_cast<std::size_t>(w) * 3);
}

void write_png_gray16(const std::string& path, int h, int w,
                      const std::vector<std::uint16_t>& pix) {
  std::vector<std::uint8_t> be(static_cast<std::size_t>(h) * w * 2);
  for (std::size_t i = 0; i < pix.size(); ++i) {
    be[2 * i] = static_cast<std::uint8_t>(pix[i] >> 8);
    be[2 * i + 1] = static_cast<std::uint8_t>(pix[i] & 0xFF);
  }
  write_png_impl(path, h, w, PNG_COLOR_TYPE_GRAY, 16, be.data(), static_cast<std::size_t>(w) * 2);
}

namespace {

std::uint8_t to_u8(float v) {
  const float c = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

}  // namespace

void write_png_gray(const std::string& path, const Tensor& image) {
  if (image.rank() != 2) throw std::invalid_argument("write_png_gray: expected HxW tensor");
  std::vector<std::uint8_t> pix(static_cast<std::size_t>(image.numel()));
  for (std::int64_t i = 0; i < image.numel(); ++i) pix[static_cast<std::size_t>(i)] = to_u8(image.data()[i]);
  write_png_gray8(path, image.dim(0), image.dim(1), pix);
}

void write_png_rgb(const std::string& path, const Tensor& image) {
  if (image.rank() != 3 || image.dim(2) != 3) {
    throw std::invalid_argument("write_png_rgb: expected HxWx3 tensor");
  }
  std::vector<std::uint8_t> pix(static_cast<std::size_t>(image.numel()));
  for (std::int64_t i = 0; i < image.numel(); ++i) pix[static_cast<std::size_t>(i)] = to_u8(image.data()[i]);
  write_png_rgb8(path, image.dim(0), image.dim(1), pix);
}

void write_png_mask(const std::string& path, const InstanceMask& mask) {
  write_png_gray16(path, mask.h, mask.w, mask.v);
}

Tensor read_png_gray(const std::string& path) {
  const PngImage img = read_png(path);
  Tensor out({img.h, img.w});
  if (img.bit_depth == 16) {
    for (std::int64_t i = 0; i < out.numel(); ++i) {
      out.data()[i] = static_cast<float>(img.pix16[static_cast<std::size_t>(i)]) / 65535.0f;
    }
  } else if (img.channels == 1) {
    for (std::int64_t i = 0; i < out.numel(); ++i) {
      out.data()[i] = static_cast<float>(img.pix8[static_cast<std::size_t>(i)]) / 255.0f;
    }
  } else {
    for (std::int64_t i = 0; i < out.numel(); ++i) {
      const std::size_t p = static_cast<std::size_t>(i) * img.channels;
      const float r = img.pix8[p], g = img.pix8[p + 1], b = img.pix8[p + 2];
      out.data()[i] = (0.299f * r + 0.587f * g + 0.114f * b) / 255.0f;
    }
  }
  return out;
}

InstanceMask read_png_mask(const std::string& path) {
  const PngImage img = read_png(path);
  InstanceMask mask(img.h, img.w);
  if (img.bit_depth == 16) {
    mask.v = img.pix16;
  } else if (img.channels == 1) {
    for (std::size_t i = 0; i < mask.v.size(); ++i) mask.v[i] = img.pix8[i];
  } else {
    throw std::runtime_error("png: mask must be single-channel: " + path);
  }
  return mask;
}

}  // namespace celldet
