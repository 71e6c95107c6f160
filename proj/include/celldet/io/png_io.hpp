#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "celldet/codec/labels.hpp"
#include "celldet/tensor/tensor.hpp"

namespace celldet {

// Decoded image: 8-bit grayscale (c=1), 8-bit RGB (c=3), or 16-bit
// grayscale promoted into pix16.
struct PngImage {
  int h = 0;
  int w = 0;
  int channels = 0;
  int bit_depth = 8;
  std::vector<std::uint8_t> pix8;    // h*w*channels when bit_depth == 8
  std::vector<std::uint16_t> pix16;  // h*w when bit_depth == 16
};

PngImage read_png(const std::string& path);

void write_png_gray8(const std::string& path, int h, int w, const std::vector<std::uint8_t>& pix);
void write_png_rgb8(const std::string& path, int h, int w, const std::vector<std::uint8_t>& pix);
void write_png_gray16(const std::string& path, int h, int w, const std::vector<std::uint16_t>& pix);

// Gray [0,1] tensor (HxW) quantized to 8 bits.
void write_png_gray(const std::string& path, const Tensor& image);
// RGB [0,1] tensor (HxWx3) quantized to 8 bits.
void write_png_rgb(const std::string& path, const Tensor& image);
void write_png_mask(const std::string& path, const InstanceMask& mask);

// Any readable PNG mapped to a grayscale [0,1] tensor (RGB via BT.601 luma).
Tensor read_png_gray(const std::string& path);
// 16-bit (or 8-bit) single-channel PNG as an instance label mask.
InstanceMask read_png_mask(const std::string& path);

}  // namespace celldet
