#pragma once

#include <cstdint>
#include <filesystem>

#include "boostdream/image.hpp"

// 8-bit sRGB PNG I/O. Images in memory are linear in [0, 1]; writing applies
// the standard sRGB transfer (12.92 x below 0.0031308, else
// 1.055 x^(1/2.4) - 0.055) and rounds to the nearest code, reading inverts it.
namespace boostdream::png {

double linear_to_srgb(double linear);
double srgb_to_linear(double encoded);

std::uint8_t encode_channel(double linear);
double decode_channel(std::uint8_t code);

// Round trip through the 8-bit sRGB encoding, i.e. what read(write(img)) yields.
Image quantize(const Image& linear);

// 1 (gray) or 3 (RGB) channels. Throws Error on I/O failure.
void write(const std::filesystem::path& path, const Image& linear);
// Returns an H x W x 3 linear image (gray and alpha are converted/dropped).
// Throws FormatError on unreadable files.
Image read(const std::filesystem::path& path);

}  // namespace boostdream::png
