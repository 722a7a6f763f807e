#pragma once

#include <pgvton/image.hpp>

#include <string>

namespace pgvton {

/// Writes an 8-bit PNG. 1-channel images become grayscale, 3-channel RGB.
/// Values are clamped to [0,1] and quantized with round-to-nearest.
void write_png(const std::string& path, const Image& image);

/// Reads an 8-bit PNG into [0,1] doubles (grayscale -> 1 channel,
/// RGB/RGBA -> 3 channels, alpha dropped).
Image read_png(const std::string& path);

}  // namespace pgvton
