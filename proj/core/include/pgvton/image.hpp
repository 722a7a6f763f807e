#pragma once

#include <pgvton/errors.hpp>

#include <cstddef>
#include <vector>

namespace pgvton {

/// Dense planar image: `channels` planes of `height x width` doubles.
/// Values are unconstrained in general; pipeline images live in [0,1].
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;  // plane-major: [c][y][x]

  Image() = default;
  Image(int h, int w, int c, double fill = 0.0)
      : height(h), width(w), channels(c),
        data(static_cast<std::size_t>(h) * w * c, fill) {}

  double& at(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  double at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }

  std::size_t size() const { return data.size(); }
  std::size_t plane_size() const {
    return static_cast<std::size_t>(height) * width;
  }
  bool same_shape(const Image& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }

  const double* plane(int c) const { return data.data() + c * plane_size(); }
  double* plane(int c) { return data.data() + c * plane_size(); }

  /// Copy of a contiguous channel range [c0, c1).
  Image channel_slice(int c0, int c1) const;

  /// Elementwise product with a single-channel mask, broadcast over channels.
  Image masked_by(const Image& mask) const;
};

/// Single-channel convenience alias; masks and parsing channels use Image
/// with channels == 1.
using Mask = Image;

Image operator*(const Image& a, double s);
Image operator+(const Image& a, const Image& b);
Image operator-(const Image& a, const Image& b);

/// max over all elements of |a - b|
double max_abs_diff(const Image& a, const Image& b);

/// mean over all elements of |a - b|
double mean_abs_diff(const Image& a, const Image& b);

/// 1 where m > thr, else 0
Mask binarize(const Mask& m, double thr = 0.5);

}  // namespace pgvton
