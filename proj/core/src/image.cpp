#include <pgvton/image.hpp>

#include <algorithm>
#include <cmath>

namespace pgvton {

Image Image::channel_slice(int c0, int c1) const {
  Image out(height, width, c1 - c0);
  std::copy(data.begin() + c0 * plane_size(), data.begin() + c1 * plane_size(),
            out.data.begin());
  return out;
}

Image Image::masked_by(const Image& mask) const {
  Image out = *this;
  const std::size_t ps = plane_size();
  for (int c = 0; c < channels; ++c) {
    double* p = out.plane(c);
    const double* m = mask.data.data();
    for (std::size_t i = 0; i < ps; ++i) p[i] *= m[i];
  }
  return out;
}

Image operator*(const Image& a, double s) {
  Image out = a;
  for (double& v : out.data) v *= s;
  return out;
}

Image operator+(const Image& a, const Image& b) {
  Image out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
  return out;
}

Image operator-(const Image& a, const Image& b) {
  Image out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
  return out;
}

double max_abs_diff(const Image& a, const Image& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

double mean_abs_diff(const Image& a, const Image& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    s += std::abs(a.data[i] - b.data[i]);
  return a.data.empty() ? 0.0 : s / static_cast<double>(a.data.size());
}

Mask binarize(const Mask& m, double thr) {
  Mask out(m.height, m.width, 1);
  for (std::size_t i = 0; i < m.data.size(); ++i)
    out.data[i] = m.data[i] > thr ? 1.0 : 0.0;
  return out;
}

}  // namespace pgvton
