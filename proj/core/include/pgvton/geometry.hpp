#pragma once

#include <pgvton/image.hpp>
#include <pgvton/nn/tensor.hpp>

#include <array>
#include <utility>
#include <vector>

namespace pgvton::geometry {

struct Point {
  double x = 0.0, y = 0.0;
};

/// s x s lattice of 2-D control points in normalized image coords [-1,1]^2,
/// row-major (y-major). The uniform lattice is the static grid; a warped
/// grid is the lattice plus predicted offsets.
struct ControlGrid {
  int scale = 0;
  std::vector<Point> points;

  static ControlGrid uniform(int scale);
};

inline constexpr int kScales[4] = {3, 4, 5, 6};
inline constexpr double kTpsKernelRegularization = 1e-6;

/// Kernel U(r) = r^2 log r^2 expressed on the squared radius; U(0) = 0.
double tps_kernel_r2(double r2);

/// Thin-plate interpolant through the control points: affine part plus
/// kernel weights, fitted per output dimension. Maps static -> warped
/// exactly at the control points (up to the Tikhonov term).
struct TpsCoefficients {
  int scale = 0;
  std::vector<Point> control;          // static control points
  std::vector<double> weights;         // K x 2, row-major (wx, wy)
  std::array<double, 6> affine{};      // per dim: a0 + a1*x + a2*y; x-dim first
};

TpsCoefficients tps_fit(const ControlGrid& static_grid,
                        const ControlGrid& warped_grid);

/// Evaluate the interpolant at one query point.
Point tps_evaluate(const TpsCoefficients& c, Point q);

/// H x W x 2 backward-warp lookup: for every output pixel center, the
/// normalized source coordinate to sample. Coordinates may leave [-1,1].
struct SamplingField {
  int height = 0, width = 0;
  std::vector<double> data;  // interleaved (x,y) per pixel

  SamplingField() = default;
  SamplingField(int h, int w) : height(h), width(w), data(2ull * h * w, 0.0) {}
  double& x(int yi, int xi) { return data[2 * (static_cast<std::size_t>(yi) * width + xi)]; }
  double& y(int yi, int xi) { return data[2 * (static_cast<std::size_t>(yi) * width + xi) + 1]; }
  double x(int yi, int xi) const { return data[2 * (static_cast<std::size_t>(yi) * width + xi)]; }
  double y(int yi, int xi) const { return data[2 * (static_cast<std::size_t>(yi) * width + xi) + 1]; }
};

/// Pixel-center lattice in normalized coordinates (the identity warp).
SamplingField identity_field(int h, int w);

SamplingField build_sampling_field(const TpsCoefficients& c, int h, int w);

/// Bilinear backward warp; reads outside the source image return 0.
Image warp_image(const Image& image, const SamplingField& field);

/// One warped candidate: image/mask pair plus the grids that produced it.
struct WarpCandidate {
  Image image;
  Mask mask;
  ControlGrid static_grid;
  ControlGrid warped_grid;
};

/// The four warped results at scales 3..6 (index i holds scale 3+i).
struct WarpCandidateSet {
  std::array<WarpCandidate, 4> candidates;

  WarpCandidate& at_scale(int s) { return candidates[s - 3]; }
  const WarpCandidate& at_scale(int s) const { return candidates[s - 3]; }
};

/// Optimal-scale selection: argmin over i of
///   tau * avg|M_tps^i - target| + (1-tau) * avg|M_tps^i - source|
/// with avg the mean over all pixels and ties broken toward the lowest
/// scale. Returns the scale index in {3..6}.
int select_optimal(const WarpCandidateSet& candidates, const Mask& target,
                   const Mask& source, double tau);

/// Sum over scales of the mean squared coordinate displacement between the
/// warped and static grids.
double grid_regularization(
    const std::vector<std::pair<ControlGrid, ControlGrid>>& warped_static);

/// I_map * M + I_tps * (1 - M), mask broadcast over channels.
Image composite(const Image& i_map, const Image& i_tps, const Mask& m);

// ---- differentiable path ----------------------------------------------------

/// Constant dense-evaluation operator for a scale at a resolution: the
/// sampling field is linear in the warped control points, so training can
/// reach the TPS warp through a single matrix product.
struct TpsBasis {
  int scale = 0, height = 0, width = 0;
  nn::Tensor basis;       // (H*W, K)
  nn::Tensor static_pts;  // (K,2)
};

const TpsBasis& tps_basis(int scale, int h, int w);

/// offsets: (N,K,2) -> field (N,H,W,2) through the cached basis.
nn::Tensor tps_field_from_offsets(const nn::Tensor& offsets, int scale, int h,
                                  int w);

}  // namespace pgvton::geometry
