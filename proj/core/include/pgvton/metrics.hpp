#pragma once

#include <pgvton/bridge.hpp>
#include <pgvton/dataset.hpp>
#include <pgvton/nn/modules.hpp>

#include <array>
#include <map>
#include <string>
#include <vector>

namespace pgvton::ptm {
class TryOnModel;
}
namespace pgvton::tpim {
class Model;
}

namespace pgvton::metrics {

/// Documented fixed seed of the frozen feature extractor; every run of the
/// library reproduces the same weights, so feature distances are stable
/// across processes.
inline constexpr std::uint64_t kPerceptualSeed = 0x70677674u;

/// Frozen 4-stage convolutional pyramid at strides 1,2,4,8 with channel
/// counts (d,2d,4d,8d). Weights are fixed at construction (seeded random by
/// default, optionally loaded from a checkpoint-format file) and never
/// trained; gradients still flow through to the *inputs*, which is what the
/// perceptual losses need.
class PerceptualEncoder {
public:
  explicit PerceptualEncoder(int dim = 16,
                             std::uint64_t seed = kPerceptualSeed);

  int dim() const { return dim_; }

  /// images: (N,3,H,W); H and W must be multiples of 8.
  std::array<nn::Tensor, 4> features(const nn::Tensor& images) const;

  /// Features of an all-zero input at the given size, computed once.
  const std::array<nn::Tensor, 4>& zero_response(int h, int w) const;

  /// Replace the seeded weights with arrays from a checkpoint-format file
  /// (module id "encoder"); shapes must match.
  void load_weights(const std::string& path);

  const nn::ParamStore& params() const { return params_; }

private:
  int dim_;
  nn::ParamStore params_;
  nn::Conv2d c1_, c2_, c3_, c4_;
  mutable std::map<std::pair<int, int>, std::array<nn::Tensor, 4>> zero_cache_;
};

// ---- loss primitives ---------------------------------------------------------

double l1(const Image& a, const Image& b);
double l2(const Image& a, const Image& b);

/// Sum over the four stages of mean-absolute feature difference.
nn::Tensor perceptual_distance(const PerceptualEncoder& enc,
                               const nn::Tensor& a, const nn::Tensor& b);
/// Same, against precomputed features of the second argument.
nn::Tensor perceptual_distance(const PerceptualEncoder& enc,
                               const nn::Tensor& a,
                               const std::array<nn::Tensor, 4>& features_b);
double perceptual_distance(const PerceptualEncoder& enc, const Image& a,
                           const Image& b);

// ---- image quality -------------------------------------------------------------

/// Mean squared error on the 0-255 scale.
double mse_image(const Image& a, const Image& b);
/// Peak 255; returns +infinity when the images are identical.
double psnr(const Image& a, const Image& b);
/// 11x11 Gaussian window, sigma 1.5, standard stabilizers; averaged over
/// channels on the valid interior.
double ssim(const Image& a, const Image& b);

// ---- scale-selection trend -----------------------------------------------------

struct SelectionRow {
  double tau = 0.0;
  std::array<double, 4> proportion{};  // scales 3..6, sums to 1
};

/// For each tau, runs the optimal-scale selection over the test split with
/// shuffled (unpaired) garments and reports the fraction of samples
/// choosing each scale. The target mask is the TPIM-inferred garment
/// region when a TPIM model is supplied, otherwise the ground-truth one.
std::vector<SelectionRow> selection_proportions(
    const synthdata::Dataset& dataset, const ptm::TryOnModel& model,
    const std::vector<double>& taus, const tpim::Model* tpim_model = nullptr,
    std::uint64_t seed = 7);

}  // namespace pgvton::metrics
