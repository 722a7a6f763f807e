#pragma once

#include <pgvton/checkpoint.hpp>
#include <pgvton/config.hpp>
#include <pgvton/dataset.hpp>
#include <pgvton/metrics.hpp>

#include <array>
#include <functional>
#include <random>

namespace pgvton::rsim {

struct ErasureSpec {
  double probability = 0.5;
  double area_lo = 0.02, area_hi = 0.30;   // fractions of the image area
  double aspect_lo = 0.3, aspect_hi = 3.33;  // rectangle h/w ratio

  void validate() const;
};

/// With the spec's probability, zeroes one axis-aligned rectangle whose
/// area fraction and aspect are uniform in their ranges and whose position
/// is uniform within the frame; otherwise returns the mask unchanged.
/// Deterministic under a fixed engine state.
Mask random_erase(const Mask& mask, const ErasureSpec& spec,
                  std::mt19937_64& rng);

/// Nine-step erasure-extent ladder. Level 5 is the published anchor
/// (probability 0.5, area [0.02,0.30]); the other levels scale probability
/// linearly over 0.1..0.9 and the area ceiling over 0.06..0.54.
ErasureSpec erasure_ladder(int level);

/// The documented ladder as a TSV table (header row included).
std::string erasure_ladder_table();

inline constexpr int kLatentDim = 1536;
inline constexpr int kLatentPerLevel = 384;  // 1536 / 4 pyramid levels

/// Skin inpainting model: pooled latent extraction from the frozen pyramid,
/// an 8-layer mapping network, and a style-modulated generator seeded by
/// the deepest-level features of the target skin mask.
class Model {
public:
  Model(const pipeline::Config& cfg, const metrics::PerceptualEncoder* encoder);

  /// (N,3,H,W) -> (N,1536). The per-level 1x1 channel reduction commutes
  /// with global average pooling, so it is applied to the pooled features.
  nn::Tensor encode_skin(const nn::Tensor& images) const;
  /// Pool+reduce pre-extracted pyramid features (exposed so the pooling
  /// invariance is testable on constructed features).
  nn::Tensor reduce_features(const std::array<nn::Tensor, 4>& features) const;
  /// Eight affine layers with leaky-ReLU activations, width 1536.
  nn::Tensor map_latent(const nn::Tensor& z) const;
  /// Deepest frozen-pyramid response of the target mask: (N,8d,H/8,W/8).
  nn::Tensor spatial_seed(const nn::Tensor& mask) const;
  /// Three x2 upsamplings, four style-modulation stages, no noise input;
  /// output (N,3,8*h,8*w) in (0,1).
  nn::Tensor generate(const nn::Tensor& w, const nn::Tensor& seed) const;

  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  const pipeline::Config& config() const { return cfg_; }
  const metrics::PerceptualEncoder& encoder() const { return *encoder_; }

private:
  nn::Tensor style_block(const nn::Tensor& x, const nn::Conv2d& conv,
                         const nn::Linear& style, const nn::Tensor& w) const;

  pipeline::Config cfg_;
  const metrics::PerceptualEncoder* encoder_;
  nn::ParamStore params_;

  std::array<nn::Linear, 4> reduce_;   // "encode." group
  std::array<nn::Linear, 8> mapping_;  // "mapping." group
  std::array<nn::Conv2d, 4> gen_conv_;  // "gen." group
  std::array<nn::Linear, 4> gen_style_;
  nn::Conv2d to_rgb_;
};

/// lambda7 * l1 + lambda8 * perceptual
nn::Tensor rsim_loss(const nn::Tensor& pred, const nn::Tensor& target,
                     const metrics::PerceptualEncoder& enc, double lambda7,
                     double lambda8);

struct StepTrace {
  long iteration = 0;
  double loss = 0.0;
};

struct TrainResult {
  std::vector<double> loss_history;
  pipeline::Checkpoint checkpoint;
};

/// Self-supervised erasure training: erase the skin mask, encode the erased
/// skin image, map, seed from the intact mask, generate, and supervise
/// against the intact skin image.
TrainResult train(const synthdata::Dataset& dataset,
                  const pipeline::Config& cfg,
                  const metrics::PerceptualEncoder& encoder,
                  const pipeline::Checkpoint* resume = nullptr,
                  const std::function<void(const StepTrace&)>& observer = {},
                  std::vector<std::string>* log_rows = nullptr);

/// True when the try-on skin mask exposes any pixel not already skin:
/// (M_ts | M_ps) > M_ps somewhere, masks binarized at 0.5.
bool needs_inpainting(const Mask& m_ts, const Mask& m_ps);

/// Test-time gate and composition. Without newly exposed skin this is the
/// Boolean covering M_ts * I_p; otherwise the generator runs and real skin
/// pixels (M_ts & M_ps) are kept from the photo.
Image inpaint_if_needed(const Model& model, const Mask& m_ts, const Mask& m_ps,
                        const Image& i_ps, const Image& i_p);

Model from_checkpoint(const pipeline::Checkpoint& ckpt,
                      const metrics::PerceptualEncoder* encoder);

}  // namespace pgvton::rsim
