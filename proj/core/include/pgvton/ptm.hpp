#pragma once

#include <pgvton/checkpoint.hpp>
#include <pgvton/config.hpp>
#include <pgvton/dataset.hpp>
#include <pgvton/geometry.hpp>
#include <pgvton/metrics.hpp>

#include <array>
#include <functional>

namespace pgvton::ptm {

/// Warped grids at the four scales, parameterized by bounded offsets from
/// the static lattice: |offset| <= max_offset through a tanh activation.
struct ThetaSet {
  std::array<nn::Tensor, 4> offsets;  // scale 3+i: (N, s*s, 2)
};

struct ThetaResult {
  ThetaSet theta;
  nn::Tensor tokens;  // aggregator output, (N, T, 2*d1)
};

/// Differentiable four-scale warp results.
struct Candidates {
  std::array<nn::Tensor, 4> images;  // (N,3,H,W) per scale
  std::array<nn::Tensor, 4> masks;   // (N,1,H,W) per scale
  ThetaSet theta;
};

/// The progressive try-on model: attention-based multi-scale TPS warp
/// regressor, global-attention fined mapper, and composition-mask U-Net.
/// The frozen perceptual encoder supplies the shape pyramids and the
/// perceptual loss terms; it is shared and never trained.
class TryOnModel {
public:
  TryOnModel(const pipeline::Config& cfg,
             const metrics::PerceptualEncoder* encoder);

  // ---- warp stage -------------------------------------------------------
  /// mask: (N,1,H,W), replicated to the encoder input width.
  std::array<nn::Tensor, 4> extract_shape_pyramid(const nn::Tensor& mask) const;
  /// Projected, resampled, concatenated pyramid tokens plus the learned
  /// positional embedding: (N, 4*h1*w1, 2*d1).
  nn::Tensor embed_patches(const std::array<nn::Tensor, 4>& pyr_garment,
                           const std::array<nn::Tensor, 4>& pyr_target) const;
  ThetaResult predict_theta(const nn::Tensor& embedding) const;
  /// Warp image and mask through the TPS fields of every scale.
  Candidates warp(const nn::Tensor& garment_image,
                  const nn::Tensor& garment_mask, const ThetaSet& theta) const;

  // ---- fined mapping / composition ---------------------------------------
  /// (image ++ target mask) -> 3-channel image in (0,1).
  nn::Tensor fined_map(const nn::Tensor& image,
                       const nn::Tensor& target_mask) const;
  /// (warped ++ mapped) -> composition mask in (0,1).
  nn::Tensor predict_composition_mask(const nn::Tensor& i_tps,
                                      const nn::Tensor& i_map) const;

  // ---- test-phase inference ----------------------------------------------
  /// Plain-image candidates for one sample (no gradients).
  geometry::WarpCandidateSet warp_candidates(const Image& garment_image,
                                             const Mask& garment_mask,
                                             const Mask& target_mask) const;
  /// Full warp -> select -> map -> composite chain; the result is masked to
  /// the support of target_mask.
  Image try_on(const Image& garment_image, const Mask& garment_mask,
               const Mask& target_mask, double tau,
               int* selected_scale = nullptr) const;

  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  const pipeline::Config& config() const { return cfg_; }
  const metrics::PerceptualEncoder& encoder() const { return *encoder_; }

private:
  pipeline::Config cfg_;
  const metrics::PerceptualEncoder* encoder_;
  nn::ParamStore params_;

  // warp regressor ("warp." group)
  std::array<nn::Conv2d, 4> proj_;  // 1x1 per-level projections
  nn::Tensor pos_embed_;
  std::array<nn::TransformerBlock, 3> blocks_;
  nn::LayerNorm pool_norm_;
  nn::Linear trunk_;
  std::array<nn::Linear, 4> scale_heads_;  // zero-initialized

  // fined mapper ("map." group)
  nn::Conv2d m_e0_, m_d1_, m_d2_;
  nn::TransformerBlock m_attn_;
  nn::Conv2d m_u1_, m_u0_, m_head_;

  // compositor ("compose." group)
  nn::Conv2d c_e0_, c_d1_, c_d2_, c_u1_, c_u0_, c_head_;
};

// ---- losses -------------------------------------------------------------------

/// lambda3 * sum_i l1(M_tps^i, M_pg) + lambda4 * sum_i mean((G_tps^i - G^i)^2)
nn::Tensor coarse_warp_loss(const Candidates& candidates,
                            const nn::Tensor& m_pg, double lambda3,
                            double lambda4);

/// Eq-style two-level supervision of the mapper: pixel and perceptual terms
/// of (I_map vs I_tps, I_map vs I_pg, I_tps2 vs I_tps) weighted by xi.
nn::Tensor fined_map_loss(const nn::Tensor& i_map, const nn::Tensor& i_tps2,
                          const nn::Tensor& i_tps, const nn::Tensor& i_pg,
                          const metrics::PerceptualEncoder& enc, double xi,
                          double lambda5, double lambda6);

/// xi * mass-normalized l1 over the soft intersection (M_pg * M_tps) of
/// |I_comp - I_tps| + (1-xi) * l1(I_comp, I_pg). A zero-mass intersection
/// contributes 0. The region masks are treated as constants.
nn::Tensor composition_loss(const nn::Tensor& i_comp, const nn::Tensor& i_tps,
                            const nn::Tensor& i_pg, const nn::Tensor& m_pg,
                            const nn::Tensor& m_tps, double xi);

/// Eq-4 blend as a tensor op: I_map * M + I_tps * (1 - M).
nn::Tensor composite(const nn::Tensor& i_map, const nn::Tensor& i_tps,
                     const nn::Tensor& m);

// ---- training -------------------------------------------------------------------

struct StepTrace {
  long iteration = 0;
  double loss_warp = 0.0, loss_map = 0.0, loss_compose = 0.0;
  std::array<int, 4> scale_histogram{};
  std::vector<int> selected;                  // per batch sample, in {3..6}
  std::vector<geometry::WarpCandidateSet> candidate_copies;  // per sample
  std::vector<Mask> target_masks, source_masks;
};

struct TrainResult {
  std::vector<double> warp_history, map_history, compose_history;
  pipeline::Checkpoint checkpoint;
};

/// Joint training of the three stages with gradient isolation: the selected
/// warp result is detached before the mapper, and the mapper output is
/// detached before the compositor. Selection runs per sample per step with
/// the configured tau.
TrainResult train(const synthdata::Dataset& dataset,
                  const pipeline::Config& cfg,
                  const metrics::PerceptualEncoder& encoder,
                  const pipeline::Checkpoint* resume = nullptr,
                  const std::function<void(const StepTrace&)>& observer = {},
                  std::vector<std::string>* log_rows = nullptr);

TryOnModel from_checkpoint(const pipeline::Checkpoint& ckpt,
                           const metrics::PerceptualEncoder* encoder);

}  // namespace pgvton::ptm
