#pragma once

#include <pgvton/checkpoint.hpp>
#include <pgvton/config.hpp>
#include <pgvton/dataset.hpp>
#include <pgvton/nn/adam.hpp>
#include <pgvton/parsing.hpp>

#include <functional>
#include <optional>

namespace pgvton::tpim {

/// Try-on parsing net: encoder-decoder with skip connections, three
/// downsampling levels, 11 input channels (7 remainder + 3 pose + 1 garment
/// mask), 7 output channels through a per-pixel softmax. The normalization
/// is architectural, so outputs sum to 1 regardless of training state.
class Model {
public:
  Model(int width, std::uint64_t seed);

  nn::Tensor forward(const nn::Tensor& x) const;

  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  int width() const { return width_; }

private:
  int width_;
  nn::ParamStore params_;
  nn::Conv2d e0a_, e0b_, d1_, e1_, d2_, e2_, d3_, e3_, u2_, u1_, u0_, head_;
};

/// The split try-on parsing: full 7-channel map plus the garment/skin
/// channels and the remainder projection. Splits recompose losslessly.
struct TryOnParsing {
  Image full;       // M_t
  Mask garment;     // M_tg
  Mask skin;        // M_ts
  Image remainder;  // M_tr (7 channels, remainder projection)
};

TryOnParsing split_tryon(const Image& m_t);

/// M_t = TPIM(M_pr, P, M_g). Inputs must share H x W.
TryOnParsing infer_parsing(const Model& model, const Image& remainder,
                           const Image& pose, const Mask& garment_mask);

/// Assemble the 11-channel input tensor for a batch.
nn::Tensor stack_inputs(const std::vector<const Image*>& remainders,
                        const std::vector<const Image*>& poses,
                        const std::vector<const Image*>& garment_masks);

/// Mean-absolute difference over the four remainder channels only.
nn::Tensor remainder_l1(const nn::Tensor& pred7, const nn::Tensor& target7);

/// lambda1 * l1(remainder channels) + lambda2 * l1(full maps).
nn::Tensor tpim_loss(const nn::Tensor& m_tr_pred, const nn::Tensor& m_pr,
                     const nn::Tensor& m_p_pred, const nn::Tensor& m_p,
                     double lambda1, double lambda2);

/// Per-step observer payload for tests and logging.
struct StepTrace {
  long iteration = 0;
  double term_remainder = 0.0;
  double term_cycle = 0.0;
  double total = 0.0;
  nn::Tensor pass1_output;
  nn::Tensor pass1_remainder;
  nn::Tensor pass2_input;
};

struct TrainResult {
  std::vector<double> loss_history;
  pipeline::Checkpoint checkpoint;
};

/// Cycle-consistency training: pass 1 dresses an unpaired garment, pass 2
/// re-dresses the paired one from pass 1's remainder; both passes share the
/// model. Resumes from `resume` if given. Aborts with NumericError on a
/// non-finite loss.
TrainResult train(const synthdata::Dataset& dataset,
                  const pipeline::Config& cfg,
                  const pipeline::Checkpoint* resume = nullptr,
                  const std::function<void(const StepTrace&)>& observer = {},
                  std::vector<std::string>* log_rows = nullptr);

/// Rebuild a model from a checkpoint (width from metadata).
Model from_checkpoint(const pipeline::Checkpoint& ckpt);

}  // namespace pgvton::tpim
