#include <pgvton/pipeline.hpp>

#include <cmath>

namespace pgvton::pipeline {

Image assemble_tryon(const Image& garment_image, const Mask& garment_mask,
                     const Image& skin_image, const Mask& skin_mask,
                     const Image& person, const Image& remainder_parsing) {
  const int h = person.height, w = person.width;
  if (garment_image.height != h || skin_image.height != h ||
      garment_mask.height != h || skin_mask.height != h ||
      remainder_parsing.height != h)
    throw ValidationError("assemble_tryon: shape mismatch");

  // per-pixel weight of the remaining-part source
  Mask remainder_weight(h, w, 1);
  for (int c = 0; c < remainder_parsing.channels; ++c)
    for (std::size_t i = 0; i < remainder_weight.data.size(); ++i)
      remainder_weight.data[i] += remainder_parsing.plane(c)[i];

  Image out(h, w, 3);
  for (std::size_t i = 0; i < remainder_weight.data.size(); ++i) {
    const double wg = garment_mask.data[i];
    const double ws = skin_mask.data[i];
    const double wr = remainder_weight.data[i];
    const double total = wg + ws + wr;
    if (wg < -1e-12 || ws < -1e-12 || wr < -1e-12 || total > 1.0 + 1e-6)
      throw ValidationError(
          "assemble_tryon: overlapping masks exceed unit weight");
    const double wb = std::max(0.0, 1.0 - total);  // background fill
    for (int c = 0; c < 3; ++c)
      out.plane(c)[i] = wg * garment_image.plane(c)[i] +
                        ws * skin_image.plane(c)[i] +
                        (wr + wb) * person.plane(c)[i];
  }
  return out;
}

Image one_hot_parsing(const Image& parsing) {
  Image out(parsing.height, parsing.width, parsing.channels);
  const std::size_t ps = parsing.plane_size();
  for (std::size_t i = 0; i < ps; ++i) {
    int best = 0;
    double best_v = parsing.plane(0)[i];
    for (int c = 1; c < parsing.channels; ++c)
      if (parsing.plane(c)[i] > best_v) {
        best_v = parsing.plane(c)[i];
        best = c;
      }
    out.plane(best)[i] = 1.0;
  }
  return out;
}

TryOnResult run_tryon(const synthdata::Sample& person,
                      const Image& garment_image, const Mask& garment_mask,
                      const TryOnModels& models, const Config& cfg) {
  if (!models.tpim || !models.ptm || !models.rsim)
    throw ValidationError("run_tryon: all three module models are required");

  const tpim::TryOnParsing soft = tpim::infer_parsing(
      *models.tpim, person.remainder_parsing(), person.pose, garment_mask);

  TryOnResult result;
  result.parsing = one_hot_parsing(soft.full);
  const tpim::TryOnParsing hard = tpim::split_tryon(result.parsing);

  result.garment = models.ptm->try_on(garment_image, garment_mask,
                                      hard.garment, cfg.tau,
                                      &result.selected_scale);

  const Mask m_ps = person.skin_region();
  result.inpainted = rsim::needs_inpainting(hard.skin, m_ps);
  result.skin = rsim::inpaint_if_needed(*models.rsim, hard.skin, m_ps,
                                        person.skin_image(), person.person);

  result.image = assemble_tryon(result.garment, hard.garment, result.skin,
                                hard.skin, person.person, hard.remainder);
  return result;
}

}  // namespace pgvton::pipeline
