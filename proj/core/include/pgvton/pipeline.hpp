#pragma once

#include <pgvton/config.hpp>
#include <pgvton/ptm.hpp>
#include <pgvton/rsim.hpp>
#include <pgvton/tpim.hpp>

namespace pgvton::pipeline {

/// Weighted composition of the three try-on parts over the source photo:
/// garment and skin sources by their masks, the person photo over the
/// remainder support, and source-photo pixels as the background fill.
/// Throws when per-pixel mask weights exceed 1 beyond 1e-6.
Image assemble_tryon(const Image& garment_image, const Mask& garment_mask,
                     const Image& skin_image, const Mask& skin_mask,
                     const Image& person, const Image& remainder_parsing);

/// Per-pixel argmax one-hot of a soft parsing map.
Image one_hot_parsing(const Image& parsing);

struct TryOnModels {
  const tpim::Model* tpim = nullptr;
  const ptm::TryOnModel* ptm = nullptr;
  const rsim::Model* rsim = nullptr;
};

struct TryOnResult {
  Image image;            // I_t
  Image parsing;          // one-hot M_t
  Image garment;          // I_tg
  Image skin;             // I_ts
  int selected_scale = 0;  // warp scale chosen by the optimal-scale rule
  bool inpainted = false;  // whether the skin generator ran
};

/// The full progressive chain for one (person, garment) pair: parsing
/// inference, binarization, garment try-on, gated skin inpainting, and
/// assembly. tau comes from the config.
TryOnResult run_tryon(const synthdata::Sample& person,
                      const Image& garment_image, const Mask& garment_mask,
                      const TryOnModels& models, const Config& cfg);

}  // namespace pgvton::pipeline
