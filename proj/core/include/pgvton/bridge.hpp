#pragma once

#include <pgvton/image.hpp>
#include <pgvton/nn/tensor.hpp>

#include <vector>

namespace pgvton {

/// (1,C,H,W) constant from an image.
nn::Tensor to_tensor(const Image& image);

/// (N,C,H,W) constant from equally shaped images.
nn::Tensor batch_tensor(const std::vector<const Image*>& images);

/// Extract batch element n of a (N,C,H,W) tensor.
Image to_image(const nn::Tensor& t, int n = 0);

}  // namespace pgvton
