#include <pgvton/bridge.hpp>

#include <algorithm>

namespace pgvton {

nn::Tensor to_tensor(const Image& image) {
  nn::Tensor t = nn::make_tensor(
      {1, image.channels, image.height, image.width}, false);
  std::copy(image.data.begin(), image.data.end(), t->value.begin());
  return t;
}

nn::Tensor batch_tensor(const std::vector<const Image*>& images) {
  if (images.empty()) throw ValidationError("batch_tensor: empty batch");
  const Image& first = *images[0];
  nn::Tensor t = nn::make_tensor(
      {static_cast<int>(images.size()), first.channels, first.height,
       first.width},
      false);
  const std::size_t per = first.data.size();
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (!images[i]->same_shape(first))
      throw ValidationError("batch_tensor: shape mismatch within batch");
    std::copy(images[i]->data.begin(), images[i]->data.end(),
              t->value.begin() + i * per);
  }
  return t;
}

Image to_image(const nn::Tensor& t, int n) {
  if (t->shape.size() != 4)
    throw ValidationError("to_image: tensor must be (N,C,H,W)");
  Image img(t->dim(2), t->dim(3), t->dim(1));
  const std::size_t per = img.data.size();
  std::copy(t->value.begin() + n * per, t->value.begin() + (n + 1) * per,
            img.data.begin());
  return img;
}

}  // namespace pgvton
