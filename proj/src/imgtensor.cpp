#include "aio/imgtensor.hpp"

#include <algorithm>

#include "aio/errors.hpp"

namespace aio {

ad::Tensor to_chw(const ImageTensor& img, bool requires_grad) {
  const int h = img.height, w = img.width;
  std::vector<double> v(static_cast<size_t>(h) * w * 3);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        v[(static_cast<size_t>(c) * h + y) * w + x] = img.at(y, x, c);
  return ad::Tensor::from({3, h, w}, std::move(v), requires_grad);
}

ImageTensor to_image(const ad::Tensor& chw) {
  if (chw.shape().size() != 3 || chw.dim(0) != 3)
    throw ContractError("to_image: expected [3,H,W] tensor");
  const int h = chw.dim(1), w = chw.dim(2);
  ImageTensor img(h, w);
  const auto& v = chw.values();
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        img.at(y, x, c) =
            std::clamp(v[(static_cast<size_t>(c) * h + y) * w + x], 0.0, 1.0);
  return img;
}

}  // namespace aio
