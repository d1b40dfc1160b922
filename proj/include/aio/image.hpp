#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace aio {

// RGB image, values in [0, 1], row-major [H, W, 3].
struct ImageTensor {
  int height = 0;
  int width = 0;
  std::vector<double> data;  // size = height * width * 3

  ImageTensor() = default;
  ImageTensor(int h, int w, double fill = 0.0)
      : height(h), width(w), data(static_cast<size_t>(h) * w * 3, fill) {}

  double& at(int y, int x, int c) {
    return data[(static_cast<size_t>(y) * width + x) * 3 + c];
  }
  double at(int y, int x, int c) const {
    return data[(static_cast<size_t>(y) * width + x) * 3 + c];
  }
  size_t size() const { return data.size(); }
  bool same_shape(const ImageTensor& o) const {
    return height == o.height && width == o.width;
  }
};

void clamp01(ImageTensor& img);

ImageTensor crop(const ImageTensor& img, int y0, int x0, int h, int w);
ImageTensor flip_horizontal(const ImageTensor& img);
ImageTensor flip_vertical(const ImageTensor& img);

// a*(1-t) + b*t, elementwise; shapes must match.
ImageTensor blend(const ImageTensor& a, const ImageTensor& b, double t);

// 8-bit RGB PNG I/O. Values are scaled by 255 and rounded on save.
ImageTensor load_png(const std::string& path);
void save_png(const ImageTensor& img, const std::string& path);

}  // namespace aio
