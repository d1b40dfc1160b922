#include "aio/metrics.hpp"

#include <array>
#include <cmath>
#include <vector>

#include "aio/errors.hpp"

namespace aio::metrics {

double psnr(const ImageTensor& a, const ImageTensor& b) {
  if (!a.same_shape(b)) throw ContractError("psnr: shape mismatch");
  double mse = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.size());
  if (mse <= 0.0) return 100.0;
  return std::min(100.0, 10.0 * std::log10(1.0 / mse));
}

namespace {
constexpr int kWin = 11;

std::array<double, kWin> gaussian_taps() {
  std::array<double, kWin> t{};
  const double sigma = 1.5;
  double sum = 0.0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - (kWin - 1) / 2.0;
    t[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += t[i];
  }
  for (double& v : t) v /= sum;
  return t;
}

// Separable Gaussian filter, valid region only: output is (H-10) x (W-10).
std::vector<double> blur_valid(const std::vector<double>& in, int h, int w) {
  static const std::array<double, kWin> taps = gaussian_taps();
  const int ow = w - kWin + 1;
  const int oh = h - kWin + 1;
  std::vector<double> tmp(static_cast<size_t>(h) * ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWin; ++k) acc += taps[k] * in[static_cast<size_t>(y) * w + x + k];
      tmp[static_cast<size_t>(y) * ow + x] = acc;
    }
  std::vector<double> out(static_cast<size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWin; ++k) acc += taps[k] * tmp[static_cast<size_t>(y + k) * ow + x];
      out[static_cast<size_t>(y) * ow + x] = acc;
    }
  return out;
}
}  // namespace

double ssim(const ImageTensor& a, const ImageTensor& b) {
  if (!a.same_shape(b)) throw ContractError("ssim: shape mismatch");
  if (a.height < kWin || a.width < kWin)
    throw ContractError("ssim: image smaller than 11x11 window");

  const double c1 = 0.01 * 0.01;
  const double c2 = 0.03 * 0.03;
  const int h = a.height, w = a.width;
  const size_t n = static_cast<size_t>(h) * w;

  double total = 0.0;
  for (int c = 0; c < 3; ++c) {
    std::vector<double> xa(n), xb(n), xaa(n), xbb(n), xab(n);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const size_t i = static_cast<size_t>(y) * w + x;
        xa[i] = a.at(y, x, c);
        xb[i] = b.at(y, x, c);
        xaa[i] = xa[i] * xa[i];
        xbb[i] = xb[i] * xb[i];
        xab[i] = xa[i] * xb[i];
      }
    const auto mu_a = blur_valid(xa, h, w);
    const auto mu_b = blur_valid(xb, h, w);
    const auto e_aa = blur_valid(xaa, h, w);
    const auto e_bb = blur_valid(xbb, h, w);
    const auto e_ab = blur_valid(xab, h, w);

    double acc = 0.0;
    for (size_t i = 0; i < mu_a.size(); ++i) {
      const double va = e_aa[i] - mu_a[i] * mu_a[i];
      const double vb = e_bb[i] - mu_b[i] * mu_b[i];
      const double cov = e_ab[i] - mu_a[i] * mu_b[i];
      acc += ((2 * mu_a[i] * mu_b[i] + c1) * (2 * cov + c2)) /
             ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
    }
    total += acc / static_cast<double>(mu_a.size());
  }
  return total / 3.0;
}

}  // namespace aio::metrics
