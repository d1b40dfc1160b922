#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "aio/rng.hpp"
#include "aio/tensor.hpp"

namespace testutil {

// Central finite differences against reverse-mode gradients.
//
// `build` must rebuild the scalar loss from the current values of `leaves`
// (same tensors, fresh graph). Checks `count` coordinates per leaf, spread
// evenly, and returns the worst relative error observed.
inline double fd_check(const std::function<aio::ad::Tensor()>& build,
                       std::vector<aio::ad::Tensor> leaves, int count = 8,
                       double h = 1e-6) {
  using aio::ad::Tensor;

  for (auto& l : leaves) l.set_requires_grad(true);
  Tensor loss = build();
  for (auto& l : leaves) l.zero_grad();
  aio::ad::backward(loss);

  double worst = 0.0;
  for (auto& leaf : leaves) {
    const int n = leaf.numel();
    const int probes = std::min(count, n);
    for (int k = 0; k < probes; ++k) {
      const int idx = static_cast<int>((static_cast<long long>(k) * n) / probes);
      const double x0 = leaf.values()[idx];
      const double step = h * (1.0 + std::fabs(x0));

      leaf.values()[idx] = x0 + step;
      const double fp = build().item();
      leaf.values()[idx] = x0 - step;
      const double fm = build().item();
      leaf.values()[idx] = x0;

      const double fd = (fp - fm) / (2.0 * step);
      const double ad = leaf.grad()[idx];
      const double denom = std::max({std::fabs(fd), std::fabs(ad), 1e-8});
      worst = std::max(worst, std::fabs(fd - ad) / denom);
    }
  }
  return worst;
}

inline aio::ad::Tensor random_tensor(const aio::ad::Shape& shape,
                                     std::uint64_t seed, double scale = 1.0) {
  aio::Rng rng(seed);
  std::vector<double> v(static_cast<size_t>(aio::ad::shape_numel(shape)));
  for (double& x : v) x = scale * rng.gaussian();
  return aio::ad::Tensor::from(shape, std::move(v));
}

}  // namespace testutil
