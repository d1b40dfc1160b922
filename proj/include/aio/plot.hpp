#pragma once

#include <string>
#include <vector>

#include "aio/image.hpp"

namespace aio::plot {

struct BarGroup {
  std::string label;  // degradation kind
  double value_in = 0.0;
  double value_out = 0.0;
};

// Grouped bar chart (input vs restored PSNR per kind) rendered to a PNG.
ImageTensor render_bars(const std::vector<BarGroup>& groups);
void save_bars(const std::vector<BarGroup>& groups, const std::string& path);

}  // namespace aio::plot
