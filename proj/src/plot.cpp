#include "aio/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

namespace aio::plot {

namespace {
// 3x5 glyphs, rows top to bottom, 3 bits per row
const std::map<char, std::array<int, 5>>& glyphs() {
  static const std::map<char, std::array<int, 5>> g = {
      {'0', {0b111, 0b101, 0b101, 0b101, 0b111}},
      {'1', {0b010, 0b110, 0b010, 0b010, 0b111}},
      {'2', {0b111, 0b001, 0b111, 0b100, 0b111}},
      {'3', {0b111, 0b001, 0b111, 0b001, 0b111}},
      {'4', {0b101, 0b101, 0b111, 0b001, 0b001}},
      {'5', {0b111, 0b100, 0b111, 0b001, 0b111}},
      {'6', {0b111, 0b100, 0b111, 0b101, 0b111}},
      {'7', {0b111, 0b001, 0b010, 0b010, 0b010}},
      {'8', {0b111, 0b101, 0b111, 0b101, 0b111}},
      {'9', {0b111, 0b101, 0b111, 0b001, 0b111}},
      {'.', {0b000, 0b000, 0b000, 0b000, 0b010}},
      {'n', {0b000, 0b110, 0b101, 0b101, 0b101}},
      {'h', {0b100, 0b110, 0b101, 0b101, 0b101}},
      {'r', {0b000, 0b101, 0b110, 0b100, 0b100}},
      {'b', {0b100, 0b110, 0b101, 0b101, 0b110}},
      {'l', {0b100, 0b100, 0b100, 0b100, 0b110}},
  };
  return g;
}

void draw_text(ImageTensor& img, int y, int x, const std::string& text,
               double r, double g, double b) {
  int cx = x;
  for (char ch : text) {
    auto it = glyphs().find(ch);
    if (it != glyphs().end()) {
      for (int row = 0; row < 5; ++row)
        for (int col = 0; col < 3; ++col)
          if (it->second[row] & (1 << (2 - col))) {
            const int py = y + row, px = cx + col;
            if (py >= 0 && py < img.height && px >= 0 && px < img.width) {
              img.at(py, px, 0) = r;
              img.at(py, px, 1) = g;
              img.at(py, px, 2) = b;
            }
          }
    }
    cx += 4;
  }
}

void fill_rect(ImageTensor& img, int y0, int x0, int y1, int x1, double r,
               double g, double b) {
  y0 = std::max(0, y0);
  x0 = std::max(0, x0);
  y1 = std::min(img.height - 1, y1);
  x1 = std::min(img.width - 1, x1);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      img.at(y, x, 0) = r;
      img.at(y, x, 1) = g;
      img.at(y, x, 2) = b;
    }
}

std::string fmt1(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}
}  // namespace

ImageTensor render_bars(const std::vector<BarGroup>& groups) {
  const int group_w = 56, margin = 24, chart_h = 160;
  const int width = std::max(120, margin * 2 + group_w * static_cast<int>(groups.size()));
  const int height = chart_h + 48;
  ImageTensor img(height, width, 1.0);

  double vmax = 1.0;
  for (const auto& g : groups) vmax = std::max({vmax, g.value_in, g.value_out});
  vmax = std::ceil(vmax / 5.0) * 5.0;

  // axis + gridlines every 5 units
  fill_rect(img, chart_h + 8, margin - 2, chart_h + 8, width - margin, 0.2, 0.2, 0.2);
  for (double v = 5.0; v <= vmax; v += 5.0) {
    const int y = chart_h + 8 - static_cast<int>(std::lround(chart_h * v / vmax));
    fill_rect(img, y, margin - 2, y, width - margin, 0.88, 0.88, 0.88);
  }

  int x = margin;
  for (const auto& g : groups) {
    const int h_in = static_cast<int>(std::lround(chart_h * g.value_in / vmax));
    const int h_out = static_cast<int>(std::lround(chart_h * g.value_out / vmax));
    const int base = chart_h + 8;
    fill_rect(img, base - h_in, x, base - 1, x + 16, 0.75, 0.45, 0.25);
    fill_rect(img, base - h_out, x + 20, base - 1, x + 36, 0.25, 0.5, 0.75);
    draw_text(img, base - h_in - 8, x, fmt1(g.value_in), 0.4, 0.2, 0.1);
    draw_text(img, base - h_out - 8, x + 20, fmt1(g.value_out), 0.1, 0.2, 0.4);
    if (!g.label.empty())
      draw_text(img, base + 6, x + 14, std::string(1, g.label[0]), 0.1, 0.1, 0.1);
    x += group_w;
  }
  return img;
}

void save_bars(const std::vector<BarGroup>& groups, const std::string& path) {
  save_png(render_bars(groups), path);
}

}  // namespace aio::plot
