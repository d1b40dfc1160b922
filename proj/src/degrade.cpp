#include "aio/degrade.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "aio/errors.hpp"
#include "aio/rng.hpp"

namespace aio::degrade {

std::string kind_name(Kind k) {
  switch (k) {
    case Kind::Noise: return "noise";
    case Kind::Haze: return "haze";
    case Kind::Rain: return "rain";
    case Kind::Blur: return "blur";
    case Kind::Lowlight: return "lowlight";
  }
  return "unknown";
}

Kind kind_from_name(const std::string& name) {
  if (name == "noise") return Kind::Noise;
  if (name == "haze") return Kind::Haze;
  if (name == "rain") return Kind::Rain;
  if (name == "blur") return Kind::Blur;
  if (name == "lowlight") return Kind::Lowlight;
  throw ConfigError("unknown degradation kind: " + name);
}

ImageTensor synth_noise(const ImageTensor& clean, double sigma, std::uint64_t seed) {
  if (sigma <= 0.0) throw ParamError("noise sigma must be positive");
  Rng rng(seed);
  const double std01 = sigma / 255.0;
  ImageTensor out = clean;
  for (double& v : out.data) v += std01 * rng.gaussian();
  clamp01(out);
  return out;
}

ImageTensor synth_haze(const ImageTensor& clean, double transmission,
                       double airlight, std::uint64_t /*seed*/) {
  if (transmission <= 0.0 || transmission > 1.0)
    throw ParamError("haze transmission must be in (0,1]");
  if (airlight < 0.0 || airlight > 1.0)
    throw ParamError("haze airlight must be in [0,1]");
  ImageTensor out(clean.height, clean.width);
  const double a = (1.0 - transmission) * airlight;
  for (size_t i = 0; i < clean.size(); ++i)
    out.data[i] = transmission * clean.data[i] + a;
  clamp01(out);
  return out;
}

ImageTensor synth_rain(const ImageTensor& clean, int streaks, double angle_deg,
                       double length_px, std::uint64_t seed) {
  if (streaks < 0) throw ParamError("rain streak count must be >= 0");
  Rng rng(seed);
  ImageTensor out = clean;
  for (int s = 0; s < streaks; ++s) {
    const double y0 = rng.uniform() * clean.height;
    const double x0 = rng.uniform() * clean.width;
    const double ang = (angle_deg + rng.uniform(-4.0, 4.0)) * M_PI / 180.0;
    const double len = length_px * rng.uniform(0.7, 1.3);
    const double bright = rng.uniform(0.15, 0.45);
    const double dy = std::sin(ang);
    const double dx = std::cos(ang);
    const int steps = std::max(1, static_cast<int>(std::lround(len * 2.0)));
    for (int t = 0; t <= steps; ++t) {
      const double f = len * t / steps;
      const int y = static_cast<int>(std::lround(y0 + f * dy));
      const int x = static_cast<int>(std::lround(x0 + f * dx));
      if (y < 0 || y >= clean.height || x < 0 || x >= clean.width) continue;
      for (int c = 0; c < 3; ++c) out.at(y, x, c) += bright * 0.5;
    }
  }
  clamp01(out);
  return out;
}

namespace {
// Mirror index without repeating the border pixel.
int reflect(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

std::vector<double> motion_kernel(int size, double angle_deg) {
  std::vector<double> k(static_cast<size_t>(size) * size, 0.0);
  if (size == 1) {
    k[0] = 1.0;
    return k;
  }
  const double c = (size - 1) / 2.0;
  const double dy = std::sin(angle_deg * M_PI / 180.0);
  const double dx = std::cos(angle_deg * M_PI / 180.0);
  const int steps = size * 4;
  for (int t = -steps; t <= steps; ++t) {
    const double f = c * t / steps;
    const double y = c + f * dy;
    const double x = c + f * dx;
    const int iy = static_cast<int>(std::floor(y));
    const int ix = static_cast<int>(std::floor(x));
    const double fy = y - iy;
    const double fx = x - ix;
    // bilinear splat
    const double w[4] = {(1 - fy) * (1 - fx), (1 - fy) * fx, fy * (1 - fx), fy * fx};
    const int oy[4] = {iy, iy, iy + 1, iy + 1};
    const int ox[4] = {ix, ix + 1, ix, ix + 1};
    for (int j = 0; j < 4; ++j)
      if (oy[j] >= 0 && oy[j] < size && ox[j] >= 0 && ox[j] < size)
        k[static_cast<size_t>(oy[j]) * size + ox[j]] += w[j];
  }
  double sum = 0.0;
  for (double v : k) sum += v;
  for (double& v : k) v /= sum;
  return k;
}
}  // namespace

ImageTensor synth_blur(const ImageTensor& clean, int kernel_size,
                       double angle_deg, std::uint64_t /*seed*/) {
  if (kernel_size < 1 || kernel_size % 2 == 0)
    throw ParamError("blur kernel size must be a positive odd integer");
  if (kernel_size == 1) return clean;
  const std::vector<double> k = motion_kernel(kernel_size, angle_deg);
  const int r = kernel_size / 2;
  ImageTensor out(clean.height, clean.width);
  for (int y = 0; y < clean.height; ++y)
    for (int x = 0; x < clean.width; ++x)
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int ky = -r; ky <= r; ++ky)
          for (int kx = -r; kx <= r; ++kx) {
            const double w = k[static_cast<size_t>(ky + r) * kernel_size + (kx + r)];
            if (w == 0.0) continue;
            acc += w * clean.at(reflect(y + ky, clean.height),
                                reflect(x + kx, clean.width), c);
          }
        out.at(y, x, c) = acc;
      }
  clamp01(out);
  return out;
}

ImageTensor synth_lowlight(const ImageTensor& clean, double gamma, double gain,
                           std::uint64_t /*seed*/) {
  if (gamma < 1.0) throw ParamError("lowlight gamma must be >= 1");
  if (gain <= 0.0 || gain > 1.0) throw ParamError("lowlight gain must be in (0,1]");
  ImageTensor out(clean.height, clean.width);
  for (size_t i = 0; i < clean.size(); ++i)
    out.data[i] = gain * std::pow(clean.data[i], gamma);
  clamp01(out);
  return out;
}

ImageTensor apply_spec(const ImageTensor& clean, const DegradationSpec& spec) {
  switch (spec.kind) {
    case Kind::Noise: {
      const auto& p = std::get<NoiseParams>(spec.params);
      return synth_noise(clean, p.sigma, spec.seed);
    }
    case Kind::Haze: {
      const auto& p = std::get<HazeParams>(spec.params);
      return synth_haze(clean, p.transmission, p.airlight, spec.seed);
    }
    case Kind::Rain: {
      const auto& p = std::get<RainParams>(spec.params);
      return synth_rain(clean, p.streaks, p.angle_deg, p.length_px, spec.seed);
    }
    case Kind::Blur: {
      const auto& p = std::get<BlurParams>(spec.params);
      return synth_blur(clean, p.kernel_size, p.angle_deg, spec.seed);
    }
    case Kind::Lowlight: {
      const auto& p = std::get<LowlightParams>(spec.params);
      return synth_lowlight(clean, p.gamma, p.gain, spec.seed);
    }
  }
  throw ParamError("unhandled degradation kind");
}

namespace {
// Smoothed value noise on a coarse grid, bilinearly interpolated.
void add_value_noise(ImageTensor& img, Rng& rng, int cell, double amp,
                     bool shared_channels) {
  const int gh = img.height / cell + 2;
  const int gw = img.width / cell + 2;
  std::vector<double> grid(static_cast<size_t>(gh) * gw * 3);
  for (int i = 0; i < gh * gw; ++i) {
    const double v = rng.uniform();
    for (int c = 0; c < 3; ++c)
      grid[static_cast<size_t>(i) * 3 + c] = shared_channels ? v : rng.uniform();
  }
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const double gy = static_cast<double>(y) / cell;
      const double gx = static_cast<double>(x) / cell;
      const int iy = static_cast<int>(gy);
      const int ix = static_cast<int>(gx);
      const double fy = gy - iy;
      const double fx = gx - ix;
      // smoothstep for continuous derivatives across cells
      const double sy = fy * fy * (3 - 2 * fy);
      const double sx = fx * fx * (3 - 2 * fx);
      for (int c = 0; c < 3; ++c) {
        auto g = [&](int yy, int xx) {
          return grid[(static_cast<size_t>(yy) * gw + xx) * 3 + c];
        };
        const double top = g(iy, ix) * (1 - sx) + g(iy, ix + 1) * sx;
        const double bot = g(iy + 1, ix) * (1 - sx) + g(iy + 1, ix + 1) * sx;
        img.at(y, x, c) += amp * (top * (1 - sy) + bot * sy - 0.5);
      }
    }
}
}  // namespace

ImageTensor procedural_clean(int height, int width, std::uint64_t seed) {
  Rng rng(seed);
  ImageTensor img(height, width);

  // base tone + linear gradient
  double base[3], grad[3];
  for (int c = 0; c < 3; ++c) {
    base[c] = rng.uniform(0.35, 0.65);
    grad[c] = rng.uniform(-0.25, 0.25);
  }
  const double gang = rng.uniform(0.0, 2.0 * M_PI);
  const double gdy = std::sin(gang), gdx = std::cos(gang);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double t =
          (gdy * (y - height / 2.0) / height + gdx * (x - width / 2.0) / width);
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = base[c] + grad[c] * t;
    }

  add_value_noise(img, rng, std::max(4, width / 4), 0.30, false);
  add_value_noise(img, rng, std::max(2, width / 10), 0.15, true);

  // a few soft-edged disks and rectangles
  const int shapes = rng.uniform_int(2, 4);
  for (int s = 0; s < shapes; ++s) {
    double col[3];
    for (int c = 0; c < 3; ++c) col[c] = rng.uniform(0.15, 0.85);
    const double alpha = rng.uniform(0.4, 0.9);
    if (rng.coin()) {
      const double cy = rng.uniform() * height;
      const double cx = rng.uniform() * width;
      const double rad = rng.uniform(0.08, 0.25) * std::min(height, width);
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
          const double d = std::hypot(y - cy, x - cx);
          const double t = std::clamp(rad - d + 1.0, 0.0, 1.0) * alpha;
          if (t <= 0.0) continue;
          for (int c = 0; c < 3; ++c)
            img.at(y, x, c) = img.at(y, x, c) * (1 - t) + col[c] * t;
        }
    } else {
      const int y0 = rng.uniform_int(0, height - 2);
      const int x0 = rng.uniform_int(0, width - 2);
      const int y1 = std::min(height - 1, y0 + rng.uniform_int(4, height / 2));
      const int x1 = std::min(width - 1, x0 + rng.uniform_int(4, width / 2));
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x)
          for (int c = 0; c < 3; ++c)
            img.at(y, x, c) = img.at(y, x, c) * (1 - alpha) + col[c] * alpha;
    }
  }
  clamp01(img);
  return img;
}

namespace {
std::vector<std::string> list_pngs(const std::string& dir) {
  namespace fs = std::filesystem;
  std::vector<std::string> files;
  if (!fs::is_directory(dir))
    throw DependencyError("clean image directory not found: " + dir);
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png")
      files.push_back(e.path().string());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DependencyError("no .png files in " + dir);
  return files;
}

DegradationSpec draw_spec(const DatasetConfig& cfg, Kind kind, Rng& rng,
                          std::uint64_t sample_seed) {
  DegradationSpec spec;
  spec.kind = kind;
  spec.seed = sample_seed;
  switch (kind) {
    case Kind::Noise: {
      NoiseParams p;
      p.sigma = cfg.noise_sigmas[rng.uniform_int(
          0, static_cast<int>(cfg.noise_sigmas.size()) - 1)];
      spec.params = p;
      break;
    }
    case Kind::Haze: {
      HazeParams p;
      p.transmission = rng.uniform(0.4, 0.75);
      p.airlight = rng.uniform(0.75, 1.0);
      spec.params = p;
      break;
    }
    case Kind::Rain: {
      RainParams p;
      p.streaks = rng.uniform_int(40, 120);
      p.angle_deg = rng.uniform(55.0, 85.0);
      p.length_px = rng.uniform(8.0, 16.0);
      spec.params = p;
      break;
    }
    case Kind::Blur: {
      BlurParams p;
      p.kernel_size = 2 * rng.uniform_int(2, 5) + 1;  // 5..11
      p.angle_deg = rng.uniform(0.0, 180.0);
      spec.params = p;
      break;
    }
    case Kind::Lowlight: {
      LowlightParams p;
      p.gamma = rng.uniform(1.8, 2.6);
      p.gain = rng.uniform(0.35, 0.6);
      spec.params = p;
      break;
    }
  }
  return spec;
}
}  // namespace

PairedSample make_sample(const DatasetConfig& cfg, int index) {
  if (cfg.kinds.empty()) throw ConfigError("dataset needs at least one degradation kind");
  if (cfg.size <= 0) throw ConfigError("dataset size must be positive");
  if (index < 0 || index >= cfg.size) throw ContractError("sample index out of range");

  const std::uint64_t sample_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(index));
  Rng rng(derive_seed(sample_seed, "params"));

  PairedSample s;
  s.index = index;
  if (cfg.clean_dir) {
    const auto files = list_pngs(*cfg.clean_dir);
    s.clean = load_png(files[index % files.size()]);
  } else {
    s.clean = procedural_clean(cfg.image_size, cfg.image_size,
                               derive_seed(sample_seed, "clean"));
  }
  const Kind kind = cfg.kinds[index % cfg.kinds.size()];
  s.spec = draw_spec(cfg, kind, rng, derive_seed(sample_seed, "degrade"));
  s.degraded = apply_spec(s.clean, s.spec);
  return s;
}

std::vector<PairedSample> make_dataset(const DatasetConfig& cfg) {
  std::vector<PairedSample> out;
  out.reserve(cfg.size);
  for (int i = 0; i < cfg.size; ++i) out.push_back(make_sample(cfg, i));
  return out;
}

}  // namespace aio::degrade
