#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "aio/image.hpp"

namespace aio::degrade {

enum class Kind { Noise, Haze, Rain, Blur, Lowlight };

std::string kind_name(Kind k);
Kind kind_from_name(const std::string& name);

struct NoiseParams {
  double sigma = 25.0;  // on the 0-255 scale; added std in [0,1] units is sigma/255
};
struct HazeParams {
  double transmission = 0.6;
  double airlight = 0.9;
};
struct RainParams {
  int streaks = 80;
  double angle_deg = 70.0;
  double length_px = 12.0;
};
struct BlurParams {
  int kernel_size = 9;
  double angle_deg = 0.0;
};
struct LowlightParams {
  double gamma = 2.2;
  double gain = 0.5;
};

using KindParams =
    std::variant<NoiseParams, HazeParams, RainParams, BlurParams, LowlightParams>;

struct DegradationSpec {
  Kind kind = Kind::Noise;
  KindParams params = NoiseParams{};
  std::uint64_t seed = 0;
};

struct PairedSample {
  ImageTensor clean;
  ImageTensor degraded;
  DegradationSpec spec;
  int index = 0;
};

ImageTensor synth_noise(const ImageTensor& clean, double sigma, std::uint64_t seed);
ImageTensor synth_haze(const ImageTensor& clean, double transmission,
                       double airlight, std::uint64_t seed);
ImageTensor synth_rain(const ImageTensor& clean, int streaks, double angle_deg,
                       double length_px, std::uint64_t seed);
ImageTensor synth_blur(const ImageTensor& clean, int kernel_size,
                       double angle_deg, std::uint64_t seed);
ImageTensor synth_lowlight(const ImageTensor& clean, double gamma, double gain,
                           std::uint64_t seed);

ImageTensor apply_spec(const ImageTensor& clean, const DegradationSpec& spec);

struct DatasetConfig {
  std::vector<Kind> kinds = {Kind::Noise, Kind::Haze, Kind::Rain};
  int size = 12;
  int image_size = 64;
  std::uint64_t seed = 0;
  // When set, clean images are loaded (cyclically) from PNG files in this
  // directory instead of being generated procedurally.
  std::optional<std::string> clean_dir;
  std::vector<double> noise_sigmas = {15.0, 25.0, 50.0};
};

// Seeded texture/gradient/shape pattern; the default clean corpus.
ImageTensor procedural_clean(int height, int width, std::uint64_t seed);

// Deterministic, index-addressable paired dataset. Kinds are assigned
// round-robin; per-sample seed is derived from (cfg.seed, index).
std::vector<PairedSample> make_dataset(const DatasetConfig& cfg);

// Single sample without materializing the whole set.
PairedSample make_sample(const DatasetConfig& cfg, int index);

}  // namespace aio::degrade
