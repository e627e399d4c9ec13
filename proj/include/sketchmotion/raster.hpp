#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "sketchmotion/autodiff.hpp"
#include "sketchmotion/geometry.hpp"

namespace sketchmotion::raster {

/// Ink is 1, paper is 0.
struct RasterConfig {
  std::size_t height = 64;
  std::size_t width = 64;
  double sigma = 1.5;  // pixels
  std::size_t samples_per_segment = 8;

  void validate() const;
  static RasterConfig optimization() { return {}; }
  static RasterConfig preview() { return {256, 256, 1.5, 8}; }
};

struct RasterFrame {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> intensities;  // row-major, in [0, 1]

  double at(std::size_t row, std::size_t col) const { return intensities[row * width + col]; }
};

/// Soft line rendering of one frame. `points` is (N, 2) in canvas units and
/// the result is (H, W) on the tape.
///
/// Each cubic segment is cut into S chords at uniform t. A chord covers pixel
/// centre p with exp(-d^2 / 2 sigma_eff^2), d being the distance to the chord
/// with the projection clamped to its ends, and coverages combine as
/// 1 - prod(1 - g). sigma_eff = sigma * width / median(width). Contributions
/// further than 9 sigma_eff from a chord are skipped (below 3e-18).
ad::Tensor rasterize(const ad::Tensor& points, const Topology& topology, double canvas_w,
                     double canvas_h, const RasterConfig& cfg);

/// (N, K, 2) -> (K, H, W); frames are independent.
ad::Tensor rasterize_sequence(const ad::Tensor& points, const Topology& topology,
                              double canvas_w, double canvas_h, const RasterConfig& cfg);

RasterFrame rasterize(const Sketch& sketch, const RasterConfig& cfg);
std::vector<RasterFrame> rasterize_sequence(const FrameSequence& seq, const RasterConfig& cfg);

/// Splits a (K, H, W) tensor into frames.
std::vector<RasterFrame> frames_of(const ad::Tensor& stack);

/// Per g x g patch, row-major: mean intensity, mean |horizontal central
/// difference|, mean |vertical central difference| (borders replicate).
std::vector<double> patch_features(const RasterFrame& frame, std::size_t grid);

/// Ink-on-white 8-bit grayscale: round(255 * (1 - I)).
std::vector<std::uint8_t> to_gray8(const RasterFrame& frame);

void write_png(const std::filesystem::path& path, const RasterFrame& frame);

struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;
};
GrayImage read_png(const std::filesystem::path& path);

}  // namespace sketchmotion::raster
