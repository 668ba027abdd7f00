#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace latentslam {

/// 8-bit image, row-major, 1 (gray) or 3 (RGB) channels.
struct PngImage {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<uint8_t> bytes;
};

void write_png(const std::filesystem::path& path, const PngImage& img);

/// Reads gray/RGB PNGs; 16-bit depth, palettes and alpha are folded down to
/// 8-bit gray or RGB so externally recorded frames load too.
PngImage read_png(const std::filesystem::path& path);

}  // namespace latentslam
