#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace osmseg {

// Interleaved 8-bit image; channels is 1 (gray), 3 (RGB) or 4 (RGBA).
struct Image8 {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;

  bool operator==(const Image8&) const = default;
};

// Throws IoFailure when the file cannot be written.
void write_png(const std::filesystem::path& path, const Image8& image);

// Reads and converts to the requested channel count. Throws IoFailure when
// the file is missing and FormatViolation when it is not a decodable PNG.
Image8 read_png(const std::filesystem::path& path, int channels);

}  // namespace osmseg
