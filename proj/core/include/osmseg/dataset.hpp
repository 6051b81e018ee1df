#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "osmseg/geo.hpp"
#include "osmseg/labelgen.hpp"

namespace osmseg {

// Planar RGB raster, values in [0, 255], layout [channel][row][col].
struct ImageRaster {
  int width = 0;
  int height = 0;
  std::vector<double> channels;
  RasterGeoref georef;

  ImageRaster() = default;
  ImageRaster(int w, int h, const RasterGeoref& g)
      : width(w), height(h), channels(3 * static_cast<std::size_t>(w) * h, 0.0), georef(g) {}

  double& at(int c, int x, int y) {
    return channels[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  double at(int c, int x, int y) const {
    return channels[(static_cast<std::size_t>(c) * height + y) * width + x];
  }

  bool operator==(const ImageRaster&) const = default;
};

// 8-bit RGB PNG plus sidecar. Writing requires integral values in [0, 255]
// (FormatViolation otherwise), which makes write/read lossless.
void write_image_raster(const std::filesystem::path& png_path, const ImageRaster& image);
ImageRaster read_image_raster(const std::filesystem::path& png_path);

enum class SplitTag : std::uint8_t { train, val, test };

std::string_view to_string(SplitTag t);
SplitTag split_tag_from_name(std::string_view name);

struct Patch {
  int size = 0;
  std::vector<double> image;          // 3 x size x size, planar
  std::vector<std::uint8_t> labels;   // size x size
  int origin_x = 0;
  int origin_y = 0;
  int source = 0;                     // index of the parent raster in a multi-raster set
  SplitTag split = SplitTag::train;

  bool operator==(const Patch&) const = default;
};

// Non-overlapping S x S patches on the S-grid; ragged right/bottom margins
// are dropped. Throws GeorefMismatch when image and labels disagree.
std::vector<Patch> tile(const ImageRaster& image, const LabelRaster& labels, int size,
                        int source = 0);

struct PatchRecord {
  std::string image_path;   // relative to the manifest directory; may be empty in memory
  std::string labels_path;
  int origin_x = 0;
  int origin_y = 0;
  int source = 0;
  SplitTag split = SplitTag::train;

  bool operator==(const PatchRecord&) const = default;
};

struct DatasetManifest {
  std::vector<PatchRecord> records;
  std::uint64_t seed = 0;
  int tile_size = 0;
  std::array<double, 3> fractions{};

  std::size_t count(SplitTag t) const;
  bool operator==(const DatasetManifest&) const = default;
};

// Assigns contiguous spatial blocks (raster-scan order within each source)
// to the three splits. The seed picks the order of the blocks. Tags are also
// written back into `patches`. Throws TooFewPatches when a split with a
// positive fraction would be empty.
DatasetManifest split(std::vector<Patch>& patches, const std::array<double, 3>& fractions,
                      std::uint64_t seed);

// Subtracts each channel's mean; labels untouched.
std::vector<double> center_patch(const Patch& p);

// `<stem>.image.png` + `<stem>.labels.png`.
void store_patch(const std::filesystem::path& stem, const Patch& p);
Patch load_patch(const std::filesystem::path& stem);
Patch load_patch(const std::filesystem::path& image_png, const std::filesystem::path& labels_png);

std::string manifest_to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const std::string& text);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& m);
DatasetManifest read_manifest(const std::filesystem::path& path);

// Writes every patch next to the manifest and fills in the record paths.
void write_dataset(const std::filesystem::path& dir, std::span<const Patch> patches,
                   DatasetManifest& manifest);
// Loads the patches listed by a manifest file, with split tags applied.
std::vector<Patch> read_dataset(const std::filesystem::path& manifest_path);

}  // namespace osmseg
